#include "battsynth/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace battsynth::num {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& dims) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << "x";
        os << dims[i];
    }
    os << "]";
    return os.str();
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (a->shape != b->shape) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
}

}  // namespace

Tensor::Tensor(std::vector<double> values, std::vector<std::size_t> dims, bool req_grad)
    : shape(std::move(dims)), data(std::move(values)), requires_grad(req_grad) {
    if (shape_product(shape) != data.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                    std::to_string(data.size()) + " values");
    }
    if (requires_grad) grad.assign(data.size(), 0.0);
}

TensorPtr Tensor::make(std::vector<double> values, std::vector<std::size_t> dims,
                       bool requires_grad) {
    return std::make_shared<Tensor>(std::move(values), std::move(dims), requires_grad);
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return make({value}, {1}, requires_grad);
}

TensorPtr Tensor::zeros(const std::vector<std::size_t>& dims, bool requires_grad) {
    return make(std::vector<double>(shape_product(dims), 0.0), dims, requires_grad);
}

TensorPtr Tensor::full(const std::vector<std::size_t>& dims, double value, bool requires_grad) {
    return make(std::vector<double>(shape_product(dims), value), dims, requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("rows(): tensor is not rank-2");
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("cols(): tensor is not rank-2");
    return shape[1];
}

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item(): tensor has size " + std::to_string(size()));
    return data[0];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

void Tensor::zero_grad() {
    if (requires_grad) std::fill(grad.begin(), grad.end(), 0.0);
}

void Tensor::accumulate_grad(const std::vector<double>& g) {
    if (!requires_grad) return;
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

namespace {

thread_local int no_grad_depth = 0;

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

namespace {

// Fresh op output; records parents and rule only when gradients flow.
TensorPtr op_output(std::vector<double> values, std::vector<std::size_t> dims,
                    std::vector<TensorPtr> parents,
                    std::function<void(const Tensor&)> rule) {
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p->requires_grad) { needs = true; break; }
        }
    }
    auto out = Tensor::make(std::move(values), std::move(dims), needs);
    if (needs) {
        out->parents = std::move(parents);
        out->backward_rule = std::move(rule);
    }
    return out;
}

void ensure_grad_buffer(const TensorPtr& t) {
    if (t->requires_grad && t->grad.size() != t->data.size()) {
        t->grad.assign(t->data.size(), 0.0);
    }
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    return op_output(std::move(out), a->shape, {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] += self.grad[i];
    });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    return op_output(std::move(out), a->shape, {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) b->grad[i] -= self.grad[i];
    });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    return op_output(std::move(out), a->shape, {a, b}, [a, b](const Tensor& self) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                a->grad[i] += self.grad[i] * b->data[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                b->grad[i] += self.grad[i] * a->data[i];
    });
}

TensorPtr scale(const TensorPtr& a, double c) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
    return op_output(std::move(out), a->shape, {a}, [a, c](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i] * c;
    });
}

TensorPtr add_scalar(const TensorPtr& a, double c) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + c;
    return op_output(std::move(out), a->shape, {a}, [a](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    });
}

TensorPtr abs_val(const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(a->data[i]);
    // subgradient 0 at exactly 0
    return op_output(std::move(out), a->shape, {a}, [a](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = a->data[i];
            a->grad[i] += self.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
        }
    });
}

TensorPtr concat(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 1) throw std::invalid_argument("concat: rank-1 inputs only");
        total += p->size();
    }
    std::vector<double> out;
    out.reserve(total);
    for (const auto& p : parts) out.insert(out.end(), p->data.begin(), p->data.end());
    return op_output(std::move(out), {total}, parts, [parts](const Tensor& self) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            if (p->requires_grad)
                for (std::size_t i = 0; i < p->size(); ++i) p->grad[i] += self.grad[off + i];
            off += p->size();
        }
    });
}

TensorPtr slice(const TensorPtr& a, std::size_t offset, std::size_t len) {
    if (a->rank() != 1) throw std::invalid_argument("slice: rank-1 input only");
    if (offset + len > a->size()) throw std::invalid_argument("slice: range out of bounds");
    std::vector<double> out(a->data.begin() + static_cast<std::ptrdiff_t>(offset),
                            a->data.begin() + static_cast<std::ptrdiff_t>(offset + len));
    return op_output(std::move(out), {len}, {a}, [a, offset](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[offset + i] += self.grad[i];
    });
}

TensorPtr slice_rows(const TensorPtr& m, std::size_t offset, std::size_t n) {
    if (m->rank() != 2) throw std::invalid_argument("slice_rows: rank-2 input only");
    const std::size_t cols = m->shape[1];
    if (offset + n > m->shape[0]) throw std::invalid_argument("slice_rows: range out of bounds");
    // row-major, so a row block is one contiguous span
    std::vector<double> out(m->data.begin() + static_cast<std::ptrdiff_t>(offset * cols),
                            m->data.begin() + static_cast<std::ptrdiff_t>((offset + n) * cols));
    return op_output(std::move(out), {n, cols}, {m}, [m, offset, cols](const Tensor& self) {
        const std::size_t base = offset * cols;
        for (std::size_t i = 0; i < self.grad.size(); ++i) m->grad[base + i] += self.grad[i];
    });
}

TensorPtr slice_cols(const TensorPtr& m, std::size_t offset, std::size_t n) {
    if (m->rank() != 2) throw std::invalid_argument("slice_cols: rank-2 input only");
    const std::size_t rows = m->shape[0], cols = m->shape[1];
    if (offset + n > cols) throw std::invalid_argument("slice_cols: range out of bounds");
    std::vector<double> out(rows * n);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = m->data.data() + r * cols + offset;
        std::copy(src, src + n, out.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    return op_output(std::move(out), {rows, n}, {m},
                     [m, offset, rows, cols, n](const Tensor& self) {
                         for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < n; ++j)
                                 m->grad[r * cols + offset + j] += self.grad[r * n + j];
                     });
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    if (parts.front()->rank() != 2)
        throw std::invalid_argument("concat_cols: rank-2 inputs only");
    const std::size_t rows = parts.front()->shape[0];
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p->rank() != 2 || p->shape[0] != rows)
            throw std::invalid_argument("concat_cols: row counts differ");
        total += p->shape[1];
    }
    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p->shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(p->data.begin() + static_cast<std::ptrdiff_t>(r * c),
                      p->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c),
                      out.begin() + static_cast<std::ptrdiff_t>(r * total + off));
        }
        off += c;
    }
    return op_output(std::move(out), {rows, total}, parts,
                     [parts, rows, total](const Tensor& self) {
                         std::size_t off = 0;
                         for (const auto& p : parts) {
                             const std::size_t c = p->shape[1];
                             if (p->requires_grad)
                                 for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < c; ++j)
                                         p->grad[r * c + j] += self.grad[r * total + off + j];
                             off += c;
                         }
                     });
}

TensorPtr column(const TensorPtr& m, std::size_t t) {
    if (m->rank() != 2) throw std::invalid_argument("column: rank-2 input only");
    const std::size_t r = m->shape[0], c = m->shape[1];
    if (t >= c) throw std::invalid_argument("column: index out of bounds");
    std::vector<double> out(r);
    for (std::size_t i = 0; i < r; ++i) out[i] = m->data[i * c + t];
    return op_output(std::move(out), {r}, {m}, [m, t, c](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) m->grad[i * c + t] += self.grad[i];
    });
}

TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> dims) {
    if (shape_product(dims) != a->size()) {
        throw std::invalid_argument("reshape: " + shape_str(a->shape) + " has " +
                                    std::to_string(a->size()) + " elements, target " +
                                    shape_str(dims) + " does not match");
    }
    return op_output(a->data, std::move(dims), {a}, [a](const Tensor& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) a->grad[i] += self.grad[i];
    });
}

TensorPtr sum(const TensorPtr& a) {
    double s = 0.0;
    for (double v : a->data) s += v;
    return op_output({s}, {1}, {a}, [a](const Tensor& self) {
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[0];
    });
}

TensorPtr mean(const TensorPtr& a) {
    if (a->size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a->data) s += v;
    const double inv_n = 1.0 / static_cast<double>(a->size());
    return op_output({s * inv_n}, {1}, {a}, [a, inv_n](const Tensor& self) {
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[0] * inv_n;
    });
}

// ---- linear algebra ----------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2) throw std::invalid_argument("matmul: left operand must be rank-2");
    const bool vec_rhs = b->rank() == 1;
    const std::size_t m = a->shape[0];
    const std::size_t k = a->shape[1];
    const std::size_t bk = vec_rhs ? b->shape[0] : b->shape[0];
    const std::size_t n = vec_rhs ? 1 : b->shape[1];
    if (!vec_rhs && b->rank() != 2) throw std::invalid_argument("matmul: right operand rank");
    if (k != bk) {
        throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
    }
    std::vector<double> out(m * n, 0.0);
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bd + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    std::vector<std::size_t> out_shape = vec_rhs ? std::vector<std::size_t>{m}
                                                 : std::vector<std::size_t>{m, n};
    return op_output(std::move(out), std::move(out_shape), {a, b},
                     [a, b, m, k, n](const Tensor& self) {
                         const double* g = self.grad.data();
                         if (a->requires_grad) {
                             // grad_a = g . b^T
                             for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t p = 0; p < k; ++p) {
                                     double acc = 0.0;
                                     for (std::size_t j = 0; j < n; ++j)
                                         acc += g[i * n + j] * b->data[p * n + j];
                                     a->grad[i * k + p] += acc;
                                 }
                         }
                         if (b->requires_grad) {
                             // grad_b = a^T . g
                             for (std::size_t p = 0; p < k; ++p)
                                 for (std::size_t i = 0; i < m; ++i) {
                                     const double av = a->data[i * k + p];
                                     if (av == 0.0) continue;
                                     for (std::size_t j = 0; j < n; ++j)
                                         b->grad[p * n + j] += av * g[i * n + j];
                                 }
                         }
                     });
}

TensorPtr add_bias(const TensorPtr& m, const TensorPtr& bias) {
    if (m->rank() == 1) return add(m, bias);
    if (m->rank() != 2 || bias->rank() != 1 || bias->size() != m->shape[0]) {
        throw std::invalid_argument("add_bias: need [m x n] and [m], got " +
                                    shape_str(m->shape) + " and " + shape_str(bias->shape));
    }
    const std::size_t r = m->shape[0], c = m->shape[1];
    std::vector<double> out(m->data);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias->data[i];
    return op_output(std::move(out), m->shape, {m, bias}, [m, bias, r, c](const Tensor& self) {
        if (m->requires_grad)
            for (std::size_t i = 0; i < self.grad.size(); ++i) m->grad[i] += self.grad[i];
        if (bias->requires_grad)
            for (std::size_t i = 0; i < r; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j];
                bias->grad[i] += acc;
            }
    });
}

// ---- activations ---------------------------------------------------------------

namespace {

double softplus_fwd(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid_fwd(double x) {
    // stable for both tails
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

TensorPtr activation(const TensorPtr& x, Act kind) {
    std::vector<double> out(x->size());
    switch (kind) {
        case Act::Relu:
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = x->data[i] > 0.0 ? x->data[i] : 0.0;
            break;
        case Act::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->data[i]);
            break;
        case Act::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_fwd(x->data[i]);
            break;
        case Act::Softplus:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_fwd(x->data[i]);
            break;
    }
    auto rule = [x, kind](const Tensor& self) {
        switch (kind) {
            case Act::Relu:
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    if (x->data[i] > 0.0) x->grad[i] += self.grad[i];
                break;
            case Act::Tanh:
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    x->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
                break;
            case Act::Sigmoid:
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    x->grad[i] += self.grad[i] * self.data[i] * (1.0 - self.data[i]);
                break;
            case Act::Softplus:
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    x->grad[i] += self.grad[i] * sigmoid_fwd(x->data[i]);
                break;
        }
    };
    return op_output(std::move(out), x->shape, {x}, std::move(rule));
}

TensorPtr relu(const TensorPtr& x) { return activation(x, Act::Relu); }
TensorPtr tanh_act(const TensorPtr& x) { return activation(x, Act::Tanh); }
TensorPtr sigmoid(const TensorPtr& x) { return activation(x, Act::Sigmoid); }
TensorPtr softplus(const TensorPtr& x) { return activation(x, Act::Softplus); }

// ---- causal convolution ----------------------------------------------------------

TensorPtr conv1d_causal(const TensorPtr& x, const TensorPtr& kernel, std::size_t dilation) {
    if (dilation == 0) throw std::invalid_argument("conv1d_causal: dilation must be >= 1");
    if (x->rank() != 2 || kernel->rank() != 3) {
        throw std::invalid_argument("conv1d_causal: need x [c_in x T], kernel [c_out x c_in x k]");
    }
    const std::size_t c_in = x->shape[0];
    const std::size_t T = x->shape[1];
    const std::size_t c_out = kernel->shape[0];
    const std::size_t kc_in = kernel->shape[1];
    const std::size_t k = kernel->shape[2];
    if (kc_in != c_in) {
        throw std::invalid_argument("conv1d_causal: kernel expects " + std::to_string(kc_in) +
                                    " input channels, x has " + std::to_string(c_in));
    }
    if (k == 0) throw std::invalid_argument("conv1d_causal: kernel width must be >= 1");

    std::vector<double> out(c_out * T, 0.0);
    const double* xd = x->data.data();
    const double* wd = kernel->data.data();
    for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t ci = 0; ci < c_in; ++ci) {
            const double* w = wd + (o * c_in + ci) * k;
            const double* xr = xd + ci * T;
            double* orow = out.data() + o * T;
            for (std::size_t j = 0; j < k; ++j) {
                const double wj = w[j];
                if (wj == 0.0) continue;
                const std::size_t back = j * dilation;
                for (std::size_t t = back; t < T; ++t) orow[t] += wj * xr[t - back];
            }
        }
    }
    return op_output(std::move(out), {c_out, T}, {x, kernel},
                     [x, kernel, c_in, c_out, T, k, dilation](const Tensor& self) {
                         const double* g = self.grad.data();
                         for (std::size_t o = 0; o < c_out; ++o) {
                             for (std::size_t ci = 0; ci < c_in; ++ci) {
                                 const std::size_t wbase = (o * c_in + ci) * k;
                                 for (std::size_t j = 0; j < k; ++j) {
                                     const std::size_t back = j * dilation;
                                     if (x->requires_grad) {
                                         const double wj = kernel->data[wbase + j];
                                         if (wj != 0.0)
                                             for (std::size_t t = back; t < T; ++t)
                                                 x->grad[ci * T + t - back] += wj * g[o * T + t];
                                     }
                                     if (kernel->requires_grad) {
                                         double acc = 0.0;
                                         for (std::size_t t = back; t < T; ++t)
                                             acc += g[o * T + t] * x->data[ci * T + t - back];
                                         kernel->grad[wbase + j] += acc;
                                     }
                                 }
                             }
                         }
                     });
}

// ---- batch norm ---------------------------------------------------------------------

TensorPtr batchnorm1d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                      BatchNormStats& stats, BNMode mode) {
    if (x->rank() != 2) throw std::invalid_argument("batchnorm1d: x must be [channels x T]");
    const std::size_t C = x->shape[0];
    const std::size_t T = x->shape[1];
    if (gamma->size() != C || beta->size() != C || stats.mean.size() != C) {
        throw std::invalid_argument("batchnorm1d: channel count mismatch");
    }
    if (T == 0) throw std::invalid_argument("batchnorm1d: empty time axis");

    std::vector<double> use_mean(C), use_var(C);
    if (mode == BNMode::Train) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* row = x->data.data() + c * T;
            double m = 0.0;
            for (std::size_t t = 0; t < T; ++t) m += row[t];
            m /= static_cast<double>(T);
            double v = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double d = row[t] - m;
                v += d * d;
            }
            v /= static_cast<double>(T);
            use_mean[c] = m;
            use_var[c] = v;
            stats.mean[c] = (1.0 - stats.momentum) * stats.mean[c] + stats.momentum * m;
            stats.var[c] = (1.0 - stats.momentum) * stats.var[c] + stats.momentum * v;
        }
    } else {
        use_mean = stats.mean;
        use_var = stats.var;
    }

    const double eps = stats.epsilon;
    std::vector<double> out(C * T);
    std::vector<double> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) {
        inv_std[c] = 1.0 / std::sqrt(use_var[c] + eps);
        const double g = gamma->data[c], b = beta->data[c], m = use_mean[c];
        for (std::size_t t = 0; t < T; ++t)
            out[c * T + t] = g * (x->data[c * T + t] - m) * inv_std[c] + b;
    }

    const bool batch_stats = mode == BNMode::Train;
    return op_output(
        std::move(out), x->shape, {x, gamma, beta},
        [x, gamma, beta, C, T, use_mean, inv_std, batch_stats](const Tensor& self) {
            const double invT = 1.0 / static_cast<double>(T);
            for (std::size_t c = 0; c < C; ++c) {
                const double* g = self.grad.data() + c * T;
                const double* row = x->data.data() + c * T;
                const double istd = inv_std[c];
                const double m = use_mean[c];
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t t = 0; t < T; ++t) {
                    sum_g += g[t];
                    sum_gx += g[t] * (row[t] - m) * istd;
                }
                if (gamma->requires_grad) gamma->grad[c] += sum_gx;
                if (beta->requires_grad) beta->grad[c] += sum_g;
                if (x->requires_grad) {
                    const double gm = gamma->data[c];
                    if (batch_stats) {
                        // d/dx through batch mean and variance
                        for (std::size_t t = 0; t < T; ++t) {
                            const double xhat = (row[t] - m) * istd;
                            x->grad[c * T + t] +=
                                gm * istd * (g[t] - invT * sum_g - invT * xhat * sum_gx);
                        }
                    } else {
                        for (std::size_t t = 0; t < T; ++t)
                            x->grad[c * T + t] += gm * istd * g[t];
                    }
                }
            }
        });
}

// ---- likelihoods ---------------------------------------------------------------------

TensorPtr gaussian_nll(const TensorPtr& z, const TensorPtr& mu, const TensorPtr& sigma) {
    require_same_shape(z, mu, "gaussian_nll");
    require_same_shape(z, sigma, "gaussian_nll");
    const std::size_t n = z->size();
    constexpr double ln_2pi = 1.8378770664093453;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = sigma->data[i];
        if (!(s > 0.0)) {
            throw std::domain_error("gaussian_nll: sigma must be positive, got " +
                                    std::to_string(s));
        }
        const double d = z->data[i] - mu->data[i];
        total += 0.5 * (ln_2pi + 2.0 * std::log(s)) + d * d / (2.0 * s * s);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return op_output({total * inv_n}, {1}, {z, mu, sigma},
                     [z, mu, sigma, n, inv_n](const Tensor& self) {
                         const double go = self.grad[0] * inv_n;
                         for (std::size_t i = 0; i < n; ++i) {
                             const double s = sigma->data[i];
                             const double d = z->data[i] - mu->data[i];
                             if (mu->requires_grad) mu->grad[i] += go * (-d / (s * s));
                             if (z->requires_grad) z->grad[i] += go * (d / (s * s));
                             if (sigma->requires_grad)
                                 sigma->grad[i] += go * (1.0 / s - d * d / (s * s * s));
                         }
                     });
}

double digamma(double x) {
    // recurrence below 6, then the asymptotic series
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    return result;
}

TensorPtr negbin_nll(const TensorPtr& z, const TensorPtr& mu, const TensorPtr& alpha) {
    require_same_shape(z, mu, "negbin_nll");
    require_same_shape(z, alpha, "negbin_nll");
    const std::size_t n = z->size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double zv = z->data[i];
        if (zv < 0.0 || zv != std::floor(zv)) {
            throw std::domain_error("negbin_nll: z must hold non-negative integers, got " +
                                    std::to_string(zv));
        }
        const double m = mu->data[i], a = alpha->data[i];
        if (!(m > 0.0) || !(a > 0.0)) {
            throw std::domain_error("negbin_nll: mu and alpha must be positive");
        }
        const double r = 1.0 / a;
        const double logp = std::lgamma(zv + r) - std::lgamma(r) - std::lgamma(zv + 1.0) +
                            r * std::log(r / (r + m)) + zv * std::log(m / (r + m));
        total -= logp;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return op_output({total * inv_n}, {1}, {z, mu, alpha},
                     [z, mu, alpha, n, inv_n](const Tensor& self) {
                         const double go = self.grad[0] * inv_n;
                         for (std::size_t i = 0; i < n; ++i) {
                             const double zv = z->data[i];
                             const double m = mu->data[i], a = alpha->data[i];
                             const double r = 1.0 / a;
                             if (mu->requires_grad)
                                 mu->grad[i] += go * (-(zv / m - (zv + r) / (r + m)));
                             if (alpha->requires_grad) {
                                 const double dlogp_dr = digamma(zv + r) - digamma(r) +
                                                         std::log(r / (r + m)) + 1.0 -
                                                         (r + zv) / (r + m);
                                 alpha->grad[i] += go * (dlogp_dr * (1.0 / (a * a)));
                             }
                         }
                     });
}

TensorPtr pinball_loss(const TensorPtr& target, const TensorPtr& pred, double q) {
    require_same_shape(target, pred, "pinball_loss");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("pinball_loss: q must lie in (0,1)");
    const std::size_t n = target->size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = target->data[i] - pred->data[i];
        total += e >= 0.0 ? q * e : (q - 1.0) * e;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return op_output({total * inv_n}, {1}, {target, pred},
                     [target, pred, q, n, inv_n](const Tensor& self) {
                         const double go = self.grad[0] * inv_n;
                         for (std::size_t i = 0; i < n; ++i) {
                             const double e = target->data[i] - pred->data[i];
                             const double de = e >= 0.0 ? q : q - 1.0;
                             if (target->requires_grad) target->grad[i] += go * de;
                             if (pred->requires_grad) pred->grad[i] -= go * de;
                         }
                     });
}

// ---- backward -----------------------------------------------------------------------

void backward(const TensorPtr& loss) {
    if (!loss) throw std::invalid_argument("backward: null loss");
    if (loss->size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, has size " +
                                    std::to_string(loss->size()));
    }
    if (!loss->requires_grad) return;  // constant graph, nothing reachable

    // Iterative post-order DFS: execution-order-compatible tape replayed in
    // reverse. Deep unrolled graphs make recursion unsafe here.
    std::vector<TensorPtr> order;
    std::unordered_set<const Tensor*> visited;
    std::vector<std::pair<TensorPtr, std::size_t>> stack;
    stack.emplace_back(loss, 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorPtr child = node->parents[next_child++];
            if (child->requires_grad && visited.insert(child.get()).second) {
                stack.emplace_back(std::move(child), 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (const auto& node : order) ensure_grad_buffer(node);
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_rule) (*it)->backward_rule(**it);
    }
}

}  // namespace battsynth::num
