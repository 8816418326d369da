#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace battsynth::num {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major tensor of doubles participating in a reverse-mode tape.
///
/// Ops are define-by-run: each op allocates a fresh output node and, when
/// any input requires gradients, records the inputs as parents together
/// with a local backward rule. backward() replays the recorded graph in
/// reverse topological order. A tensor and the graph it belongs to are
/// confined to one thread; independent graphs may live on distinct threads.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized like data when requires_grad
    bool requires_grad = false;

    // Tape record: parents plus the local gradient rule. The rule reads
    // this node's grad and accumulates (+=) into each parent's grad.
    std::vector<TensorPtr> parents;
    std::function<void(const Tensor&)> backward_rule;

    Tensor(std::vector<double> values, std::vector<std::size_t> dims, bool req_grad);

    static TensorPtr make(std::vector<double> values, std::vector<std::size_t> dims,
                          bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    static TensorPtr zeros(const std::vector<std::size_t>& dims, bool requires_grad = false);
    static TensorPtr full(const std::vector<std::size_t>& dims, double value,
                          bool requires_grad = false);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only
    double item() const;       // size-1 only

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    void zero_grad();
    void accumulate_grad(const std::vector<double>& g);
};

/// Named trainable tensor; names are unique within a model
/// (e.g. "deepar.lstm.W_ih").
struct Parameter {
    TensorPtr tensor;
    std::string name;
};

/// While alive, ops on this thread skip tape recording entirely, so
/// inference and sampling never build graphs. Nestable.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// False inside a NoGradGuard.
bool grad_enabled();

// ---- elementwise and shape ops -------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double c);
TensorPtr add_scalar(const TensorPtr& a, double c);
TensorPtr abs_val(const TensorPtr& a);

/// Concatenate rank-1 tensors into one vector.
TensorPtr concat(const std::vector<TensorPtr>& parts);
/// Contiguous sub-vector [offset, offset+len) of a rank-1 tensor.
TensorPtr slice(const TensorPtr& a, std::size_t offset, std::size_t len);
/// Rows [offset, offset+n) of a rank-2 tensor as a new [n x cols] tensor.
TensorPtr slice_rows(const TensorPtr& m, std::size_t offset, std::size_t n);
/// Columns [offset, offset+n) of a rank-2 tensor as a new [rows x n] tensor.
TensorPtr slice_cols(const TensorPtr& m, std::size_t offset, std::size_t n);
/// Concatenate rank-2 tensors with equal row counts along the column axis.
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);
/// Column t of a rank-2 [rows x cols] tensor as a rank-1 vector.
TensorPtr column(const TensorPtr& m, std::size_t t);
/// Same data under a new shape (element count must match).
TensorPtr reshape(const TensorPtr& a, std::vector<std::size_t> dims);

TensorPtr sum(const TensorPtr& a);
TensorPtr mean(const TensorPtr& a);

// ---- linear algebra -------------------------------------------------------

/// Matrix product [m x k] * [k x n] -> [m x n]. A rank-1 right operand of
/// length k is treated as [k x 1] and yields a rank-1 result of length m.
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);

/// Broadcast-add a per-row bias: [m x n] + [m] applied to every column.
/// Rank-1 input falls back to plain elementwise add.
TensorPtr add_bias(const TensorPtr& m, const TensorPtr& bias);

// ---- activations ----------------------------------------------------------

enum class Act { Relu, Tanh, Sigmoid, Softplus };

TensorPtr activation(const TensorPtr& x, Act kind);
TensorPtr relu(const TensorPtr& x);
TensorPtr tanh_act(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr softplus(const TensorPtr& x);

// ---- causal convolution and batch norm ------------------------------------

/// Dilated causal 1-d convolution. x is [c_in x T], kernel is
/// [c_out x c_in x k], output is [c_out x T]. kernel[..., 0] taps the
/// current step and kernel[..., j] taps j*dilation steps back; positions
/// before the start read as zero, so output at time t depends only on
/// inputs at times <= t.
TensorPtr conv1d_causal(const TensorPtr& x, const TensorPtr& kernel, std::size_t dilation);

enum class BNMode { Train, Eval };

/// Running statistics for one batchnorm1d site.
struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;
    double momentum = 0.1;
    double epsilon = 1e-5;

    explicit BatchNormStats(std::size_t channels)
        : mean(channels, 0.0), var(channels, 1.0) {}
};

/// Per-channel normalization of x [channels x T]. Train mode normalizes by
/// the statistics of the given tensor along T and folds them into the
/// running stats via exponential moving average; eval mode normalizes by
/// the running stats. T == 1 in train mode has zero variance and relies on
/// epsilon alone.
TensorPtr batchnorm1d(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                      BatchNormStats& stats, BNMode mode);

// ---- likelihoods -----------------------------------------------------------

/// Mean over elements of 0.5*ln(2*pi*sigma^2) + (z-mu)^2 / (2*sigma^2).
/// Throws std::domain_error when any sigma <= 0.
TensorPtr gaussian_nll(const TensorPtr& z, const TensorPtr& mu, const TensorPtr& sigma);

/// Mean negative log pmf of the negative binomial in mean/shape form:
/// NB(z; mu, alpha) with r = 1/alpha,
///   log pmf = lgamma(z+r) - lgamma(r) - lgamma(z+1)
///           + r*ln(r/(r+mu)) + z*ln(mu/(r+mu)).
/// z must hold non-negative integers; mu, alpha must be positive.
TensorPtr negbin_nll(const TensorPtr& z, const TensorPtr& mu, const TensorPtr& alpha);

/// Mean pinball (quantile) loss of pred against target at level q.
/// At q = 0.5 this equals half the mean absolute error.
TensorPtr pinball_loss(const TensorPtr& target, const TensorPtr& pred, double q);

// ---- backward ---------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
/// replays the recorded graph backward, accumulating into the grad buffer
/// of every requires_grad tensor reachable from the loss. Gradients add up
/// when a tensor feeds multiple consumers; tensors not reachable from the
/// loss keep whatever their grad buffer already holds (zeros after
/// zero_grad). Throws std::invalid_argument for a non-scalar loss.
void backward(const TensorPtr& loss);

/// Digamma function (derivative of lgamma); used by the negative binomial
/// backward rule.
double digamma(double x);

}  // namespace battsynth::num
