#include "battsynth/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace battsynth::model {

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

void summarize_trajectories(ForecastResult& result) {
    if (result.trajectories.empty())
        throw std::invalid_argument("summarize_trajectories: no trajectories");
    const std::size_t total = result.trajectories.front().size();
    if (total < result.t0)
        throw std::invalid_argument("summarize_trajectories: trajectories shorter than t0");
    const std::size_t h = total - result.t0;
    const std::size_t n = result.trajectories.size();

    result.mean.assign(h, 0.0);
    result.q10.resize(h);
    result.q50.resize(h);
    result.q90.resize(h);
    std::vector<double> step_values(n);
    for (std::size_t s = 0; s < h; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            step_values[j] = result.trajectories[j][result.t0 + s];
            acc += step_values[j];
        }
        result.mean[s] = acc / static_cast<double>(n);
        result.q10[s] = empirical_quantile(step_values, 0.1);
        result.q50[s] = empirical_quantile(step_values, 0.5);
        result.q90[s] = empirical_quantile(step_values, 0.9);
    }
    result.point = result.q50;
}

}  // namespace battsynth::model
