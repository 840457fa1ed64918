#include "dopobc/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dopobc::numerics {

void stable_softmax_inplace(std::span<double> logits) {
    if (logits.empty()) throw std::invalid_argument("stable_softmax_row: empty vector");
    double peak = logits[0];
    for (double v : logits) {
        if (!std::isfinite(v)) throw std::invalid_argument("stable_softmax_row: non-finite logit");
        peak = std::max(peak, v);
    }
    double total = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        total += v;
    }
    const double inv = 1.0 / total;
    for (double& v : logits) v *= inv;
}

std::vector<double> stable_softmax_row(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    stable_softmax_inplace(out);
    return out;
}

std::vector<double> minmax_normalize(std::span<const double> values, double epsilon) {
    if (values.empty()) throw std::invalid_argument("minmax_normalize: empty vector");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    std::vector<double> out(values.size(), 0.0);
    if (hi == lo) return out;
    const double denom = hi - lo + epsilon;
    for (std::size_t k = 0; k < values.size(); ++k) out[k] = (values[k] - lo) / denom;
    return out;
}

EmaGaussianState::EmaGaussianState(double beta) : rate(beta) {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("EmaGaussianState: rate must lie in (0, 1]");
}

EmaGaussianState ema_update(const EmaGaussianState& state, std::span<const double> feature) {
    EmaGaussianState next = state;
    if (!state.initialized()) {
        if (feature.empty()) throw std::invalid_argument("ema_update: empty feature");
        next.mean.assign(feature.begin(), feature.end());
        next.variance.assign(feature.size(), 1.0);
        next.count = 1;
        return next;
    }
    if (feature.size() != state.dimension()) throw std::invalid_argument("ema_update: dimension mismatch");
    const double beta = state.rate;
    for (std::size_t k = 0; k < feature.size(); ++k) {
        const double mu = (1.0 - beta) * state.mean[k] + beta * feature[k];
        const double dev = feature[k] - mu;
        next.mean[k] = mu;
        next.variance[k] = std::max(kVarianceFloor, (1.0 - beta) * state.variance[k] + beta * dev * dev);
    }
    ++next.count;
    return next;
}

double mahalanobis_diag(std::span<const double> feature, const EmaGaussianState& state) {
    if (!state.initialized()) throw std::invalid_argument("mahalanobis_diag: uninitialized state");
    if (feature.size() != state.dimension()) throw std::invalid_argument("mahalanobis_diag: dimension mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < feature.size(); ++k) {
        const double d = feature[k] - state.mean[k];
        acc += d * d / state.variance[k];
    }
    return std::sqrt(acc);
}

}  // namespace dopobc::numerics
