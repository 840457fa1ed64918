#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dopobc::numerics {

inline constexpr double kMinMaxEpsilon = 1e-8;
inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kDefaultEmaRate = 0.1;

// Softmax with max subtraction. Throws on empty or non-finite input.
std::vector<double> stable_softmax_row(std::span<const double> logits);

// In-place variant used by the attention kernel; same contract.
void stable_softmax_inplace(std::span<double> logits);

// (x - min) / (max - min + eps). A degenerate window (max == min) maps to all zeros.
std::vector<double> minmax_normalize(std::span<const double> values, double epsilon = kMinMaxEpsilon);

// Diagonal-covariance Gaussian tracked with an exponential moving average.
struct EmaGaussianState {
    std::vector<double> mean;
    std::vector<double> variance;
    std::uint64_t count = 0;
    double rate = kDefaultEmaRate;

    explicit EmaGaussianState(double beta = kDefaultEmaRate);

    bool initialized() const { return count > 0; }
    std::size_t dimension() const { return mean.size(); }
};

// First observation: mean = feature, variance = 1. Afterwards the mean moves first and the
// variance is updated against the new mean, floored at kVarianceFloor.
EmaGaussianState ema_update(const EmaGaussianState& state, std::span<const double> feature);

// sqrt(sum_k (f_k - mu_k)^2 / v_k)
double mahalanobis_diag(std::span<const double> feature, const EmaGaussianState& state);

}  // namespace dopobc::numerics
