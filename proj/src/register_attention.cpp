#include "dopobc/register_attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dopobc/numerics.hpp"

namespace dopobc {

void AttentionInputs::validate() const {
    const std::size_t n = scores.rows();
    if (n == 0 || scores.cols() != n) throw std::invalid_argument("AttentionInputs: scores must be square and non-empty");
    if (alphas.size() != n || sigmas.size() != n) throw std::invalid_argument("AttentionInputs: dimension mismatch");
    if (!scores.all_finite()) throw std::invalid_argument("AttentionInputs: non-finite score");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(alphas[i])) throw std::invalid_argument("AttentionInputs: non-finite alpha");
        if (!std::isfinite(sigmas[i]) || sigmas[i] < 0.0) throw std::invalid_argument("AttentionInputs: sigma must be finite and >= 0");
    }
}

Matrix build_causal_mask(std::size_t n) {
    if (n == 0) throw std::invalid_argument("build_causal_mask: n must be >= 1");
    Matrix mask(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) mask(i, j) = 1.0;
    }
    return mask;
}

Matrix build_register(std::size_t n, std::span<const double> sigmas) {
    if (sigmas.size() != n) throw std::invalid_argument("build_register: sigma length mismatch");
    for (double s : sigmas) {
        if (!std::isfinite(s) || s < 0.0) throw std::invalid_argument("build_register: sigma must be finite and >= 0");
    }
    Matrix reg(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) reg(i, j) = -static_cast<double>(j - i) * sigmas[i];
    }
    return reg;
}

AttentionResult compose_attention(const AttentionInputs& inputs) {
    inputs.validate();
    const std::size_t n = inputs.scores.rows();

    // Row i: valid slots carry alpha_i * S[i][j]; register slots carry -(j - i) * sigma_i.
    Matrix logits(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto out = logits.row(i);
        auto src = inputs.scores.row(i);
        const double alpha = inputs.alphas[i];
        const double sigma = inputs.sigmas[i];
        for (std::size_t j = 0; j <= i; ++j) out[j] = alpha * src[j];
        for (std::size_t j = i + 1; j < n; ++j) out[j] = -static_cast<double>(j - i) * sigma;
    }

    AttentionResult result{std::move(logits), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        auto row = result.attention.row(i);
        numerics::stable_softmax_inplace(row);
        double valid = 0.0;
        for (std::size_t j = 0; j <= i; ++j) valid += row[j];
        for (std::size_t j = i + 1; j < n; ++j) row[j] = 0.0;
        result.absorbed_mass[i] = std::clamp(1.0 - valid, 0.0, 1.0);
    }
    return result;
}

}  // namespace dopobc
