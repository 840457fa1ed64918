#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dopobc/matrix.hpp"

namespace dopobc {

// Raw scores S = QK^T / sqrt(d_k) plus the per-row amplitude and register slope.
struct AttentionInputs {
    Matrix scores;
    std::vector<double> alphas;
    std::vector<double> sigmas;

    // Square scores, matching lengths, finite entries, sigma >= 0. Throws otherwise.
    void validate() const;
};

struct AttentionResult {
    Matrix attention;
    // 1 - sum_{j<=i} A[i][j]: the share of row i captured by the register slots.
    std::vector<double> absorbed_mass;
};

// C[i][j] = 1 iff j <= i.
Matrix build_causal_mask(std::size_t n);

// P[i][j] = -(j - i) * sigma_i for j > i, 0 elsewhere.
Matrix build_register(std::size_t n, std::span<const double> sigmas);

// A = SoftMax((diag(alpha) S) .* C + P) .* C, with no renormalization after the final mask.
AttentionResult compose_attention(const AttentionInputs& inputs);

}  // namespace dopobc
