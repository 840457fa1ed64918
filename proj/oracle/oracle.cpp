#include "oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dopobc::oracle {

namespace {

using Grid = std::vector<std::vector<long double>>;

Grid grid(std::size_t n, long double fill = 0.0L) { return Grid(n, std::vector<long double>(n, fill)); }

void check_inputs(const AttentionInputs& in) {
    const std::size_t n = in.scores.rows();
    if (n == 0 || in.scores.cols() != n || in.alphas.size() != n || in.sigmas.size() != n) {
        throw std::invalid_argument("oracle: dimension mismatch");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (in.sigmas[i] < 0.0 || !std::isfinite(in.sigmas[i]) || !std::isfinite(in.alphas[i])) {
            throw std::invalid_argument("oracle: bad alpha/sigma");
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(in.scores(i, j))) throw std::invalid_argument("oracle: non-finite score");
        }
    }
}

}  // namespace

AttentionResult naive_compose_attention(const AttentionInputs& in) {
    check_inputs(in);
    const std::size_t n = in.scores.rows();

    Grid causal = grid(n);
    Grid reg = grid(n);
    Grid diag_alpha = grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        diag_alpha[i][i] = in.alphas[i];
        for (std::size_t j = 0; j < n; ++j) {
            causal[i][j] = (i >= j) ? 1.0L : 0.0L;
            reg[i][j] = (j > i) ? -(static_cast<long double>(j) - static_cast<long double>(i)) * in.sigmas[i] : 0.0L;
        }
    }

    // diag(alpha) * S as a full triple loop.
    Grid scaled = grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k < n; ++k) acc += diag_alpha[i][k] * static_cast<long double>(in.scores(k, j));
            scaled[i][j] = acc;
        }
    }

    Grid logits = grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) logits[i][j] = scaled[i][j] * causal[i][j] + reg[i][j];
    }

    AttentionResult out{Matrix(n, n), std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        // Summation runs from the last column backwards.
        long double denom = 0.0L;
        for (std::size_t j = n; j-- > 0;) denom += std::exp(logits[i][j]);
        long double valid = 0.0L;
        for (std::size_t j = 0; j < n; ++j) {
            const long double p = std::exp(logits[i][j]) / denom * causal[i][j];
            out.attention(i, j) = static_cast<double>(p);
            valid += p;
        }
        long double absorbed = 1.0L - valid;
        if (absorbed < 0.0L) absorbed = 0.0L;
        out.absorbed_mass[i] = static_cast<double>(absorbed);
    }
    return out;
}

Matrix vanilla_causal_attention(const Matrix& scores) {
    const std::size_t n = scores.rows();
    if (scores.cols() != n) throw std::invalid_argument("vanilla_causal_attention: square matrix required");
    if (!scores.all_finite()) throw std::invalid_argument("vanilla_causal_attention: non-finite score");
    const long double neg_inf = -std::numeric_limits<long double>::infinity();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<long double> row(n);
        for (std::size_t j = 0; j < n; ++j) row[j] = j <= i ? static_cast<long double>(scores(i, j)) : neg_inf;
        long double denom = 0.0L;
        for (long double v : row) denom += std::exp(v);
        for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<double>(std::exp(row[j]) / denom);
    }
    return out;
}

AttentionResult vanilla_kernel(const AttentionInputs& in) {
    const std::size_t n = in.scores.rows();
    Matrix scaled = in.scores;
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : scaled.row(i)) v *= in.alphas[i];
    }
    return AttentionResult{vanilla_causal_attention(scaled), std::vector<double>(n, 0.0)};
}

}  // namespace dopobc::oracle
