#include "dopobc/decoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace dopobc {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = dist(rng);
    return Matrix(rows, cols, std::move(data));
}

Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto in = x.row(i);
        double mean = 0.0;
        for (double v : in) mean += v;
        mean /= d;
        double var = 0.0;
        for (double v : in) var += (v - mean) * (v - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        auto o = out.row(i);
        for (std::size_t k = 0; k < x.cols(); ++k) o[k] = (in[k] - mean) * inv;
    }
    return out;
}

Matrix head_slice(const Matrix& m, std::size_t head, std::size_t width) {
    Matrix out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t k = 0; k < width; ++k) out(i, k) = m(i, head * width + k);
    }
    return out;
}

}  // namespace

void ToyModelConfig::validate() const {
    if (vocab_size == 0 || model_dim == 0 || num_layers == 0 || num_heads == 0) {
        throw std::invalid_argument("ToyModelConfig: all sizes must be >= 1");
    }
    if (!(qk_init_scale >= 0.0) || !std::isfinite(qk_init_scale)) throw std::invalid_argument("ToyModelConfig: qk_init_scale must be >= 0");
    if (model_dim % num_heads != 0) throw std::invalid_argument("ToyModelConfig: model_dim must be divisible by num_heads");
}

ToyModel::ToyModel(const ToyModelConfig& config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(config_.weight_seed);
    const std::size_t d = config_.model_dim;
    const double proj = 1.0 / std::sqrt(static_cast<double>(d));
    embedding_ = random_matrix(config_.vocab_size, d, 1.0, rng);
    layers_.reserve(config_.num_layers);
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        LayerWeights w;
        w.wq = random_matrix(d, d, proj * config_.qk_init_scale, rng);
        w.wk = random_matrix(d, d, proj * config_.qk_init_scale, rng);
        w.wv = random_matrix(d, d, proj, rng);
        w.wo = random_matrix(d, d, proj, rng);
        w.w1 = random_matrix(d, 4 * d, proj, rng);
        w.w2 = random_matrix(4 * d, d, 1.0 / std::sqrt(4.0 * static_cast<double>(d)), rng);
        layers_.push_back(std::move(w));
    }
}

Matrix ToyModel::embed(std::span<const int> tokens) const {
    Matrix out(tokens.size(), config_.model_dim);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int t = tokens[i];
        if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) throw std::invalid_argument("embed: token out of range");
        auto src = embedding_.row(static_cast<std::size_t>(t));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

int ToyModel::next_token(const Matrix& hidden) const {
    if (hidden.rows() == 0 || hidden.cols() != config_.model_dim) throw std::invalid_argument("next_token: bad hidden shape");
    const Matrix last(1, hidden.cols(),
                      std::vector<double>(hidden.row(hidden.rows() - 1).begin(), hidden.row(hidden.rows() - 1).end()));
    const Matrix logits = matmul_transposed(layer_norm(last), embedding_);
    int best = 0;
    for (std::size_t v = 1; v < logits.cols(); ++v) {
        if (logits(0, v) > logits(0, static_cast<std::size_t>(best))) best = static_cast<int>(v);
    }
    return best;
}

LayerOutput decoder_layer_forward(const Matrix& hidden, const LayerWeights& weights, const ToyModelConfig& config,
                                  const equity::RowModulation& modulation, const Matrix* score_bias,
                                  const AttentionKernel& kernel) {
    const std::size_t n = hidden.rows();
    const std::size_t d = config.model_dim;
    if (n == 0 || hidden.cols() != d) throw std::invalid_argument("decoder_layer_forward: hidden shape mismatch");
    if (weights.wq.rows() != d || weights.wq.cols() != d) throw std::invalid_argument("decoder_layer_forward: weight shape mismatch");
    if (modulation.alphas.size() != n || modulation.sigmas.size() != n) {
        throw std::invalid_argument("decoder_layer_forward: modulation length mismatch");
    }
    const bool biased = score_bias != nullptr && !score_bias->empty();
    if (biased && (score_bias->rows() != n || score_bias->cols() != n)) {
        throw std::invalid_argument("decoder_layer_forward: score bias shape mismatch");
    }

    const Matrix normed = layer_norm(hidden);
    const Matrix q = matmul(normed, weights.wq);
    const Matrix k = matmul(normed, weights.wk);
    const Matrix v = matmul(normed, weights.wv);

    const std::size_t dk = config.key_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    const double inv_heads = 1.0 / static_cast<double>(config.num_heads);

    Matrix concat(n, d);
    LayerOutput out{Matrix{}, AttentionResult{Matrix(n, n), std::vector<double>(n, 0.0)}};
    for (std::size_t h = 0; h < config.num_heads; ++h) {
        const Matrix qh = head_slice(q, h, dk);
        const Matrix kh = head_slice(k, h, dk);
        const Matrix vh = head_slice(v, h, dk);

        AttentionInputs inputs{matmul_transposed(qh, kh), modulation.alphas, modulation.sigmas};
        for (std::size_t i = 0; i < n; ++i) {
            auto row = inputs.scores.row(i);
            for (std::size_t j = 0; j < n; ++j) {
                row[j] *= inv_sqrt_dk;
                if (biased) row[j] += (*score_bias)(i, j);
            }
        }
        const AttentionResult head = kernel(inputs);
        const Matrix ctx = matmul(head.attention, vh);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < dk; ++c) concat(i, h * dk + c) = ctx(i, c);
            auto avg = out.attention.attention.row(i);
            auto src = head.attention.row(i);
            for (std::size_t j = 0; j < n; ++j) avg[j] += src[j] * inv_heads;
            out.attention.absorbed_mass[i] += head.absorbed_mass[i] * inv_heads;
        }
    }

    Matrix mid = add(hidden, matmul(concat, weights.wo));
    Matrix ff = matmul(layer_norm(mid), weights.w1);
    for (std::size_t i = 0; i < ff.rows(); ++i) {
        for (double& x : ff.row(i)) x = x > 0.0 ? x : 0.0;
    }
    out.hidden = add(mid, matmul(ff, weights.w2));
    return out;
}

DecodeResult autoregressive_decode(const ToyModel& model, std::span<const int> prompt_tokens, std::size_t max_steps,
                                   equity::EquityContext& equity_context, const ObjectBinding* binding,
                                   const DecodeOptions& options) {
    if (prompt_tokens.empty()) throw std::invalid_argument("autoregressive_decode: empty prompt");
    if (max_steps == 0) throw std::invalid_argument("autoregressive_decode: step budget must be >= 1");

    const auto& params = equity_context.params();
    std::vector<equity::ObjectStats> window;
    if (binding != nullptr) window = binding->proposals();
    std::vector<double> prior_shares(window.size(), 0.0);
    Matrix previous;

    std::vector<int> sequence(prompt_tokens.begin(), prompt_tokens.end());
    DecodeResult result;
    result.trace.steps.reserve(max_steps);

    for (std::size_t step = 0; step < max_steps; ++step) {
        const std::size_t n = sequence.size();
        StepRecord record;
        record.length = n;

        Matrix bias;
        equity::RowObjectMap columns;
        if (!window.empty()) {
            for (std::size_t k = 0; k < window.size(); ++k) window[k].attn_share = prior_shares[k];
            record.signals = equity_context.step(window, options.equity_counter);
            record.modulation = equity_context.modulate(binding->row_map(n, previous.empty() ? nullptr : &previous), record.signals, options.equity_counter);
            columns = binding->column_map(n);
            bias = binding->score_bias(n);
        } else {
            record.modulation = {std::vector<double>(n, params.alpha0), std::vector<double>(n, params.sigma0)};
        }

        Matrix hidden = model.embed(sequence);
        record.layers.reserve(model.layers().size());
        for (const auto& layer : model.layers()) {
            LayerOutput lo = decoder_layer_forward(hidden, layer, model.config(), record.modulation, &bias, options.kernel);
            hidden = std::move(lo.hidden);
            record.layers.push_back(std::move(lo.attention));
        }

        if (!window.empty()) {
            const auto mass = column_sums(record.layers.back().attention);
            record.shares = equity::attention_share_from_columns(mass, columns, window.size(), options.equity_counter);
            prior_shares = record.shares;
            previous = record.layers.back().attention;
        }

        record.token_id = model.next_token(hidden);
        sequence.push_back(record.token_id);
        result.tokens.push_back(record.token_id);
        result.trace.steps.push_back(std::move(record));
    }
    return result;
}

}  // namespace dopobc
