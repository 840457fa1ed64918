#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dopobc/equity.hpp"
#include "dopobc/matrix.hpp"
#include "dopobc/register_attention.hpp"

namespace dopobc {

struct ToyModelConfig {
    std::size_t vocab_size = 64;
    std::size_t model_dim = 16;
    std::size_t num_layers = 2;
    std::size_t num_heads = 2;
    std::uint64_t weight_seed = 7;
    // Multiplies the standard deviation of the query/key projections.
    double qk_init_scale = 1.0;

    std::size_t key_dim() const { return model_dim / num_heads; }
    void validate() const;
};

struct LayerWeights {
    Matrix wq, wk, wv, wo;  // d x d
    Matrix w1;              // d x 4d
    Matrix w2;              // 4d x d
};

// Frozen, seeded pseudo-random weights with a tied embedding/unembedding table.
class ToyModel {
public:
    explicit ToyModel(const ToyModelConfig& config);

    const ToyModelConfig& config() const { return config_; }
    const Matrix& embedding() const { return embedding_; }
    const std::vector<LayerWeights>& layers() const { return layers_; }

    Matrix embed(std::span<const int> tokens) const;
    // Greedy pick from the last row of the final hidden state. Ties go to the lowest id.
    int next_token(const Matrix& hidden) const;

private:
    ToyModelConfig config_;
    Matrix embedding_;
    std::vector<LayerWeights> layers_;
};

using AttentionKernel = std::function<AttentionResult(const AttentionInputs&)>;

struct LayerOutput {
    Matrix hidden;
    // Head-averaged attention and absorbed mass.
    AttentionResult attention;
};

// One decoder layer: pre-norm QKV projection, S = QK^T / sqrt(d_k) (+ optional score bias),
// per-head register attention with the row modulation, A V, output projection, residual,
// then a residual ReLU feed-forward block.
LayerOutput decoder_layer_forward(const Matrix& hidden, const LayerWeights& weights, const ToyModelConfig& config,
                                  const equity::RowModulation& modulation, const Matrix* score_bias = nullptr,
                                  const AttentionKernel& kernel = compose_attention);

// What the decode loop needs to know about the objects in the visual context.
class ObjectBinding {
public:
    virtual ~ObjectBinding() = default;

    // Raw proposal statistics; attn_share is overwritten by the decoder each step.
    virtual std::vector<equity::ObjectStats> proposals() const = 0;
    // pi over n rows. `previous` is the prior step's final-layer attention (null at the first
    // step), letting rows without a fixed patch assignment follow what they attended to.
    virtual equity::RowObjectMap row_map(std::size_t n, const Matrix* previous) const = 0;
    virtual equity::RowObjectMap column_map(std::size_t n) const = 0;
    // Additive bias on raw scores; an empty matrix means none.
    virtual Matrix score_bias(std::size_t n) const { (void)n; return {}; }
};

struct StepRecord {
    int token_id = 0;
    std::size_t length = 0;  // sequence length the step attended over
    std::vector<AttentionResult> layers;
    equity::RowModulation modulation;
    std::vector<double> shares;  // per proposal, from the final layer
    equity::EquitySignals signals;
};

struct DecodeTrace {
    std::vector<StepRecord> steps;
};

struct DecodeResult {
    std::vector<int> tokens;  // generated tokens only
    DecodeTrace trace;
};

struct DecodeOptions {
    AttentionKernel kernel = compose_attention;
    equity::OpCounter* equity_counter = nullptr;
};

// Greedy decoding with full-matrix recomputation each step. `binding` may be null, in which
// case every row keeps (alpha0, sigma0) and no shares are recorded.
DecodeResult autoregressive_decode(const ToyModel& model, std::span<const int> prompt_tokens, std::size_t max_steps,
                                   equity::EquityContext& equity_context, const ObjectBinding* binding,
                                   const DecodeOptions& options = {});

}  // namespace dopobc
