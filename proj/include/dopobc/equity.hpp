#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dopobc/matrix.hpp"
#include "dopobc/numerics.hpp"

namespace dopobc::equity {

// Raw per-proposal signals: size s, persistence L, attention share A, confidence p.
struct ObjectStats {
    int object_id = 0;
    double size = 0.0;
    double persistence = 0.0;
    double attn_share = 0.0;
    double confidence = 0.0;
    // Rarity features. Empty selects the default [s^, L^, A^, p].
    std::vector<double> feature;

    void validate() const;
};

// Weights for size, persistence and attention share in the dominance score.
using DominanceWeights = std::array<double, 3>;

struct EquityParams {
    DominanceWeights weights{0.5, 0.25, 0.25};
    double lambda = 1.0;
    double gamma = 0.3;
    double tau_p = 0.5;
    double tau_r = 1.0;
    double r_max = 2.0;
    double alpha0 = 1.0;
    double sigma0 = 0.05;
    double alpha_floor = 0.1;
    double sigma_min = 0.005;
    double beta = numerics::kDefaultEmaRate;

    void validate() const;
};

// pi(i): proposal index for row (or column) i, -1 when unmapped.
struct RowObjectMap {
    static constexpr int kUnmapped = -1;
    std::vector<int> assignment;

    std::size_t size() const { return assignment.size(); }
    // Throws if any mapped entry is outside [0, num_objects).
    void validate(std::size_t num_objects) const;
};

struct RowModulation {
    std::vector<double> alphas;
    std::vector<double> sigmas;
};

struct NormalizedStats {
    std::vector<double> size;
    std::vector<double> persistence;
    std::vector<double> attention;
};

// Counts scalar operations performed by the equity pipeline.
struct OpCounter {
    std::uint64_t ops = 0;
    void add(std::uint64_t k) { ops += k; }
};

NormalizedStats normalize_object_stats(std::span<const ObjectStats> window, OpCounter* counter = nullptr);

double dominance_score(double size, double persistence, double attention, const DominanceWeights& weights);

double dominant_penalty(double dominance, double lambda);

double rarity_score(std::span<const double> feature, const numerics::EmaGaussianState& density, double tau_r,
                    double r_max);

double outlier_boost(double rarity, double confidence, double gamma, double tau_p);

RowModulation row_modulation(const RowObjectMap& rows, std::span<const double> penalties,
                             std::span<const double> boosts, const EquityParams& params,
                             OpCounter* counter = nullptr);

// Fraction of total attention mass landing on the columns of each object.
std::vector<double> attention_share(const Matrix& attention, const RowObjectMap& columns, std::size_t num_objects);

// Same reduction from precomputed column masses; O(n).
std::vector<double> attention_share_from_columns(std::span<const double> column_mass, const RowObjectMap& columns,
                                                 std::size_t num_objects, OpCounter* counter = nullptr);

// score * w_pen * (1 + b)
std::vector<double> rescale_proposals(std::span<const double> scores, std::span<const double> penalties,
                                      std::span<const double> boosts);

// Frame-count persistence over a sliding window of video frames.
class PersistenceTracker {
public:
    explicit PersistenceTracker(std::size_t window = 8);

    void observe_frame(std::span<const int> object_ids);
    double persistence(int object_id) const;
    std::size_t frames() const { return frames_.size(); }

private:
    std::size_t window_;
    std::deque<std::vector<int>> frames_;
    std::unordered_map<int, int> counts_;
};

// Per-proposal outputs of one equity step.
struct EquitySignals {
    NormalizedStats normalized;
    std::vector<double> dominance;
    std::vector<double> penalties;
    std::vector<double> rarity;
    std::vector<double> boosts;
    std::vector<double> routed_scores;
};

// Mutable per-scene state (EMA scene density). Single writer.
class EquityContext {
public:
    explicit EquityContext(EquityParams params);

    const EquityParams& params() const { return params_; }
    const numerics::EmaGaussianState& density() const { return density_; }

    // Normalizes the window, updates the density with every proposal's feature, then scores
    // dominance, penalty, rarity and boost for each proposal.
    EquitySignals step(std::span<const ObjectStats> window, OpCounter* counter = nullptr);

    RowModulation modulate(const RowObjectMap& rows, const EquitySignals& signals,
                           OpCounter* counter = nullptr) const;

private:
    EquityParams params_;
    numerics::EmaGaussianState density_;
};

}  // namespace dopobc::equity
