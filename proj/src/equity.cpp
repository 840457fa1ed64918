#include "dopobc/equity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dopobc::equity {

namespace {

void check_weights(const DominanceWeights& w) {
    for (double v : w) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("dominance weights must be finite and >= 0");
    }
    if (std::abs(w[0] + w[1] + w[2] - 1.0) > 1e-9) throw std::invalid_argument("dominance weights must sum to 1");
}

std::vector<double> project(std::span<const ObjectStats> window, double ObjectStats::*field) {
    std::vector<double> out;
    out.reserve(window.size());
    for (const auto& o : window) out.push_back(o.*field);
    return out;
}

}  // namespace

void ObjectStats::validate() const {
    if (!(size >= 0.0) || !std::isfinite(size)) throw std::invalid_argument("ObjectStats: size must be >= 0");
    if (!(persistence >= 0.0) || !std::isfinite(persistence)) throw std::invalid_argument("ObjectStats: persistence must be >= 0");
    if (!(attn_share >= 0.0 && attn_share <= 1.0)) throw std::invalid_argument("ObjectStats: attn_share must lie in [0, 1]");
    if (!(confidence >= 0.0 && confidence <= 1.0)) throw std::invalid_argument("ObjectStats: confidence must lie in [0, 1]");
}

void EquityParams::validate() const {
    check_weights(weights);
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("EquityParams: ") + what);
    };
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda must be >= 0");
    require(std::isfinite(gamma) && gamma >= 0.0, "gamma must be >= 0");
    require(tau_p >= 0.0 && tau_p <= 1.0, "tau_p must lie in [0, 1]");
    require(std::isfinite(tau_r) && tau_r > 0.0, "tau_r must be > 0");
    require(std::isfinite(r_max) && r_max > 0.0, "r_max must be > 0");
    require(std::isfinite(alpha0) && alpha0 > 0.0, "alpha0 must be > 0");
    require(std::isfinite(alpha_floor) && alpha_floor > 0.0, "alpha_floor must be > 0");
    require(std::isfinite(sigma0) && sigma0 >= 0.0, "sigma0 must be >= 0");
    require(std::isfinite(sigma_min) && sigma_min >= 0.0, "sigma_min must be >= 0");
    require(sigma_min <= sigma0, "sigma_min must not exceed sigma0");
    require(beta > 0.0 && beta <= 1.0, "beta must lie in (0, 1]");
}

void RowObjectMap::validate(std::size_t num_objects) const {
    for (int o : assignment) {
        if (o == kUnmapped) continue;
        if (o < 0 || static_cast<std::size_t>(o) >= num_objects) {
            throw std::invalid_argument("RowObjectMap: entry " + std::to_string(o) + " references an unknown object");
        }
    }
}

NormalizedStats normalize_object_stats(std::span<const ObjectStats> window, OpCounter* counter) {
    if (window.empty()) throw std::invalid_argument("normalize_object_stats: empty window");
    for (const auto& o : window) o.validate();
    NormalizedStats out{
        numerics::minmax_normalize(project(window, &ObjectStats::size)),
        numerics::minmax_normalize(project(window, &ObjectStats::persistence)),
        numerics::minmax_normalize(project(window, &ObjectStats::attn_share)),
    };
    if (counter) counter->add(3 * 3 * window.size());  // project, scan, rescale per signal
    return out;
}

double dominance_score(double size, double persistence, double attention, const DominanceWeights& weights) {
    check_weights(weights);
    return weights[0] * size + weights[1] * persistence + weights[2] * attention;
}

double dominant_penalty(double dominance, double lambda) {
    if (!std::isfinite(dominance) || !std::isfinite(lambda) || lambda < 0.0) {
        throw std::invalid_argument("dominant_penalty: requires finite dominance and lambda >= 0");
    }
    return std::exp(-lambda * dominance);
}

double rarity_score(std::span<const double> feature, const numerics::EmaGaussianState& density, double tau_r,
                    double r_max) {
    if (!(tau_r > 0.0) || !(r_max > 0.0)) throw std::invalid_argument("rarity_score: tau_r and r_max must be > 0");
    const double d = numerics::mahalanobis_diag(feature, density);
    return std::clamp(d / tau_r, 0.0, r_max);
}

double outlier_boost(double rarity, double confidence, double gamma, double tau_p) {
    if (confidence < tau_p) return 0.0;
    return gamma * rarity;
}

RowModulation row_modulation(const RowObjectMap& rows, std::span<const double> penalties,
                             std::span<const double> boosts, const EquityParams& params, OpCounter* counter) {
    if (penalties.size() != boosts.size()) throw std::invalid_argument("row_modulation: penalty/boost length mismatch");
    rows.validate(penalties.size());
    const std::size_t n = rows.size();
    RowModulation mod{std::vector<double>(n, params.alpha0), std::vector<double>(n, params.sigma0)};
    for (std::size_t i = 0; i < n; ++i) {
        const int o = rows.assignment[i];
        if (o == RowObjectMap::kUnmapped) continue;
        const double lift = 1.0 + boosts[static_cast<std::size_t>(o)];
        const double alpha = params.alpha0 * penalties[static_cast<std::size_t>(o)] * lift;
        const double sigma = params.sigma0 / lift;
        mod.alphas[i] = std::max(params.alpha_floor, alpha);
        mod.sigmas[i] = std::clamp(sigma, params.sigma_min, params.sigma0);
    }
    if (counter) counter->add(2 * n);
    return mod;
}

std::vector<double> attention_share_from_columns(std::span<const double> column_mass, const RowObjectMap& columns,
                                                 std::size_t num_objects, OpCounter* counter) {
    if (column_mass.size() != columns.size()) throw std::invalid_argument("attention_share: column map length mismatch");
    columns.validate(num_objects);
    double total = 0.0;
    std::vector<double> shares(num_objects, 0.0);
    for (std::size_t j = 0; j < column_mass.size(); ++j) {
        total += column_mass[j];
        const int o = columns.assignment[j];
        if (o != RowObjectMap::kUnmapped) shares[static_cast<std::size_t>(o)] += column_mass[j];
    }
    if (!(total > 0.0)) throw std::invalid_argument("attention_share: attention matrix carries no mass");
    for (double& s : shares) s /= total;
    if (counter) counter->add(2 * column_mass.size() + num_objects);
    return shares;
}

std::vector<double> attention_share(const Matrix& attention, const RowObjectMap& columns, std::size_t num_objects) {
    return attention_share_from_columns(column_sums(attention), columns, num_objects);
}

std::vector<double> rescale_proposals(std::span<const double> scores, std::span<const double> penalties,
                                      std::span<const double> boosts) {
    if (scores.size() != penalties.size() || scores.size() != boosts.size()) {
        throw std::invalid_argument("rescale_proposals: length mismatch");
    }
    std::vector<double> out(scores.size());
    for (std::size_t k = 0; k < scores.size(); ++k) out[k] = scores[k] * penalties[k] * (1.0 + boosts[k]);
    return out;
}

PersistenceTracker::PersistenceTracker(std::size_t window) : window_(window) {
    if (window == 0) throw std::invalid_argument("PersistenceTracker: window must be >= 1");
}

void PersistenceTracker::observe_frame(std::span<const int> object_ids) {
    std::vector<int> frame(object_ids.begin(), object_ids.end());
    std::sort(frame.begin(), frame.end());
    frame.erase(std::unique(frame.begin(), frame.end()), frame.end());
    for (int id : frame) ++counts_[id];
    frames_.push_back(std::move(frame));
    if (frames_.size() > window_) {
        for (int id : frames_.front()) {
            if (--counts_[id] == 0) counts_.erase(id);
        }
        frames_.pop_front();
    }
}

double PersistenceTracker::persistence(int object_id) const {
    const auto it = counts_.find(object_id);
    return it == counts_.end() ? 0.0 : static_cast<double>(it->second);
}

EquityContext::EquityContext(EquityParams params) : params_(params), density_(params.beta) {
    params_.validate();
}

EquitySignals EquityContext::step(std::span<const ObjectStats> window, OpCounter* counter) {
    EquitySignals sig;
    sig.normalized = normalize_object_stats(window, counter);
    const std::size_t m = window.size();

    std::vector<std::vector<double>> features(m);
    for (std::size_t k = 0; k < m; ++k) {
        if (!window[k].feature.empty()) {
            features[k] = window[k].feature;
        } else {
            features[k] = {sig.normalized.size[k], sig.normalized.persistence[k], sig.normalized.attention[k],
                           window[k].confidence};
        }
        density_ = numerics::ema_update(density_, features[k]);
        if (counter) counter->add(3 * features[k].size());
    }

    sig.dominance.resize(m);
    sig.penalties.resize(m);
    sig.rarity.resize(m);
    sig.boosts.resize(m);
    std::vector<double> confidences(m);
    for (std::size_t k = 0; k < m; ++k) {
        sig.dominance[k] = dominance_score(sig.normalized.size[k], sig.normalized.persistence[k],
                                           sig.normalized.attention[k], params_.weights);
        sig.penalties[k] = dominant_penalty(sig.dominance[k], params_.lambda);
        sig.rarity[k] = rarity_score(features[k], density_, params_.tau_r, params_.r_max);
        sig.boosts[k] = outlier_boost(sig.rarity[k], window[k].confidence, params_.gamma, params_.tau_p);
        confidences[k] = window[k].confidence;
        if (counter) counter->add(6 + 3 * features[k].size());
    }
    sig.routed_scores = rescale_proposals(confidences, sig.penalties, sig.boosts);
    if (counter) counter->add(2 * m);
    return sig;
}

RowModulation EquityContext::modulate(const RowObjectMap& rows, const EquitySignals& signals,
                                      OpCounter* counter) const {
    return row_modulation(rows, signals.penalties, signals.boosts, params_, counter);
}

}  // namespace dopobc::equity
