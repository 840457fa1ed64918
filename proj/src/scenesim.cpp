#include "dopobc/scenesim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace dopobc::scenesim {

namespace {

void check_range(const UnitRange& r, const char* what) {
    if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
        throw std::invalid_argument(std::string("SceneConfig: ") + what + " must satisfy 0 <= lo <= hi <= 1");
    }
}

nlohmann::json stats_to_json(const equity::ObjectStats& o) {
    return {{"object_id", o.object_id},   {"size", o.size},
            {"persistence", o.persistence}, {"attn_share", o.attn_share},
            {"confidence", o.confidence}, {"feature", o.feature}};
}

equity::ObjectStats stats_from_json(const nlohmann::json& j) {
    equity::ObjectStats o;
    o.object_id = j.at("object_id").get<int>();
    o.size = j.at("size").get<double>();
    o.persistence = j.at("persistence").get<double>();
    o.attn_share = j.at("attn_share").get<double>();
    o.confidence = j.at("confidence").get<double>();
    o.feature = j.value("feature", std::vector<double>{});
    o.validate();
    return o;
}

bool same_stats(const equity::ObjectStats& a, const equity::ObjectStats& b) {
    return a.object_id == b.object_id && a.size == b.size && a.persistence == b.persistence &&
           a.attn_share == b.attn_share && a.confidence == b.confidence && a.feature == b.feature;
}

}  // namespace

void SceneConfig::validate() const {
    if (num_objects == 0) throw std::invalid_argument("SceneConfig: num_objects must be >= 1");
    if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) throw std::invalid_argument("SceneConfig: zipf exponent must be >= 0");
    if (tokens_per_unit_size == 0) throw std::invalid_argument("SceneConfig: tokens_per_unit_size must be >= 1");
    check_range(object_confidence, "object confidence range");
    check_range(distractor_confidence, "distractor confidence range");
    check_range(distractor_relative_size, "distractor relative size range");
}

const equity::ObjectStats& Scene::proposal(std::size_t k) const {
    if (k < objects.size()) return objects[k];
    return distractors.at(k - objects.size());
}

std::vector<equity::ObjectStats> Scene::proposals() const {
    std::vector<equity::ObjectStats> out = objects;
    out.insert(out.end(), distractors.begin(), distractors.end());
    return out;
}

std::size_t Scene::dominant_index() const {
    if (objects.empty()) throw std::logic_error("Scene: no ground-truth objects");
    const auto it = std::max_element(objects.begin(), objects.end(),
                                      [](const auto& a, const auto& b) { return a.size < b.size; });
    return static_cast<std::size_t>(it - objects.begin());
}

bool operator==(const Scene& a, const Scene& b) {
    auto same_list = [](const auto& x, const auto& y) {
        return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), same_stats);
    };
    return same_list(a.objects, b.objects) && same_list(a.distractors, b.distractors) &&
           a.column_map.assignment == b.column_map.assignment && a.token_ids == b.token_ids;
}

Scene generate_scene(const SceneConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](const UnitRange& r) { return r.lo + (r.hi - r.lo) * unit(rng); };

    const std::size_t m = config.num_objects + config.num_distractors;
    std::vector<double> raw(m);
    for (std::size_t k = 0; k < config.num_objects; ++k) {
        raw[k] = std::pow(static_cast<double>(k + 1), -config.zipf_exponent);
    }
    const double smallest = raw[config.num_objects - 1];
    for (std::size_t k = config.num_objects; k < m; ++k) raw[k] = smallest * draw(config.distractor_relative_size);
    double total = 0.0;
    for (double v : raw) total += v;

    Scene scene;
    std::vector<int> layout;
    for (std::size_t k = 0; k < m; ++k) {
        equity::ObjectStats o;
        o.object_id = static_cast<int>(k);
        o.size = raw[k] / total;
        const bool is_object = k < config.num_objects;
        o.confidence = draw(is_object ? config.object_confidence : config.distractor_confidence);
        const auto columns = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::lround(o.size * static_cast<double>(config.tokens_per_unit_size))));
        o.persistence = static_cast<double>(columns);
        layout.insert(layout.end(), columns, static_cast<int>(k));
        (is_object ? scene.objects : scene.distractors).push_back(std::move(o));
    }
    std::shuffle(layout.begin(), layout.end(), rng);
    scene.column_map.assignment = std::move(layout);

    std::uniform_int_distribution<int> ids(0, 1 << 16);
    scene.token_ids.resize(m);
    for (int& t : scene.token_ids) t = ids(rng);
    return scene;
}

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["schema_version"] = kSceneSchemaVersion;
    j["objects"] = nlohmann::json::array();
    for (const auto& o : scene.objects) j["objects"].push_back(stats_to_json(o));
    j["distractors"] = nlohmann::json::array();
    for (const auto& o : scene.distractors) j["distractors"].push_back(stats_to_json(o));
    j["column_map"] = scene.column_map.assignment;
    j["token_ids"] = scene.token_ids;
    return j;
}

Scene scene_from_json(const nlohmann::json& j) {
    const int version = j.at("schema_version").get<int>();
    if (version != kSceneSchemaVersion) throw std::invalid_argument("scene: unsupported schema_version " + std::to_string(version));
    Scene scene;
    for (const auto& o : j.at("objects")) scene.objects.push_back(stats_from_json(o));
    for (const auto& o : j.at("distractors")) scene.distractors.push_back(stats_from_json(o));
    scene.column_map.assignment = j.at("column_map").get<std::vector<int>>();
    scene.token_ids = j.at("token_ids").get<std::vector<int>>();
    scene.column_map.validate(scene.num_proposals());
    if (scene.token_ids.size() != scene.num_proposals()) throw std::invalid_argument("scene: token_ids length mismatch");
    return scene;
}

SceneBinding::SceneBinding(const Scene& scene, InjectionConfig injection) : scene_(scene), injection_(injection) {}

std::vector<equity::ObjectStats> SceneBinding::proposals() const { return scene_.proposals(); }

equity::RowObjectMap SceneBinding::row_map(std::size_t n, const Matrix* previous) const {
    equity::RowObjectMap map = column_map(n);
    if (previous == nullptr) return map;
    const std::size_t vision = scene_.column_map.size();
    const std::size_t known = std::min(n, previous->rows());
    std::vector<double> mass(scene_.num_proposals());
    for (std::size_t i = vision; i < known; ++i) {
        std::fill(mass.begin(), mass.end(), 0.0);
        double valid = 0.0;
        auto row = previous->row(i);
        for (std::size_t j = 0; j <= i; ++j) {
            valid += row[j];
            if (j < vision) mass[static_cast<std::size_t>(map.assignment[j])] += row[j];
        }
        const auto best = std::max_element(mass.begin(), mass.end());
        if (*best > 0.0 && *best >= injection_.text_alignment_min * valid) {
            map.assignment[i] = static_cast<int>(best - mass.begin());
        }
    }
    return map;
}

equity::RowObjectMap SceneBinding::column_map(std::size_t n) const {
    const auto& vision = scene_.column_map.assignment;
    if (n < vision.size()) throw std::invalid_argument("SceneBinding: sequence shorter than the vision prefix");
    equity::RowObjectMap map{std::vector<int>(n, equity::RowObjectMap::kUnmapped)};
    std::copy(vision.begin(), vision.end(), map.assignment.begin());
    return map;
}

Matrix SceneBinding::score_bias(std::size_t n) const {
    const equity::RowObjectMap map = column_map(n);
    const std::size_t vision = scene_.column_map.size();
    Matrix bias(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const int row_obj = map.assignment[i];
        for (std::size_t j = 0; j < vision; ++j) {
            const int col_obj = map.assignment[j];
            double b = injection_.dominance_gain * scene_.proposal(static_cast<std::size_t>(col_obj)).size;
            if (row_obj == col_obj) b += injection_.coherence_gain;
            bias(i, j) = b;
        }
    }
    return bias;
}

std::vector<int> SceneBinding::vision_tokens(std::size_t vocab_size) const {
    std::vector<int> out;
    out.reserve(scene_.column_map.size());
    for (int k : scene_.column_map.assignment) {
        out.push_back(scene_.token_ids[static_cast<std::size_t>(k)] % static_cast<int>(vocab_size));
    }
    return out;
}

std::vector<double> mean_shares(const DecodeTrace& trace) {
    if (trace.steps.empty()) throw std::invalid_argument("mean_shares: empty trace");
    std::vector<double> mean(trace.steps.front().shares.size(), 0.0);
    for (const auto& step : trace.steps) {
        if (step.shares.size() != mean.size()) throw std::invalid_argument("mean_shares: inconsistent share vectors");
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += step.shares[k];
    }
    for (double& v : mean) v /= static_cast<double>(trace.steps.size());
    return mean;
}

std::set<int> emit_objects(const DecodeTrace& trace, double theta_emit) {
    if (!(theta_emit > 0.0 && theta_emit < 1.0)) throw std::invalid_argument("emit_objects: theta must lie in (0, 1)");
    const auto mean = mean_shares(trace);
    std::set<int> out;
    for (std::size_t k = 0; k < mean.size(); ++k) {
        if (mean[k] >= theta_emit) out.insert(static_cast<int>(k));
    }
    return out;
}

std::set<int> to_object_ids(const std::set<int>& proposal_indices, const Scene& scene) {
    std::set<int> out;
    for (int k : proposal_indices) out.insert(scene.proposal(static_cast<std::size_t>(k)).object_id);
    return out;
}

double gini(std::span<const double> shares) {
    if (shares.empty()) throw std::invalid_argument("gini: empty vector");
    double total = 0.0;
    for (double v : shares) {
        if (!(v >= 0.0)) throw std::invalid_argument("gini: shares must be nonnegative");
        total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("gini: shares sum to zero");
    std::vector<double> sorted(shares.begin(), shares.end());
    std::sort(sorted.begin(), sorted.end());
    // G = sum_k (2k - m + 1) x_(k) / (m * total) over ascending order, k from 0.
    const double m = static_cast<double>(sorted.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) acc += (2.0 * static_cast<double>(k) - m + 1.0) * sorted[k];
    return std::max(0.0, acc / (m * total));
}

CoverageReport coverage_metrics(const std::set<int>& emitted, const Scene& scene, std::span<const double> shares) {
    if (shares.size() != scene.num_proposals()) throw std::invalid_argument("coverage_metrics: share length mismatch");
    std::set<int> gt;
    std::set<int> distractor;
    for (const auto& o : scene.objects) gt.insert(o.object_id);
    for (const auto& o : scene.distractors) distractor.insert(o.object_id);
    for (int id : emitted) {
        if (!gt.count(id) && !distractor.count(id)) {
            throw std::invalid_argument("coverage_metrics: emitted id " + std::to_string(id) + " is not in the scene");
        }
    }

    CoverageReport report;
    std::size_t missed = 0;
    for (int id : gt) missed += emitted.count(id) ? 0 : 1;
    report.omission_rate = static_cast<double>(missed) / static_cast<double>(gt.size());
    std::size_t false_hits = 0;
    for (int id : distractor) false_hits += emitted.count(id);
    report.false_emit_rate =
        distractor.empty() ? 0.0 : static_cast<double>(false_hits) / static_cast<double>(distractor.size());

    std::vector<double> gt_shares;
    for (std::size_t k = 0; k < scene.num_proposals(); ++k) {
        report.per_object_shares[scene.proposal(k).object_id] = shares[k];
        if (k < scene.objects.size()) gt_shares.push_back(shares[k]);
    }
    double gt_total = 0.0;
    for (double v : gt_shares) gt_total += v;
    report.attention_gini = gt_total > 0.0 ? gini(gt_shares) : 0.0;
    return report;
}

double rare_omission_rate(const std::set<int>& emitted, const Scene& scene) {
    const std::size_t dominant = scene.dominant_index();
    if (scene.objects.size() < 2) return 0.0;
    std::size_t missed = 0;
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        if (k == dominant) continue;
        missed += emitted.count(scene.objects[k].object_id) ? 0 : 1;
    }
    return static_cast<double>(missed) / static_cast<double>(scene.objects.size() - 1);
}

}  // namespace dopobc::scenesim
