#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dopobc/decoder.hpp"
#include "dopobc/equity.hpp"

namespace dopobc::scenesim {

inline constexpr int kSceneSchemaVersion = 1;
inline constexpr double kDefaultEmitThreshold = 0.05;

struct UnitRange {
    double lo = 0.0;
    double hi = 1.0;
};

struct SceneConfig {
    std::size_t num_objects = 4;
    std::size_t num_distractors = 2;
    double zipf_exponent = 1.5;
    UnitRange object_confidence{0.6, 1.0};
    UnitRange distractor_confidence{0.1, 0.4};
    std::size_t tokens_per_unit_size = 40;
    // Distractor raw size as a fraction of the smallest object's raw size.
    UnitRange distractor_relative_size{0.5, 1.0};
    std::uint64_t seed = 0;

    void validate() const;
};

// Ground-truth objects (sizes descending) followed by distractor proposals. Proposal index k
// refers to objects[k] for k < objects.size(), else distractors[k - objects.size()].
struct Scene {
    std::vector<equity::ObjectStats> objects;
    std::vector<equity::ObjectStats> distractors;
    equity::RowObjectMap column_map;  // over the vision-token columns, by proposal index
    std::vector<int> token_ids;       // one embedding id per proposal (before vocab wrap)

    std::size_t num_proposals() const { return objects.size() + distractors.size(); }
    const equity::ObjectStats& proposal(std::size_t k) const;
    std::vector<equity::ObjectStats> proposals() const;
    // Index of the largest ground-truth object.
    std::size_t dominant_index() const;

    friend bool operator==(const Scene& a, const Scene& b);
};

Scene generate_scene(const SceneConfig& config);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

// Raw-score injection: columns of object o gain dominance_gain * size(o) in every row, and
// columns sharing the row's object gain coherence_gain.
struct InjectionConfig {
    double dominance_gain = 8.0;
    double coherence_gain = 2.0;
    // A text row aligns to the object holding the largest share of its previous-step attention,
    // provided that share is at least this fraction of the row's valid mass.
    double text_alignment_min = 0.0;
};

// Places the scene's vision tokens first, then the text prompt, then generated tokens. Vision
// rows map to their own object; text rows map to the object they attended to most.
class SceneBinding final : public ObjectBinding {
public:
    SceneBinding(const Scene& scene, InjectionConfig injection);

    std::vector<equity::ObjectStats> proposals() const override;
    equity::RowObjectMap row_map(std::size_t n, const Matrix* previous) const override;
    equity::RowObjectMap column_map(std::size_t n) const override;
    Matrix score_bias(std::size_t n) const override;

    // Vision token ids wrapped into the vocabulary.
    std::vector<int> vision_tokens(std::size_t vocab_size) const;

private:
    const Scene& scene_;
    InjectionConfig injection_;
};

// Mean per-proposal share over the trace's steps.
std::vector<double> mean_shares(const DecodeTrace& trace);

// Proposal indices whose mean share reaches theta_emit.
std::set<int> emit_objects(const DecodeTrace& trace, double theta_emit);

std::set<int> to_object_ids(const std::set<int>& proposal_indices, const Scene& scene);

double gini(std::span<const double> shares);

struct CoverageReport {
    double omission_rate = 0.0;
    double false_emit_rate = 0.0;
    double attention_gini = 0.0;
    std::map<int, double> per_object_shares;  // object_id -> mean share
};

// `emitted` holds object ids; `shares` is indexed by proposal index.
CoverageReport coverage_metrics(const std::set<int>& emitted, const Scene& scene, std::span<const double> shares);

// Omission over ground-truth objects other than the dominant one.
double rare_omission_rate(const std::set<int>& emitted, const Scene& scene);

}  // namespace dopobc::scenesim
