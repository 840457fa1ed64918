#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dopobc/scenesim.hpp"

using namespace dopobc;
using namespace dopobc::scenesim;

namespace {

DecodeTrace trace_with(const std::vector<std::vector<double>>& shares) {
    DecodeTrace t;
    for (const auto& s : shares) {
        StepRecord r;
        r.shares = s;
        t.steps.push_back(std::move(r));
    }
    return t;
}

Scene tiny_scene() {
    SceneConfig c;
    c.seed = 1;
    return generate_scene(c);
}

}  // namespace

TEST_CASE("scenes are deterministic per seed") {
    SceneConfig c;
    c.seed = 17;
    CHECK(generate_scene(c) == generate_scene(c));
    c.seed = 18;
    const Scene other = generate_scene(c);
    c.seed = 17;
    CHECK_FALSE(generate_scene(c) == other);
}

TEST_CASE("scene structure") {
    SceneConfig c;
    c.num_objects = 5;
    c.num_distractors = 3;
    c.seed = 4;
    const Scene s = generate_scene(c);
    CHECK(s.objects.size() == 5);
    CHECK(s.distractors.size() == 3);
    CHECK(s.num_proposals() == 8);
    CHECK(s.token_ids.size() == 8);
    CHECK(s.dominant_index() == 0);

    double total = 0.0;
    for (const auto& o : s.proposals()) total += o.size;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    for (std::size_t k = 0; k + 1 < s.objects.size(); ++k) CHECK(s.objects[k].size > s.objects[k + 1].size);
    for (const auto& o : s.objects) {
        CHECK(o.confidence >= 0.6);
        CHECK(o.confidence <= 1.0);
    }
    for (const auto& d : s.distractors) {
        CHECK(d.confidence >= 0.1);
        CHECK(d.confidence <= 0.4);
        CHECK(d.size <= s.objects.back().size);
    }
    // Every proposal owns exactly `persistence` columns and at least one.
    for (std::size_t k = 0; k < s.num_proposals(); ++k) {
        const auto cols = std::count(s.column_map.assignment.begin(), s.column_map.assignment.end(), static_cast<int>(k));
        CHECK(cols >= 1);
        CHECK(static_cast<double>(cols) == s.proposal(k).persistence);
    }
}

TEST_CASE("object sizes follow the power law") {
    SceneConfig c;
    c.num_objects = 8;
    c.num_distractors = 0;
    c.zipf_exponent = 1.5;
    const Scene s = generate_scene(c);
    CHECK(s.objects[0].size / s.objects[7].size == doctest::Approx(22.627416997969522).epsilon(1e-9));
    c.zipf_exponent = 0.0;
    const Scene flat = generate_scene(c);
    for (const auto& o : flat.objects) CHECK(o.size == doctest::Approx(0.125));
}

TEST_CASE("scene config validation") {
    SceneConfig c;
    c.num_objects = 0;
    CHECK_THROWS_AS(generate_scene(c), std::invalid_argument);
    c = {};
    c.object_confidence = {0.9, 0.2};
    CHECK_THROWS_AS(generate_scene(c), std::invalid_argument);
    c = {};
    c.zipf_exponent = -1.0;
    CHECK_THROWS_AS(generate_scene(c), std::invalid_argument);
}

TEST_CASE("scene JSON round trip") {
    const Scene s = tiny_scene();
    const auto j = scene_to_json(s);
    CHECK(j.at("schema_version") == kSceneSchemaVersion);
    CHECK(scene_from_json(nlohmann::json::parse(j.dump())) == s);
    auto bad = j;
    bad["schema_version"] = 99;
    CHECK_THROWS_AS(scene_from_json(bad), std::invalid_argument);
}

TEST_CASE("emit_objects") {
    const auto t = trace_with({{0.5, 0.06, 0.03, 0.0}, {0.5, 0.04, 0.05, 0.0}});
    CHECK(mean_shares(t) == std::vector<double>{0.5, 0.05, 0.04, 0.0});
    CHECK(emit_objects(t, 0.05) == std::set<int>{0, 1});
    CHECK(emit_objects(t, 0.5) == std::set<int>{0});
    CHECK_THROWS_AS(emit_objects(t, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(emit_objects(DecodeTrace{}, 0.05), std::invalid_argument);
}

TEST_CASE("gini") {
    CHECK(gini(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(0.0));
    CHECK(gini(std::vector<double>{1, 0, 0, 0}) == doctest::Approx(0.75));
    CHECK(gini(std::vector<double>{0, 1}) == doctest::Approx(0.5));
    CHECK(gini(std::vector<double>{2, 2, 0}) == doctest::Approx(gini(std::vector<double>{0.5, 0.5, 0.0})));
    CHECK_THROWS_AS(gini(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(gini(std::vector<double>{0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(gini(std::vector<double>{-0.1, 1}), std::invalid_argument);
}

TEST_CASE("coverage_metrics") {
    const Scene s = tiny_scene();  // objects 0..3, distractors 4, 5
    const std::vector<double> shares{0.4, 0.2, 0.1, 0.1, 0.1, 0.0};
    const auto r = coverage_metrics(std::set<int>{0, 1, 4}, s, shares);
    CHECK(r.omission_rate == doctest::Approx(0.5));
    CHECK(r.false_emit_rate == doctest::Approx(0.5));
    CHECK(r.per_object_shares.at(4) == 0.1);
    CHECK(r.attention_gini == doctest::Approx(gini(std::vector<double>{0.4, 0.2, 0.1, 0.1})));

    const auto all = coverage_metrics(std::set<int>{0, 1, 2, 3}, s, shares);
    CHECK(all.omission_rate == 0.0);
    CHECK(all.false_emit_rate == 0.0);
    CHECK(rare_omission_rate(std::set<int>{0}, s) == 1.0);
    CHECK(rare_omission_rate(std::set<int>{1, 2}, s) == doctest::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(coverage_metrics(std::set<int>{42}, s, shares), std::invalid_argument);
    CHECK_THROWS_AS(coverage_metrics(std::set<int>{}, s, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("coverage is invariant to relabeling object ids") {
    const Scene s = tiny_scene();
    const std::vector<double> shares{0.4, 0.2, 0.1, 0.1, 0.1, 0.0};
    const std::set<int> emitted{0, 2, 5};
    const auto base = coverage_metrics(emitted, s, shares);

    Scene relabeled = s;
    const std::vector<int> perm{7, 3, 11, 2, 9, 5};
    for (std::size_t k = 0; k < relabeled.objects.size(); ++k) relabeled.objects[k].object_id = perm[k];
    for (std::size_t k = 0; k < relabeled.distractors.size(); ++k)
        relabeled.distractors[k].object_id = perm[k + relabeled.objects.size()];
    std::set<int> mapped;
    for (int id : emitted) mapped.insert(perm[static_cast<std::size_t>(id)]);
    const auto r = coverage_metrics(mapped, relabeled, shares);
    CHECK(r.omission_rate == base.omission_rate);
    CHECK(r.false_emit_rate == base.false_emit_rate);
    CHECK(r.attention_gini == base.attention_gini);
    CHECK(to_object_ids(std::set<int>{0, 2, 5}, relabeled) == mapped);
}

TEST_CASE("distractors are never boosted") {
    SceneConfig c;
    c.num_distractors = 4;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        c.seed = seed;
        const Scene s = generate_scene(c);
        equity::EquityContext ctx{equity::EquityParams{}};
        auto proposals = s.proposals();
        for (int step = 0; step < 4; ++step) {
            const auto sig = ctx.step(proposals);
            for (std::size_t k = s.objects.size(); k < s.num_proposals(); ++k) CHECK(sig.boosts[k] == 0.0);
            equity::RowObjectMap rows{s.column_map.assignment};
            const auto mod = ctx.modulate(rows, sig);
            for (std::size_t i = 0; i < rows.assignment.size(); ++i) {
                if (static_cast<std::size_t>(rows.assignment[i]) >= s.objects.size())
                    CHECK(mod.alphas[i] <= ctx.params().alpha0);
            }
        }
    }
}

TEST_CASE("scene binding") {
    const Scene s = tiny_scene();
    InjectionConfig inj;
    inj.dominance_gain = 4.0;
    inj.coherence_gain = 1.5;
    SceneBinding b(s, inj);
    const std::size_t v = s.column_map.assignment.size();
    CHECK(b.vision_tokens(64).size() == v);
    for (int t : b.vision_tokens(64)) CHECK(t < 64);

    const auto cols = b.column_map(v + 3);
    CHECK(cols.assignment[v] == equity::RowObjectMap::kUnmapped);
    CHECK_THROWS_AS(b.column_map(v - 1), std::invalid_argument);

    const Matrix bias = b.score_bias(v + 2);
    const int o0 = s.column_map.assignment[0];
    CHECK(bias(0, 0) == doctest::Approx(4.0 * s.proposal(static_cast<std::size_t>(o0)).size + 1.5));
    CHECK(bias(v, 0) == doctest::Approx(4.0 * s.proposal(static_cast<std::size_t>(o0)).size));
    CHECK(bias(v, v) == 0.0);

    // A text row that attended only to one object's columns follows that object.
    Matrix prev(v + 1, v + 1);
    std::size_t target = 0;
    while (s.column_map.assignment[target] != 2) ++target;
    prev(v, target) = 1.0;
    const auto rows = b.row_map(v + 2, &prev);
    CHECK(rows.assignment[v] == 2);
    CHECK(rows.assignment[v + 1] == equity::RowObjectMap::kUnmapped);
    CHECK(b.row_map(v + 1, nullptr).assignment[v] == equity::RowObjectMap::kUnmapped);
}
