#include "dopobc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dopobc::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

scenesim::UnitRange range_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument("config: ranges must be [lo, hi]");
    return {v[0], v[1]};
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

// Runs fn(i) for i in [0, count) across hardware threads; results land in caller-owned slots.
template <typename Fn>
void parallel_for(std::size_t count, Fn fn) {
    const std::size_t workers = std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

json summary_to_json(const Summary& s) {
    return {{"runs", s.runs},
            {"omission_rate", s.omission_rate},
            {"false_emit_rate", s.false_emit_rate},
            {"attention_gini", s.attention_gini},
            {"dominant_share", s.dominant_share},
            {"rare_share_sum", s.rare_share_sum},
            {"rare_omission_rate", s.rare_omission_rate},
            {"absorbed_mass", s.absorbed_mass}};
}

}  // namespace

void ExperimentConfig::validate() const {
    scene.validate();
    model.validate();
    equity.validate();
    if (variants.empty()) throw std::invalid_argument("config: at least one variant is required");
    if (seeds.empty()) throw std::invalid_argument("config: at least one seed is required");
    std::set<std::string> names;
    for (const auto& v : variants) {
        if (v.name.empty()) throw std::invalid_argument("config: variant names must be non-empty");
        if (!names.insert(v.name).second) throw std::invalid_argument("config: duplicate variant name '" + v.name + "'");
        apply_overrides(equity, v.overrides).validate();
    }
    if (decode.prompt_tokens.empty()) throw std::invalid_argument("config: decode.prompt_tokens must be non-empty");
    if (decode.max_steps == 0) throw std::invalid_argument("config: decode.max_steps must be >= 1");
    for (int t : decode.prompt_tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size) throw std::invalid_argument("config: prompt token out of vocabulary");
    }
    if (!(theta_emit > 0.0 && theta_emit < 1.0)) throw std::invalid_argument("config: theta_emit must lie in (0, 1)");
}

const std::vector<std::string>& equity_param_names() {
    static const std::vector<std::string> names{"w1",     "w2",    "w3",     "lambda",      "gamma",     "tau_p",
                                                "tau_r",  "r_max", "alpha0", "alpha_floor", "sigma0",    "sigma_min",
                                                "beta"};
    return names;
}

equity::EquityParams apply_overrides(equity::EquityParams p, const std::map<std::string, double>& overrides) {
    for (const auto& [key, value] : overrides) {
        if (key == "w1") p.weights[0] = value;
        else if (key == "w2") p.weights[1] = value;
        else if (key == "w3") p.weights[2] = value;
        else if (key == "lambda") p.lambda = value;
        else if (key == "gamma") p.gamma = value;
        else if (key == "tau_p") p.tau_p = value;
        else if (key == "tau_r") p.tau_r = value;
        else if (key == "r_max") p.r_max = value;
        else if (key == "alpha0") p.alpha0 = value;
        else if (key == "alpha_floor") p.alpha_floor = value;
        else if (key == "sigma0") p.sigma0 = value;
        else if (key == "sigma_min") p.sigma_min = value;
        else if (key == "beta") p.beta = value;
        else throw std::invalid_argument("unknown equity parameter '" + key + "'");
    }
    if (overrides.count("sigma0") && !overrides.count("sigma_min")) p.sigma_min = std::min(p.sigma_min, p.sigma0);
    return p;
}

ExperimentConfig config_from_json(const json& j) {
    if (j.value("schema_version", kSchemaVersion) != kSchemaVersion) {
        throw std::invalid_argument("config: unsupported schema_version");
    }
    ExperimentConfig c;
    if (j.contains("scene")) {
        const auto& s = j.at("scene");
        c.scene.num_objects = s.value("num_objects", c.scene.num_objects);
        c.scene.num_distractors = s.value("num_distractors", c.scene.num_distractors);
        c.scene.zipf_exponent = s.value("zipf_exponent", c.scene.zipf_exponent);
        c.scene.tokens_per_unit_size = s.value("tokens_per_unit_size", c.scene.tokens_per_unit_size);
        if (s.contains("object_confidence")) c.scene.object_confidence = range_from_json(s.at("object_confidence"));
        if (s.contains("distractor_relative_size")) c.scene.distractor_relative_size = range_from_json(s.at("distractor_relative_size"));
        if (s.contains("distractor_confidence")) c.scene.distractor_confidence = range_from_json(s.at("distractor_confidence"));
    }
    if (j.contains("injection")) {
        const auto& s = j.at("injection");
        c.injection.dominance_gain = s.value("dominance_gain", c.injection.dominance_gain);
        c.injection.coherence_gain = s.value("coherence_gain", c.injection.coherence_gain);
        c.injection.text_alignment_min = s.value("text_alignment_min", c.injection.text_alignment_min);
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        c.model.vocab_size = m.value("vocab_size", c.model.vocab_size);
        c.model.model_dim = m.value("model_dim", c.model.model_dim);
        c.model.num_layers = m.value("num_layers", c.model.num_layers);
        c.model.num_heads = m.value("num_heads", c.model.num_heads);
        c.model.weight_seed = m.value("weight_seed", c.model.weight_seed);
        c.model.qk_init_scale = m.value("qk_init_scale", c.model.qk_init_scale);
    }
    if (j.contains("equity")) {
        const auto& e = j.at("equity");
        std::map<std::string, double> fields;
        for (const auto& [key, value] : e.items()) {
            if (key == "weights") {
                const auto w = value.get<std::vector<double>>();
                if (w.size() != 3) throw std::invalid_argument("config: equity.weights must have three entries");
                fields["w1"] = w[0];
                fields["w2"] = w[1];
                fields["w3"] = w[2];
            } else {
                fields[key] = value.get<double>();
            }
        }
        c.equity = apply_overrides(c.equity, fields);
    }
    if (j.contains("decode")) {
        const auto& d = j.at("decode");
        c.decode.prompt_tokens = d.value("prompt_tokens", c.decode.prompt_tokens);
        c.decode.max_steps = d.value("max_steps", c.decode.max_steps);
    }
    for (const auto& v : j.at("variants")) {
        VariantSpec spec;
        spec.name = v.at("name").get<std::string>();
        if (v.contains("overrides")) {
            for (const auto& [key, value] : v.at("overrides").items()) spec.overrides[key] = value.get<double>();
        }
        c.variants.push_back(std::move(spec));
    }
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", std::string("out"));
    c.theta_emit = j.value("theta_emit", c.theta_emit);
    c.trace_attention = j.value("trace_attention", c.trace_attention);
    c.validate();
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    return config_from_json(json::parse(in));
}

RunOutput run_single(const ExperimentConfig& config, const equity::EquityParams& params, std::uint64_t seed,
                     const std::string& variant, const DecodeOptions& options) {
    scenesim::SceneConfig scene_cfg = config.scene;
    scene_cfg.seed = seed;
    RunOutput out{RunMetrics{}, scenesim::generate_scene(scene_cfg), DecodeResult{}};

    const ToyModel model(config.model);
    const scenesim::SceneBinding binding(out.scene, config.injection);
    std::vector<int> prompt = binding.vision_tokens(config.model.vocab_size);
    prompt.insert(prompt.end(), config.decode.prompt_tokens.begin(), config.decode.prompt_tokens.end());

    equity::EquityContext ctx(params);
    out.decode = autoregressive_decode(model, prompt, config.decode.max_steps, ctx, &binding, options);

    const auto shares = scenesim::mean_shares(out.decode.trace);
    const auto emitted = scenesim::to_object_ids(scenesim::emit_objects(out.decode.trace, config.theta_emit), out.scene);
    const auto report = scenesim::coverage_metrics(emitted, out.scene, shares);

    RunMetrics& m = out.metrics;
    m.variant = variant;
    m.seed = seed;
    m.omission_rate = report.omission_rate;
    m.false_emit_rate = report.false_emit_rate;
    m.attention_gini = report.attention_gini;
    const std::size_t dominant = out.scene.dominant_index();
    m.dominant_share = shares[dominant];
    for (std::size_t k = 0; k < out.scene.objects.size(); ++k) {
        if (k != dominant) m.rare_share_sum += shares[k];
    }
    m.rare_omission_rate = scenesim::rare_omission_rate(emitted, out.scene);
    double absorbed = 0.0;
    for (const auto& step : out.decode.trace.steps) {
        const auto& mass = step.layers.back().absorbed_mass;
        double row_mean = 0.0;
        for (double v : mass) row_mean += v;
        absorbed += row_mean / static_cast<double>(mass.size());
    }
    m.absorbed_mass = absorbed / static_cast<double>(out.decode.trace.steps.size());
    return out;
}

Summary summarize(const std::string& label, std::span<const RunMetrics> runs) {
    Summary s;
    s.label = label;
    s.runs = runs.size();
    if (runs.empty()) return s;
    for (const auto& r : runs) {
        s.omission_rate += r.omission_rate;
        s.false_emit_rate += r.false_emit_rate;
        s.attention_gini += r.attention_gini;
        s.dominant_share += r.dominant_share;
        s.rare_share_sum += r.rare_share_sum;
        s.rare_omission_rate += r.rare_omission_rate;
        s.absorbed_mass += r.absorbed_mass;
    }
    const double inv = 1.0 / static_cast<double>(runs.size());
    for (double* f : {&s.omission_rate, &s.false_emit_rate, &s.attention_gini, &s.dominant_share, &s.rare_share_sum,
                      &s.rare_omission_rate, &s.absorbed_mass}) {
        *f *= inv;
    }
    return s;
}

std::string metrics_csv(std::span<const RunMetrics> runs) {
    std::ostringstream out;
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "variant,seed,omission_rate,false_emit_rate,attention_gini,dominant_share,rare_share_sum\n";
    for (const auto& r : runs) {
        out << r.variant << ',' << r.seed << ',' << fmt9(r.omission_rate) << ',' << fmt9(r.false_emit_rate) << ','
            << fmt9(r.attention_gini) << ',' << fmt9(r.dominant_share) << ',' << fmt9(r.rare_share_sum) << '\n';
    }
    return out.str();
}

nlohmann::json summary_json(const ExperimentReport& report) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["variants"] = json::object();
    const Summary* baseline = nullptr;
    for (const auto& s : report.summaries) {
        j["variants"][s.label] = summary_to_json(s);
        if (s.label == "baseline") baseline = &s;
    }
    j["deltas"] = json::object();
    if (baseline != nullptr) {
        for (const auto& s : report.summaries) {
            if (&s == baseline) continue;
            j["deltas"][s.label] = {{"omission_rate", s.omission_rate - baseline->omission_rate},
                                    {"false_emit_rate", s.false_emit_rate - baseline->false_emit_rate},
                                    {"attention_gini", s.attention_gini - baseline->attention_gini},
                                    {"dominant_share", s.dominant_share - baseline->dominant_share},
                                    {"rare_share_sum", s.rare_share_sum - baseline->rare_share_sum},
                                    {"rare_omission_rate", s.rare_omission_rate - baseline->rare_omission_rate},
                                    {"absorbed_mass", s.absorbed_mass - baseline->absorbed_mass}};
        }
    }
    return j;
}

std::string trace_jsonl(const DecodeTrace& trace, bool include_attention) {
    std::string out;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& s = trace.steps[t];
        json rec;
        rec["schema_version"] = kSchemaVersion;
        rec["step"] = t;
        rec["token_id"] = s.token_id;
        rec["length"] = s.length;
        rec["alphas"] = s.modulation.alphas;
        rec["sigmas"] = s.modulation.sigmas;
        rec["shares"] = s.shares;
        rec["penalties"] = s.signals.penalties;
        rec["boosts"] = s.signals.boosts;
        rec["routed_scores"] = s.signals.routed_scores;
        json layers = json::array();
        for (const auto& layer : s.layers) {
            json l;
            l["absorbed_mass"] = layer.absorbed_mass;
            l["column_mass"] = column_sums(layer.attention);
            if (include_attention) {
                json rows = json::array();
                for (std::size_t i = 0; i < layer.attention.rows(); ++i) {
                    auto r = layer.attention.row(i);
                    rows.push_back(std::vector<double>(r.begin(), r.end()));
                }
                l["attention"] = std::move(rows);
            }
            layers.push_back(std::move(l));
        }
        rec["layers"] = std::move(layers);
        out += rec.dump();
        out += '\n';
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunFilter& filter) {
    config.validate();
    std::vector<std::uint64_t> seeds = filter.seeds.value_or(config.seeds);
    if (seeds.empty()) throw std::invalid_argument("run: no seeds selected");
    std::sort(seeds.begin(), seeds.end());

    std::vector<const VariantSpec*> variants;
    for (const auto& v : config.variants) {
        if (!filter.variant || *filter.variant == v.name) variants.push_back(&v);
    }
    if (variants.empty()) throw std::invalid_argument("run: no variant named '" + filter.variant.value_or("") + "'");

    prepare_dir(config.output_dir);
    prepare_dir(config.output_dir / "traces");

    struct Job {
        const VariantSpec* variant;
        equity::EquityParams params;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto* v : variants) {
        const auto params = apply_overrides(config.equity, v->overrides);
        for (auto seed : seeds) jobs.push_back({v, params, seed});
    }

    std::vector<RunMetrics> metrics(jobs.size());
    std::vector<std::string> traces(jobs.size());
    parallel_for(jobs.size(), [&](std::size_t i) {
        const auto& job = jobs[i];
        RunOutput run = run_single(config, job.params, job.seed, job.variant->name);
        metrics[i] = std::move(run.metrics);
        traces[i] = trace_jsonl(run.decode.trace, config.trace_attention);
    });

    ExperimentReport report;
    report.runs = metrics;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto name = jobs[i].variant->name + "_seed" + std::to_string(jobs[i].seed) + ".jsonl";
        write_file(config.output_dir / "traces" / name, traces[i]);
    }
    for (const auto* v : variants) {
        std::vector<RunMetrics> subset;
        std::copy_if(metrics.begin(), metrics.end(), std::back_inserter(subset),
                     [&](const RunMetrics& m) { return m.variant == v->name; });
        report.summaries.push_back(summarize(v->name, subset));
    }
    write_file(config.output_dir / "metrics.csv", metrics_csv(report.runs));
    write_file(config.output_dir / "summary.json", summary_json(report).dump(2) + "\n");
    return report;
}

std::string sweep_csv(const std::string& parameter, std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << parameter
        << ",runs,omission_rate,false_emit_rate,attention_gini,dominant_share,rare_share_sum,rare_omission_rate,"
           "absorbed_mass\n";
    for (const auto& r : rows) {
        const auto& s = r.summary;
        out << fmt9(r.value) << ',' << s.runs << ',' << fmt9(s.omission_rate) << ',' << fmt9(s.false_emit_rate) << ','
            << fmt9(s.attention_gini) << ',' << fmt9(s.dominant_share) << ',' << fmt9(s.rare_share_sum) << ','
            << fmt9(s.rare_omission_rate) << ',' << fmt9(s.absorbed_mass) << '\n';
    }
    return out.str();
}

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& parameter,
                            std::span<const double> values, const std::string& base_variant, bool write_files) {
    config.validate();
    const auto& names = equity_param_names();
    if (std::find(names.begin(), names.end(), parameter) == names.end()) {
        throw std::invalid_argument("unknown sweep parameter '" + parameter + "'");
    }
    std::map<std::string, double> base;
    if (!base_variant.empty()) {
        const auto it = std::find_if(config.variants.begin(), config.variants.end(),
                                     [&](const VariantSpec& v) { return v.name == base_variant; });
        if (it == config.variants.end()) throw std::invalid_argument("sweep: no variant named '" + base_variant + "'");
        base = it->overrides;
    }

    std::vector<SweepRow> rows;
    for (double value : values) {
        auto overrides = base;
        overrides[parameter] = value;
        const auto params = apply_overrides(config.equity, overrides);
        params.validate();
        std::vector<RunMetrics> runs(config.seeds.size());
        parallel_for(runs.size(), [&](std::size_t i) {
            runs[i] = run_single(config, params, config.seeds[i], parameter + "=" + fmt9(value)).metrics;
        });
        rows.push_back({value, summarize(parameter + "=" + fmt9(value), runs)});
    }
    if (write_files) {
        prepare_dir(config.output_dir);
        write_file(config.output_dir / ("sweep_" + parameter + ".csv"), sweep_csv(parameter, rows));
    }
    return rows;
}

}  // namespace dopobc::harness
