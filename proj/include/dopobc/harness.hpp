#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dopobc/decoder.hpp"
#include "dopobc/equity.hpp"
#include "dopobc/scenesim.hpp"

namespace dopobc::harness {

inline constexpr int kSchemaVersion = 1;

struct VariantSpec {
    std::string name;
    std::map<std::string, double> overrides;
};

struct DecodeSettings {
    std::vector<int> prompt_tokens{1, 2, 3, 4};
    std::size_t max_steps = 12;
};

struct ExperimentConfig {
    scenesim::SceneConfig scene;
    scenesim::InjectionConfig injection;
    ToyModelConfig model;
    equity::EquityParams equity;
    DecodeSettings decode;
    std::vector<VariantSpec> variants;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path output_dir = "out";
    double theta_emit = scenesim::kDefaultEmitThreshold;
    bool trace_attention = false;

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

// Names accepted as override / sweep keys.
const std::vector<std::string>& equity_param_names();

// Throws std::invalid_argument naming the key when it is not an EquityParams field. Lowering
// sigma0 below sigma_min also lowers sigma_min unless sigma_min is overridden explicitly.
equity::EquityParams apply_overrides(equity::EquityParams base, const std::map<std::string, double>& overrides);

struct RunMetrics {
    std::string variant;
    std::uint64_t seed = 0;
    double omission_rate = 0.0;
    double false_emit_rate = 0.0;
    double attention_gini = 0.0;
    double dominant_share = 0.0;
    double rare_share_sum = 0.0;
    double rare_omission_rate = 0.0;
    double absorbed_mass = 0.0;  // mean over steps and rows, final layer
};

struct RunOutput {
    RunMetrics metrics;
    scenesim::Scene scene;
    DecodeResult decode;
};

// One decode of the scene generated from `seed` under `params`.
RunOutput run_single(const ExperimentConfig& config, const equity::EquityParams& params, std::uint64_t seed,
                     const std::string& variant = "", const DecodeOptions& options = {});

struct Summary {
    std::string label;
    std::size_t runs = 0;
    double omission_rate = 0.0;
    double false_emit_rate = 0.0;
    double attention_gini = 0.0;
    double dominant_share = 0.0;
    double rare_share_sum = 0.0;
    double rare_omission_rate = 0.0;
    double absorbed_mass = 0.0;
};

Summary summarize(const std::string& label, std::span<const RunMetrics> runs);

struct ExperimentReport {
    std::vector<RunMetrics> runs;  // ordered by variant, then seed ascending
    std::vector<Summary> summaries;
};

struct RunFilter {
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::string> variant;
};

// Writes metrics.csv, summary.json and traces/<variant>_seed<seed>.jsonl under the output dir.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunFilter& filter = {});

std::string metrics_csv(std::span<const RunMetrics> runs);
nlohmann::json summary_json(const ExperimentReport& report);
std::string trace_jsonl(const DecodeTrace& trace, bool include_attention);

struct SweepRow {
    double value = 0.0;
    Summary summary;
};

// Applies `parameter = value` on top of the base variant (the config's equity block plus the
// named variant's overrides, or no overrides when empty) for each value. Writes
// sweep_<parameter>.csv when write_files is set.
std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::string& parameter,
                            std::span<const double> values, const std::string& base_variant = "",
                            bool write_files = true);

std::string sweep_csv(const std::string& parameter, std::span<const SweepRow> rows);

}  // namespace dopobc::harness
