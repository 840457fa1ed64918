#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "check.hpp"
#include "dopobc/harness.hpp"
#include "dopobc/register_attention.hpp"

namespace {

using nlohmann::json;
using namespace dopobc;

template <typename T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        if constexpr (std::is_same_v<T, double>) {
            out.push_back(std::stod(item, &used));
        } else {
            out.push_back(static_cast<T>(std::stoull(item, &used)));
        }
        if (used != item.size()) throw std::invalid_argument("cannot parse list item '" + item + "'");
    }
    return out;
}

json read_json(const std::string& path) {
    if (path == "-") return json::parse(std::cin);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

int attend(const std::string& input) {
    const json payload = read_json(input);
    const auto rows = payload.at("scores").get<std::vector<std::vector<double>>>();
    const std::size_t n = rows.size();
    std::vector<double> data;
    for (const auto& r : rows) {
        if (r.size() != n) throw std::invalid_argument("attend: scores must be square");
        data.insert(data.end(), r.begin(), r.end());
    }
    AttentionInputs in{Matrix(n, n, std::move(data)),
                       payload.value("alphas", std::vector<double>(n, 1.0)),
                       payload.at("sigmas").get<std::vector<double>>()};
    const AttentionResult res = compose_attention(in);
    json out;
    out["schema_version"] = harness::kSchemaVersion;
    json a = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        auto r = res.attention.row(i);
        a.push_back(std::vector<double>(r.begin(), r.end()));
    }
    out["attention"] = std::move(a);
    out["absorbed_mass"] = res.absorbed_mass;
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Equity-aware register attention: experiments and diagnostics"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string seeds_text;
    std::string variant;
    std::string param;
    std::string values_text;
    std::string input = "-";
    std::uint64_t check_seed = 2024;

    auto* run = app.add_subcommand("run", "Run every variant x seed and write metrics, summary and traces");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory (overrides the config)");
    run->add_option("--seeds", seeds_text, "Comma-separated seeds (overrides the config)");
    run->add_option("--variant", variant, "Only run this variant");

    auto* sweep = app.add_subcommand("sweep", "Sweep one equity parameter over a list of values");
    sweep->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "Equity parameter name")->required();
    sweep->add_option("--values", values_text, "Comma-separated values")->required();
    sweep->add_option("--out", out_dir, "Output directory (overrides the config)");
    sweep->add_option("--seeds", seeds_text, "Comma-separated seeds (overrides the config)");
    sweep->add_option("--variant", variant, "Base variant whose overrides apply before the swept value");

    auto* attend_cmd = app.add_subcommand("attend", "Compose one attention matrix from a JSON payload");
    attend_cmd->add_option("--input", input, "Payload path, or - for stdin");

    auto* check = app.add_subcommand("check", "Oracle equivalence and invariant self-check");
    check->add_option("--seed", check_seed, "Random seed for generated inputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*check) return dopobc::tools::run_checks(std::cout, check_seed) == 0 ? 0 : 1;
        if (*attend_cmd) return attend(input);

        harness::ExperimentConfig config = harness::load_config(config_path);
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (!seeds_text.empty()) config.seeds = parse_list<std::uint64_t>(seeds_text);

        if (*run) {
            harness::RunFilter filter;
            if (!variant.empty()) filter.variant = variant;
            const auto report = harness::run_experiment(config, filter);
            for (const auto& s : report.summaries) {
                std::cout << s.label << ": runs=" << s.runs << " omission=" << s.omission_rate
                          << " false_emit=" << s.false_emit_rate << " gini=" << s.attention_gini
                          << " dominant_share=" << s.dominant_share << " rare_share_sum=" << s.rare_share_sum << "\n";
            }
            std::cout << "wrote " << (config.output_dir / "metrics.csv").string() << "\n";
            return 0;
        }
        if (*sweep) {
            const auto values = parse_list<double>(values_text);
            const auto rows = harness::sweep(config, param, values, variant);
            std::cout << harness::sweep_csv(param, rows);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
