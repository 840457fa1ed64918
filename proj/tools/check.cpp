#include "check.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "dopobc/register_attention.hpp"
#include "oracle.hpp"

namespace dopobc::tools {

namespace {

AttentionInputs random_inputs(std::size_t n, std::mt19937_64& rng, double sigma_hi = 2.0) {
    std::uniform_real_distribution<double> score(-4.0, 4.0);
    std::uniform_real_distribution<double> alpha(0.1, 2.0);
    std::uniform_real_distribution<double> sigma(0.0, sigma_hi);
    std::vector<double> data(n * n);
    for (double& v : data) v = score(rng);
    AttentionInputs in{Matrix(n, n, std::move(data)), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        in.alphas[i] = alpha(rng);
        in.sigmas[i] = sigma(rng);
    }
    return in;
}

std::string sci(double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
}

}  // namespace

int run_checks(std::ostream& out, std::uint64_t seed) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
        if (!ok) ++failures;
    };
    std::mt19937_64 rng(seed);

    double worst = 0.0;
    bool causal = true;
    bool last_row = true;
    for (std::size_t n : {1, 2, 4, 8, 16, 32}) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto in = random_inputs(n, rng);
            const auto fast = compose_attention(in);
            const auto ref = oracle::naive_compose_attention(in);
            worst = std::max(worst, max_abs_diff(fast.attention, ref.attention));
            for (std::size_t i = 0; i < n; ++i) {
                worst = std::max(worst, std::abs(fast.absorbed_mass[i] - ref.absorbed_mass[i]));
                for (std::size_t j = i + 1; j < n; ++j) causal = causal && fast.attention(i, j) == 0.0;
            }
            double total = 0.0;
            for (double v : fast.attention.row(n - 1)) total += v;
            last_row = last_row && std::abs(total - 1.0) <= 1e-12;
        }
    }
    report("oracle-equivalence", worst <= 1e-10, "max_abs=" + sci(worst));
    report("strict-causality", causal, "future entries bit-zero");
    report("last-row-exact", last_row, "row n-1 sums to 1");

    double limit = 0.0;
    for (std::size_t n : {1, 5, 17, 40}) {
        auto in = random_inputs(n, rng);
        std::fill(in.sigmas.begin(), in.sigmas.end(), 1e6);
        const auto reg = compose_attention(in);
        limit = std::max(limit, max_abs_diff(reg.attention, oracle::vanilla_kernel(in).attention));
    }
    report("register-limit", limit <= 1e-8, "max_abs=" + sci(limit));
    return failures;
}

}  // namespace dopobc::tools
