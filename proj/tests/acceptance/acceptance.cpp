// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <json.hpp>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spider/commands.hpp"
#include "spider/monte_carlo.hpp"
#include "spider/stopping.hpp"
#include "spider/value_function.hpp"
#include "spider/verifier.hpp"

namespace {

using namespace spider;
using Json = nlohmann::json;

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fmt(const char* pattern, auto... values) {
    char buffer[512];
    std::snprintf(buffer, sizeof buffer, pattern, values...);
    return buffer;
}

void note(Outcome& o, const std::string& line) {
    std::printf("    %s\n", line.c_str());
    std::fflush(stdout);
    (void)o;
}

WalkConfig walk(int n, double h, std::uint64_t seed) {
    WalkConfig c;
    c.n = n;
    c.h = h;
    c.seed = seed;
    return c;
}

// The bias constant used by every Monte Carlo and DP comparison below.
double kappa() {
    static const double k = calibrate_bias_constant(0.01);
    return k;
}

Outcome criterion1() {
    Outcome o;
    for (int n = 0; n <= 2; ++n) {
        const CliResult r = cli({"constants", "--n", std::to_string(n)});
        const Json j = Json::parse(r.out);
        const double th = j["theta"];
        const double cn = j["c_n"];
        const double want_theta = (n + 1) / 4.0;
        const double want_cn = std::sqrt(static_cast<double>(n + 1));
        const bool ok = r.code == 0 && th == want_theta && std::abs(cn - want_cn) <= 2e-16 * want_cn;
        o.pass = o.pass && ok;
        note(o, fmt("n=%d theta=%.17g c_n=%.17g (want %.17g, %.17g)", n, th, cn, want_theta, want_cn));
    }
    const CliResult three = cli({"constants", "--n", "3"});
    const bool refused = three.code == kExitUsage && three.err.find("unsupported: open problem") != std::string::npos;
    o.pass = o.pass && refused;
    note(o, std::string("n=3 refused: ") + (refused ? "yes" : "no"));
    return o;
}

EvalPoint random_point(int n, double c, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 2.0 / c);
    EvalPoint p;
    if (n == 0) {
        p.records = {u(gen)};
        p.x = p.records[0] - u(gen);
        return p;
    }
    for (int i = 0; i < n; ++i) p.records.push_back(u(gen));
    p.rib = 1 + static_cast<int>(gen() % static_cast<unsigned>(n));
    p.x = std::uniform_real_distribution<double>(0.0, p.records[p.rib - 1])(gen);
    return p;
}

// Two-rib branches written out independently of the library.
double inner_branch(double c, double x, double own, double other) {
    return c * x * x - c * x * (own - other) + c * (own * own + other * other) / 2.0 + 3.0 / (4.0 * c);
}
double outer_branch(double c, double x, double own, double other) {
    const double a = std::max(0.0, x - own + 1.0 / (2.0 * c));
    const double b = std::max(0.0, -x - other + 1.0 / (2.0 * c));
    return c * a * a + c * b * b + own + other;
}

Outcome criterion2() {
    Outcome o;
    std::mt19937_64 gen(20261019);
    std::uniform_real_distribution<double> cost(0.1, 10.0);
    for (int n = 0; n <= 2; ++n) {
        double worst_scale = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const ValueParams params{n, cost(gen)};
            const EvalPoint p = random_point(n, params.cost, gen);
            const Rescaled r = rescale(params, p);
            const double lhs = v_hat(params, p);
            const double rhs = r.scale * v_hat(ValueParams{n, 1.0}, r.point);
            worst_scale = std::max(worst_scale, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
        }
        double worst_dom = 0.0;
        for (int i = 0; i < 10'000; ++i) {
            const double c = cost(gen);
            const EvalPoint p = random_point(n, c, gen);
            worst_dom = std::max(worst_dom, record_sum(p) - v_hat(ValueParams{n, c}, p));
        }
        const bool ok = worst_scale <= 1e-12 && worst_dom <= 1e-12;
        o.pass = o.pass && ok;
        note(o, fmt("n=%d scaling max rel err=%.3e, dominance max(sum - V)=%.3e", n, worst_scale, worst_dom));
    }
    double worst_seam = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10'000; ++i) {
        const double c = cost(gen);
        const double s1 = u(gen) / c;
        const double s2 = 1.0 / c - s1;
        const double x = u(gen) * s1;
        const double a = inner_branch(c, x, s1, s2);
        const double b = outer_branch(c, x, s1, s2);
        const double v = v_hat(ValueParams{2, c}, EvalPoint{x, 1, {s1, s2}});
        const double scale = std::max(1.0, std::abs(a));
        worst_seam = std::max({worst_seam, std::abs(a - b) / scale, std::abs(v - a) / scale});
    }
    o.pass = o.pass && worst_seam <= 1e-12;
    note(o, fmt("n=2 seam: max |inner - outer| (relative) = %.3e", worst_seam));
    return o;
}

Outcome criterion3() {
    Outcome o;
    for (int n = 0; n <= 2; ++n) {
        for (double c : {0.5, 1.0, 2.0}) {
            const CliResult r = cli({"verify", "--n", std::to_string(n), "--c", fmt("%g", c)});
            const Json j = Json::parse(r.out);
            std::string line = fmt("n=%d C=%g:", n, c);
            bool ok = r.code == 0 && j["all_passed"] == true;
            for (const Json& p : j["properties"]) {
                const std::string conv = p["convergence"];
                if (conv == "failed") ok = false;
                line += fmt(" %s=%s", p["name"].get<std::string>().c_str(),
                            !p["applicable"].get<bool>() ? "n/a" : p["passed"].get<bool>() ? "ok" : "FAIL");
                if (conv != "none") line += "(" + conv + ")";
            }
            const Json& st = j["stencils"];
            const double r1 = st["first_derivative_ratio"];
            const double r2 = st["second_derivative_ratio"];
            ok = ok && st["second_order"] == true && r1 >= 3 && r1 <= 5 && r2 >= 3 && r2 <= 5;
            line += fmt(" | stencil ratios %.3f %.3f", r1, r2);
            o.pass = o.pass && ok;
            note(o, line);
        }
    }
    return o;
}

Outcome criterion4() {
    Outcome o;
    const double h = 0.01;
    note(o, fmt("kappa (calibrated, drawdown-1 on the line, h=0.01) = %.9f", kappa()));
    for (int n = 0; n <= 2; ++n) {
        const MCEstimate est = estimate(FirstEntry{ValueParams{n, 1.0}}, ValueParams{n, 1.0}, walk(n, h, 0), 100'000);
        const double target = expected_identity_check(FirstEntry{ValueParams{n, 1.0}});
        const double band = 3.0 * est.penalized.std_error + kappa() * h;
        const double gap = std::abs(est.penalized.mean - target);
        const bool ok = gap <= band;
        o.pass = o.pass && ok;
        note(o, fmt("n=%d E[S - tau]=%.5f +- %.5f target %.2f |gap|=%.5f band=%.5f %s", n, est.penalized.mean,
                    est.penalized.std_error, target, gap, band, ok ? "ok" : "FAIL"));
    }
    return o;
}

Outcome criterion5() {
    Outcome o;
    const double h = 0.01;
    const std::vector<std::pair<std::string, StoppingRule>> rules = {
        {"FixedTime(1)", FixedTime{1.0}},
        {"Drawdown(1)", Drawdown{1.0}},
        {"SumThreshold(1)", SumThreshold{1.0}},
        {"FirstEntry(1)", FirstEntry{}},
    };
    for (int n = 0; n <= 2; ++n) {
        for (const auto& [name, proto] : rules) {
            StoppingRule rule = proto;
            if (auto* fe = std::get_if<FirstEntry>(&rule)) fe->params = ValueParams{n, 1.0};
            WalkConfig config = walk(n, h, 100 + n);
            EstimateOptions options;
            std::string suffix;
            // On the line the hitting time of level 1 has infinite mean;
            // the bound is checked for the bounded time tau ^ 4 instead.
            if (n == 0 && name == "SumThreshold(1)") {
                config.max_steps = static_cast<std::int64_t>(std::llround(4.0 / (h * h)));
                options.censor_threshold = 1.0;
                suffix = " [tau ^ 4]";
            }
            const MCEstimate est = estimate(rule, ValueParams{n, 1.0}, config, 100'000, options);
            const BoundCheck check = bound_check(est, n, kappa());
            o.pass = o.pass && check.satisfied;
            note(o, fmt("n=%d %-16s ratio=%.5f +- %.5f  C_n=%.5f slack=%+.5f censored=%.4f%s %s", n, name.c_str(),
                        est.ratio.mean, est.ratio.std_error, check.bound, check.slack, est.censored_fraction,
                        suffix.c_str(), check.satisfied ? "ok" : "FAIL"));
        }
    }
    // Closed-form oracles at a finer lattice, where the O(h) lattice bias is
    // well below one standard error.
    const double fine = 0.0025;
    const std::pair<int, double> oracles[] = {{0, std::sqrt(2.0 / std::numbers::pi)},
                                              {1, std::sqrt(std::numbers::pi / 2.0)}};
    for (const auto& [n, oracle] : oracles) {
        const MCEstimate est = estimate(FixedTime{1.0}, ValueParams{n, 1.0}, walk(n, fine, 200 + n), 100'000);
        const double z = (est.sum_records.mean - oracle) / est.sum_records.std_error;
        const bool ok = std::abs(z) <= 3.0;
        o.pass = o.pass && ok;
        note(o, fmt("n=%d FixedTime(1) E[max]=%.5f +- %.5f oracle %.5f z=%+.2f (h=%g) %s", n, est.sum_records.mean,
                    est.sum_records.std_error, oracle, z, fine, ok ? "ok" : "FAIL"));
    }
    return o;
}

// Each lattice record push adds O(h^2) of drift that the continuum process
// lacks, so single-h stopped means sit O(h) below Y(0). The constancy check is
// made on the Richardson combination of h and h/2, which removes that term,
// with the literal 3 stderr band.
Outcome criterion6() {
    Outcome o;
    const double h = 0.01;
    for (int n = 0; n <= 2; ++n) {
        SupermartingaleOptions options;
        options.n_paths = 100'000;
        options.time_points = 21;
        const EvalPoint origin{0.0, 1, std::vector<double>(record_dimension(n), 0.0)};
        const ValueParams params{n, 1.0};
        const SupermartingaleReport coarse = supermartingale_mc(params, origin, 1.0, walk(n, h, 300 + n), options);
        const SupermartingaleReport fine = supermartingale_mc(params, origin, 1.0, walk(n, h / 2, 400 + n), options);
        const SupermartingaleReport rich = richardson_combine(coarse, fine);
        const bool ok = coarse.verdict && fine.verdict && rich.verdict && rich.stopped_constant;
        o.pass = o.pass && ok;
        note(o, fmt("n=%d Y(0)=%.4f  Y(t) <= Y(0) + 3se: h=%g %s (max z %+.2f), h=%g %s (max z %+.2f), "
                    "extrapolated %s (max z %+.2f)",
                    n, fine.y0, h, coarse.verdict ? "ok" : "FAIL", coarse.max_z_excess, h / 2,
                    fine.verdict ? "ok" : "FAIL", fine.max_z_excess, rich.verdict ? "ok" : "FAIL", rich.max_z_excess));
        note(o, fmt("     stopped means: max |z| h=%g %.2f, h=%g %.2f, extrapolated %.2f (Y(1^tau*) %.4f %.4f -> %.4f "
                    "+- %.4f) %s",
                    h, coarse.max_z_stopped, h / 2, fine.max_z_stopped, rich.max_z_stopped,
                    coarse.y_stopped.back().mean, fine.y_stopped.back().mean, rich.y_stopped.back().mean,
                    rich.y_stopped.back().std_error, ok ? "ok" : "FAIL"));
    }
    return o;
}

Outcome criterion7() {
    Outcome o;
    for (int n = 0; n <= 2; ++n) {
        const CliResult r = cli({"study", "--n", std::to_string(n), "--h-list", "0.04,0.02,0.01"});
        const Json j = Json::parse(r.out);
        const bool has = !j["extrapolated"].is_null();
        const double ext = has ? j["extrapolated"].get<double>() : NAN;
        const double ratio = j["error_ratio"];
        const bool ok = r.code == 0 && has && j["monotone"] == true && std::abs(ext - theta(n)) <= 0.01 &&
                        ratio >= 1.6 && ratio <= 2.6;
        o.pass = o.pass && ok;
        std::string thetas;
        for (const Json& row : j["rows"]) thetas += fmt(" %.6f", row["theta"].get<double>());
        note(o, fmt("n=%d theta(h):%s  extrapolated=%.6f (exact %.2f) error_ratio=%.3f %s", n, thetas.c_str(), ext,
                    theta(n), ratio, ok ? "ok" : "FAIL"));
    }
    return o;
}

Outcome criterion8() {
    Outcome o;
    const double h = 0.02;
    for (int n = 1; n <= 2; ++n) {
        const CliResult r = cli({"dp", "--n", std::to_string(n), "--h", "0.02"});
        const Json j = Json::parse(r.out);
        const double gap = j["max_gap_to_closed_form"];
        // Relative slack of 1e-9 absorbs round-off: for n = 2 the lattice gap is exactly h.
        const double bound = kappa() * h;
        const bool ok = r.code == 0 && gap <= bound * (1.0 + 1e-9);
        o.pass = o.pass && ok;
        note(o, fmt("n=%d max |V_grid - v_hat| = %.15f  kappa*h = %.15f  gap/h = %.9f %s", n, gap, bound, gap / h,
                    ok ? "ok" : "FAIL"));
    }
    return o;
}

long peak_rss_mb() {
    rusage usage{};
    getrusage(RUSAGE_SELF, &usage);
    return usage.ru_maxrss / 1024;
}

Outcome criterion9() {
    Outcome o;
    const CliResult r = cli({"study", "--n", "3", "--h-list", "0.08,0.04,0.02"});
    if (r.code != 0 && r.out.empty()) {
        o.pass = false;
        note(o, "study failed: " + r.err);
        return o;
    }
    const Json j = Json::parse(r.out);
    bool settled = true;
    for (const Json& row : j["rows"]) {
        const double settle = row["boundary_settlement"];
        settled = settled && settle <= j["tol"].get<double>();
        note(o, fmt("h=%.2f theta=%.6f residual=%.2e settlement=%.2e states=%lld", row["h"].get<double>(),
                    row["theta"].get<double>(), row["residual"].get<double>(), settle,
                    row["states"].get<long long>()));
    }
    const bool has = !j["extrapolated"].is_null() && j.contains("deviation_from_one");
    o.pass = r.code == 0 && j["monotone"] == true && has && settled;
    if (has) {
        const double dev = j["deviation_from_one"];
        const double bar = j["error_bar"];
        note(o, fmt("S_max=%.2f monotone=%s error_ratio=%.3f extrapolated theta_3=%.6f error_bar=%.6f", j["s_max"].get<double>(),
                    j["monotone"] == true ? "yes" : "no", j["error_ratio"].get<double>(), j["extrapolated"].get<double>(),
                    bar));
        note(o, fmt("deviation from 1 = %+.6f, |deviation| %s error bar (C_3 estimate %.5f vs 2)", dev,
                    std::abs(dev) > bar ? "exceeds" : "within", 2.0 * std::sqrt(j["extrapolated"].get<double>())));
    }
    note(o, fmt("peak resident memory %ld MB", peak_rss_mb()));
    return o;
}

Outcome criterion10() {
    Outcome o;
    const std::vector<std::vector<std::string>> commands = {
        {"estimate", "--n", "2", "--h", "0.02", "--paths", "20000", "--seed", "7"},
        {"estimate", "--n", "0", "--h", "0.02", "--paths", "20000", "--seed", "7", "--rule", "drawdown:a=1",
         "--format", "csv"},
        {"dp", "--n", "2", "--h", "0.04"},
        {"dp", "--n", "3", "--h", "0.1"},
    };
    for (const auto& base : commands) {
        std::set<std::string> outputs;
        for (const char* threads : {"1", "2", "4"}) {
            auto args = base;
            args.insert(args.end(), {"--threads", threads});
            outputs.insert(cli(args).out);
        }
        const bool ok = outputs.size() == 1 && !outputs.begin()->empty();
        o.pass = o.pass && ok;
        std::string joined;
        for (const auto& a : base) joined += a + " ";
        note(o, fmt("%s--threads {1,2,4}: %s", joined.c_str(), ok ? "byte-identical" : "DIFFERENT"));
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"closed-form constants", criterion1},
        {"value-function identities", criterion2},
        {"property verification", criterion3},
        {"Monte Carlo equality cases", criterion4},
        {"Monte Carlo bound cases", criterion5},
        {"supermartingale test", criterion6},
        {"DP reproduction", criterion7},
        {"DP cross-validation", criterion8},
        {"n=3 probe", criterion9},
        {"determinism", criterion10},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        std::printf("criterion %d: %s\n", id, criteria[k].first);
        std::fflush(stdout);
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[k].second();
        } catch (const std::exception& e) {
            outcome.pass = false;
            std::printf("    exception: %s\n", e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %d: %s (%.1f s)\n", outcome.pass ? "PASS" : "FAIL", id, criteria[k].first, seconds);
        std::fflush(stdout);
        if (!outcome.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
