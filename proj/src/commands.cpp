#include "spider/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "spider/dp_solver.hpp"
#include "spider/errors.hpp"
#include "spider/monte_carlo.hpp"
#include "spider/rng.hpp"
#include "spider/stopping.hpp"
#include "spider/value_function.hpp"
#include "spider/verifier.hpp"
#include "spider/walk.hpp"

namespace spider {
namespace {

using Json = nlohmann::ordered_json;

// A command produces its report text and an exit code.
struct Result {
    std::string text;
    int code = kExitOk;
};

class UsageError : public Error {
public:
    using Error::Error;
};

struct Flags {
    int n = 1;
    double c = 1.0;
    double h = 0.01;
    std::int64_t paths = 100'000;
    std::uint64_t seed = 0;
    std::string rule = "first-entry:C=1";
    std::string out;
    std::string format = "json";
    unsigned threads = 0;

    // eval / simulate
    double x = 0.0;
    int r = 1;
    std::vector<double> s;

    // verify
    GridSpec grid;

    // estimate / simulate
    std::int64_t max_steps = WalkConfig{}.max_steps;
    double censor_threshold = EstimateOptions{}.censor_threshold;
    double kappa = kDefaultBiasConstant;
    bool supermartingale = false;
    bool richardson = false;
    double horizon = 1.0;
    int time_points = SupermartingaleOptions{}.time_points;

    // dp / study
    DPOptions dp;
    std::string face = to_string(FaceCondition::kRecordDrift);
    std::vector<double> h_list;
};

std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string csv_line(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line + '\n';
}

std::string dump(const Json& j) { return j.dump(2) + '\n'; }

void require_format(const Flags& f, bool csv_supported) {
    if (f.format == "csv" && !csv_supported) throw UsageError("this command has no csv output");
}

Json point_json(const EvalPoint& p) {
    return Json{{"x", p.x}, {"rib", p.rib}, {"records", p.records}};
}

Json moment_json(const Moment& m) { return Json{{"mean", m.mean}, {"std_error", m.std_error}}; }

EvalPoint point_from(const Flags& f) {
    EvalPoint p;
    p.x = f.x;
    p.rib = f.r;
    p.records = f.s.empty() ? std::vector<double>(record_dimension(f.n), 0.0) : f.s;
    return p;
}

Result cmd_constants(const Flags& f) {
    require_format(f, true);
    const double th = theta(f.n);
    const double cn = spider_constant(f.n);
    const double c_star = optimal_cost(f.n, 1.0);
    if (f.format == "csv")
        return {csv_line({"n", "theta", "c_n", "c_star_m1"}) +
                csv_line({std::to_string(f.n), number(th), number(cn), number(c_star)})};
    return {dump(Json{{"n", f.n}, {"theta", th}, {"c_n", cn}, {"c_star_m1", c_star}})};
}

Result cmd_eval(const Flags& f) {
    require_format(f, false);
    const ValueParams params{f.n, f.c};
    const EvalPoint p = point_from(f);
    const double v = v_hat(params, p);
    return {dump(Json{{"n", f.n},
                      {"c", f.c},
                      {"point", point_json(p)},
                      {"value", v},
                      {"record_sum", record_sum(p)},
                      {"in_stopping_set", in_stopping_set(params, p)}})};
}

Result cmd_verify(const Flags& f) {
    require_format(f, true);
    GridSpec grid = f.grid;
    grid.threads = f.threads;
    const PropertyReport report = check_properties(ValueParams{f.n, f.c}, grid);
    const int code = report.all_passed() ? kExitOk : kExitCheckFailed;
    if (f.format == "csv") {
        std::string text = csv_line({"property", "applicable", "passed", "max_violation", "tolerance",
                                     "checked", "excluded", "convergence", "residual_ratio"});
        for (const PropertyCheck& c : report.properties)
            text += csv_line({c.name, c.applicable ? "true" : "false", c.passed ? "true" : "false",
                              number(c.max_violation), number(c.tolerance), std::to_string(c.checked),
                              std::to_string(c.excluded), c.convergence, number(c.residual_ratio)});
        return {text, code};
    }
    Json props = Json::array();
    for (const PropertyCheck& c : report.properties) {
        props.push_back(Json{{"name", c.name},
                             {"condition", c.condition},
                             {"applicable", c.applicable},
                             {"passed", c.passed},
                             {"max_violation", c.max_violation},
                             {"tolerance", c.tolerance},
                             {"worst_point", point_json(c.worst_point)},
                             {"checked", c.checked},
                             {"excluded", c.excluded},
                             {"convergence", c.convergence},
                             {"residual_coarse", c.residual_coarse},
                             {"residual_fine", c.residual_fine},
                             {"residual_ratio", c.residual_ratio},
                             {"roundoff_floor", c.roundoff_floor}});
    }
    Json j{{"n", f.n},
           {"c", f.c},
           {"grid",
            {{"h_fd", grid.h_fd},
             {"s_max", grid.s_max},
             {"s_points", grid.s_points},
             {"x_points", grid.x_points},
             {"third_scale", grid.third_scale}}},
           {"properties", props},
           {"stencils",
            {{"first_derivative_ratio", report.stencils.first_derivative_ratio},
             {"second_derivative_ratio", report.stencils.second_derivative_ratio},
             {"second_order", report.stencils.second_order}}},
           {"all_passed", report.all_passed()}};
    return {dump(j), code};
}

WalkConfig walk_config(const Flags& f) {
    WalkConfig config;
    config.h = f.h;
    config.n = f.n;
    config.seed = f.seed;
    config.max_steps = f.max_steps;
    config.validate();
    return config;
}

Result cmd_simulate(const Flags& f) {
    require_format(f, f.supermartingale);
    const WalkConfig config = walk_config(f);
    if (f.supermartingale) {
        SupermartingaleOptions options;
        options.n_paths = f.paths;
        options.time_points = f.time_points;
        options.threads = f.threads;
        options.kappa = f.kappa;
        const EvalPoint start = point_from(f);
        const SupermartingaleReport rep =
            supermartingale_mc(ValueParams{f.n, f.c}, start, f.horizon, config, options);
        int code = rep.verdict && rep.stopped_within_bias ? kExitOk : kExitCheckFailed;
        if (f.richardson) {
            // Second run at h/2 on an independent seed; verdicts come from the combination.
            WalkConfig half = config;
            half.h = config.h / 2.0;
            half.seed = config.seed + 1;
            const SupermartingaleReport fine =
                supermartingale_mc(ValueParams{f.n, f.c}, start, f.horizon, half, options);
            const SupermartingaleReport rich = richardson_combine(rep, fine);
            code = rep.verdict && fine.verdict && rich.verdict && rich.stopped_constant ? kExitOk : kExitCheckFailed;
            if (f.format == "csv") {
                std::string text = csv_line({"t", "mean_y", "se_y", "mean_y_stopped", "se_y_stopped"});
                for (std::size_t i = 0; i < rich.times.size(); ++i)
                    text += csv_line({number(rich.times[i]), number(rich.y[i].mean), number(rich.y[i].std_error),
                                      number(rich.y_stopped[i].mean), number(rich.y_stopped[i].std_error)});
                return {text, code};
            }
            Json rows = Json::array();
            for (std::size_t i = 0; i < rich.times.size(); ++i)
                rows.push_back(Json{{"t", rich.times[i]},
                                    {"y", moment_json(rich.y[i])},
                                    {"y_stopped", moment_json(rich.y_stopped[i])}});
            return {dump(Json{{"n", f.n},
                              {"c", f.c},
                              {"h", Json::array({f.h, half.h})},
                              {"seed", Json::array({f.seed, half.seed})},
                              {"paths", f.paths},
                              {"horizon", f.horizon},
                              {"time_points", f.time_points},
                              {"start", point_json(start)},
                              {"y0", rich.y0},
                              {"series", rows},
                              {"verdict", rich.verdict},
                              {"stopped_constant", rich.stopped_constant},
                              {"max_z_excess", rich.max_z_excess},
                              {"max_z_stopped", rich.max_z_stopped},
                              {"verdict_per_h", Json::array({rep.verdict, fine.verdict})},
                              {"max_z_stopped_per_h", Json::array({rep.max_z_stopped, fine.max_z_stopped})}}),
                    code};
        }
        if (f.format == "csv") {
            std::string text = csv_line({"t", "mean_y", "se_y", "mean_y_stopped", "se_y_stopped"});
            for (std::size_t i = 0; i < rep.times.size(); ++i)
                text += csv_line({number(rep.times[i]), number(rep.y[i].mean), number(rep.y[i].std_error),
                                  number(rep.y_stopped[i].mean), number(rep.y_stopped[i].std_error)});
            return {text, code};
        }
        Json rows = Json::array();
        for (std::size_t i = 0; i < rep.times.size(); ++i)
            rows.push_back(Json{{"t", rep.times[i]},
                                {"y", moment_json(rep.y[i])},
                                {"y_stopped", moment_json(rep.y_stopped[i])}});
        return {dump(Json{{"n", f.n},
                          {"c", f.c},
                          {"h", f.h},
                          {"seed", f.seed},
                          {"paths", f.paths},
                          {"horizon", f.horizon},
                          {"time_points", f.time_points},
                          {"start", point_json(start)},
                          {"y0", rep.y0},
                          {"series", rows},
                          {"verdict", rep.verdict},
                          {"kappa", f.kappa},
                          {"stopped_constant", rep.stopped_constant},
                          {"stopped_within_bias", rep.stopped_within_bias},
                          {"bias_allowance", rep.bias_allowance},
                          {"max_z_excess", rep.max_z_excess},
                          {"max_z_stopped", rep.max_z_stopped},
                          {"stopped_by_horizon", rep.stopped_by_horizon}}),
                code};
    }
    const StoppingRule rule = parse_rule(f.rule, f.n);
    validate_rule(rule, f.n);
    PhiloxStream rng(f.seed, 0);
    const WalkState start = f.n == 0 ? WalkState{LineState::origin(f.h)} : WalkState{SpiderState::origin(f.n, f.h)};
    const PathOutcome path = simulate_path(start, rule, config, rng);
    double total = 0.0;
    for (double v : path.s_final) total += v;
    return {dump(Json{{"rule", format_rule(rule)},
                      {"n", f.n},
                      {"h", f.h},
                      {"seed", f.seed},
                      {"max_steps", f.max_steps},
                      {"tau", path.tau},
                      {"records", path.s_final},
                      {"record_sum", total},
                      {"censored", path.censored}}),
            path.censored ? kExitCheckFailed : kExitOk};
}

Result cmd_estimate(const Flags& f) {
    require_format(f, true);
    const StoppingRule rule = parse_rule(f.rule, f.n);
    EstimateOptions options;
    options.threads = f.threads;
    options.censor_threshold = f.censor_threshold;
    const MCEstimate est = estimate(rule, ValueParams{f.n, f.c}, walk_config(f), f.paths, options);
    std::optional<BoundCheck> check;
    if (f.n <= 2) check = bound_check(est, f.n, f.kappa);
    const int code = !check || check->satisfied ? kExitOk : kExitCheckFailed;
    if (f.format == "csv") {
        return {csv_line({"rule", "n", "h", "n_paths", "mean_s", "se_s", "mean_tau", "se_tau", "ratio",
                          "bound", "slack"}) +
                    csv_line({est.rule, std::to_string(f.n), number(f.h), std::to_string(est.n_paths),
                              number(est.sum_records.mean), number(est.sum_records.std_error),
                              number(est.time.mean), number(est.time.std_error), number(est.ratio.mean),
                              check ? number(check->bound) : "", check ? number(check->slack) : ""}),
                code};
    }
    Json j{{"rule", est.rule},
           {"n", f.n},
           {"c", f.c},
           {"h", f.h},
           {"seed", f.seed},
           {"n_paths", est.n_paths},
           {"max_steps", f.max_steps},
           {"censor_threshold", f.censor_threshold},
           {"kappa", f.kappa},
           {"sum_records", moment_json(est.sum_records)},
           {"time", moment_json(est.time)},
           {"penalized", moment_json(est.penalized)},
           {"ratio", moment_json(est.ratio)},
           {"covariance", est.covariance},
           {"censored", est.censored},
           {"censored_fraction", est.censored_fraction}};
    if (check)
        j["bound_check"] = Json{{"bound", check->bound},
                                {"slack", check->slack},
                                {"allowance", check->allowance},
                                {"satisfied", check->satisfied}};
    return {dump(j), code};
}

DPOptions dp_options(const Flags& f) {
    DPOptions o = f.dp;
    o.face = parse_face_condition(f.face);
    o.threads = f.threads;
    return o;
}

Result cmd_dp(const Flags& f) {
    require_format(f, true);
    DPOptions o = dp_options(f);
    const bool closed_form = f.n <= 2;
    o.keep_surface = closed_form;
    const DPGrid grid = solve_any(f.n, o);

    // Largest gap to the closed form over every stored lattice state.
    std::optional<double> gap;
    if (closed_form) {
        const ValueParams params{f.n, 1.0};
        double worst = 0.0;
        grid.for_each_state([&](const EvalPoint& p, double v) {
            worst = std::max(worst, std::abs(v - v_hat(params, p)));
        });
        gap = worst;
    }
    if (f.format == "csv") {
        return {csv_line({"n", "h", "s_max", "theta", "residual", "boundary_settlement", "states",
                          "max_gap_to_closed_form"}) +
                csv_line({std::to_string(f.n), number(grid.h), number(grid.s_max),
                          number(grid.theta_estimate), number(grid.residual), number(grid.boundary_settlement),
                          std::to_string(grid.states), gap ? number(*gap) : ""})};
    }
    Json j{{"n", f.n},
           {"h", grid.h},
           {"s_max", grid.s_max},
           {"tol", o.tol},
           {"max_iters", o.max_iters},
           {"face", to_string(o.face)},
           {"enforce_settlement", o.enforce_settlement}};
    if (f.n == 0) j["x_depth"] = grid.x_depth;
    j["theta_estimate"] = grid.theta_estimate;
    if (closed_form) j["theta_exact"] = theta(f.n);
    j["iterations"] = grid.iterations;
    j["max_slice_iterations"] = grid.max_slice_iterations;
    j["slices"] = grid.slices;
    j["states"] = grid.states;
    j["residual"] = grid.residual;
    j["monotonicity_violation"] = grid.monotonicity_violation;
    j["boundary_settlement"] = grid.boundary_settlement;
    if (gap) j["max_gap_to_closed_form"] = *gap;
    return {dump(j)};
}

Result cmd_study(const Flags& f) {
    require_format(f, true);
    std::vector<double> ladder = f.h_list;
    if (ladder.empty())
        ladder = f.n >= 3 ? std::vector<double>{0.08, 0.04, 0.02} : std::vector<double>{0.04, 0.02, 0.01};
    const DPOptions o = dp_options(f);
    const ConvergenceStudy st = convergence_study(f.n, ladder, o);
    const int code = st.extrapolated ? kExitOk : kExitCheckFailed;
    const auto optional_number = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };
    if (f.format == "csv") {
        std::string text = csv_line({"h", "theta", "extrapolated", "error_bar"});
        for (const StudyRow& row : st.rows)
            text += csv_line({number(row.h), number(row.theta), optional_number(st.extrapolated),
                              number(st.error_bar)});
        if (st.deviation_from_one)
            text += csv_line({"deviation_from_one", number(*st.deviation_from_one), "error_bar",
                              number(st.error_bar)});
        return {text, code};
    }
    Json rows = Json::array();
    for (const StudyRow& row : st.rows)
        rows.push_back(Json{{"h", row.h},
                            {"theta", row.theta},
                            {"residual", row.residual},
                            {"boundary_settlement", row.boundary_settlement},
                            {"states", row.states}});
    Json j{{"n", f.n},
           {"s_max", o.s_max},
           {"tol", o.tol},
           {"max_iters", o.max_iters},
           {"face", to_string(o.face)},
           {"refinement", st.refinement},
           {"rows", rows},
           {"monotone", st.monotone},
           {"error_ratio", st.error_ratio},
           {"extrapolated", st.extrapolated ? Json(*st.extrapolated) : Json(nullptr)},
           {"error_bar", st.error_bar}};
    if (f.n <= 2) j["theta_exact"] = theta(f.n);
    if (st.deviation_from_one) {
        j["deviation_from_one"] = *st.deviation_from_one;
        j["deviation_exceeds_error_bar"] = std::abs(*st.deviation_from_one) > st.error_bar;
    }
    return {dump(j), code};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Brownian spider optimal-stopping laboratory", "spider"};
    app.set_help_flag("--help", "print this help");
    app.require_subcommand(1);
    Flags f;

    const auto common = [&](CLI::App* sub) {
        sub->set_help_flag("--help", "print this help");
        sub->add_option("--n", f.n, "rib count (0 = line)")->capture_default_str();
        sub->add_option("--format", f.format, "json or csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->capture_default_str();
        sub->add_option("--out", f.out, "write the report to this file");
        sub->add_option("--threads", f.threads, "worker threads, 0 = auto")->capture_default_str();
    };
    const auto walk = [&](CLI::App* sub) {
        sub->add_option("--h", f.h, "lattice step")->capture_default_str();
        sub->add_option("--seed", f.seed, "random seed")->capture_default_str();
        sub->add_option("--paths", f.paths, "number of paths")->capture_default_str();
        sub->add_option("--max-steps", f.max_steps, "per-path step cap")->capture_default_str();
        sub->add_option("--c", f.c, "time cost C")->capture_default_str();
    };
    const auto point = [&](CLI::App* sub) {
        sub->add_option("--x", f.x, "position on the rib")->capture_default_str();
        sub->add_option("--r", f.r, "current rib (1-based)")->capture_default_str();
        sub->add_option("--s", f.s, "records s_1 ... s_n")->expected(1, -1);
    };
    const auto dp = [&](CLI::App* sub) {
        sub->add_option("--s-max", f.dp.s_max, "record truncation")->capture_default_str();
        sub->add_option("--x-depth", f.dp.x_depth, "line depth below the maximum")->capture_default_str();
        sub->add_option("--tol", f.dp.tol, "residual tolerance")->capture_default_str();
        sub->add_option("--max-iters", f.dp.max_iters, "policy rounds per slice")->capture_default_str();
        sub->add_option("--face", f.face, "record-drift or stop-clamp")->capture_default_str();
    };

    std::map<CLI::App*, std::function<Result(const Flags&)>> handlers;

    CLI::App* constants = app.add_subcommand("constants", "theta_n, C_n and the optimal cost for E tau = 1");
    common(constants);
    handlers[constants] = cmd_constants;

    CLI::App* eval = app.add_subcommand("eval", "closed-form value at a point");
    common(eval);
    point(eval);
    eval->add_option("--c", f.c, "time cost C")->capture_default_str();
    handlers[eval] = cmd_eval;

    CLI::App* verify = app.add_subcommand("verify", "finite-difference check of the excessiveness conditions");
    common(verify);
    verify->add_option("--c", f.c, "time cost C")->capture_default_str();
    verify->add_option("--h-fd", f.grid.h_fd, "finite-difference step")->capture_default_str();
    verify->add_option("--s-max", f.grid.s_max, "record range in units of 1/C")->capture_default_str();
    verify->add_option("--s-points", f.grid.s_points, "points per record axis")->capture_default_str();
    verify->add_option("--x-points", f.grid.x_points, "points per rib")->capture_default_str();
    verify->add_option("--third-scale", f.grid.third_scale, "bound on |V'''| / C")->capture_default_str();
    handlers[verify] = cmd_verify;

    CLI::App* simulate = app.add_subcommand("simulate", "one stopped path, or the supermartingale test");
    common(simulate);
    walk(simulate);
    point(simulate);
    simulate->add_option("--rule", f.rule, "stopping rule")->capture_default_str();
    simulate->add_flag("--supermartingale", f.supermartingale, "trace Y(t) = v_hat - C t over many paths");
    simulate->add_option("--horizon", f.horizon, "supermartingale time horizon")->capture_default_str();
    simulate->add_option("--time-points", f.time_points, "supermartingale grid size")->capture_default_str();
    simulate->add_option("--kappa", f.kappa, "lattice bias constant")->capture_default_str();
    simulate->add_flag("--richardson", f.richardson,
                       "also run at h/2 (seed + 1) and test the extrapolated means with no bias allowance");
    handlers[simulate] = cmd_simulate;

    CLI::App* est = app.add_subcommand("estimate", "Monte Carlo moments of a stopping rule");
    common(est);
    walk(est);
    est->add_option("--rule", f.rule, "stopping rule")->capture_default_str();
    est->add_option("--censor-threshold", f.censor_threshold, "largest censored fraction")->capture_default_str();
    est->add_option("--kappa", f.kappa, "lattice bias constant")->capture_default_str();
    handlers[est] = cmd_estimate;

    CLI::App* dp_cmd = app.add_subcommand("dp", "lattice dynamic-programming solve at C = 1");
    common(dp_cmd);
    dp_cmd->add_option("--h", f.dp.h, "lattice step")->capture_default_str();
    dp(dp_cmd);
    handlers[dp_cmd] = cmd_dp;

    CLI::App* study = app.add_subcommand("study", "DP convergence study with Richardson extrapolation");
    common(study);
    dp(study);
    study->add_option("--h-list", f.h_list, "decreasing step ladder")->delimiter(',');
    handlers[study] = cmd_study;

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* chosen = app.get_subcommands().front();

    Result result;
    try {
        result = handlers.at(chosen)(f);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NonConvergence& e) {
        err << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    } catch (const TruncationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    } catch (const ExcessiveCensoring& e) {
        err << "error: " << e.what() << '\n';
        return kExitCheckFailed;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    if (f.out.empty()) {
        out << result.text;
    } else {
        std::ofstream file(f.out, std::ios::binary);
        if (!file) {
            err << "error: cannot write " << f.out << '\n';
            return kExitUsage;
        }
        file << result.text;
    }
    return result.code;
}

}  // namespace spider
