#include "spider/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "spider/errors.hpp"
#include "spider/parallel.hpp"
#include "spider/stopping.hpp"
#include "spider/walk.hpp"

namespace spider {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

enum Prop { kA, kB, kC, kD, kE, kF, kPropCount };

const char* const kNames[kPropCount] = {"a", "b", "c", "d", "e", "f"};
const char* const kConditions[kPropCount] = {
    "v_hat(0, r, s) independent of r",
    "sum over ribs of outward d/dx v_hat at x = 0 vanishes",
    "d/ds_r v_hat = 0 at x = s_r",
    "1/2 d2/dx2 v_hat <= C",
    "v_hat >= s_1 + ... + s_n",
    "1/2 d2/dx2 v_hat = C where v_hat > s_1 + ... + s_n",
};

// A residual measured at one site with one finite-difference step.
struct Sample {
    double residual = 0.0;   // raw residual (for convergence)
    double violation = 0.0;  // amount by which the condition fails
    double tolerance = 0.0;
    double floor = 0.0;      // round-off floor of the stencil
};

struct SiteResult {
    std::optional<Sample> coarse[kPropCount];
    std::optional<Sample> fine[kPropCount];
    bool excluded[kPropCount] = {};
};

class Checker {
public:
    Checker(const ValueParams& params, const GridSpec& grid) : params_(params), grid_(grid) {}

    double value(const EvalPoint& p) const { return v_hat(params_, p); }

    // Positions along the current rib where v_hat switches between its
    // quadratic pieces at fixed records.
    std::vector<double> x_kinks(const EvalPoint& p) const {
        const double half = 0.5 / params_.cost;
        switch (params_.n) {
            case 0:
                return {p.records[0] - half};
            case 1:
                if (p.records[0] > half) return {p.records[0] - half};
                return {};
            default: {
                const double own = p.records[p.rib - 1];
                const double other = p.records[2 - p.rib];
                if (own + other < 1.0 / params_.cost) return {};
                return {own - half, half - other};
            }
        }
    }

    // Same, along the record of the current rib at fixed position.
    std::vector<double> record_kinks(const EvalPoint& p) const {
        const double half = 0.5 / params_.cost;
        switch (params_.n) {
            case 0:
                return {p.x + half};
            case 1:
                return {half, p.x + half};
            default:
                return {1.0 / params_.cost - p.records[2 - p.rib], p.x + half};
        }
    }

    static bool near_kink(const std::vector<double>& kinks, double lo, double hi, double d) {
        return std::any_of(kinks.begin(), kinks.end(),
                           [&](double k) { return k > lo - d && k < hi + d; });
    }

    double derivative_tolerance(double d) const {
        return 10.0 * d * d * grid_.third_scale * params_.cost;
    }

    // Second-order one-sided derivative along rib `rib` at the origin.
    double outward_slope(const EvalPoint& site, int rib, double d, double& scale) const {
        EvalPoint p = site;
        p.rib = rib;
        p.x = 0.0;
        const double f0 = value(p);
        p.x = d;
        const double f1 = value(p);
        p.x = 2.0 * d;
        const double f2 = value(p);
        scale = std::max({scale, std::abs(f0), std::abs(f1), std::abs(f2)});
        return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * d);
    }

    std::optional<Sample> check_b(const EvalPoint& site, double d, bool& excluded) const {
        double total = 0.0;
        double scale = 1.0;
        for (int r = 1; r <= params_.n; ++r) {
            EvalPoint p = site;
            p.rib = r;
            p.x = 0.0;
            if (p.records[r - 1] < 2.0 * d ||
                near_kink(x_kinks(p), 0.0, 2.0 * d, grid_.h_fd)) {
                excluded = true;
                return std::nullopt;
            }
            total += outward_slope(site, r, d, scale);
        }
        Sample s;
        s.residual = std::abs(total);
        s.floor = 32.0 * kEps * scale * params_.n / d;
        s.violation = s.residual;
        s.tolerance = derivative_tolerance(d) + s.floor;
        return s;
    }

    std::optional<Sample> check_c(const EvalPoint& site, double d, bool& excluded) const {
        const int idx = params_.n == 0 ? 0 : site.rib - 1;
        const double s0 = site.records[idx];
        if (near_kink(record_kinks(site), s0, s0 + 2.0 * d, grid_.h_fd)) {
            excluded = true;
            return std::nullopt;
        }
        EvalPoint p = site;
        double f[3];
        for (int k = 0; k < 3; ++k) {
            p.records[idx] = s0 + k * d;
            f[k] = value(p);
        }
        const double scale = 1.0 + std::max({std::abs(f[0]), std::abs(f[1]), std::abs(f[2])});
        Sample s;
        s.residual = std::abs((-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * d));
        s.floor = 32.0 * kEps * scale / d;
        s.violation = s.residual;
        s.tolerance = derivative_tolerance(d) + s.floor;
        return s;
    }

    // 1/2 V'' - C by the 3-point central stencil, or nullopt near the ends or kinks.
    std::optional<double> half_curvature_excess(const EvalPoint& site, double d, double& floor,
                                                bool& excluded) const {
        const double upper = params_.n == 0 ? site.records[0] : site.records[site.rib - 1];
        const double lower = params_.n == 0 ? -std::numeric_limits<double>::infinity() : 0.0;
        if (site.x - grid_.h_fd < lower || site.x + grid_.h_fd > upper) return std::nullopt;
        if (near_kink(x_kinks(site), site.x - d, site.x + d, grid_.h_fd)) {
            excluded = true;
            return std::nullopt;
        }
        EvalPoint p = site;
        const double f0 = value(p);
        p.x = site.x + d;
        const double fp = value(p);
        p.x = site.x - d;
        const double fm = value(p);
        const double scale = 1.0 + std::max({std::abs(f0), std::abs(fp), std::abs(fm)});
        floor = 64.0 * kEps * scale / (d * d);
        return 0.5 * (fp - 2.0 * f0 + fm) / (d * d) - params_.cost;
    }

    void evaluate(const EvalPoint& site, bool at_origin, bool at_record, SiteResult& out) const {
        const double d = grid_.h_fd;
        const double v = value(site);
        const double stop = record_sum(site);
        const double scale = 1.0 + std::abs(v);

        Sample e;
        e.violation = std::max(0.0, stop - v);
        e.tolerance = 8.0 * kEps * scale;
        out.coarse[kE] = e;

        if (params_.n == 2 && at_origin && site.rib == 1) {
            EvalPoint other = site;
            other.rib = 2;
            Sample a;
            a.violation = std::abs(v - value(other));
            a.tolerance = 8.0 * kEps * scale;
            out.coarse[kA] = a;
        }
        if (params_.n >= 1 && at_origin && site.rib == 1) {
            bool excluded = false;
            out.coarse[kB] = check_b(site, d, excluded);
            if (out.coarse[kB]) out.fine[kB] = check_b(site, 0.5 * d, excluded);
            out.excluded[kB] = excluded;
        }
        if (at_record) {
            bool excluded = false;
            out.coarse[kC] = check_c(site, d, excluded);
            if (out.coarse[kC]) out.fine[kC] = check_c(site, 0.5 * d, excluded);
            out.excluded[kC] = excluded;
        }

        bool excluded = false;
        double floor = 0.0;
        double floor_fine = 0.0;
        const auto coarse = half_curvature_excess(site, d, floor, excluded);
        out.excluded[kD] = excluded;
        if (!coarse) {
            out.excluded[kF] = excluded && v - stop > 0.0;
            return;
        }
        const auto fine = half_curvature_excess(site, 0.5 * d, floor_fine, excluded);
        const double tol = derivative_tolerance(d) + floor;
        const double tol_fine = derivative_tolerance(0.5 * d) + floor_fine;
        out.coarse[kD] = Sample{std::max(0.0, *coarse), std::max(0.0, *coarse), tol, floor};
        out.fine[kD] = Sample{std::max(0.0, *fine), std::max(0.0, *fine), tol_fine, floor_fine};
        if (v - stop > 1e-9 * scale) {
            out.coarse[kF] = Sample{std::abs(*coarse), std::abs(*coarse), tol, floor};
            out.fine[kF] = Sample{std::abs(*fine), std::abs(*fine), tol_fine, floor_fine};
        }
    }

private:
    ValueParams params_;
    GridSpec grid_;
};

struct Site {
    EvalPoint point;
    bool at_origin = false;
    bool at_record = false;
};

std::vector<Site> build_sites(const ValueParams& params, const GridSpec& grid) {
    const double s_hi = grid.s_max / params.cost;
    auto axis = [&](int i) { return s_hi * i / (grid.s_points - 1); };
    std::vector<Site> sites;
    auto add_rib = [&](EvalPoint base, double top, double bottom) {
        for (int j = 0; j < grid.x_points; ++j) {
            const double t = static_cast<double>(j) / (grid.x_points - 1);
            base.x = j == grid.x_points - 1 ? top : bottom + (top - bottom) * t;
            sites.push_back({base, params.n >= 1 && j == 0, j == grid.x_points - 1});
        }
    };
    switch (params.n) {
        case 0:
            for (int i = 0; i < grid.s_points; ++i) {
                const double s = axis(i);
                add_rib(EvalPoint{0.0, 1, {s}}, s, s - s_hi);
            }
            break;
        case 1:
            for (int i = 0; i < grid.s_points; ++i) add_rib(EvalPoint{0.0, 1, {axis(i)}}, axis(i), 0.0);
            break;
        default:
            for (int i = 0; i < grid.s_points; ++i)
                for (int k = 0; k < grid.s_points; ++k)
                    for (int r = 1; r <= 2; ++r) {
                        EvalPoint base{0.0, r, {axis(i), axis(k)}};
                        add_rib(base, base.records[r - 1], 0.0);
                    }
            break;
    }
    return sites;
}

double probe(double x) { return std::sin(x) * std::exp(0.5 * x); }
double probe_d1(double x) { return std::exp(0.5 * x) * (std::cos(x) + 0.5 * std::sin(x)); }
double probe_d2(double x) { return std::exp(0.5 * x) * (std::cos(x) - 0.75 * std::sin(x)); }

StencilOrder stencil_order() {
    constexpr double x0 = 0.4;
    auto first_error = [&](double d) {
        const double est = (-3.0 * probe(x0) + 4.0 * probe(x0 + d) - probe(x0 + 2.0 * d)) / (2.0 * d);
        return std::abs(est - probe_d1(x0));
    };
    auto second_error = [&](double d) {
        const double est = (probe(x0 + d) - 2.0 * probe(x0) + probe(x0 - d)) / (d * d);
        return std::abs(est - probe_d2(x0));
    };
    constexpr double d = 1e-2;
    StencilOrder out;
    out.first_derivative_ratio = first_error(d) / first_error(0.5 * d);
    out.second_derivative_ratio = second_error(d) / second_error(0.5 * d);
    auto in_band = [](double r) { return r >= 3.0 && r <= 5.0; };
    out.second_order = in_band(out.first_derivative_ratio) && in_band(out.second_derivative_ratio);
    return out;
}

}  // namespace

void GridSpec::validate() const {
    if (!(h_fd > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    if (!(s_max > 0.0)) throw InvalidArgument("record range must be positive");
    if (s_points < 2 || x_points < 2) throw InvalidArgument("degenerate grid: need >= 2 points per axis");
    if (!(third_scale > 0.0)) throw InvalidArgument("third-derivative scale must be positive");
}

bool PropertyReport::all_passed() const {
    return stencils.second_order &&
           std::all_of(properties.begin(), properties.end(),
                       [](const PropertyCheck& p) { return p.passed; });
}

PropertyReport check_properties(const ValueParams& params, const GridSpec& grid) {
    if (params.n < 0) throw InvalidArgument("rib count must be nonnegative");
    if (params.n > 2) throw UnsupportedN(params.n);
    if (!(params.cost > 0.0)) throw InvalidArgument("time cost C must be positive");
    grid.validate();

    const Checker checker(params, grid);
    const std::vector<Site> sites = build_sites(params, grid);
    std::vector<SiteResult> results(sites.size());
    parallel_for(sites.size(), grid.threads, 512, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            checker.evaluate(sites[i].point, sites[i].at_origin, sites[i].at_record, results[i]);
    });

    PropertyReport report;
    report.params = params;
    report.grid = grid;
    report.stencils = stencil_order();
    for (int prop = 0; prop < kPropCount; ++prop) {
        PropertyCheck check;
        check.name = kNames[prop];
        check.condition = kConditions[prop];
        check.applicable = !(prop == kA && params.n < 2) && !(prop == kB && params.n == 0);
        double worst_excess = -std::numeric_limits<double>::infinity();
        bool has_fine = false;
        bool fine_within_floor = true;
        for (std::size_t i = 0; i < sites.size(); ++i) {
            const SiteResult& r = results[i];
            if (r.excluded[prop]) ++check.excluded;
            if (!r.coarse[prop]) continue;
            const Sample& s = *r.coarse[prop];
            ++check.checked;
            check.tolerance = std::max(check.tolerance, s.tolerance);
            check.residual_coarse = std::max(check.residual_coarse, s.residual);
            check.roundoff_floor = std::max(check.roundoff_floor, s.floor);
            if (s.violation > s.tolerance) check.passed = false;
            if (s.violation - s.tolerance > worst_excess) {
                worst_excess = s.violation - s.tolerance;
                check.max_violation = s.violation;
                check.worst_point = sites[i].point;
            }
            if (r.fine[prop]) {
                has_fine = true;
                check.residual_fine = std::max(check.residual_fine, r.fine[prop]->residual);
                if (r.fine[prop]->residual > r.fine[prop]->floor) fine_within_floor = false;
            }
        }
        if (check.checked == 0 && !check.worst_point.records.size())
            check.worst_point.records.assign(record_dimension(params.n), 0.0);
        if (has_fine) {
            if (check.residual_coarse <= check.roundoff_floor && fine_within_floor) {
                check.convergence = "exact";
            } else if (check.residual_fine > 0.0) {
                check.residual_ratio = check.residual_coarse / check.residual_fine;
                const bool ok = check.residual_ratio >= 3.0 && check.residual_ratio <= 5.0;
                check.convergence = ok ? "second-order" : "failed";
                if (!ok) check.passed = false;
            } else {
                check.convergence = "failed";
                check.passed = false;
            }
        }
        report.properties.push_back(std::move(check));
    }
    return report;
}

namespace {

struct PathTrace {
    std::vector<double> y;
    std::vector<double> y_stopped;
    std::vector<unsigned char> stopped;
};

template <class State>
void trace_paths(const State& initial, const ValueParams& params, const WalkConfig& config,
                 const std::vector<std::int64_t>& grid_steps, std::int64_t n_paths,
                 unsigned threads, PathTrace& trace) {
    const int points = static_cast<int>(grid_steps.size());
    const LatticeRule first_entry(FirstEntry{params}, config.n, config.h);
    const double c = params.cost;
    const double h2 = config.h * config.h;
    parallel_for(static_cast<std::size_t>(n_paths), threads, 256,
                 [&](std::size_t begin, std::size_t end) {
                     for (std::size_t i = begin; i < end; ++i) {
                         PhiloxStream rng(config.seed, i);
                         State s = initial;
                         bool stopped = first_entry.stop(s);
                         double y_tau = v_hat(params, s.eval_point());
                         std::int64_t done = 0;
                         for (int k = 0; k < points; ++k) {
                             for (; done < grid_steps[k]; ++done) {
                                 advance(s, rng);
                                 if (!stopped && first_entry.stop(s)) {
                                     stopped = true;
                                     y_tau = v_hat(params, s.eval_point()) -
                                             c * static_cast<double>(done + 1) * h2;
                                 }
                             }
                             const double y = v_hat(params, s.eval_point()) -
                                              c * static_cast<double>(done) * h2;
                             const std::size_t at = i * points + k;
                             trace.y[at] = y;
                             trace.y_stopped[at] = stopped ? y_tau : y;
                         }
                         trace.stopped[i] = stopped;
                     }
                 });
}

void assess(SupermartingaleReport& report, double allowance) {
    report.verdict = true;
    report.stopped_constant = true;
    report.stopped_within_bias = true;
    report.bias_allowance = allowance;
    report.max_z_excess = 0.0;
    report.max_z_stopped = 0.0;
    for (std::size_t k = 0; k < report.y.size(); ++k) {
        const Moment& y = report.y[k];
        const Moment& ys = report.y_stopped[k];
        const double excess = y.mean - report.y0;
        const double drift = std::abs(ys.mean - report.y0);
        if (excess > 3.0 * y.std_error) report.verdict = false;
        if (drift > 3.0 * ys.std_error) report.stopped_constant = false;
        if (drift > 3.0 * ys.std_error + allowance) report.stopped_within_bias = false;
        if (y.std_error > 0.0) report.max_z_excess = std::max(report.max_z_excess, excess / y.std_error);
        if (ys.std_error > 0.0) report.max_z_stopped = std::max(report.max_z_stopped, drift / ys.std_error);
    }
}

}  // namespace

SupermartingaleReport supermartingale_mc(const ValueParams& params, const EvalPoint& initial,
                                         double horizon, const WalkConfig& config,
                                         const SupermartingaleOptions& options) {
    config.validate();
    if (params.n > 2) throw UnsupportedN(params.n);
    if (config.n != params.n) throw DimensionMismatch("walk and value parameters disagree on n");
    if (!(horizon >= 0.0)) throw InvalidArgument("horizon must be nonnegative");
    if (options.n_paths < 2) throw InvalidArgument("need at least two paths");
    const int points = horizon == 0.0 ? 1 : std::max(options.time_points, 2);

    SupermartingaleReport report;
    std::vector<std::int64_t> grid_steps(points);
    const double h2 = config.h * config.h;
    for (int k = 0; k < points; ++k) {
        const double t = points == 1 ? 0.0 : horizon * k / (points - 1);
        grid_steps[k] = static_cast<std::int64_t>(std::llround(t / h2));
        report.times.push_back(static_cast<double>(grid_steps[k]) * h2);
    }
    if (grid_steps.back() > config.max_steps) throw ExcessiveCensoring(1.0, 0.0);

    const auto n_paths = static_cast<std::size_t>(options.n_paths);
    PathTrace trace;
    trace.y.resize(n_paths * points);
    trace.y_stopped.resize(n_paths * points);
    trace.stopped.resize(n_paths);
    if (params.n == 0) {
        const LineState start = LineState::from_point(initial, config.h);
        report.y0 = v_hat(params, start.eval_point());
        trace_paths(start, params, config, grid_steps, options.n_paths, options.threads, trace);
    } else {
        const SpiderState start = SpiderState::from_point(initial, params.n, config.h);
        report.y0 = v_hat(params, start.eval_point());
        trace_paths(start, params, config, grid_steps, options.n_paths, options.threads, trace);
    }

    std::vector<double> column(n_paths);
    auto moment_at = [&](const std::vector<double>& values, int k) {
        for (std::size_t i = 0; i < n_paths; ++i) column[i] = values[i * points + k];
        const double count = static_cast<double>(n_paths);
        const double mean = pairwise_sum(column) / count;
        for (double& v : column) v = (v - mean) * (v - mean);
        const double var = pairwise_sum(column) / (count - 1.0);
        return Moment{mean, std::sqrt(var / count)};
    };
    for (int k = 0; k < points; ++k) {
        report.y.push_back(moment_at(trace.y, k));
        report.y_stopped.push_back(moment_at(trace.y_stopped, k));
    }
    assess(report, options.kappa * config.h);
    std::int64_t stopped = 0;
    for (auto s : trace.stopped) stopped += s;
    report.stopped_by_horizon = static_cast<double>(stopped) / static_cast<double>(n_paths);
    return report;
}

SupermartingaleReport richardson_combine(const SupermartingaleReport& coarse,
                                          const SupermartingaleReport& fine) {
    if (coarse.times.size() != fine.times.size())
        throw DimensionMismatch("reports have different time grids");
    for (std::size_t k = 0; k < coarse.times.size(); ++k) {
        if (std::abs(coarse.times[k] - fine.times[k]) > 1e-9)
            throw InvalidArgument("reports have different time grids");
    }
    auto combine = [](const Moment& c, const Moment& f) {
        return Moment{2.0 * f.mean - c.mean, std::sqrt(4.0 * f.std_error * f.std_error + c.std_error * c.std_error)};
    };
    SupermartingaleReport out;
    out.times = fine.times;
    out.y0 = 2.0 * fine.y0 - coarse.y0;
    for (std::size_t k = 0; k < fine.times.size(); ++k) {
        out.y.push_back(combine(coarse.y[k], fine.y[k]));
        out.y_stopped.push_back(combine(coarse.y_stopped[k], fine.y_stopped[k]));
    }
    out.stopped_by_horizon = 2.0 * fine.stopped_by_horizon - coarse.stopped_by_horizon;
    assess(out, 0.0);
    return out;
}

}  // namespace spider
