#include "spider/monte_carlo.hpp"

#include <cmath>
#include <string>

#include "spider/errors.hpp"
#include "spider/parallel.hpp"
#include "spider/walk.hpp"

namespace spider {
namespace {

constexpr std::size_t kPathChunk = 256;

Moment moment_of(std::span<const double> v, double& variance) {
    const double count = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / count;
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
    variance = v.size() > 1 ? pairwise_sum(dev) / (count - 1.0) : 0.0;
    return Moment{mean, std::sqrt(variance / count)};
}

// Thomas algorithm for sub/diag/super bands; the system is diagonally dominant.
std::vector<double> solve_tridiagonal(std::vector<double> lower, std::vector<double> diag,
                                      std::vector<double> upper, std::vector<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

}  // namespace

PathSamples simulate_samples(const StoppingRule& rule, const WalkConfig& config,
                             std::int64_t n_paths, unsigned threads) {
    config.validate();
    if (n_paths < 1) throw InvalidArgument("need at least one path");
    const LatticeRule compiled(rule, config.n, config.h);
    const auto count = static_cast<std::size_t>(n_paths);
    PathSamples out;
    out.sum_records.resize(count);
    out.tau.resize(count);
    std::vector<unsigned char> censored(count, 0);
    const double h = config.h;

    parallel_for(count, threads, kPathChunk, [&](std::size_t begin, std::size_t end) {
        if (config.n == 0) {
            for (std::size_t i = begin; i < end; ++i) {
                PhiloxStream rng(config.seed, i);
                LineState s = LineState::origin(h);
                censored[i] = !run_until(s, compiled, config.max_steps, rng);
                out.sum_records[i] = s.record();
                out.tau[i] = s.elapsed();
            }
            return;
        }
        SpiderState s = SpiderState::origin(config.n, h);
        for (std::size_t i = begin; i < end; ++i) {
            PhiloxStream rng(config.seed, i);
            s.position = 0;
            s.rib = 1;
            s.steps = 0;
            std::fill(s.records.begin(), s.records.end(), 0);
            censored[i] = !run_until(s, compiled, config.max_steps, rng);
            out.sum_records[i] = s.record_sum();
            out.tau[i] = s.elapsed();
        }
    });
    for (auto c : censored) out.censored += c;
    return out;
}

MCEstimate summarize(const PathSamples& samples, double cost) {
    const std::size_t count = samples.tau.size();
    if (count == 0 || samples.sum_records.size() != count)
        throw InvalidArgument("samples are empty or ragged");
    MCEstimate est;
    est.cost = cost;
    est.n_paths = static_cast<std::int64_t>(count);
    est.censored = samples.censored;
    est.censored_fraction = static_cast<double>(samples.censored) / static_cast<double>(count);

    double var_s = 0.0;
    double var_t = 0.0;
    double var_p = 0.0;
    est.sum_records = moment_of(samples.sum_records, var_s);
    est.time = moment_of(samples.tau, var_t);
    std::vector<double> work(count);
    for (std::size_t i = 0; i < count; ++i) work[i] = samples.sum_records[i] - cost * samples.tau[i];
    est.penalized = moment_of(work, var_p);
    for (std::size_t i = 0; i < count; ++i)
        work[i] = (samples.sum_records[i] - est.sum_records.mean) * (samples.tau[i] - est.time.mean);
    est.covariance = count > 1 ? pairwise_sum(work) / static_cast<double>(count - 1) : 0.0;

    const double ms = est.sum_records.mean;
    const double mt = est.time.mean;
    if (mt > 0.0) {
        const double root = std::sqrt(mt);
        const double ds = 1.0 / root;                // d ratio / d mean_s
        const double dt = -0.5 * ms / (mt * root);   // d ratio / d mean_tau
        const double var = (ds * ds * var_s + 2.0 * ds * dt * est.covariance + dt * dt * var_t) /
                           static_cast<double>(count);
        est.ratio = Moment{ms / root, std::sqrt(std::max(var, 0.0))};
    }
    return est;
}

MCEstimate estimate(const StoppingRule& rule, const ValueParams& params, const WalkConfig& config,
                    std::int64_t n_paths, const EstimateOptions& options) {
    if (n_paths < 100) throw InvalidArgument("estimate needs at least 100 paths");
    if (config.n != params.n) throw DimensionMismatch("walk and value parameters disagree on n");
    if (!(params.cost > 0.0)) throw InvalidArgument("time cost C must be positive");
    const PathSamples samples = simulate_samples(rule, config, n_paths, options.threads);
    MCEstimate est = summarize(samples, params.cost);
    est.rule = format_rule(rule);
    est.n = config.n;
    est.h = config.h;
    if (est.censored_fraction > options.censor_threshold)
        throw ExcessiveCensoring(est.censored_fraction, options.censor_threshold);
    return est;
}

BoundCheck bound_check(const MCEstimate& est, int n, double kappa) {
    BoundCheck out;
    out.bound = spider_constant(n);
    out.slack = out.bound - est.ratio.mean;
    out.allowance = 3.0 * est.ratio.std_error + kappa * est.h;
    out.satisfied = est.ratio.mean <= out.bound + out.allowance;
    return out;
}

double calibrate_bias_constant(double h) {
    if (!(h > 0.0) || h > 0.5) throw InvalidArgument("calibration step must lie in (0, 0.5]");
    const auto depth = static_cast<std::size_t>(std::ceil(1.0 / h - 1e-9));
    // Unknowns are drawdown levels 0..depth-1; level `depth` stops with value 0.
    // Level 0 sits on the record: an up-step adds h to S and stays at level 0.
    std::vector<double> lower(depth, -0.5);
    std::vector<double> diag(depth, 1.0);
    std::vector<double> upper(depth, -0.5);
    diag[0] = 0.5;
    std::vector<double> gain(depth, 0.0);
    std::vector<double> time(depth, h * h);
    gain[0] = 0.5 * h;
    const auto mean_gain = solve_tridiagonal(lower, diag, upper, gain);
    const auto mean_time = solve_tridiagonal(lower, diag, upper, time);
    return std::max(std::abs(mean_gain[0] - 1.0), std::abs(mean_time[0] - 1.0)) / h;
}

}  // namespace spider
