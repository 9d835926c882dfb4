#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spider/state.hpp"
#include "spider/stopping.hpp"
#include "spider/value_function.hpp"

namespace spider {

/// Lattice bias constant: estimators allow kappa * h of discretization bias.
/// Calibrated by calibrate_bias_constant(); see there.
inline constexpr double kDefaultBiasConstant = 1.0;

struct Moment {
    double mean = 0.0;
    double std_error = 0.0;
};

struct MCEstimate {
    std::string rule;
    int n = 0;
    double h = 0.0;
    double cost = 1.0;            ///< C used in the penalized objective
    Moment sum_records;           ///< E[S_1(tau) + ... + S_n(tau)]
    Moment time;                  ///< E[tau]
    Moment penalized;             ///< E[S(tau) - C tau]
    Moment ratio;                 ///< E[S(tau)] / sqrt(E tau), delta-method error
    double covariance = 0.0;      ///< sample covariance of (S(tau), tau)
    std::int64_t n_paths = 0;
    std::int64_t censored = 0;
    double censored_fraction = 0.0;
};

struct EstimateOptions {
    unsigned threads = 0;              ///< 0 = one per hardware thread
    double censor_threshold = 1e-3;    ///< fail above this censored fraction
};

/// Raw per-path draws, indexed by path number.
struct PathSamples {
    std::vector<double> sum_records;
    std::vector<double> tau;
    std::int64_t censored = 0;
};

/// Simulates n_paths independent paths from the origin. Path i uses the
/// stream (config.seed, i), so the draws do not depend on the thread count.
PathSamples simulate_samples(const StoppingRule& rule, const WalkConfig& config,
                             std::int64_t n_paths, unsigned threads = 0);

/// Moments of the samples; `cost` enters the penalized objective only.
MCEstimate summarize(const PathSamples& samples, double cost);

/// Requires n_paths >= 100 and config.n == params.n; throws
/// ExcessiveCensoring when the censored fraction exceeds the threshold.
MCEstimate estimate(const StoppingRule& rule, const ValueParams& params, const WalkConfig& config,
                    std::int64_t n_paths, const EstimateOptions& options = {});

struct BoundCheck {
    bool satisfied = false;
    double bound = 0.0;       ///< C_n
    double slack = 0.0;       ///< C_n - ratio
    double allowance = 0.0;   ///< 3 * stderr(ratio) + kappa * h
};

BoundCheck bound_check(const MCEstimate& est, int n, double kappa = kDefaultBiasConstant);

/// Exact lattice expectations E[S], E[tau] of the drawdown-1 rule on the line,
/// whose continuum values are both 1. Returns max(|E S - 1|, |E tau - 1|) / h.
double calibrate_bias_constant(double h);

}  // namespace spider
