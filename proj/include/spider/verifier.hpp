#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spider/monte_carlo.hpp"
#include "spider/state.hpp"
#include "spider/value_function.hpp"

namespace spider {

/// Where and how finely the excessiveness conditions are probed.
struct GridSpec {
    double h_fd = 1e-3;            ///< finite-difference step
    double s_max = 2.0;            ///< record range [0, s_max / C]
    int s_points = 41;             ///< grid points per record axis
    int x_points = 41;             ///< grid points along each rib
    double third_scale = 10.0;     ///< bound on |V'''| in units of C, sets the FD tolerance
    unsigned threads = 0;

    void validate() const;
};

/// Outcome for one of the conditions (a)-(f).
struct PropertyCheck {
    std::string name;
    std::string condition;
    bool applicable = true;
    bool passed = true;
    double max_violation = 0.0;
    double tolerance = 0.0;          ///< largest per-site tolerance applied
    EvalPoint worst_point;
    std::int64_t checked = 0;
    std::int64_t excluded = 0;       ///< sites dropped for lying within 2 h_fd of a kink

    /// Behaviour of the residual under h_fd -> h_fd / 2: "second-order" when
    /// the coarse residual is above the round-off floor (ratio must lie in
    /// [3, 5]), "exact" when both residuals sit at round-off, "none" for
    /// non-derivative checks.
    std::string convergence = "none";
    double residual_coarse = 0.0;
    double residual_fine = 0.0;
    double residual_ratio = 0.0;
    double roundoff_floor = 0.0;
};

/// Error ratios of the stencils themselves on a smooth, non-polynomial probe.
struct StencilOrder {
    double first_derivative_ratio = 0.0;
    double second_derivative_ratio = 0.0;
    bool second_order = false;
};

struct PropertyReport {
    ValueParams params;
    GridSpec grid;
    std::vector<PropertyCheck> properties;
    StencilOrder stencils;

    bool all_passed() const;
};

/// Checks (a)-(f) for the closed-form v_hat on a grid. (b) is checked in its
/// Walsh form, the sum over ribs of the outward x-derivatives at the origin;
/// (f) is checked as 1/2 V'' = +C wherever v_hat exceeds the record sum.
PropertyReport check_properties(const ValueParams& params, const GridSpec& grid);

struct SupermartingaleOptions {
    std::int64_t n_paths = 100'000;
    int time_points = 21;
    unsigned threads = 0;
    double kappa = kDefaultBiasConstant;   ///< lattice bias allowance is kappa * h
};

/// Monte Carlo means of Y(t) = v_hat(Z_t, S(t)) - C t on a time grid, both
/// unstopped and stopped at tau* (first entry into the stopping set).
struct SupermartingaleReport {
    std::vector<double> times;
    std::vector<Moment> y;
    std::vector<Moment> y_stopped;
    double y0 = 0.0;
    bool verdict = false;            ///< every mean Y(t) <= Y(0) + 3 stderr
    bool stopped_constant = false;   ///< every mean Y(t ^ tau*) within Y(0) +- 3 stderr
    /// Same, with the lattice allowance: within Y(0) +- (3 stderr + kappa h).
    /// Each record push on the lattice costs C h^2 / 2 of drift, so the
    /// stopped mean sits O(h) below Y(0).
    bool stopped_within_bias = false;
    double bias_allowance = 0.0;     ///< kappa * h
    double max_z_excess = 0.0;       ///< max_t (mean Y(t) - Y(0)) / stderr
    double max_z_stopped = 0.0;      ///< max_t |mean Y(t ^ tau*) - Y(0)| / stderr
    double stopped_by_horizon = 0.0; ///< fraction of paths with tau* <= horizon
};

SupermartingaleReport supermartingale_mc(const ValueParams& params, const EvalPoint& initial,
                                         double horizon, const WalkConfig& config,
                                         const SupermartingaleOptions& options = {});

/// First-order Richardson combination 2 * fine - coarse of two reports on the
/// same time grid, with fine.h = coarse.h / 2. Removes the O(h) lattice bias
/// from every mean; standard errors combine as for independent runs, so the
/// two runs must use different seeds. Verdicts are recomputed with no allowance.
SupermartingaleReport richardson_combine(const SupermartingaleReport& coarse,
                                         const SupermartingaleReport& fine);

}  // namespace spider
