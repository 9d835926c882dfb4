#pragma once

#include <cstdint>
#include <vector>

#include "spider/value_function.hpp"

namespace spider {

/// Discretization and simulation settings for the lattice walk.
struct WalkConfig {
    double h = 0.01;            ///< lattice spatial step; one step lasts h^2
    int n = 1;                  ///< rib count; 0 selects the unreflected line
    std::uint64_t seed = 0;
    std::int64_t max_steps = 100'000'000;

    void validate() const;
};

/// Position on the spider together with the per-rib records.
///
/// Coordinates are stored in lattice units, so x = position * h and
/// elapsed = steps * h^2 hold exactly. Ribs are 1-based.
struct SpiderState {
    double h = 0.01;
    std::int64_t position = 0;
    int rib = 1;
    std::vector<std::int64_t> records;
    std::int64_t steps = 0;

    /// The origin with all records zero.
    static SpiderState origin(int n, double h);
    /// Snaps a real-valued point onto the h-lattice; throws if it is not on it.
    static SpiderState from_point(const EvalPoint& p, int n, double h);

    int ribs() const { return static_cast<int>(records.size()); }
    double x() const { return static_cast<double>(position) * h; }
    double record(int r) const { return static_cast<double>(records[r - 1]) * h; }
    double record_sum() const;
    double elapsed() const { return static_cast<double>(steps) * h * h; }
    EvalPoint eval_point() const;
    void check_invariants() const;
};

/// Unreflected walk on the line with its running maximum.
struct LineState {
    double h = 0.01;
    std::int64_t position = 0;
    std::int64_t maximum = 0;
    std::int64_t steps = 0;

    static LineState origin(double h);
    static LineState from_point(const EvalPoint& p, double h);

    double x() const { return static_cast<double>(position) * h; }
    double record() const { return static_cast<double>(maximum) * h; }
    double elapsed() const { return static_cast<double>(steps) * h * h; }
    EvalPoint eval_point() const;
    void check_invariants() const;
};

}  // namespace spider
