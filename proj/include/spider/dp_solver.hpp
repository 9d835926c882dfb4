#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spider/value_function.hpp"

namespace spider {

/// What a push of the record beyond S_max is worth.
enum class FaceCondition {
    /// The record keeps growing at unit rate: V(s_r + h) = V(s_r) + h at the face.
    kRecordDrift,
    /// The at-record face state is forced to stop (a lower bound).
    kStopClamp,
};

std::string to_string(FaceCondition face);
FaceCondition parse_face_condition(const std::string& text);

struct DPOptions {
    double h = 0.02;
    double s_max = 3.0;            ///< record truncation (C = 1), rounded up to a multiple of h
    double x_depth = 1.5;          ///< line only: states keep s - x <= x_depth
    double tol = 1e-9;             ///< Bellman residual and face-settlement tolerance
    std::int64_t max_iters = 100'000;  ///< policy-iteration rounds per record slice
    FaceCondition face = FaceCondition::kRecordDrift;
    bool enforce_settlement = true;    ///< throw TruncationError when the face has not settled
    bool keep_surface = true;      ///< store every state value (needed for value lookups)
    unsigned threads = 0;
};

/// Discrete value function of the stopping problem at C = 1 on the h-lattice.
///
/// States (x, r, s) are stored canonically: the current rib's record plus the
/// sorted multiset of the other records. The origin value is shared by all ribs.
class DPGrid {
public:
    int n = 1;
    double h = 0.0;
    double s_max = 0.0;
    double x_depth = 0.0;
    FaceCondition face = FaceCondition::kRecordDrift;
    double theta_estimate = 0.0;
    std::int64_t iterations = 0;            ///< policy evaluations, all slices
    std::int64_t max_slice_iterations = 0;
    std::int64_t slices = 0;
    std::int64_t states = 0;
    double residual = 0.0;                  ///< sup-norm Bellman residual
    double monotonicity_violation = 0.0;    ///< largest decrease between policy rounds
    double boundary_settlement = 0.0;       ///< max |V(K) - V(K - 2) - 2h| over at-record face states

    bool has_surface() const { return !surface_.empty(); }
    std::int64_t lattice_size() const { return size_; }

    /// Value at a lattice point of the grid. Throws DomainViolation off-grid.
    double value(const EvalPoint& p) const;

    /// Visits every stored state (x, rib = 1, records) with its value.
    void for_each_state(const std::function<void(const EvalPoint&, double)>& visit) const;

private:
    friend DPGrid solve(int n, const DPOptions& options);
    friend DPGrid solve_line(const DPOptions& options);

    std::int64_t size_ = 0;                 // K = s_max / h
    std::int64_t depth_ = 0;                // line: D = x_depth / h
    std::int64_t multisets_ = 0;            // count of "other record" multisets
    std::vector<std::vector<std::int64_t>> binom_;
    std::vector<double> surface_;

    std::int64_t rank(std::span<const std::int64_t> ascending) const;
    std::size_t block(std::int64_t current, std::int64_t rank) const;
};

/// Backward induction over record slices in decreasing order of s_1 + ... + s_n.
/// Each slice (fixed records) is an obstacle problem on a star graph solved
/// exactly by policy iteration started from "stop everywhere".
/// Requires n >= 1.
DPGrid solve(int n, const DPOptions& options);

/// Same scheme for the unreflected line on states s - x_depth <= x <= s.
DPGrid solve_line(const DPOptions& options);

/// Dispatches n = 0 to solve_line.
DPGrid solve_any(int n, const DPOptions& options);

struct StudyRow {
    double h = 0.0;
    double theta = 0.0;
    double residual = 0.0;
    double boundary_settlement = 0.0;
    std::int64_t states = 0;
};

struct ConvergenceStudy {
    int n = 0;
    std::vector<StudyRow> rows;
    double refinement = 0.0;           ///< h_{i} / h_{i+1}
    bool monotone = false;
    double error_ratio = 0.0;          ///< (theta_2 - theta_1) / (theta_3 - theta_2), last three rows
    std::optional<double> extrapolated;  ///< first-order Richardson; empty if not monotone
    double error_bar = 0.0;            ///< |theta_last - extrapolated|
    std::optional<double> deviation_from_one;  ///< n = 3: extrapolated - 1 (theta_3 = 1 iff C_3 = 2)
};

/// Solves on each h of a geometric ladder (>= 3 entries, constant ratio) and
/// extrapolates theta assuming an O(h) error.
ConvergenceStudy convergence_study(int n, const std::vector<double>& h_list, const DPOptions& base);

}  // namespace spider
