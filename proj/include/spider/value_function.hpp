#pragma once

#include <vector>

namespace spider {

/// Rib count and linear time cost. n = 0 is the unreflected line, where the
/// one-sided maximum plays the role of the record.
struct ValueParams {
    int n = 1;
    double cost = 1.0;
};

/// A point (x, r, s_1..s_n) of the state space of (Z, S).
///
/// Ribs are 1-based. For n = 0 `records` holds the single running maximum
/// and x may be negative; for n >= 1 we need 0 <= x <= records[rib - 1].
struct EvalPoint {
    double x = 0.0;
    int rib = 1;
    std::vector<double> records;
};

/// Number of record coordinates carried for rib count n.
inline std::size_t record_dimension(int n) { return n == 0 ? 1u : static_cast<std::size_t>(n); }

double record_sum(const EvalPoint& p);

/// Throws InvalidArgument / DimensionMismatch / DomainViolation.
void validate(const ValueParams& params, const EvalPoint& p);

/// The candidate optimal reward for n in {0, 1, 2}.
double v_hat(const ValueParams& params, const EvalPoint& p);

struct Rescaled {
    EvalPoint point;
    double scale = 1.0;
};

/// Maps p to the unit-cost problem: v_hat(p; C) == scale * v_hat(point; 1).
Rescaled rescale(const ValueParams& params, const EvalPoint& p);

/// Origin value at unit cost, A_n(C) = theta_n / C.
double theta(int n);

/// Best constant in E[S_1(tau) + ... + S_n(tau)] <= C_n sqrt(E tau); equals sqrt(n + 1).
double spider_constant(int n);

/// Cost minimizing theta_n / C + C m.
double optimal_cost(int n, double mean_time);

/// theta_n / C + C m, the upper bound on E[S(tau)] for any tau with E tau = m.
double penalized_bound(int n, double cost, double mean_time);

/// Membership in {v_hat == sum of records}, decided by the closed-form region
/// inequalities. Ties within 1e-12 (relative) of the free boundary count as stopping.
bool in_stopping_set(const ValueParams& params, const EvalPoint& p);

}  // namespace spider
