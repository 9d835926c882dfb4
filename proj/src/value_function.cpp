#include "spider/value_function.hpp"

#include <cassert>
#include <cmath>
#include <numeric>
#include <string>

#include "spider/errors.hpp"

namespace spider {
namespace {

constexpr double kBoundarySlack = 1e-12;

bool leq(double lhs, double rhs) {
    return lhs <= rhs + kBoundarySlack * (1.0 + std::abs(rhs));
}

double positive_part(double v) { return v > 0.0 ? v : 0.0; }

void require_closed_form(int n) {
    if (n < 0) throw InvalidArgument("rib count must be nonnegative, got " + std::to_string(n));
    if (n > 2) throw UnsupportedN(n);
}

// Inner branch of the two-rib solution, valid when s_1 + s_2 <= 1/C.
double two_rib_inner(double c, double x, double own, double other) {
    return c * x * x - c * x * (own - other) + 0.5 * c * (own * own + other * other) +
           0.75 / c;
}

// Outer branch, valid when s_1 + s_2 >= 1/C.
double two_rib_outer(double c, double x, double own, double other) {
    const double half = 0.5 / c;
    const double up = positive_part(x - (own - half));
    const double across = positive_part(-x - (other - half));
    return c * up * up + c * across * across + own + other;
}

}  // namespace

double record_sum(const EvalPoint& p) {
    return std::accumulate(p.records.begin(), p.records.end(), 0.0);
}

void validate(const ValueParams& params, const EvalPoint& p) {
    if (params.n < 0) throw InvalidArgument("rib count must be nonnegative");
    if (!(params.cost > 0.0) || !std::isfinite(params.cost))
        throw InvalidArgument("time cost C must be positive and finite");
    if (p.records.size() != record_dimension(params.n))
        throw DimensionMismatch("expected " + std::to_string(record_dimension(params.n)) +
                                " records, got " + std::to_string(p.records.size()));
    if (!std::isfinite(p.x)) throw DomainViolation("position must be finite");
    for (double s : p.records)
        if (!std::isfinite(s)) throw DomainViolation("records must be finite");
    if (params.n == 0) {
        if (p.x > p.records[0]) throw DomainViolation("line position exceeds its running maximum");
        return;
    }
    if (p.rib < 1 || p.rib > params.n)
        throw DimensionMismatch("rib index " + std::to_string(p.rib) + " outside 1.." +
                                std::to_string(params.n));
    for (double s : p.records)
        if (s < 0.0) throw DomainViolation("records must be nonnegative");
    if (p.x < 0.0) throw DomainViolation("distance from the origin must be nonnegative");
    if (p.x > p.records[p.rib - 1])
        throw DomainViolation("position exceeds the record on its rib");
}

double v_hat(const ValueParams& params, const EvalPoint& p) {
    require_closed_form(params.n);
    validate(params, p);
    const double c = params.cost;
    const double half = 0.5 / c;
    switch (params.n) {
        case 0: {
            const double s = p.records[0];
            const double hinge = positive_part(p.x - s + half);
            return c * hinge * hinge + s;
        }
        case 1: {
            const double s = p.records[0];
            if (s <= half) return c * p.x * p.x + half;
            const double hinge = positive_part(p.x - s + half);
            return c * hinge * hinge + s;
        }
        default: {
            const double own = p.records[p.rib - 1];
            const double other = p.records[2 - p.rib];
            const double total = own + other;
            const double seam = 1.0 / c;
            if (total < seam) return two_rib_inner(c, p.x, own, other);
            const double outer = two_rib_outer(c, p.x, own, other);
            assert(total != seam ||
                   std::abs(outer - two_rib_inner(c, p.x, own, other)) <=
                       1e-12 * (1.0 + std::abs(outer)));
            return outer;
        }
    }
}

Rescaled rescale(const ValueParams& params, const EvalPoint& p) {
    validate(params, p);
    Rescaled out{p, 1.0 / params.cost};
    out.point.x *= params.cost;
    for (double& s : out.point.records) s *= params.cost;
    return out;
}

double theta(int n) {
    require_closed_form(n);
    constexpr double kOriginValue[] = {0.25, 0.5, 0.75};
    return kOriginValue[n];
}

double spider_constant(int n) { return 2.0 * std::sqrt(theta(n)); }

double optimal_cost(int n, double mean_time) {
    if (!(mean_time > 0.0)) throw InvalidArgument("mean stopping time must be positive");
    return std::sqrt(theta(n) / mean_time);
}

double penalized_bound(int n, double cost, double mean_time) {
    if (!(cost > 0.0)) throw InvalidArgument("time cost C must be positive");
    return theta(n) / cost + cost * mean_time;
}

bool in_stopping_set(const ValueParams& params, const EvalPoint& p) {
    require_closed_form(params.n);
    validate(params, p);
    const double c = params.cost;
    const double half = 0.5 / c;
    switch (params.n) {
        case 0:
            return leq(p.x, p.records[0] - half);
        case 1: {
            const double s = p.records[0];
            return leq(half, s) && leq(p.x, s - half);
        }
        default: {
            const double own = p.records[p.rib - 1];
            const double other = p.records[2 - p.rib];
            return leq(1.0 / c, own + other) && leq(half - other, p.x) && leq(p.x, own - half);
        }
    }
}

}  // namespace spider
