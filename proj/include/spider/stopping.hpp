#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "spider/state.hpp"
#include "spider/value_function.hpp"

namespace spider {

/// Optimal rule: stop on first entry into {v_hat == sum of records}.
struct FirstEntry {
    ValueParams params;
};

/// Stop once the distance below the current rib's record reaches `depth`.
/// On the line this is the drawdown s - x; on the spider it is s_r - x.
struct Drawdown {
    double depth = 1.0;
};

struct FixedTime {
    double time = 1.0;
};

/// Stop once the total covered distance s_1 + ... + s_n reaches `level`.
struct SumThreshold {
    double level = 1.0;
};

using StoppingRule = std::variant<FirstEntry, Drawdown, FixedTime, SumThreshold>;

/// Throws InvalidArgument, DimensionMismatch or UnsupportedN when `rule`
/// cannot be evaluated on states with rib count n.
void validate_rule(const StoppingRule& rule, int n);

bool should_stop(const StoppingRule& rule, const SpiderState& state);
bool should_stop(const StoppingRule& rule, const LineState& state);

/// theta_n / C: the mean of S(tau*) - C tau* under the optimal rule from the origin.
double expected_identity_check(const FirstEntry& rule);

/// Parses `first-entry:C=1`, `drawdown:a=1`, `fixed-time:t=1`, `sum-threshold:b=2`.
/// `n` fills in the rib count of a first-entry rule.
StoppingRule parse_rule(std::string_view text, int n);
std::string format_rule(const StoppingRule& rule);

/// A stopping rule compiled to integer thresholds on the h-lattice.
///
/// Agrees with should_stop() on every lattice state; used inside the
/// simulation loops where the real-valued predicate would dominate the cost.
class LatticeRule {
public:
    LatticeRule(const StoppingRule& rule, int n, double h);

    bool stop(const SpiderState& s) const;
    bool stop(const LineState& s) const;

private:
    enum class Kind { kFirstEntry, kDrawdown, kFixedTime, kSumThreshold };
    Kind kind_;
    int n_;
    std::int64_t depth_ = 0;  // half-width 1/(2C) or drawdown depth, lattice units
    std::int64_t total_ = 0;  // 1/C or sum threshold, lattice units
    std::int64_t steps_ = 0;
};

}  // namespace spider
