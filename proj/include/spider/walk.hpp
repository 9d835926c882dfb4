#pragma once

#include <cassert>
#include <cstdint>
#include <variant>
#include <vector>

#include "spider/rng.hpp"
#include "spider/state.hpp"
#include "spider/stopping.hpp"

namespace spider {

/// One lattice step of the spider walk, in place. At the origin a fresh rib is
/// drawn uniformly and the walk moves to distance h on it; elsewhere it moves
/// +-h with probability 1/2. The record of the current rib follows the position.
inline void advance(SpiderState& s, PhiloxStream& rng) {
    if (s.position == 0) {
        const auto n = static_cast<std::uint32_t>(s.records.size());
        s.rib = n == 1 ? 1 : 1 + static_cast<int>(rng.uniform_index(n));
        s.position = 1;
    } else {
        s.position += rng.next_bit() ? 1 : -1;
    }
    std::int64_t& record = s.records[s.rib - 1];
    if (s.position > record) record = s.position;
    assert(s.position >= 0 && s.position <= record);
    ++s.steps;
}

inline void advance(LineState& s, PhiloxStream& rng) {
    s.position += rng.next_bit() ? 1 : -1;
    if (s.position > s.maximum) s.maximum = s.position;
    ++s.steps;
}

SpiderState step(const SpiderState& state, const WalkConfig& config, PhiloxStream& rng);
LineState step_line(const LineState& state, const WalkConfig& config, PhiloxStream& rng);

/// One sample of (tau, S_1(tau), ..., S_n(tau)).
struct PathOutcome {
    double tau = 0.0;
    std::vector<double> s_final;
    bool censored = false;
};

using WalkState = std::variant<SpiderState, LineState>;

/// Runs the walk from `initial` until `rule` fires (checked at time 0 and after
/// every step) or max_steps is reached, in which case the outcome is censored.
PathOutcome simulate_path(const WalkState& initial, const StoppingRule& rule,
                          const WalkConfig& config, PhiloxStream& rng);

/// Lattice-level run used by the estimators: mutates `state` to the stopped state.
/// Returns false when the path was censored.
template <class State>
bool run_until(State& state, const LatticeRule& rule, std::int64_t max_steps, PhiloxStream& rng) {
    while (!rule.stop(state)) {
        if (state.steps >= max_steps) return false;
        advance(state, rng);
    }
    return true;
}

}  // namespace spider
