#include "spider/walk.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "spider/errors.hpp"

namespace spider {
namespace {

std::int64_t snap(double value, double h, const char* what) {
    const double ratio = value / h;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * (1.0 + std::abs(ratio)))
        throw DomainViolation(std::string(what) + " is not a multiple of the lattice step");
    return static_cast<std::int64_t>(rounded);
}

void check_step(double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("lattice step h must be positive");
}

}  // namespace

void WalkConfig::validate() const {
    check_step(h);
    if (n < 0) throw InvalidArgument("rib count must be nonnegative");
    if (max_steps < 1) throw InvalidArgument("max_steps must be at least 1");
}

SpiderState SpiderState::origin(int n, double h) {
    check_step(h);
    if (n < 1) throw InvalidArgument("a spider needs at least one rib");
    SpiderState s;
    s.h = h;
    s.records.assign(static_cast<std::size_t>(n), 0);
    return s;
}

SpiderState SpiderState::from_point(const EvalPoint& p, int n, double h) {
    check_step(h);
    if (n < 1) throw InvalidArgument("a spider needs at least one rib");
    validate(ValueParams{n, 1.0}, p);
    SpiderState s;
    s.h = h;
    s.rib = p.rib;
    s.position = snap(p.x, h, "position");
    for (double r : p.records) s.records.push_back(snap(r, h, "record"));
    s.check_invariants();
    return s;
}

double SpiderState::record_sum() const {
    return static_cast<double>(std::accumulate(records.begin(), records.end(), std::int64_t{0})) * h;
}

EvalPoint SpiderState::eval_point() const {
    EvalPoint p;
    p.x = x();
    p.rib = rib;
    p.records.reserve(records.size());
    for (auto r : records) p.records.push_back(static_cast<double>(r) * h);
    return p;
}

void SpiderState::check_invariants() const {
    if (records.empty()) throw DimensionMismatch("spider state without ribs");
    if (rib < 1 || rib > ribs()) throw DimensionMismatch("rib index outside 1..n");
    for (auto r : records)
        if (r < 0) throw DomainViolation("negative record");
    if (position < 0 || position > records[rib - 1])
        throw DomainViolation("position outside [0, s_r]");
    if (steps < 0) throw DomainViolation("negative step count");
}

LineState LineState::origin(double h) {
    check_step(h);
    LineState s;
    s.h = h;
    return s;
}

LineState LineState::from_point(const EvalPoint& p, double h) {
    check_step(h);
    validate(ValueParams{0, 1.0}, p);
    LineState s;
    s.h = h;
    s.position = snap(p.x, h, "position");
    s.maximum = snap(p.records[0], h, "maximum");
    s.check_invariants();
    return s;
}

EvalPoint LineState::eval_point() const { return EvalPoint{x(), 1, {record()}}; }

void LineState::check_invariants() const {
    if (position > maximum) throw DomainViolation("line position above its running maximum");
    if (steps < 0) throw DomainViolation("negative step count");
}

SpiderState step(const SpiderState& state, const WalkConfig& config, PhiloxStream& rng) {
    config.validate();
    if (config.n != state.ribs())
        throw DimensionMismatch("walk configured for n = " + std::to_string(config.n) +
                                " but state has " + std::to_string(state.ribs()) + " ribs");
    if (config.h != state.h) throw InvalidArgument("state lattice step differs from configuration");
    SpiderState next = state;
    advance(next, rng);
    return next;
}

LineState step_line(const LineState& state, const WalkConfig& config, PhiloxStream& rng) {
    config.validate();
    if (config.n != 0) throw DimensionMismatch("line walk requires n = 0");
    if (config.h != state.h) throw InvalidArgument("state lattice step differs from configuration");
    LineState next = state;
    advance(next, rng);
    return next;
}

PathOutcome simulate_path(const WalkState& initial, const StoppingRule& rule,
                          const WalkConfig& config, PhiloxStream& rng) {
    config.validate();
    return std::visit(
        [&](auto state) {
            using State = decltype(state);
            if constexpr (std::is_same_v<State, SpiderState>) {
                if (config.n != state.ribs())
                    throw DimensionMismatch("initial state rib count differs from configuration");
            } else if (config.n != 0) {
                throw DimensionMismatch("line state requires n = 0");
            }
            if (config.h != state.h)
                throw InvalidArgument("state lattice step differs from configuration");
            state.check_invariants();
            const LatticeRule compiled(rule, config.n, config.h);
            const std::int64_t start = state.steps;
            const bool stopped = run_until(state, compiled, start + config.max_steps, rng);
            PathOutcome out;
            out.tau = state.elapsed();
            out.censored = !stopped;
            if constexpr (std::is_same_v<State, SpiderState>) {
                for (auto r : state.records) out.s_final.push_back(static_cast<double>(r) * config.h);
            } else {
                out.s_final.push_back(state.record());
            }
            return out;
        },
        initial);
}

}  // namespace spider
