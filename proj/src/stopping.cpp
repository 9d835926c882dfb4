#include "spider/stopping.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spider/errors.hpp"

namespace spider {
namespace {

constexpr double kBoundarySlack = 1e-12;

bool reached(double value, double threshold) {
    return value >= threshold - kBoundarySlack * (1.0 + std::abs(threshold));
}

// Smallest lattice count k with k * unit >= value, up to the same slack.
std::int64_t lattice_ceil(double value, double unit) {
    const double ratio = value / unit;
    return static_cast<std::int64_t>(std::ceil(ratio - 1e-9 * (1.0 + std::abs(ratio))));
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double parse_number(std::string_view text) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw InvalidArgument("malformed number '" + std::string(text) + "' in rule");
    return value;
}

}  // namespace

void validate_rule(const StoppingRule& rule, int n) {
    std::visit(overloaded{
                   [&](const FirstEntry& r) {
                       if (r.params.n != n)
                           throw DimensionMismatch("first-entry rule built for n = " +
                                                   std::to_string(r.params.n) +
                                                   ", applied with n = " + std::to_string(n));
                       if (n > 2) throw UnsupportedN(n);
                       if (!(r.params.cost > 0.0))
                           throw InvalidArgument("first-entry cost must be positive");
                   },
                   [](const Drawdown& r) {
                       if (!(r.depth > 0.0)) throw InvalidArgument("drawdown depth must be positive");
                   },
                   [](const FixedTime& r) {
                       if (!(r.time >= 0.0)) throw InvalidArgument("fixed time must be nonnegative");
                   },
                   [](const SumThreshold& r) {
                       if (!(r.level > 0.0))
                           throw InvalidArgument("sum threshold must be positive");
                   },
               },
               rule);
}

bool should_stop(const StoppingRule& rule, const SpiderState& state) {
    validate_rule(rule, state.ribs());
    return std::visit(
        overloaded{
            [&](const FirstEntry& r) { return in_stopping_set(r.params, state.eval_point()); },
            [&](const Drawdown& r) { return reached(state.record(state.rib) - state.x(), r.depth); },
            [&](const FixedTime& r) { return reached(state.elapsed(), r.time); },
            [&](const SumThreshold& r) { return reached(state.record_sum(), r.level); },
        },
        rule);
}

bool should_stop(const StoppingRule& rule, const LineState& state) {
    validate_rule(rule, 0);
    return std::visit(
        overloaded{
            [&](const FirstEntry& r) { return in_stopping_set(r.params, state.eval_point()); },
            [&](const Drawdown& r) { return reached(state.record() - state.x(), r.depth); },
            [&](const FixedTime& r) { return reached(state.elapsed(), r.time); },
            [&](const SumThreshold& r) { return reached(state.record(), r.level); },
        },
        rule);
}

double expected_identity_check(const FirstEntry& rule) {
    return theta(rule.params.n) / rule.params.cost;
}

StoppingRule parse_rule(std::string_view text, int n) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos)
        throw InvalidArgument("rule '" + std::string(text) + "' lacks ':<param>=<value>'");
    const std::string_view kind = text.substr(0, colon);
    const std::string_view assignment = text.substr(colon + 1);
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw InvalidArgument("rule parameter must be written <name>=<value>");
    const std::string_view key = assignment.substr(0, eq);
    const double value = parse_number(assignment.substr(eq + 1));

    auto expect_key = [&](std::string_view wanted) {
        if (key != wanted)
            throw InvalidArgument("rule '" + std::string(kind) + "' takes parameter '" +
                                  std::string(wanted) + "', got '" + std::string(key) + "'");
    };
    StoppingRule rule;
    if (kind == "first-entry") {
        expect_key("C");
        rule = FirstEntry{ValueParams{n, value}};
    } else if (kind == "drawdown") {
        expect_key("a");
        rule = Drawdown{value};
    } else if (kind == "fixed-time") {
        expect_key("t");
        rule = FixedTime{value};
    } else if (kind == "sum-threshold") {
        expect_key("b");
        rule = SumThreshold{value};
    } else {
        throw InvalidArgument("unknown rule '" + std::string(kind) + "'");
    }
    validate_rule(rule, n);
    return rule;
}

std::string format_rule(const StoppingRule& rule) {
    std::ostringstream out;
    out.precision(17);
    std::visit(overloaded{
                   [&](const FirstEntry& r) { out << "first-entry:C=" << r.params.cost; },
                   [&](const Drawdown& r) { out << "drawdown:a=" << r.depth; },
                   [&](const FixedTime& r) { out << "fixed-time:t=" << r.time; },
                   [&](const SumThreshold& r) { out << "sum-threshold:b=" << r.level; },
               },
               rule);
    return out.str();
}

LatticeRule::LatticeRule(const StoppingRule& rule, int n, double h) : n_(n) {
    validate_rule(rule, n);
    if (!(h > 0.0)) throw InvalidArgument("lattice step must be positive");
    std::visit(overloaded{
                   [&](const FirstEntry& r) {
                       kind_ = Kind::kFirstEntry;
                       depth_ = lattice_ceil(0.5 / r.params.cost, h);
                       total_ = lattice_ceil(1.0 / r.params.cost, h);
                   },
                   [&](const Drawdown& r) {
                       kind_ = Kind::kDrawdown;
                       depth_ = lattice_ceil(r.depth, h);
                   },
                   [&](const FixedTime& r) {
                       kind_ = Kind::kFixedTime;
                       steps_ = lattice_ceil(r.time, h * h);
                   },
                   [&](const SumThreshold& r) {
                       kind_ = Kind::kSumThreshold;
                       total_ = lattice_ceil(r.level, h);
                   },
               },
               rule);
}

bool LatticeRule::stop(const SpiderState& s) const {
    switch (kind_) {
        case Kind::kFixedTime:
            return s.steps >= steps_;
        case Kind::kDrawdown:
            return s.records[s.rib - 1] - s.position >= depth_;
        case Kind::kSumThreshold:
            return std::accumulate(s.records.begin(), s.records.end(), std::int64_t{0}) >= total_;
        case Kind::kFirstEntry:
            break;
    }
    const std::int64_t own = s.records[s.rib - 1];
    if (n_ == 1) return own >= depth_ && own - s.position >= depth_;
    const std::int64_t other = s.records[2 - s.rib];
    return own + other >= total_ && s.position + other >= depth_ && own - s.position >= depth_;
}

bool LatticeRule::stop(const LineState& s) const {
    switch (kind_) {
        case Kind::kFixedTime:
            return s.steps >= steps_;
        case Kind::kSumThreshold:
            return s.maximum >= total_;
        case Kind::kDrawdown:
        case Kind::kFirstEntry:
            break;
    }
    return s.maximum - s.position >= depth_;
}

}  // namespace spider
