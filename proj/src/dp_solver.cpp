#include "spider/dp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "spider/errors.hpp"
#include "spider/parallel.hpp"

namespace spider {
namespace {

// Lengths are rounded up to the next lattice multiple.
std::int64_t lattice_count(double length, double h) {
    return static_cast<std::int64_t>(std::ceil(length / h - 1e-9));
}

void check_options(const DPOptions& o) {
    if (!(o.h > 0.0)) throw InvalidArgument("lattice step must be positive");
    if (!(o.s_max > 0.0)) throw InvalidArgument("S_max must be positive");
    if (!(o.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
    if (o.max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
}

// One rib class inside a record slice: `count` ribs sharing record k.
struct RibGroup {
    std::int64_t k = 0;
    int count = 0;
    std::int64_t rank = 0;   // rank of the other records (this rib removed)
    double up = 0.0;         // value after pushing the record to k + 1
    bool at_face = false;    // k == K: pushing leaves the grid
};

struct SliceStats {
    std::int64_t iterations = 0;
    double residual = 0.0;
    double decrease = 0.0;
};

// Obstacle problem on the star graph of one record slice. Unknowns are the
// origin and x = 1..k on every rib group; the obstacle is the record sum.
class SliceSolver {
public:
    SliceSolver(int n, double h, FaceCondition face, std::int64_t max_iters)
        : n_(n), h_(h), h2_(h * h), face_(face), max_iters_(max_iters) {}

    SliceStats solve(std::span<const RibGroup> groups, double stop) {
        groups_ = groups;
        stop_ = stop;
        offset_.assign(groups.size() + 1, 0);
        for (std::size_t g = 0; g < groups.size(); ++g)
            offset_[g + 1] = offset_[g] + static_cast<std::size_t>(groups[g].k);
        const std::size_t total = offset_.back();
        value_.assign(total, stop);
        previous_.resize(total);
        a_.resize(total);
        b_.resize(total);
        go_.assign(total, 0);
        origin_ = stop;
        go_origin_ = false;

        SliceStats stats;
        while (improve()) {
            if (++stats.iterations > max_iters_)
                throw NonConvergence("policy iteration did not settle within max_iters rounds");
            previous_ = value_;
            const double previous_origin = origin_;
            evaluate();
            stats.decrease = std::max(stats.decrease, previous_origin - origin_);
            for (std::size_t i = 0; i < total; ++i)
                stats.decrease = std::max(stats.decrease, previous_[i] - value_[i]);
        }
        stats.residual = residual();
        return stats;
    }

    double origin() const { return origin_; }
    double at(std::size_t g, std::int64_t x) const {
        return x == 0 ? origin_ : value_[offset_[g] + static_cast<std::size_t>(x - 1)];
    }

private:
    bool drift_tip(const RibGroup& g) const {
        return g.at_face && face_ == FaceCondition::kRecordDrift;
    }
    bool clamped_tip(const RibGroup& g) const {
        return g.at_face && face_ == FaceCondition::kStopClamp;
    }

    double entry_value(std::size_t g) const {
        return groups_[g].k == 0 ? groups_[g].up : value_[offset_[g]];
    }

    double origin_continuation() const {
        double sum = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g) sum += groups_[g].count * entry_value(g);
        return sum / n_ - h2_;
    }

    // Continuation value at x on group g under the current values.
    double continuation(std::size_t g, std::int64_t x) const {
        const RibGroup& grp = groups_[g];
        const double left = x == 1 ? origin_ : value_[offset_[g] + x - 2];
        double right;
        if (x < grp.k) {
            right = value_[offset_[g] + x];
        } else if (drift_tip(grp)) {
            right = value_[offset_[g] + x - 1] + h_;
        } else {
            right = grp.up;
        }
        return 0.5 * (left + right) - h2_;
    }

    // Howard improvement; returns true if the policy changed.
    bool improve() {
        const double eps = 1e-13 * (1.0 + std::abs(stop_));
        auto decide = [&](bool current, double q) {
            if (q > stop_ + eps) return true;
            if (q < stop_ - eps) return false;
            return current;
        };
        bool changed = false;
        const bool o = decide(go_origin_, origin_continuation());
        changed |= o != go_origin_;
        go_origin_ = o;
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const RibGroup& grp = groups_[g];
            for (std::int64_t x = 1; x <= grp.k; ++x) {
                const std::size_t i = offset_[g] + x - 1;
                bool go = decide(go_[i], continuation(g, x));
                if (x == grp.k && clamped_tip(grp)) go = false;
                changed |= go != static_cast<bool>(go_[i]);
                go_[i] = go;
            }
        }
        return changed;
    }

    // Exact values of the current policy: eliminate each rib from its tip
    // inward, V(x) = a_x + b_x V(x - 1), then close the origin equation.
    void evaluate() {
        double sum_a = 0.0;
        double sum_b = 0.0;
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const RibGroup& grp = groups_[g];
            if (grp.k == 0) {
                sum_a += grp.count * grp.up;
                continue;
            }
            for (std::int64_t x = grp.k; x >= 1; --x) {
                const std::size_t i = offset_[g] + x - 1;
                if (!go_[i]) {
                    a_[i] = stop_;
                    b_[i] = 0.0;
                } else if (x == grp.k) {
                    if (drift_tip(grp)) {
                        a_[i] = h_ - 2.0 * h2_;
                        b_[i] = 1.0;
                    } else {
                        a_[i] = 0.5 * grp.up - h2_;
                        b_[i] = 0.5;
                    }
                } else {
                    const double den = 1.0 - 0.5 * b_[i + 1];
                    a_[i] = (0.5 * a_[i + 1] - h2_) / den;
                    b_[i] = 0.5 / den;
                }
            }
            sum_a += grp.count * a_[offset_[g]];
            sum_b += grp.count * b_[offset_[g]];
        }
        if (go_origin_) {
            const double den = 1.0 - sum_b / n_;
            if (den < 1e-12) throw NonConvergence("continuation policy without exit in a record slice");
            origin_ = (sum_a / n_ - h2_) / den;
        } else {
            origin_ = stop_;
        }
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            double inner = origin_;
            for (std::int64_t x = 1; x <= groups_[g].k; ++x) {
                const std::size_t i = offset_[g] + x - 1;
                value_[i] = a_[i] + b_[i] * inner;
                inner = value_[i];
            }
        }
    }

    double residual() const {
        double worst = std::abs(origin_ - std::max(stop_, origin_continuation()));
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            const RibGroup& grp = groups_[g];
            for (std::int64_t x = 1; x <= grp.k; ++x) {
                const double v = value_[offset_[g] + x - 1];
                const double best = (x == grp.k && clamped_tip(grp))
                                        ? stop_
                                        : std::max(stop_, continuation(g, x));
                worst = std::max(worst, std::abs(v - best));
            }
        }
        return worst;
    }

    int n_;
    double h_;
    double h2_;
    FaceCondition face_;
    std::int64_t max_iters_;
    std::span<const RibGroup> groups_;
    double stop_ = 0.0;
    std::vector<std::size_t> offset_;
    std::vector<double> value_, previous_, a_, b_;
    std::vector<unsigned char> go_;
    double origin_ = 0.0;
    bool go_origin_ = false;
};

// All descending n-tuples in [0, K] with the given sum, flattened.
void enumerate_level(int n, std::int64_t K, std::int64_t sum, std::vector<std::int64_t>& out) {
    out.clear();
    std::vector<std::int64_t> parts(static_cast<std::size_t>(n));
    auto recurse = [&](auto&& self, int pos, std::int64_t remaining, std::int64_t cap) -> void {
        if (pos == n - 1) {
            if (remaining <= cap) {
                parts[pos] = remaining;
                out.insert(out.end(), parts.begin(), parts.end());
            }
            return;
        }
        const int rest = n - 1 - pos;
        const std::int64_t lo = (remaining + rest) / (rest + 1);  // ceil(remaining / (rest + 1))
        for (std::int64_t v = std::min(cap, remaining); v >= lo; --v) {
            parts[pos] = v;
            self(self, pos + 1, remaining - v, v);
        }
    };
    recurse(recurse, 0, sum, K);
}

}  // namespace

std::string to_string(FaceCondition face) {
    return face == FaceCondition::kRecordDrift ? "record-drift" : "stop-clamp";
}

FaceCondition parse_face_condition(const std::string& text) {
    if (text == "record-drift") return FaceCondition::kRecordDrift;
    if (text == "stop-clamp") return FaceCondition::kStopClamp;
    throw InvalidArgument("face condition must be record-drift or stop-clamp, got '" + text + "'");
}

std::int64_t DPGrid::rank(std::span<const std::int64_t> ascending) const {
    std::int64_t r = 0;
    for (std::size_t i = 0; i < ascending.size(); ++i)
        r += binom_[static_cast<std::size_t>(ascending[i]) + i][i + 1];
    return r;
}

std::size_t DPGrid::block(std::int64_t current, std::int64_t rank) const {
    return static_cast<std::size_t>(multisets_ * current * (current + 1) / 2 + rank * (current + 1));
}

double DPGrid::value(const EvalPoint& p) const {
    if (!has_surface()) throw InvalidArgument("grid was solved without keeping its value surface");
    auto snap = [&](double v) {
        const double ratio = v / h;
        const double rounded = std::round(ratio);
        if (std::abs(ratio - rounded) > 1e-7 * (1.0 + std::abs(ratio)))
            throw DomainViolation("point is not on the solver lattice");
        return static_cast<std::int64_t>(rounded);
    };
    if (n == 0) {
        validate(ValueParams{0, 1.0}, p);
        const std::int64_t k = snap(p.records[0]);
        const std::int64_t d = k - snap(p.x);
        if (k < 0 || k > size_ || d < 0 || d > depth_) throw DomainViolation("point outside the solver grid");
        return surface_[static_cast<std::size_t>(k * (depth_ + 1) + d)];
    }
    validate(ValueParams{n, 1.0}, p);
    std::vector<std::int64_t> others;
    for (int r = 1; r <= n; ++r) {
        const std::int64_t k = snap(p.records[r - 1]);
        if (k > size_) throw DomainViolation("record beyond S_max");
        if (r != p.rib) others.push_back(k);
    }
    std::sort(others.begin(), others.end());
    const std::int64_t current = snap(p.records[p.rib - 1]);
    const std::int64_t x = snap(p.x);
    return surface_[block(current, rank(others)) + static_cast<std::size_t>(x)];
}

void DPGrid::for_each_state(const std::function<void(const EvalPoint&, double)>& visit) const {
    if (!has_surface()) throw InvalidArgument("grid was solved without keeping its value surface");
    if (n == 0) {
        for (std::int64_t k = 0; k <= size_; ++k)
            for (std::int64_t d = 0; d <= depth_; ++d)
                visit(EvalPoint{static_cast<double>(k - d) * h, 1, {static_cast<double>(k) * h}},
                      surface_[static_cast<std::size_t>(k * (depth_ + 1) + d)]);
        return;
    }
    const int m = n - 1;
    std::vector<std::int64_t> others(static_cast<std::size_t>(m), 0);
    EvalPoint p;
    p.records.resize(static_cast<std::size_t>(n));
    // Ascending multisets of size m via odometer.
    while (true) {
        const std::int64_t r = rank(others);
        for (int i = 0; i < m; ++i) p.records[i + 1] = static_cast<double>(others[i]) * h;
        for (std::int64_t current = 0; current <= size_; ++current) {
            p.records[0] = static_cast<double>(current) * h;
            const std::size_t base = block(current, r);
            for (std::int64_t x = 0; x <= current; ++x) {
                p.x = static_cast<double>(x) * h;
                visit(p, surface_[base + static_cast<std::size_t>(x)]);
            }
        }
        int i = m - 1;
        while (i >= 0 && others[i] == size_) --i;
        if (i < 0) break;
        ++others[i];
        for (int j = i + 1; j < m; ++j) others[j] = others[i];
    }
}

DPGrid solve(int n, const DPOptions& options) {
    if (n < 1) throw InvalidArgument("solve needs n >= 1; use solve_line for n = 0");
    check_options(options);
    const std::int64_t K = lattice_count(options.s_max, options.h);
    if (K < 2) throw InvalidArgument("S_max must span at least two lattice steps");
    const int m = n - 1;
    const double h = options.h;

    DPGrid grid;
    grid.n = n;
    grid.h = h;
    grid.s_max = static_cast<double>(K) * h;
    grid.face = options.face;
    grid.size_ = K;
    grid.binom_.assign(static_cast<std::size_t>(K + m + 1), std::vector<std::int64_t>(m + 1, 0));
    for (std::size_t a = 0; a < grid.binom_.size(); ++a) {
        grid.binom_[a][0] = 1;
        for (int b = 1; b <= m && b <= static_cast<int>(a); ++b)
            grid.binom_[a][b] = grid.binom_[a - 1][b - 1] + (b <= static_cast<int>(a) - 1 ? grid.binom_[a - 1][b] : 0);
    }
    grid.multisets_ = grid.binom_[static_cast<std::size_t>(K + m)][m];
    const std::int64_t M = grid.multisets_;

    std::vector<double> at_record(static_cast<std::size_t>((K + 1) * M), 0.0);
    if (options.keep_surface)
        grid.surface_.assign(static_cast<std::size_t>(M * (K + 1) * (K + 2) / 2), 0.0);

    std::vector<std::int64_t> level;
    std::vector<SliceStats> stats;
    std::vector<std::int64_t> level_states;
    for (std::int64_t total = n * K; total >= 0; --total) {
        enumerate_level(n, K, total, level);
        const std::size_t count = level.size() / static_cast<std::size_t>(n);
        stats.assign(count, SliceStats{});
        level_states.assign(count, 0);
        parallel_for(count, options.threads, 64, [&](std::size_t begin, std::size_t end) {
            SliceSolver solver(n, h, options.face, options.max_iters);
            std::vector<RibGroup> groups;
            std::vector<std::int64_t> others;
            for (std::size_t s = begin; s < end; ++s) {
                const std::span<const std::int64_t> parts(&level[s * n], static_cast<std::size_t>(n));
                groups.clear();
                for (int j = 0; j < n; ++j) {
                    if (j > 0 && parts[j] == parts[j - 1]) {
                        ++groups.back().count;
                        continue;
                    }
                    others.clear();
                    for (int i = n - 1; i >= 0; --i)
                        if (i != j) others.push_back(parts[i]);
                    RibGroup g;
                    g.k = parts[j];
                    g.count = 1;
                    g.rank = grid.rank(others);
                    g.at_face = g.k == K;
                    if (!g.at_face) g.up = at_record[static_cast<std::size_t>((g.k + 1) * M + g.rank)];
                    groups.push_back(g);
                }
                const double stop = static_cast<double>(total) * h;
                stats[s] = solver.solve(groups, stop);
                std::int64_t states = 1;
                for (std::size_t g = 0; g < groups.size(); ++g) {
                    const RibGroup& grp = groups[g];
                    states += grp.count * grp.k;
                    at_record[static_cast<std::size_t>(grp.k * M + grp.rank)] = solver.at(g, grp.k);
                    if (options.keep_surface) {
                        const std::size_t base = grid.block(grp.k, grp.rank);
                        for (std::int64_t x = 0; x <= grp.k; ++x)
                            grid.surface_[base + static_cast<std::size_t>(x)] = solver.at(g, x);
                    }
                }
                level_states[s] = states;
                if (total == 0) grid.theta_estimate = solver.origin();
            }
        });
        for (std::size_t s = 0; s < count; ++s) {
            grid.iterations += stats[s].iterations;
            grid.max_slice_iterations = std::max(grid.max_slice_iterations, stats[s].iterations);
            grid.residual = std::max(grid.residual, stats[s].residual);
            grid.monotonicity_violation = std::max(grid.monotonicity_violation, stats[s].decrease);
            grid.states += level_states[s];
        }
        grid.slices += static_cast<std::int64_t>(count);
    }

    for (std::int64_t r = 0; r < M; ++r) {
        const double near = at_record[static_cast<std::size_t>(K * M + r)];
        const double inner = at_record[static_cast<std::size_t>((K - 2) * M + r)];
        grid.boundary_settlement = std::max(grid.boundary_settlement, std::abs(near - inner - 2.0 * h));
    }
    if (grid.residual > options.tol)
        throw NonConvergence("Bellman residual " + std::to_string(grid.residual) + " above tolerance");
    if (options.enforce_settlement && grid.boundary_settlement > options.tol)
        throw TruncationError("values within 2h of the S_max face have not settled (metric " +
                              std::to_string(grid.boundary_settlement) + ")");
    return grid;
}

DPGrid solve_line(const DPOptions& options) {
    check_options(options);
    const double h = options.h;
    const double h2 = h * h;
    const std::int64_t K = lattice_count(options.s_max, h);
    const std::int64_t D = lattice_count(options.x_depth, h);
    if (K < 2 || D < 2) throw InvalidArgument("S_max and x_depth must span at least two lattice steps");

    DPGrid grid;
    grid.n = 0;
    grid.h = h;
    grid.s_max = static_cast<double>(K) * h;
    grid.x_depth = static_cast<double>(D) * h;
    grid.face = options.face;
    grid.size_ = K;
    grid.depth_ = D;
    std::vector<double> surface(static_cast<std::size_t>((K + 1) * (D + 1)));

    // Slice k holds drawdowns d = 0..D below the record s = k h. d = 0 pushes
    // the record; d = D is clamped to stopping.
    const auto idx = [&](std::int64_t k, std::int64_t d) { return static_cast<std::size_t>(k * (D + 1) + d); };
    std::vector<double> a(D + 1), b(D + 1), v(D + 1), prev(D + 1);
    std::vector<unsigned char> go(D + 1);
    for (std::int64_t k = K; k >= 0; --k) {
        const double stop = static_cast<double>(k) * h;
        const bool face = k == K;
        const bool drift = face && options.face == FaceCondition::kRecordDrift;
        const double up = face ? 0.0 : surface[idx(k + 1, 0)];
        std::fill(v.begin(), v.end(), stop);
        std::fill(go.begin(), go.end(), 0);
        auto continuation = [&](std::int64_t d) {
            if (d == 0) return 0.5 * ((drift ? v[0] + h : up) + v[1]) - h2;
            return 0.5 * (v[d - 1] + v[d + 1]) - h2;
        };
        auto allowed = [&](std::int64_t d) { return d < D && !(d == 0 && face && !drift); };
        std::int64_t rounds = 0;
        const double eps = 1e-13 * (1.0 + stop);
        while (true) {
            bool changed = false;
            for (std::int64_t d = 0; d <= D; ++d) {
                bool g = go[d];
                if (!allowed(d)) {
                    g = false;
                } else {
                    const double q = continuation(d);
                    if (q > stop + eps) g = true;
                    else if (q < stop - eps) g = false;
                }
                changed |= g != static_cast<bool>(go[d]);
                go[d] = g;
            }
            if (!changed) break;
            if (++rounds > options.max_iters)
                throw NonConvergence("policy iteration did not settle within max_iters rounds");
            prev = v;
            // v[d] = a_d + b_d v[d - 1] from the deep end up to d = 1.
            for (std::int64_t d = D; d >= 1; --d) {
                if (!go[d]) {
                    a[d] = stop;
                    b[d] = 0.0;
                } else {
                    const double den = 1.0 - 0.5 * b[d + 1];
                    a[d] = (0.5 * a[d + 1] - h2) / den;
                    b[d] = 0.5 / den;
                }
            }
            if (!go[0]) {
                v[0] = stop;
            } else if (drift) {
                const double den = 0.5 - 0.5 * b[1];
                if (den < 1e-12) throw NonConvergence("continuation policy without exit on the line");
                v[0] = (0.5 * h + 0.5 * a[1] - h2) / den;
            } else {
                v[0] = (0.5 * up + 0.5 * a[1] - h2) / (1.0 - 0.5 * b[1]);
            }
            for (std::int64_t d = 1; d <= D; ++d) v[d] = a[d] + b[d] * v[d - 1];
            for (std::int64_t d = 0; d <= D; ++d)
                grid.monotonicity_violation = std::max(grid.monotonicity_violation, prev[d] - v[d]);
        }
        double worst = 0.0;
        for (std::int64_t d = 0; d <= D; ++d) {
            const double best = allowed(d) ? std::max(stop, continuation(d)) : stop;
            worst = std::max(worst, std::abs(v[d] - best));
        }
        grid.residual = std::max(grid.residual, worst);
        grid.iterations += rounds;
        grid.max_slice_iterations = std::max(grid.max_slice_iterations, rounds);
        for (std::int64_t d = 0; d <= D; ++d) surface[idx(k, d)] = v[d];
    }
    grid.slices = K + 1;
    grid.states = (K + 1) * (D + 1);
    grid.theta_estimate = surface[idx(0, 0)];
    grid.boundary_settlement = std::abs(surface[idx(K, 0)] - surface[idx(K - 2, 0)] - 2.0 * h);
    if (options.keep_surface) grid.surface_ = std::move(surface);
    if (grid.residual > options.tol)
        throw NonConvergence("Bellman residual " + std::to_string(grid.residual) + " above tolerance");
    if (options.enforce_settlement && grid.boundary_settlement > options.tol)
        throw TruncationError("values within 2h of the S_max face have not settled (metric " +
                              std::to_string(grid.boundary_settlement) + ")");
    return grid;
}

DPGrid solve_any(int n, const DPOptions& options) {
    return n == 0 ? solve_line(options) : solve(n, options);
}

ConvergenceStudy convergence_study(int n, const std::vector<double>& h_list, const DPOptions& base) {
    if (h_list.size() < 3) throw InvalidArgument("a convergence study needs at least three step sizes");
    const double ratio = h_list[0] / h_list[1];
    if (!(ratio > 1.0)) throw InvalidArgument("step sizes must decrease");
    for (std::size_t i = 1; i + 1 < h_list.size(); ++i)
        if (std::abs(h_list[i] / h_list[i + 1] - ratio) > 1e-9 * ratio)
            throw InvalidArgument("step sizes must share one refinement ratio");

    ConvergenceStudy study;
    study.n = n;
    study.refinement = ratio;
    for (double h : h_list) {
        DPOptions opts = base;
        opts.h = h;
        opts.keep_surface = false;
        const DPGrid grid = solve_any(n, opts);
        study.rows.push_back({h, grid.theta_estimate, grid.residual, grid.boundary_settlement, grid.states});
    }
    const std::size_t last = study.rows.size() - 1;
    study.monotone = true;
    double sign = 0.0;
    for (std::size_t i = 1; i <= last; ++i) {
        const double diff = study.rows[i].theta - study.rows[i - 1].theta;
        if (diff == 0.0 || (sign != 0.0 && (diff > 0.0) != (sign > 0.0))) study.monotone = false;
        sign = diff;
    }
    const double d1 = study.rows[last - 1].theta - study.rows[last - 2].theta;
    const double d2 = study.rows[last].theta - study.rows[last - 1].theta;
    study.error_ratio = d2 != 0.0 ? d1 / d2 : std::numeric_limits<double>::infinity();
    if (study.monotone) {
        const double extrapolated = study.rows[last].theta + d2 / (ratio - 1.0);
        study.extrapolated = extrapolated;
        study.error_bar = std::abs(study.rows[last].theta - extrapolated);
        if (n == 3) study.deviation_from_one = extrapolated - 1.0;
    }
    return study;
}

}  // namespace spider
