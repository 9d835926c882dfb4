#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "spider/errors.hpp"
#include "spider/value_function.hpp"

namespace spider {
namespace {

double v(int n, double c, double x, int r, std::vector<double> s) {
    return v_hat(ValueParams{n, c}, EvalPoint{x, r, std::move(s)});
}

// Random valid point with records in [0, span / C].
EvalPoint random_point(int n, double c, std::mt19937_64& gen, double span = 2.0) {
    std::uniform_real_distribution<double> u(0.0, span / c);
    EvalPoint p;
    if (n == 0) {
        const double s = u(gen);
        p.records = {s};
        p.x = s - u(gen);
        return p;
    }
    for (int i = 0; i < n; ++i) p.records.push_back(u(gen));
    p.rib = 1 + static_cast<int>(gen() % static_cast<unsigned>(n));
    p.x = std::uniform_real_distribution<double>(0.0, p.records[p.rib - 1])(gen);
    return p;
}

TEST(VHat, OriginValues) {
    EXPECT_DOUBLE_EQ(v(0, 1.0, 0.0, 1, {0.0}), 0.25);
    EXPECT_DOUBLE_EQ(v(1, 1.0, 0.0, 1, {0.0}), 0.5);
    EXPECT_DOUBLE_EQ(v(2, 1.0, 0.0, 1, {0.0, 0.0}), 0.75);
}

TEST(VHat, WorkedExamples) {
    EXPECT_DOUBLE_EQ(v(0, 1.0, 0.0, 1, {5.0}), 5.0);
    EXPECT_NEAR(v(2, 1.0, 0.0, 1, {0.2, 0.2}), 0.79, 1e-15);
    EXPECT_DOUBLE_EQ(v(2, 1.0, 0.5, 1, {1.0, 1.0}), 2.0);
    EXPECT_NEAR(v(1, 1.0, 0.3, 1, {0.4}), 0.09 + 0.5, 1e-15);
    EXPECT_NEAR(v(1, 1.0, 0.6, 1, {0.8}), 0.09 + 0.8, 1e-15);
}

TEST(VHat, Errors) {
    EXPECT_THROW(v(3, 1.0, 0.0, 1, {0, 0, 0}), UnsupportedN);
    EXPECT_THROW(v(1, 1.0, 0.5, 1, {0.4}), DomainViolation);
    EXPECT_THROW(v(1, 1.0, -0.1, 1, {0.4}), DomainViolation);
    EXPECT_THROW(v(0, 1.0, 0.5, 1, {0.4}), DomainViolation);
    EXPECT_THROW(v(2, 1.0, 0.0, 1, {0.4}), DimensionMismatch);
    EXPECT_THROW(v(2, 1.0, 0.0, 3, {0.4, 0.1}), DimensionMismatch);
    EXPECT_THROW(v(1, 0.0, 0.0, 1, {0.4}), InvalidArgument);
    EXPECT_NO_THROW(v(0, 1.0, -3.0, 1, {0.4}));
}

TEST(VHat, ConstantsAndOptimalCost) {
    EXPECT_DOUBLE_EQ(theta(0), 0.25);
    EXPECT_DOUBLE_EQ(theta(1), 0.5);
    EXPECT_DOUBLE_EQ(theta(2), 0.75);
    EXPECT_DOUBLE_EQ(spider_constant(0), 1.0);
    EXPECT_DOUBLE_EQ(spider_constant(1), std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(spider_constant(2), std::sqrt(3.0));
    EXPECT_THROW(theta(3), UnsupportedN);
    EXPECT_THROW(spider_constant(3), UnsupportedN);

    EXPECT_DOUBLE_EQ(optimal_cost(0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(penalized_bound(0, 0.5, 1.0), 1.0);
    EXPECT_DOUBLE_EQ(optimal_cost(2, 1.0), std::sqrt(0.75));
    EXPECT_NEAR(penalized_bound(2, std::sqrt(0.75), 1.0), std::sqrt(3.0), 1e-15);
    EXPECT_DOUBLE_EQ(optimal_cost(1, 4.0), std::sqrt(1.0 / 8.0));
    EXPECT_NEAR(penalized_bound(1, std::sqrt(1.0 / 8.0), 4.0), 2.0 * std::sqrt(2.0), 1e-15);
    EXPECT_THROW(optimal_cost(1, 0.0), InvalidArgument);
}

TEST(Rescale, Examples) {
    const Rescaled r = rescale(ValueParams{0, 2.0}, EvalPoint{0.1, 1, {0.3}});
    EXPECT_DOUBLE_EQ(r.point.x, 0.2);
    EXPECT_DOUBLE_EQ(r.point.records[0], 0.6);
    EXPECT_DOUBLE_EQ(r.scale, 0.5);
    const EvalPoint p{0.1, 2, {0.3, 0.4}};
    const Rescaled id = rescale(ValueParams{2, 1.0}, p);
    EXPECT_EQ(id.point.x, p.x);
    EXPECT_EQ(id.point.rib, p.rib);
    EXPECT_EQ(id.point.records, p.records);
    EXPECT_EQ(id.scale, 1.0);
}

TEST(Rescale, ScalingIdentityOnRandomPoints) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> cost(0.1, 10.0);
    for (int n = 0; n <= 2; ++n) {
        for (int i = 0; i < 1000; ++i) {
            const ValueParams params{n, cost(gen)};
            const EvalPoint p = random_point(n, params.cost, gen);
            const Rescaled r = rescale(params, p);
            const double lhs = v_hat(params, p);
            const double rhs = r.scale * v_hat(ValueParams{n, 1.0}, r.point);
            ASSERT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(lhs))) << "n=" << n;
        }
    }
}

TEST(VHat, DominatesRecordSum) {
    std::mt19937_64 gen(2);
    for (int n = 0; n <= 2; ++n)
        for (double c : {0.5, 1.0, 2.0})
            for (int i = 0; i < 10'000; ++i) {
                const EvalPoint p = random_point(n, c, gen);
                ASSERT_GE(v_hat(ValueParams{n, c}, p), record_sum(p) - 1e-15 * (1.0 + record_sum(p)));
            }
}

TEST(InStoppingSet, Examples) {
    EXPECT_TRUE(in_stopping_set(ValueParams{0, 1.0}, EvalPoint{0.0, 1, {0.6}}));
    EXPECT_FALSE(in_stopping_set(ValueParams{1, 1.0}, EvalPoint{0.0, 1, {0.4}}));
    EXPECT_TRUE(in_stopping_set(ValueParams{2, 1.0}, EvalPoint{0.2, 1, {0.8, 0.4}}));
    EXPECT_FALSE(in_stopping_set(ValueParams{2, 1.0}, EvalPoint{0.0, 1, {0.8, 0.4}}));
    EXPECT_THROW(in_stopping_set(ValueParams{3, 1.0}, EvalPoint{0.0, 1, {0.0, 0.0, 0.0}}), UnsupportedN);
}

// Membership decided by inequalities agrees with the value comparison,
// including points placed exactly on the free boundary.
TEST(InStoppingSet, ConsistentWithValue) {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n <= 2; ++n) {
        for (double c : {0.5, 1.0, 2.0}) {
            const ValueParams params{n, c};
            const double half = 0.5 / c;
            for (int i = 0; i < 20'000; ++i) {
                EvalPoint p = random_point(n, c, gen);
                if (i % 4 == 1) {
                    // Snap onto a boundary of the rib's own hinge.
                    const double edge = p.records[p.rib - 1] - half;
                    if (n == 0 || edge >= 0.0) p.x = edge;
                } else if (i % 4 == 2 && n == 2) {
                    const double edge = half - p.records[2 - p.rib];
                    if (edge >= 0.0 && edge <= p.records[p.rib - 1]) p.x = edge;
                } else if (i % 4 == 3 && n >= 1) {
                    // Sum seam s_1 + s_2 = 1/C (n = 2) or s = 1/(2C) (n = 1).
                    if (n == 1) {
                        p.records[0] = half;
                    } else {
                        p.records[0] = u(gen) / c;
                        p.records[1] = 1.0 / c - p.records[0];
                    }
                    p.x = std::min(p.x, p.records[p.rib - 1]);
                }
                const bool member = in_stopping_set(params, p);
                const bool equal = std::abs(v_hat(params, p) - record_sum(p)) <= 1e-12;
                ASSERT_EQ(member, equal) << "n=" << n << " c=" << c << " x=" << p.x;
            }
        }
    }
}

TEST(VHat, TwoRibSeamContinuity) {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double c : {0.5, 1.0, 2.0}) {
        for (int i = 0; i < 1000; ++i) {
            const double s1 = u(gen) / c;
            const double s2 = 1.0 / c - s1;
            const double x = u(gen) * s1;
            const double at = v(2, c, x, 1, {s1, s2});
            // Step just inside the inner branch and just inside the outer one.
            const double eps = 1e-9 / c;
            const double inner = v(2, c, x, 1, {s1, s2 - eps});
            const double outer = v(2, c, x, 1, {s1, s2 + eps});
            ASSERT_NEAR(inner, at, 1e-12 + 4.0 * eps);
            ASSERT_NEAR(outer, at, 1e-12 + 4.0 * eps);
        }
    }
}

TEST(VHat, NondecreasingInEachRecord) {
    std::mt19937_64 gen(5);
    const double step = 1e-6;
    for (int n = 0; n <= 2; ++n) {
        for (int i = 0; i < 5000; ++i) {
            const EvalPoint p = random_point(n, 1.0, gen);
            const double base = v_hat(ValueParams{n, 1.0}, p);
            for (std::size_t k = 0; k < p.records.size(); ++k) {
                EvalPoint q = p;
                q.records[k] += step;
                ASSERT_GE(v_hat(ValueParams{n, 1.0}, q), base - 1e-13);
            }
        }
    }
}

TEST(VHat, RibSymmetry) {
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int i = 0; i < 10'000; ++i) {
        const double a = u(gen);
        const double b = u(gen);
        const double x = std::uniform_real_distribution<double>(0.0, a)(gen);
        ASSERT_EQ(v(2, 1.3, x, 1, {a, b}), v(2, 1.3, x, 2, {b, a}));
    }
}

}  // namespace
}  // namespace spider
