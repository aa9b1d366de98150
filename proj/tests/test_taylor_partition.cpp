#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "narrownet/errors.hpp"
#include "narrownet/taylor_partition.hpp"

using namespace narrownet;

namespace {

std::vector<double> random_point(std::mt19937_64& rng, std::size_t d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    return x;
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

TargetFunction half_square() {
    return finite_difference_target("half_square", 1, 3,
                                    [](std::span<const double> x) { return x[0] * x[0] / 2.0; });
}

}  // namespace

TEST(Plan, GridSizeExamples) {
    EXPECT_EQ(choose_N(0.5, 1, 1), 8);
    EXPECT_EQ(choose_N(0.5, 2, 1), 2);
}

TEST(Plan, GridSizeMeetsTaylorBudget) {
    for (int d = 1; d <= 4; ++d) {
        for (int beta = 1; beta <= 3; ++beta) {
            for (double eps : {0.5, 0.1, 0.02}) {
                int N = choose_N(eps, beta, d);
                double fact = std::tgamma(beta + 1.0);
                double bound = std::pow(2.0, d) * std::pow(d, beta) / fact * std::pow(N, -beta);
                EXPECT_LE(bound, eps / 2 * (1 + 1e-12));
                if (N > 1) {
                    double prev = std::pow(2.0, d) * std::pow(d, beta) / fact * std::pow(N - 1, -beta);
                    EXPECT_GT(prev, eps / 2);
                }
            }
        }
    }
}

TEST(Plan, InfeasibleGrid) {
    EXPECT_THROW(choose_N(1e-9, 1, 4), InfeasibleConstruction);
    EXPECT_THROW(choose_N(0.0, 1, 1), InputError);
    EXPECT_THROW(choose_N(1.0, 1, 1), InputError);
}

TEST(Plan, DeltaExamples) {
    EXPECT_DOUBLE_EQ(choose_delta(0.5, 1, 2), 1.0 / 96.0);
    for (int beta = 1; beta <= 3; ++beta) {
        for (int d = 1; d < 6; ++d) {
            EXPECT_GT(choose_delta(0.3, beta, d), choose_delta(0.3, beta, d + 1));
            double agg = (d + beta) * choose_delta(0.3, beta, d) * std::pow(2.0, d) * std::pow(d, beta);
            EXPECT_LE(agg, 0.3 / 2 * (1 + 1e-12));
        }
    }
}

TEST(Plan, ParityAndSmallGrids) {
    auto p = make_plan(0.5, 2, 1);
    EXPECT_EQ(p.parity_case, ParityCase::One);
    EXPECT_EQ(p.N_formula, 2);
    EXPECT_EQ(p.N, 4);
    EXPECT_EQ(p.A, 3);
    auto e = make_plan(0.5, 1, 2);
    EXPECT_EQ(e.parity_case, ParityCase::Even);
    EXPECT_EQ(e.N, e.N_formula);
    auto o = make_plan(0.5, 1, 3);
    EXPECT_EQ(o.parity_case, ParityCase::OddGt1);
    EXPECT_GE(o.N, 4);
    EXPECT_EQ(o.A, static_cast<int>(std::ceil(std::sqrt(2.0 * o.N + 1))));
    EXPECT_DOUBLE_EQ(o.Q, 4.0);
    auto forced = make_plan(0.5, 1, 2, 7);
    EXPECT_EQ(forced.N, 7);
}

TEST(MultiIndices, CountsAndOrders) {
    for (std::size_t d = 1; d <= 4; ++d) {
        for (int k = 0; k <= 3; ++k) {
            auto all = multi_indices(d, k);
            EXPECT_DOUBLE_EQ(static_cast<double>(all.size()), binomial(static_cast<int>(d) + k, k));
            for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LE(order(all[i - 1]), order(all[i]));
            for (const auto& a : all) EXPECT_LE(order(a), k);
        }
    }
    EXPECT_DOUBLE_EQ(multi_factorial({2, 3}), 12.0);
}

TEST(TaylorCoeffs, HalfSquare) {
    auto f = half_square();
    auto a = taylor_coeffs(f, {0}, 4);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_NEAR(a[0], 0.0, 1e-12);
    EXPECT_NEAR(a[1], 0.0, 1e-8);
    EXPECT_NEAR(a[2], 0.5, 1e-4);
}

TEST(TaylorCoeffs, ConstantAndProduct) {
    auto c = make_target("const:0.3", 2, 3);
    auto a = taylor_coeffs(c, {1, -2}, 4);
    EXPECT_EQ(a[0], 0.3);
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_EQ(a[i], 0.0);

    auto p = make_target("prod_pair", 2, 3);
    CoefficientTable t(p, 4);
    EXPECT_DOUBLE_EQ(t.at({0, 0}, t.alpha_index({1, 1})), 0.25);
    EXPECT_DOUBLE_EQ(t.at({4, -4}, t.alpha_index({0, 0})), -0.25);
    EXPECT_EQ(t.at({5, 0}, 0), 0.0);
}

TEST(TaylorCoeffs, SobolevViolation) {
    auto big = finite_difference_target("big", 1, 1, [](std::span<const double> x) { return 3.0 * x[0]; });
    EXPECT_THROW(taylor_coeffs(big, {4}, 4), SobolevViolation);
    auto fixed = rescale_into_unit_ball(big);
    EXPECT_NEAR(fixed.sobolev_scale, 3.0, 1e-6);
    EXPECT_NO_THROW(taylor_coeffs(fixed, {4}, 4));
}

TEST(TaylorCoeffs, AnalyticMatchesFiniteDifference) {
    for (const std::string name : {"sin_scaled", "gauss_bump", "poly_mix", "mean", "prod_pair"}) {
        auto f = make_target(name, 2, 3);
        auto g = finite_difference_target("fd", 2, 3, f.eval);
        std::mt19937_64 rng(5);
        for (int s = 0; s < 20; ++s) {
            auto x = random_point(rng, 2);
            for (const auto& a : multi_indices(2, 2)) {
                EXPECT_NEAR(f.deriv(a, x), g.deriv(a, x), 1e-5) << name;
            }
        }
    }
}

TEST(TaylorCoeffs, BuiltinsInsideUnitBall) {
    std::mt19937_64 rng(11);
    for (const auto& name : target_names()) {
        for (std::size_t d = 1; d <= 3; ++d) {
            if (name == "prod_pair" && d < 2) continue;
            auto f = make_target(name, d, 3);
            for (int s = 0; s < 200; ++s) {
                auto x = random_point(rng, d);
                for (const auto& a : multi_indices(d, 3)) {
                    EXPECT_LE(std::fabs(f.deriv(a, x)), 1.0 + 1e-9) << name << " d=" << d;
                }
            }
        }
    }
    EXPECT_THROW(make_target("nope", 2, 1), InputError);
    EXPECT_THROW(make_target("prod_pair", 1, 1), InputError);
}

TEST(Partition, BumpValues) {
    const int N = 5;
    EXPECT_EQ(eval_phi({2, -3}, N, std::vector<double>{0.4, -0.6}), 1.0);
    EXPECT_EQ(eval_phi({2}, N, std::vector<double>{0.4 + 2.0 / (3.0 * N)}), 0.0);
    EXPECT_EQ(grid_bump(0.4 - 0.7 / N, 2, N), 0.0);
}

TEST(Partition, UnityOnRandomPoints) {
    std::mt19937_64 rng(3);
    for (std::size_t d = 1; d <= 3; ++d) {
        const int N = 6;
        for (int s = 0; s < 10000; ++s) {
            auto x = random_point(rng, d);
            double sum = 0.0;
            std::vector<std::vector<int>> act(d);
            std::size_t cells = 1;
            for (std::size_t k = 0; k < d; ++k) {
                act[k] = active_indices(x[k], N);
                cells *= act[k].size();
                double one = 0.0;
                for (int i = -N; i <= N; ++i) one += grid_bump(x[k], i, N);
                EXPECT_NEAR(one, 1.0, 1e-10);
            }
            EXPECT_LE(cells, std::size_t{1} << d);
            GridIndex m(d);
            std::function<void(std::size_t)> rec = [&](std::size_t k) {
                if (k == d) {
                    sum += eval_phi(m, N, x);
                    return;
                }
                for (int i : act[k]) {
                    m[k] = i;
                    rec(k + 1);
                }
            };
            rec(0);
            EXPECT_NEAR(sum, 1.0, 1e-10);
        }
    }
}

TEST(Partition, ActiveIndicesComplete) {
    const int N = 7;
    for (int s = 0; s <= 5000; ++s) {
        double x = -1.0 + 2.0 * s / 5000.0;
        auto act = active_indices(x, N);
        for (int i = -N; i <= N; ++i) {
            bool on = grid_bump(x, i, N) != 0.0;
            EXPECT_EQ(on, std::find(act.begin(), act.end(), i) != act.end());
        }
    }
}

TEST(FirstStage, ConstantIsExact) {
    auto f = make_target("const:0.3", 2, 1);
    auto plan = make_plan(0.3, 1, 2);
    std::mt19937_64 rng(1);
    for (int s = 0; s < 1000; ++s) {
        auto x = random_point(rng, 2);
        EXPECT_NEAR(eval_f1(f, plan, x), 0.3, 1e-15);
    }
}

TEST(FirstStage, TaylorResidualWithinHalfEps) {
    auto sin_half = finite_difference_target("sin_half", 1, 2, [](std::span<const double> x) {
        return std::sin(x[0]) / 2.0;
    });
    sin_half.deriv = [](const MultiIndex& a, std::span<const double> x) {
        return a[0] == 0 ? std::sin(x[0]) / 2.0 : (a[0] == 1 ? std::cos(x[0]) / 2.0 : -std::sin(x[0]) / 2.0);
    };
    for (double eps : {0.5, 0.1, 0.02}) {
        auto plan = make_plan(eps, 2, 1);
        double worst = 0.0;
        for (int s = 0; s <= 10000; ++s) {
            double x = -1.0 + 2.0 * s / 10000.0;
            std::vector<double> p{x};
            worst = std::max(worst, std::fabs(eval_f1(sin_half, plan, p) - std::sin(x) / 2.0));
        }
        EXPECT_LE(worst, eps / 2) << eps;
    }
}

TEST(FirstStage, ResidualBoundMultiDim) {
    std::mt19937_64 rng(2);
    for (std::size_t d = 2; d <= 3; ++d) {
        for (int beta = 1; beta <= 2; ++beta) {
            auto f = make_target("sin_scaled", d, beta);
            auto plan = make_plan(0.25, beta, static_cast<int>(d));
            double bound = std::pow(2.0, d) * std::pow(d, beta) / std::tgamma(beta + 1.0) *
                           std::pow(plan.N, -beta);
            for (int s = 0; s < 500; ++s) {
                auto x = random_point(rng, d);
                EXPECT_LE(std::fabs(eval_f1(f, plan, x) - f.eval(x)), bound);
            }
        }
    }
}

TEST(SecondStage, ReferenceCloseToFirstStage) {
    std::mt19937_64 rng(4);
    struct Case { std::string name; std::size_t d; int beta; double eps; };
    for (const auto& c : std::vector<Case>{{"sin_scaled", 1, 2, 0.3},
                                           {"prod_pair", 2, 1, 0.4},
                                           {"poly_mix", 2, 2, 0.3},
                                           {"poly_mix", 3, 1, 0.5}}) {
        auto f = make_target(c.name, c.d, c.beta);
        auto plan = make_plan(c.eps, c.beta, static_cast<int>(c.d));
        CoefficientTable t(f, plan.N);
        double bound = std::pow(2.0, c.d) * std::pow(c.d, c.beta) * (c.d + c.beta) * plan.delta;
        for (int s = 0; s < 200; ++s) {
            auto x = random_point(rng, c.d);
            double r = eval_ftilde_reference(t, plan, x);
            EXPECT_LE(std::fabs(r - eval_f1(f, plan, x)), bound) << c.name << " d=" << c.d;
            EXPECT_LE(std::fabs(r - f.eval(x)), c.eps) << c.name << " d=" << c.d;
        }
    }
}
