#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>

#include <json.hpp>

#include "narrownet/errors.hpp"
#include "narrownet/primitives.hpp"
#include "narrownet/verification.hpp"

using namespace narrownet;

namespace {

NetworkStats fake(std::size_t depth, std::size_t width, std::uint64_t weights) {
    NetworkStats s;
    s.depth = depth;
    s.width = width;
    s.weight_count = weights;
    return s;
}

ReluNetwork zero_net(std::size_t d) {
    return ReluNetwork::affine(SparseMatrix(1, d), {0.0});
}

// copy of net with one first-layer weight shifted by delta
ReluNetwork perturb_first_weight(const ReluNetwork& net, double delta) {
    auto layers = net.layers();
    const auto& w = layers.front().weights;
    std::vector<Triplet> tr;
    bool done = false;
    for (std::size_t c = 0; c < w.cols(); ++c) {
        auto rows = w.col_rows(c);
        auto vals = w.col_values(c);
        for (std::size_t k = 0; k < rows.size(); ++k) {
            double v = vals[k];
            if (!done) {
                v += delta;
                done = true;
            }
            tr.push_back({rows[k], static_cast<std::uint32_t>(c), v});
        }
    }
    layers.front().weights = SparseMatrix::from_triplets(w.rows(), w.cols(), std::move(tr));
    return ReluNetwork(net.input_dim(), std::move(layers));
}

double quarter_sum(std::span<const double> x) { return (x[0] + x[1]) / 4.0; }

}  // namespace

TEST(Parallel, CoversEveryIndexOnce) {
    setenv("NARROWNET_THREADS", "3", 1);
    std::vector<std::atomic<int>> hits(10007);
    parallel_for(hits.size(), 100, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) hits[i]++;
    });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
    EXPECT_EQ(worker_count(), 3u);
    EXPECT_THROW(parallel_for(1000, 10,
                              [](std::size_t b, std::size_t) {
                                  if (b == 500) throw InputError("boom");
                              }),
                 InputError);
    unsetenv("NARROWNET_THREADS");
    EXPECT_GE(worker_count(), 1u);
}

TEST(SupError, ExactPsi) {
    auto net = build_psi();
    auto r = sup_error(net, PointFn([](std::span<const double> x) { return reference::psi(x[0]); }), 1, 4096, 1000, 1);
    EXPECT_LE(r.grid_max, 1e-12);
    EXPECT_LE(r.random_max, 1e-12);
    EXPECT_EQ(r.grid_points, 4097u);
    EXPECT_EQ(r.random_points, 1000u);
}

TEST(SupError, ConstantGap) {
    for (std::size_t d = 1; d <= 4; ++d) {
        auto r = sup_error(zero_net(d), PointFn([](std::span<const double>) { return 1.0; }), d, 8, 50, 2);
        EXPECT_EQ(std::max(r.grid_max, r.random_max), 1.0);
        EXPECT_EQ(r.grid_points, d <= 3 ? static_cast<std::size_t>(std::pow(9, d)) : 0u);
    }
}

TEST(SupError, NanCountsAsInfinite) {
    auto r = sup_error(zero_net(1), PointFn([](std::span<const double>) { return std::nan(""); }), 1, 4, 0, 1);
    EXPECT_TRUE(std::isinf(r.grid_max));
}

TEST(SupError, RejectsBadInput) {
    EXPECT_THROW(sup_error(zero_net(2), quarter_sum, 2, 1, 0, 1), InputError);
    EXPECT_THROW(sup_error(zero_net(2), quarter_sum, 3, 4, 0, 1), InputError);
    EXPECT_THROW(sup_error(to_shape(build_psi()), quarter_sum, 1, 4, 0, 1), InputError);
}

TEST(SupError, NarrowBuildOnDefaultGrid) {
    auto b = build_approximator(make_target("prod_pair", 2, 1), 0.4);
    auto f = make_target("prod_pair", 2, 1);
    auto r = sup_error(b.network, f.eval, 2, default_resolution(2), 2000, 7);
    EXPECT_LE(r.grid_max, 0.4);
    EXPECT_LE(r.random_max, 0.4);
}

TEST(SupError, MonotoneRefinement) {
    auto f = make_target("sin_scaled", 1, 2);
    auto b = build_approximator(f, 0.3);
    double prev = 0.0;
    for (int r = 4; r <= 1024; r *= 2) {
        double g = sup_error(b.network, f.eval, 1, r, 0, 1).grid_max;
        EXPECT_GE(g, prev) << r;
        prev = g;
    }
}

TEST(Bounds, SlopeFitRecoversPowerLaw) {
    std::vector<double> x{1, 2, 4, 8, 16}, y;
    for (double v : x) y.push_back(5.0 * std::pow(v, 1.7));
    EXPECT_NEAR(fit_loglog_slope(x, y), 1.7, 1e-12);
    EXPECT_THROW(fit_loglog_slope(std::vector<double>{1.0}, std::vector<double>{1.0}), InputError);
    EXPECT_THROW(fit_loglog_slope(std::vector<double>{1.0, 1.0}, std::vector<double>{1.0, 2.0}), InputError);
}

TEST(Bounds, ConstantSeriesPasses) {
    auto checks = check_bounds({{0.4, fake(5, 10, 100)}, {0.2, fake(5, 10, 100)}, {0.1, fake(5, 10, 100)}}, 2, 1);
    ASSERT_EQ(checks.size(), 3u);
    for (const auto& c : checks) {
        EXPECT_TRUE(c.pass) << c.name;
        EXPECT_EQ(c.measured, 0.0) << c.name;
    }
}

TEST(Bounds, SteepSeriesFails) {
    // width x8 and depth +10 per halving
    auto checks = check_bounds({{0.4, fake(5, 10, 100)}, {0.2, fake(15, 80, 800)}, {0.1, fake(25, 640, 6400)}}, 2, 1);
    EXPECT_NEAR(checks[0].measured, 3.0, 1e-12);
    EXPECT_FALSE(checks[0].pass);
    EXPECT_NEAR(checks[1].measured, 3.0, 1e-12);
    EXPECT_FALSE(checks[1].pass);
    EXPECT_NEAR(checks[2].measured, 10.0, 1e-12);
    EXPECT_FALSE(checks[2].pass);
}

TEST(Bounds, RejectsBadSeries) {
    EXPECT_THROW(check_bounds({{0.4, fake(1, 1, 1)}, {0.2, fake(1, 1, 1)}}, 1, 1), InputError);
    EXPECT_THROW(check_bounds({{0.4, fake(1, 1, 1)}, {0.2, fake(1, 1, 1)}, {0.05, fake(1, 1, 1)}}, 1, 1),
                 InputError);
    EXPECT_THROW(check_bounds({{0.4, fake(1, 1, 1)}, {0.4, fake(1, 1, 1)}, {0.4, fake(1, 1, 1)}}, 1, 1),
                 InputError);
}

TEST(Bounds, MeasuredSeries) {
    auto series = [](std::size_t d, int beta, std::vector<double> eps) {
        std::vector<std::pair<double, NetworkStats>> s;
        BuildOptions opts;
        opts.mode = BuildMode::ShapeOnly;
        for (double e : eps) s.push_back({e, stats(build_approximator(make_target("poly_mix", d, beta), e, opts).network)});
        return s;
    };
    auto a = check_bounds(series(2, 1, {0.4, 0.2, 0.1}), 2, 1);
    EXPECT_LE(a[0].measured, 1.15);
    for (const auto& c : a) EXPECT_TRUE(c.pass) << c.name << " " << c.measured;
    auto b = check_bounds(series(1, 2, {0.3, 0.15, 0.075}), 1, 2);
    EXPECT_LE(b[0].measured, 0.4);
    for (const auto& c : b) EXPECT_TRUE(c.pass) << c.name << " " << c.measured;
}

TEST(Oracle, FreshBuildAndPerturbation) {
    auto f = make_target("poly_mix", 2, 1);
    auto b = build_approximator(f, 0.4);
    CoefficientTable table(f, b.plan.N);
    PointFn ref = [&](std::span<const double> x) { return eval_ftilde_reference(table, b.plan, x); };
    EXPECT_LE(oracle_compare(b.network, ref, 1000, 3), kOracleTolerance);
    auto bad = perturb_first_weight(b.network, 1e-3);
    EXPECT_GT(oracle_compare(bad, ref, 1000, 3), 1e-6);
}

TEST(Oracle, IdentityIsExact) {
    auto id = ReluNetwork::identity(1);
    EXPECT_EQ(oracle_compare(id, PointFn([](std::span<const double> x) { return x[0]; }), 1000, 5), 0.0);
}

TEST(Report, DeterministicAcrossThreadCounts) {
    auto f = make_target("mean", 2, 1);
    auto b = build_approximator(f, 0.4);
    setenv("NARROWNET_THREADS", "1", 1);
    auto r1 = report_json(verify_network(b.network, f.eval, "mean", 2, 1, 0.4, 64, 500, 11));
    setenv("NARROWNET_THREADS", "4", 1);
    auto r2 = report_json(verify_network(b.network, f.eval, "mean", 2, 1, 0.4, 64, 500, 11));
    unsetenv("NARROWNET_THREADS");
    EXPECT_EQ(r1, r2);
    auto r3 = report_json(verify_network(b.network, f.eval, "mean", 2, 1, 0.4, 64, 500, 12));
    EXPECT_NE(r1, r3);
}

TEST(Report, GatesAndFormats) {
    auto f = make_target("poly_mix", 2, 1);
    auto b = build_approximator(f, 0.4);
    CoefficientTable table(f, b.plan.N);
    PointFn ref = [&](std::span<const double> x) { return eval_ftilde_reference(table, b.plan, x); };
    auto r = verify_network(b.network, f.eval, "poly_mix", 2, 1, 0.4, 32, 200, 1, &ref,
                            single_build_checks(b.network, b.plan));
    EXPECT_TRUE(r.pass());
    ASSERT_TRUE(r.oracle_max_dev.has_value());
    auto j = nlohmann::json::parse(report_json(r));
    for (const char* key : {"sup_error_grid", "sup_error_random", "n_samples", "stats", "bound_checks",
                            "oracle_max_dev", "seed", "pass"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j["bound_checks"].size(), r.bound_checks.size());
    auto csv = bound_checks_csv(r.bound_checks);
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.bound_checks.size() + 1);

    auto tight = verify_network(b.network, f.eval, "poly_mix", 2, 1, 1e-6, 32, 0, 1);
    EXPECT_FALSE(tight.pass());
}
