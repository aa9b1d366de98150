#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "narrownet/composite_builder.hpp"
#include "narrownet/errors.hpp"

using namespace narrownet;

namespace {

std::vector<double> random_point(std::mt19937_64& rng, std::size_t d) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> x(d);
    for (auto& v : x) v = u(rng);
    return x;
}

CompositeVertex vtx(int id, std::vector<int> parents, const std::string& target, int beta = 1) {
    CompositeVertex v;
    v.id = id;
    v.parents = std::move(parents);
    v.target = target;
    v.f = make_target(target, v.parents.size(), beta);
    return v;
}

// 1,2,3 inputs; 4 <- (1,2); 5 <- (4,3); 6 <- (4,5)
CompositionGraph diamond() {
    CompositionGraph g;
    g.d = 3;
    g.d_star = 2;
    g.vertices = {vtx(4, {1, 2}, "prod_pair"), vtx(5, {4, 3}, "mean"), vtx(6, {4, 5}, "mean")};
    return g;
}

// brute-force path enumeration
double count_paths(const CompositionGraph& g, int from) {
    if (from == g.T()) return 1.0;
    double n = 0.0;
    for (const auto& v : g.vertices) {
        if (std::find(v.parents.begin(), v.parents.end(), from) != v.parents.end()) {
            n += count_paths(g, v.id);
        }
    }
    return n;
}

double grid_error(const ReluNetwork& net, const CompositionGraph& g, int r) {
    const std::size_t d = g.d;
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) total *= r + 1;
    std::vector<double> xs(total * d), out(total);
    for (std::size_t i = 0; i < total; ++i) {
        std::size_t id = i;
        for (std::size_t k = d; k-- > 0;) {
            xs[i * d + k] = -1.0 + 2.0 * static_cast<double>(id % (r + 1)) / r;
            id /= r + 1;
        }
    }
    net.eval_batch(xs, total, out);
    double worst = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        worst = std::max(worst, std::fabs(out[i] - eval_composite(g, std::span<const double>(&xs[i * d], d))));
    }
    return worst;
}

}  // namespace

TEST(Graph, StructureQueries) {
    auto g = diamond();
    EXPECT_NO_THROW(validate_graph(g));
    EXPECT_EQ(g.T(), 6);
    EXPECT_EQ(topological_order(g), (std::vector<int>{4, 5, 6}));
    auto lv = vertex_levels(g);
    EXPECT_EQ(lv.at(1), 0);
    EXPECT_EQ(lv.at(4), 1);
    EXPECT_EQ(lv.at(5), 2);
    EXPECT_EQ(lv.at(6), 3);
    auto pc = path_counts(g);
    for (int id = 1; id <= 6; ++id) EXPECT_EQ(pc.at(id), count_paths(g, id)) << id;
    EXPECT_EQ(pc.at(4), 2.0);
    EXPECT_EQ(pc.at(1), 2.0);
}

TEST(Graph, RejectsMalformed) {
    auto g = diamond();
    g.vertices[0].parents = {5, 2};
    EXPECT_THROW(validate_graph(g), InputError);  // cycle 4 -> 5 -> 4

    g = diamond();
    g.d_star = 1;
    EXPECT_THROW(validate_graph(g), InputError);

    g = diamond();
    g.vertices[1].parents = {4, 9};
    EXPECT_THROW(validate_graph(g), InputError);

    g = diamond();
    g.vertices[1].parents = {4, 4};
    EXPECT_THROW(validate_graph(g), InputError);

    g = diamond();
    g.vertices[2] = vtx(6, {4}, "coord_1");
    EXPECT_THROW(validate_graph(g), InputError);  // vertex 5 is dead

    g = diamond();
    g.vertices[0].f = make_target("coord_1", 1, 1);
    EXPECT_THROW(validate_graph(g), InputError);

    g = diamond();
    g.vertices[2].id = 3;
    EXPECT_THROW(validate_graph(g), InputError);
}

TEST(Graph, SobolevViolationNamesVertex) {
    auto g = diamond();
    g.vertices[1] = vtx(5, {4, 3}, "sum");
    try {
        validate_graph(g);
        FAIL() << "expected a violation";
    } catch (const SobolevViolation& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 5"), std::string::npos) << e.what();
    }
    EXPECT_NO_THROW(validate_graph(g, false));
}

TEST(Graph, JsonRoundTrip) {
    auto g = additive_pair_model(2);
    auto h = parse_graph_json(graph_to_json(g));
    EXPECT_EQ(h.d, 4u);
    EXPECT_EQ(h.d_star, 2u);
    EXPECT_EQ(h.beta, 2);
    ASSERT_EQ(h.vertices.size(), 3u);
    std::mt19937_64 rng(3);
    for (int s = 0; s < 50; ++s) {
        auto x = random_point(rng, 4);
        EXPECT_EQ(eval_composite(g, x), eval_composite(h, x));
    }
    EXPECT_THROW(parse_graph_json("{\"d\": 2,"), ParseError);
    EXPECT_THROW(parse_graph_json("{\"d\": 2, \"d_star\": 2}"), ParseError);
    EXPECT_THROW(parse_graph_json(R"({"d":2,"d_star":2,"vertices":[{"id":3,"parents":[1,2],"target":"nope"}]})"),
                 InputError);
    EXPECT_THROW(load_graph("/nonexistent/graph.json"), InputError);
}

TEST(Eval, InteractionModelIsDirectSum) {
    auto g = interaction_model(4, 2, 1, {"prod_pair", "const:0.05"});
    // 6 subsets, 5 running sums
    EXPECT_EQ(g.vertices.size(), 11u);
    EXPECT_EQ(g.T(), 4 + 11);
    std::mt19937_64 rng(5);
    for (int s = 0; s < 200; ++s) {
        auto x = random_point(rng, 4);
        double direct = 0.0;
        int j = 0;
        for (int a = 0; a < 4; ++a) {
            for (int b = a + 1; b < 4; ++b, ++j) direct += j % 2 == 0 ? x[a] * x[b] / 4.0 : 0.05;
        }
        EXPECT_NEAR(eval_composite(g, x), direct, 1e-14);
    }
}

TEST(Eval, DomainViolationNamesVertex) {
    auto g = interaction_model(3, 1, 1, {"const:0.6"});
    try {
        eval_composite(g, std::vector<double>{0.0, 0.0, 0.0});
        FAIL() << "expected a violation";
    } catch (const DomainViolation& e) {
        EXPECT_NE(std::string(e.what()).find("vertex 8"), std::string::npos) << e.what();
    }
    EXPECT_THROW(eval_composite(g, std::vector<double>{1.5, 0.0, 0.0}), DomainViolation);
    EXPECT_THROW(eval_composite(g, std::vector<double>{0.0, 0.0}), InputError);
}

TEST(Budget, PathWeightedShareOfEps) {
    auto g = diamond();
    const double eps = 0.3;
    auto b = allocate_budgets(g, eps);
    ASSERT_EQ(b.size(), 3u);
    double total = 0.0;
    for (const auto& v : b) {
        EXPECT_EQ(v.paths, count_paths(g, v.id));
        EXPECT_DOUBLE_EQ(v.eps, eps / (3.0 * v.paths));
        EXPECT_EQ(v.plan.d, static_cast<int>(g.vertex(v.id).parents.size()));
        total += v.paths * v.eps;
    }
    EXPECT_LE(total, eps * (1 + 1e-12));
    EXPECT_THROW(allocate_budgets(g, 1e-12), InfeasibleConstruction);
    EXPECT_THROW(allocate_budgets(g, 0.0), InputError);
}

TEST(Clamp, ExactValues) {
    auto c = build_clamp();
    EXPECT_EQ(stats(c).width, 2u);
    for (double v : {-3.0, -1.0, -0.25, 0.0, 0.7, 1.0, 2.5}) {
        EXPECT_DOUBLE_EQ(eval_scalar(c, v), std::clamp(v, -1.0, 1.0)) << v;
    }
}

TEST(Build, SingleVertexMatchesNarrowBuilder) {
    CompositionGraph g;
    g.d = 2;
    g.d_star = 2;
    g.vertices = {vtx(3, {1, 2}, "poly_mix", 2)};
    g.beta = 2;
    const double eps = 0.3;
    auto comp = build_composite(g, eps);
    ASSERT_EQ(comp.budgets.size(), 1u);
    EXPECT_DOUBLE_EQ(comp.budgets[0].eps, eps);
    BuildOptions opts;
    auto direct = build_approximator(make_target("poly_mix", 2, 2), eps, opts);
    std::mt19937_64 rng(9);
    for (int s = 0; s < 300; ++s) {
        auto x = random_point(rng, 2);
        double a = eval_scalar(comp.network, x), b = eval_scalar(direct.network, x);
        ASSERT_LE(std::fabs(b), 1.0);
        EXPECT_NEAR(a, b, 1e-9);
    }
}

TEST(Build, ChainOfCoordinates) {
    CompositionGraph g;
    g.d = 1;
    g.d_star = 1;
    g.vertices = {vtx(2, {1}, "coord_1"), vtx(3, {2}, "coord_1"), vtx(4, {3}, "coord_1")};
    const double eps = 0.3;
    auto b = build_composite(g, eps);
    EXPECT_LE(grid_error(b.network, g, 4096), eps);
    EXPECT_GE(stats(b.network).depth, 3u);
}

TEST(Build, AdditivePairModelWithinEps) {
    auto g = additive_pair_model(2);
    const double eps = 0.5;
    auto b = build_composite(g, eps);
    EXPECT_LE(grid_error(b.network, g, 10), eps);
    std::mt19937_64 rng(21);
    double worst = 0.0;
    for (int s = 0; s < 2000; ++s) {
        auto x = random_point(rng, 4);
        worst = std::max(worst, std::fabs(eval_scalar(b.network, x) - eval_composite(g, x)));
    }
    EXPECT_LE(worst, eps);
}

TEST(Build, DiamondWithinEps) {
    auto g = diamond();
    const double eps = 0.4;
    auto b = build_composite(g, eps);
    EXPECT_LE(grid_error(b.network, g, 16), eps);
}

TEST(Build, VertexOrderDoesNotMatter) {
    auto g = diamond();
    auto h = g;
    std::reverse(h.vertices.begin(), h.vertices.end());
    auto a = build_composite(g, 0.4);
    auto b = build_composite(h, 0.4);
    std::mt19937_64 rng(4);
    for (int s = 0; s < 200; ++s) {
        auto x = random_point(rng, 3);
        EXPECT_EQ(eval_scalar(a.network, x), eval_scalar(b.network, x));
    }
}

TEST(Build, ShapeMatchesFull) {
    auto g = additive_pair_model(2);
    auto full = build_composite(g, 0.5, BuildMode::Full);
    auto shape = build_composite(g, 0.5, BuildMode::ShapeOnly);
    auto a = stats(full.network), s = stats(shape.network);
    EXPECT_EQ(a.depth, s.depth);
    EXPECT_EQ(a.width, s.width);
    EXPECT_EQ(a.weight_count, s.weight_count);
    EXPECT_EQ(full.network.hidden_sizes(), shape.network.hidden_sizes());
}

TEST(Build, WidthFollowsLocalDimension) {
    // width ratio under halving eps tracks 2^{d_star/(2 beta)}, not 2^{d/(2 beta)}
    auto g = additive_pair_model(2);
    std::vector<double> w;
    for (double eps : {0.5, 0.25, 0.125}) {
        w.push_back(static_cast<double>(stats(build_composite(g, eps, BuildMode::ShapeOnly).network).width));
    }
    for (std::size_t i = 1; i < w.size(); ++i) {
        EXPECT_LE(w[i] / w[i - 1], std::sqrt(2.0) * 1.1);
        EXPECT_GT(w[i], w[i - 1]);
    }
}
