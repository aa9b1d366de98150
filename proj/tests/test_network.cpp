#include <gtest/gtest.h>

#include <random>

#include "narrownet/errors.hpp"
#include "narrownet/network.hpp"
#include "narrownet/primitives.hpp"

using namespace narrownet;

namespace {

ReluNetwork abs_pair_net() {
    // sigma(x) - sigma(-x)
    std::vector<LayerSpec> layers;
    layers.push_back({SparseMatrix::from_dense({{1.0}, {-1.0}}), {0.0, 0.0}, Activation::ReLU});
    layers.push_back({SparseMatrix::from_dense({{1.0, -1.0}}), {0.0}, Activation::Identity});
    return ReluNetwork(1, std::move(layers));
}

ReluNetwork random_net(std::mt19937_64& rng, std::size_t in, std::vector<std::size_t> hidden,
                       std::size_t out) {
    std::normal_distribution<double> nd(0.0, 0.7);
    std::vector<LayerSpec> layers;
    std::size_t prev = in;
    hidden.push_back(out);
    for (std::size_t l = 0; l < hidden.size(); ++l) {
        std::vector<std::vector<double>> w(hidden[l], std::vector<double>(prev));
        std::vector<double> b(hidden[l]);
        for (auto& row : w)
            for (auto& v : row) v = nd(rng);
        for (auto& v : b) v = nd(rng);
        layers.push_back({SparseMatrix::from_dense(w), b,
                          l + 1 == hidden.size() ? Activation::Identity : Activation::ReLU});
        prev = hidden[l];
    }
    return ReluNetwork(in, std::move(layers));
}

}  // namespace

TEST(NetworkEval, SingleIdentityLayer) {
    auto net = ReluNetwork::affine(SparseMatrix::from_dense({{1.0}}), {0.0});
    EXPECT_DOUBLE_EQ(eval_scalar(net, 0.7), 0.7);
}

TEST(NetworkEval, PsiAtZero) { EXPECT_DOUBLE_EQ(eval_scalar(build_psi(), 0.0), 1.0); }

TEST(NetworkEval, ReluPairRecoversInput) {
    EXPECT_DOUBLE_EQ(eval_scalar(abs_pair_net(), -3.2), -3.2);
}

TEST(NetworkEval, RejectsBadInput) {
    auto psi = build_psi();
    std::vector<double> two{1.0, 2.0};
    EXPECT_THROW(psi.eval(two), InputError);
    double nan = std::nan("");
    EXPECT_THROW(eval_scalar(psi, nan), InputError);
}

TEST(NetworkEval, BatchMatchesSinglePointBitwise) {
    std::mt19937_64 rng(3);
    auto net = random_net(rng, 3, {7, 5, 6}, 2);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> xs(3 * 40);
    for (auto& v : xs) v = u(rng);
    std::vector<double> out(2 * 40);
    net.eval_batch(xs, 40, out);
    for (std::size_t p = 0; p < 40; ++p) {
        auto y = net.eval(std::span<const double>(xs.data() + 3 * p, 3));
        EXPECT_EQ(y[0], out[2 * p]);
        EXPECT_EQ(y[1], out[2 * p + 1]);
    }
}

TEST(NetworkEval, MatchesDenseForwardPass) {
    std::mt19937_64 rng(5);
    auto net = random_net(rng, 2, {4, 3}, 1);
    // independent dense evaluation at a fixed point
    std::vector<double> x{0.3, -0.8};
    std::vector<double> v = x;
    for (const auto& L : net.layers()) {
        auto w = L.weights.to_dense();
        std::vector<double> z(L.out_dim());
        for (std::size_t i = 0; i < z.size(); ++i) {
            double s = L.biases[i];
            for (std::size_t j = 0; j < v.size(); ++j) s += w[i][j] * v[j];
            z[i] = L.activation == Activation::ReLU ? std::max(0.0, s) : s;
        }
        v = z;
    }
    EXPECT_NEAR(eval_scalar(net, x), v[0], 1e-14);
}

TEST(NetworkStats, SmallNetCount) {
    std::mt19937_64 rng(1);
    auto net = random_net(rng, 2, {3}, 1);
    auto s = stats(net);
    EXPECT_EQ(s.weight_count, 13u);
    EXPECT_EQ(s.depth, 1u);
    EXPECT_EQ(s.width, 3u);
}

TEST(NetworkStats, AffineMap) {
    auto net = ReluNetwork::affine(SparseMatrix::from_dense({{1.0, 2.0, 3.0}}), {0.5});
    auto s = stats(net);
    EXPECT_EQ(s.depth, 0u);
    EXPECT_EQ(s.weight_count, 4u);
}

TEST(NetworkStats, PsiNet) {
    auto s = stats(build_psi());
    EXPECT_EQ(s.depth, 2u);
    EXPECT_EQ(s.width, 2u);
    EXPECT_EQ(s.weight_count, 13u);
}

TEST(Combinators, SerialWithIdentity) {
    auto net = compose_serial(ReluNetwork::identity(1), build_psi());
    EXPECT_DOUBLE_EQ(eval_scalar(net, 1.5), 0.5);
}

TEST(Combinators, SerialAssociativityAndDepth) {
    std::mt19937_64 rng(11);
    auto A = random_net(rng, 2, {4}, 3);
    auto B = random_net(rng, 3, {5, 2}, 2);
    auto C = random_net(rng, 2, {3}, 1);
    auto left = compose_serial(compose_serial(A, B), C);
    auto right = compose_serial(A, compose_serial(B, C));
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x{u(rng), u(rng)};
        EXPECT_NEAR(eval_scalar(left, x), eval_scalar(right, x), 1e-12);
    }
    EXPECT_EQ(stats(compose_serial(A, B)).depth, stats(A).depth + stats(B).depth);
}

TEST(Combinators, StackOfPsiCopies) {
    auto psi = build_psi();
    auto net = stack_parallel(std::vector<ReluNetwork>{psi, psi, psi}, true);
    EXPECT_EQ(stats(net).width, 6u);
    for (int i = 0; i <= 49; ++i) {
        double x = -3.0 + 6.0 * i / 49.0;
        auto y = net.eval(std::span<const double>(&x, 1));
        ASSERT_EQ(y.size(), 3u);
        for (double v : y) EXPECT_DOUBLE_EQ(v, eval_scalar(psi, x));
    }
}

TEST(Combinators, StackSeparateInputs) {
    std::mt19937_64 rng(2);
    auto A = random_net(rng, 2, {3}, 1);
    auto B = random_net(rng, 3, {2}, 1);
    auto net = stack_parallel(std::vector<ReluNetwork>{A, B}, false);
    EXPECT_EQ(net.input_dim(), 5u);
    std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5};
    auto y = net.eval(x);
    EXPECT_DOUBLE_EQ(y[0], eval_scalar(A, std::vector<double>{0.1, 0.2}));
    EXPECT_DOUBLE_EQ(y[1], eval_scalar(B, std::vector<double>{0.3, 0.4, 0.5}));
    EXPECT_GE(stats(stack_parallel(std::vector<ReluNetwork>{A, A}, true)).weight_count,
              2 * stats(A).weight_count);
}

TEST(Combinators, StackUnequalDepthFails) {
    std::mt19937_64 rng(2);
    auto A = random_net(rng, 1, {3}, 1);
    auto B = random_net(rng, 1, {3, 3}, 1);
    EXPECT_THROW(stack_parallel(std::vector<ReluNetwork>{A, B}, true), ContractViolation);
}

TEST(Combinators, PadDepthExact) {
    auto psi = build_psi();
    auto padded = pad_depth(psi, 5);
    EXPECT_EQ(padded.depth(), 5u);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int k = 0; k < 1000; ++k) {
        double x = u(rng);
        EXPECT_NEAR(eval_scalar(padded, x), eval_scalar(psi, x), 1e-12);
    }
    EXPECT_LE(stats(padded).width, 2 * std::max<std::size_t>(stats(psi).width, 1));
    auto same = pad_depth(psi, 2);
    EXPECT_EQ(serialize(same), serialize(psi));
    EXPECT_THROW(pad_depth(psi, 1), ContractViolation);
}

TEST(Combinators, PadDepthPropertyRandomNets) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 10; ++t) {
        auto net = random_net(rng, 2, {3, 4}, 2);
        auto padded = pad_depth(net, 2 + 1 + t % 3);
        EXPECT_LE(stats(padded).width, 2 * std::max(stats(net).width, net.output_dim()));
        for (int k = 0; k < 100; ++k) {
            std::vector<double> x{u(rng), u(rng)};
            auto a = net.eval(x);
            auto b = padded.eval(x);
            EXPECT_NEAR(a[0], b[0], 1e-10);
            EXPECT_NEAR(a[1], b[1], 1e-10);
        }
    }
}

TEST(Combinators, AffineCombine) {
    auto psi = build_psi();
    auto net = affine_combine({psi}, {2.0}, 1.0);
    EXPECT_DOUBLE_EQ(eval_scalar(net, 0.0), 3.0);
    auto zero = affine_combine({psi, psi}, {1.0, -1.0}, 0.0);
    for (int i = 0; i < 100; ++i) EXPECT_NEAR(eval_scalar(zero, -3.0 + 0.06 * i), 0.0, 1e-12);
    EXPECT_THROW(affine_combine({psi}, {1.0, 2.0}, 0.0), ContractViolation);
}

TEST(Combinators, AffineCombineLinearity) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<ReluNetwork> nets{random_net(rng, 2, {3}, 1), random_net(rng, 2, {4, 2}, 1),
                                  build_psi_of_affine(2, 1, 2.0, 0.5)};
    std::vector<double> c{0.5, -1.5, 2.0};
    auto net = affine_combine(nets, c, 0.25);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> x{u(rng), u(rng)};
        double want = 0.25;
        for (std::size_t j = 0; j < nets.size(); ++j) want += c[j] * eval_scalar(nets[j], x);
        EXPECT_NEAR(eval_scalar(net, x), want, 1e-10);
    }
}

TEST(Combinators, CombinedWidthIsSumOfWidths) {
    // d=2, beta=1, N=2: one psi-product subnet per grid point
    MultGadgetConfig cfg = MultGadgetConfig::make(3.0, 0.01);
    std::vector<ReluNetwork> parts;
    std::vector<double> coeffs;
    for (int m1 = -2; m1 <= 2; ++m1) {
        for (int m2 = -2; m2 <= 2; ++m2) {
            parts.push_back(build_product_chain(
                {build_psi_of_affine(2, 0, 6.0, -3.0 * m1), build_psi_of_affine(2, 1, 6.0, -3.0 * m2)},
                cfg));
            coeffs.push_back(0.01 * (m1 + m2));
        }
    }
    std::size_t sum = 0;
    for (const auto& p : parts) sum += stats(p).width;
    auto net = affine_combine(parts, coeffs, 0.0);
    EXPECT_EQ(stats(net).width, sum);
}

TEST(FullyConnected, Report) {
    auto r = assert_fully_connected(build_psi());
    EXPECT_TRUE(r.fully_connected);
    EXPECT_TRUE(r.dense_bound);
    EXPECT_EQ(r.weight_count, stats(build_psi()).weight_count);
}

TEST(FullyConnected, StatsIdentityOnRandomNets) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::size_t> hidden;
        for (int l = 0; l < 1 + t % 4; ++l) hidden.push_back(1 + rng() % 6);
        auto net = random_net(rng, 1 + rng() % 3, hidden, 1);
        auto r = assert_fully_connected(net);
        EXPECT_TRUE(r.weight_identity);
        EXPECT_TRUE(r.dense_bound);
    }
}

TEST(Serialization, RoundTripBitExact) {
    std::mt19937_64 rng(12);
    auto net = random_net(rng, 2, {5, 3}, 1);
    auto back = deserialize(serialize(net));
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 100; ++k) {
        std::vector<double> x{u(rng), u(rng)};
        EXPECT_EQ(eval_scalar(net, x), eval_scalar(back, x));
    }
    auto psi = build_psi();
    auto psi2 = deserialize(serialize(psi));
    for (int i = 0; i <= 100; ++i) {
        double x = -3.0 + 0.06 * i;
        EXPECT_EQ(eval_scalar(psi, x), eval_scalar(psi2, x));
    }
}

TEST(Serialization, Errors) {
    auto text = serialize(build_psi());
    EXPECT_THROW(deserialize(text.substr(0, text.size() / 2)), ParseError);
    auto bad = text;
    bad.replace(bad.find("\"version\":1"), 11, "\"version\":7");
    EXPECT_THROW(deserialize(bad), UnsupportedVersionError);
    auto broken = text;
    broken.replace(broken.find("\"relu\""), 6, "\"tanh\"");
    try {
        deserialize(broken);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
    }
}

TEST(ShapeOnly, MatchesFullStats) {
    auto psi = build_psi();
    auto s = to_shape(psi);
    auto full = pad_depth(stack_parallel(std::vector<ReluNetwork>{psi, psi}, true), 4);
    auto shp = pad_depth(stack_parallel_counted({{&s, 2}}, true), 4);
    EXPECT_EQ(stats(full).weight_count, stats(shp).weight_count);
    EXPECT_EQ(full.hidden_sizes(), shp.hidden_sizes());
    double x0 = 0.0;
    EXPECT_THROW(shp.eval(std::span<const double>(&x0, 1)), ContractViolation);
}
