#include "narrownet/primitives.hpp"

#include <cmath>

#include <fmt/format.h>

#include "narrownet/errors.hpp"

namespace narrownet {

namespace {

struct Branch {
    std::vector<std::pair<std::size_t, double>> terms;  // affine input, no bias
};

struct SquareUnit {
    std::vector<Branch> branches;
    std::vector<double> out_coeff;  // one per branch
};

// Parallel sawtooth squaring units, each evaluating sum_b out_coeff[b] * F(u_b)
// where F is the m-stage interpolant of t -> t^2 applied to t = |u_b|.
// Units of one layer are laid out type-major, branch-minor, so a unit whose
// branches agree cancels group by group in the read-out sum.
ReluNetwork build_square_units(std::size_t input_dim, const std::vector<SquareUnit>& units,
                               const std::vector<std::size_t>& passes, int m) {
    const std::size_t G = units.size();
    const std::size_t P = passes.size();
    auto widths = [&](int layer) {
        std::vector<std::size_t> off(G + 1, 0);
        std::size_t per = layer == 0 ? 2 : (layer == 1 ? 3 : 4);
        for (std::size_t g = 0; g < G; ++g) off[g + 1] = off[g] + per * units[g].branches.size();
        return off;
    };
    std::vector<LayerSpec> layers;

    // layer 0: sigma(+u), sigma(-u)
    {
        auto off = widths(0);
        std::size_t rows = off[G] + 2 * P;
        std::vector<Triplet> tr;
        for (std::size_t g = 0; g < G; ++g) {
            std::size_t nb = units[g].branches.size();
            for (std::size_t b = 0; b < nb; ++b) {
                for (auto [col, w] : units[g].branches[b].terms) {
                    auto c = static_cast<std::uint32_t>(col);
                    tr.push_back({static_cast<std::uint32_t>(off[g] + b), c, w});
                    tr.push_back({static_cast<std::uint32_t>(off[g] + nb + b), c, -w});
                }
            }
        }
        for (std::size_t p = 0; p < P; ++p) {
            auto r = static_cast<std::uint32_t>(off[G] + 2 * p);
            auto c = static_cast<std::uint32_t>(passes[p]);
            tr.push_back({r, c, 1.0});
            tr.push_back({r + 1, c, -1.0});
        }
        layers.push_back(LayerSpec{SparseMatrix::from_triplets(rows, input_dim, std::move(tr)),
                                   std::vector<double>(rows, 0.0), Activation::ReLU});
    }

    auto carry_passes = [&](std::vector<Triplet>& tr, std::size_t prev_base, std::size_t base) {
        for (std::size_t p = 0; p < P; ++p) {
            auto r = static_cast<std::uint32_t>(base + 2 * p);
            auto c = static_cast<std::uint32_t>(prev_base + 2 * p);
            tr.push_back({r, c, 1.0});
            tr.push_back({r, c + 1, -1.0});
            tr.push_back({r + 1, c, -1.0});
            tr.push_back({r + 1, c + 1, 1.0});
        }
    };

    for (int s = 1; s <= m; ++s) {
        auto prev = widths(s - 1);
        auto off = widths(s);
        std::size_t rows = off[G] + 2 * P;
        std::vector<Triplet> tr;
        std::vector<double> bias(rows, 0.0);
        const double q = std::ldexp(1.0, -2 * (s - 1));
        for (std::size_t g = 0; g < G; ++g) {
            std::size_t nb = units[g].branches.size();
            for (std::size_t b = 0; b < nb; ++b) {
                for (std::size_t k = 0; k < 3; ++k) {
                    auto r = static_cast<std::uint32_t>(off[g] + k * nb + b);
                    bias[r] = -0.5 * static_cast<double>(k);
                    if (s == 1) {
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + b), 1.0});
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + nb + b), 1.0});
                    } else {
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + b), 2.0});
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + nb + b), -4.0});
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + 2 * nb + b), 2.0});
                    }
                }
                if (s >= 2) {
                    auto r = static_cast<std::uint32_t>(off[g] + 3 * nb + b);
                    bool prev_has_f = s - 1 >= 2;
                    double t0 = -2.0 * q + (prev_has_f ? 0.0 : 1.0);
                    tr.push_back({r, static_cast<std::uint32_t>(prev[g] + b), t0});
                    tr.push_back({r, static_cast<std::uint32_t>(prev[g] + nb + b), 4.0 * q});
                    tr.push_back({r, static_cast<std::uint32_t>(prev[g] + 2 * nb + b), -2.0 * q});
                    if (prev_has_f) {
                        tr.push_back({r, static_cast<std::uint32_t>(prev[g] + 3 * nb + b), 1.0});
                    }
                }
            }
        }
        carry_passes(tr, prev[G], off[G]);
        layers.push_back(LayerSpec{SparseMatrix::from_triplets(rows, prev[G] + 2 * P, std::move(tr)),
                                   std::move(bias), Activation::ReLU});
    }

    // read-out
    {
        auto prev = widths(m);
        std::vector<Triplet> tr;
        const double q = std::ldexp(1.0, -2 * m);
        for (std::size_t g = 0; g < G; ++g) {
            std::size_t nb = units[g].branches.size();
            std::vector<double> c;
            if (m == 0) {
                c = {1.0, 1.0};
            } else if (m == 1) {
                c = {1.0 - 2.0 * q, 4.0 * q, -2.0 * q};
            } else {
                c = {-2.0 * q, 4.0 * q, -2.0 * q, 1.0};
            }
            for (std::size_t k = 0; k < c.size(); ++k) {
                for (std::size_t b = 0; b < nb; ++b) {
                    tr.push_back({static_cast<std::uint32_t>(g),
                                  static_cast<std::uint32_t>(prev[g] + k * nb + b),
                                  units[g].out_coeff[b] * c[k]});
                }
            }
        }
        for (std::size_t p = 0; p < P; ++p) {
            auto r = static_cast<std::uint32_t>(G + p);
            auto c = static_cast<std::uint32_t>(prev[G] + 2 * p);
            tr.push_back({r, c, 1.0});
            tr.push_back({r, c + 1, -1.0});
        }
        layers.push_back(LayerSpec{SparseMatrix::from_triplets(G + P, prev[G] + 2 * P, std::move(tr)),
                                   std::vector<double>(G + P, 0.0), Activation::Identity});
    }
    return ReluNetwork(input_dim, std::move(layers));
}

}  // namespace

MultGadgetConfig MultGadgetConfig::make(double Q, double eps) {
    MultGadgetConfig c;
    c.Q = Q;
    c.eps = eps;
    c.delta_sq = 8.0 * eps / (3.0 * Q * Q);
    c.validate();
    return c;
}

void MultGadgetConfig::validate() const {
    if (!(Q >= 1.0) || !std::isfinite(Q)) throw InputError(fmt::format("gadget Q={} must be >= 1", Q));
    if (!(eps > 0.0 && eps < 1.0)) throw InputError(fmt::format("gadget eps={} outside (0,1)", eps));
    if (!(delta_sq > 0.0)) throw InputError("gadget squaring tolerance must be positive");
}

int MultGadgetConfig::stages() const { return squaring_stages(branch_tolerance()); }

int squaring_stages(double tol) {
    if (!(tol > 0.0)) throw InputError("squaring tolerance must be positive");
    int m = 0;
    while (std::ldexp(1.0, -2 * m - 2) >= tol) {
        ++m;
        if (m > 500) throw InfeasibleConstruction("squaring tolerance too small");
    }
    return m;
}

ReluNetwork build_psi() { return build_psi_of_affine(1, 0, 1.0, 0.0); }

ReluNetwork build_psi_of_affine(std::size_t input_dim, std::size_t coord, double a, double b) {
    if (coord >= input_dim) throw ContractViolation("psi coordinate out of range");
    auto c = static_cast<std::uint32_t>(coord);
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec{SparseMatrix::from_triplets(2, input_dim, {{0, c, a}, {1, c, -a}}),
                               {b, -b}, Activation::ReLU});
    layers.push_back(LayerSpec{
        SparseMatrix::from_triplets(2, 2, {{0, 0, -1.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, -1.0}}),
        {2.0, 1.0}, Activation::ReLU});
    layers.push_back(LayerSpec{SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}}), {0.0},
                               Activation::Identity});
    return ReluNetwork(input_dim, std::move(layers));
}

ReluNetwork build_shifted_coordinate(std::size_t input_dim, std::size_t coord, double shift,
                                     std::size_t depth) {
    if (coord >= input_dim) throw ContractViolation("coordinate out of range");
    if (depth == 0) throw ContractViolation("shifted coordinate needs depth >= 1");
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec{
        SparseMatrix::from_triplets(1, input_dim, {{0, static_cast<std::uint32_t>(coord), 1.0}}),
        {2.0 - shift}, Activation::ReLU});
    for (std::size_t l = 1; l < depth; ++l) {
        layers.push_back(LayerSpec{SparseMatrix::identity(1), {0.0}, Activation::ReLU});
    }
    layers.push_back(LayerSpec{SparseMatrix::identity(1), {-2.0}, Activation::Identity});
    return ReluNetwork(input_dim, std::move(layers));
}

ReluNetwork build_squaring(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw InputError(fmt::format("squaring tolerance {} outside (0,1)", delta));
    }
    SquareUnit u;
    u.branches = {Branch{{{0, 1.0}}}};
    u.out_coeff = {1.0};
    return build_square_units(1, {u}, {}, squaring_stages(delta));
}

namespace {

SquareUnit mult_unit(std::size_t a, std::size_t b, const MultGadgetConfig& cfg) {
    const double sc = 1.0 / (2.0 * cfg.Q);
    const double out = 2.0 * cfg.Q * cfg.Q;
    SquareUnit u;
    u.branches = {Branch{{{a, sc}, {b, sc}}}, Branch{{{a, sc}}}, Branch{{{b, sc}}}};
    u.out_coeff = {out, -out, -out};
    return u;
}

}  // namespace

ReluNetwork build_mult(const MultGadgetConfig& cfg) {
    cfg.validate();
    return build_square_units(2, {mult_unit(0, 1, cfg)}, {}, cfg.stages());
}

std::size_t mult_depth(const MultGadgetConfig& cfg) {
    return 1 + static_cast<std::size_t>(cfg.stages());
}

ReluNetwork mult_bank_shape(std::size_t input_dim, std::size_t gadgets, std::size_t passes,
                            const MultGadgetConfig& cfg) {
    int m = cfg.stages();
    std::vector<std::size_t> hidden;
    hidden.push_back(6 * gadgets + 2 * passes);
    for (int s = 1; s <= m; ++s) hidden.push_back((s == 1 ? 9 : 12) * gadgets + 2 * passes);
    return ReluNetwork::shape(input_dim, hidden, gadgets + passes);
}

ReluNetwork build_mult_bank(std::size_t input_dim,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                            const std::vector<std::size_t>& passes, const MultGadgetConfig& cfg,
                            bool shape_only) {
    cfg.validate();
    for (auto [a, b] : pairs) {
        if (a >= input_dim || b >= input_dim) throw ContractViolation("bank pair index out of range");
    }
    for (auto p : passes) {
        if (p >= input_dim) throw ContractViolation("bank pass index out of range");
    }
    if (shape_only) return mult_bank_shape(input_dim, pairs.size(), passes.size(), cfg);
    std::vector<SquareUnit> units;
    units.reserve(pairs.size());
    for (auto [a, b] : pairs) units.push_back(mult_unit(a, b, cfg));
    return build_square_units(input_dim, units, passes, cfg.stages());
}

ReluNetwork apply_products(const ReluNetwork& stage,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                           const std::vector<std::size_t>& passes, const MultGadgetConfig& cfg) {
    return compose_serial(
        stage, build_mult_bank(stage.output_dim(), pairs, passes, cfg, stage.shape_only()));
}

ReluNetwork build_product_chain(const std::vector<ReluNetwork>& factors,
                                const MultGadgetConfig& cfg) {
    if (factors.empty()) throw InputError("product chain needs at least one factor");
    for (const auto& f : factors) {
        if (f.output_dim() != 1) throw ContractViolation("chain factor must be scalar");
        if (f.input_dim() != factors[0].input_dim()) {
            throw ContractViolation("chain factors must share their input");
        }
    }
    if (factors.size() == 1) return factors[0];
    const std::size_t k = factors.size();
    auto net = stack_parallel(pad_to_common_depth(factors), true);
    // first level: f_{k-2} x f_{k-1}
    {
        std::vector<std::size_t> passes;
        for (std::size_t i = 0; i + 2 < k; ++i) passes.push_back(i);
        net = apply_products(net, {{k - 2, k - 1}}, passes, cfg);
    }
    // layout is now [P, f_0, ..., f_j]
    for (std::size_t j = k - 2; j-- > 0;) {
        std::vector<std::size_t> passes;
        for (std::size_t i = 0; i < j; ++i) passes.push_back(1 + i);
        net = apply_products(net, {{1 + j, 0}}, passes, cfg);
    }
    return net;
}

namespace reference {

double psi(double x) {
    double a = std::abs(x);
    if (a < 1.0) return 1.0;
    if (a <= 2.0) return 2.0 - a;
    return 0.0;
}

namespace {
double relu(double v) { return v > 0.0 ? v : 0.0; }
}  // namespace

double sawtooth_square(double x, int stages) {
    double t = relu(x) + relu(-x);
    double g = t;
    double f = t;
    for (int s = 1; s <= stages; ++s) {
        g = 2.0 * relu(g) - 4.0 * relu(g - 0.5) + 2.0 * relu(g - 1.0);
        f -= g * std::ldexp(1.0, -2 * s);
    }
    return f;
}

double mult(double x, double y, const MultGadgetConfig& cfg) {
    const int m = cfg.stages();
    const double sc = 1.0 / (2.0 * cfg.Q);
    const double out = 2.0 * cfg.Q * cfg.Q;
    return out * (sawtooth_square(sc * x + sc * y, m) - sawtooth_square(sc * x, m) -
                  sawtooth_square(sc * y, m));
}

}  // namespace reference

}  // namespace narrownet
