#include "narrownet/narrow_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/errors.hpp"

namespace narrownet {

HalfSplit make_half_split(std::size_t d) {
    HalfSplit s;
    std::size_t k = d / 2;
    for (std::size_t i = 0; i < k; ++i) s.left_dims.push_back(i);
    if (d % 2 == 1) s.center_dim = k;
    for (std::size_t i = d - k; i < d; ++i) s.right_dims.push_back(i);
    return s;
}

bool GridGrouping::in_g2(int m) const {
    if (!in_range(m)) return false;
    int g = (m + N) % A;
    return g >= 2 && g <= A - 2;
}

std::pair<int, int> GridGrouping::band_of(int m) const { return {(m + N) / A, (m + N) % A}; }

int GridGrouping::band_count() const { return (2 * N) / A + 1; }

std::vector<int> GridGrouping::g2_bands() const {
    std::vector<int> out;
    for (int b = 0; b < band_count(); ++b) {
        if (index_of(b, 2, N, A) <= N && 2 <= A - 2) out.push_back(b);
    }
    return out;
}

GridGrouping build_grouping(int N) {
    if (N < 4) throw InputError(fmt::format("grouping needs N >= 4, got {}", N));
    GridGrouping gr;
    gr.N = N;
    int A = 1;
    while (A * A < 2 * N + 1) ++A;
    gr.A = A;
    gr.groups.resize(A);
    for (int g = 0; g < A; ++g) {
        for (int i = 0; i < A; ++i) gr.groups[g].push_back(-N + i * A + g);
    }
    for (int m = -N; m <= N; ++m) {
        int g = (m + N) % A;
        if (g == 0 || g == 1 || g == A - 1) {
            gr.g1_union.push_back(m);
        } else {
            gr.g2_union.push_back(m);
        }
    }
    // at most one active grid bump per residue class at any point
    for (int s = 0; s <= 40 * N; ++s) {
        double x = -1.0 + 2.0 * s / (40.0 * N);
        auto act = active_indices(x, N);
        std::vector<int> seen(A, 0);
        for (int m : act) {
            if (++seen[(m + N) % A] > 1) {
                throw ContractViolation("grouping selection property violated");
            }
        }
    }
    return gr;
}

MultGadgetConfig gadget_config(const ConstructionPlan& plan) {
    return MultGadgetConfig::make(plan.Q, plan.delta);
}

ReluNetwork build_kappa(int b, const ConstructionPlan& plan, std::size_t input_dim,
                        std::size_t coord) {
    if (plan.A < 3) throw InputError("band selector needs an odd-case plan");
    if (b < 0 || b > plan.A - 1) throw InputError(fmt::format("band {} out of range", b));
    const int N = plan.N;
    std::vector<ReluNetwork> parts;
    for (int j = -N + 1 + plan.A * b; j <= -N + plan.A * b + plan.A - 1; ++j) {
        parts.push_back(build_psi_of_affine(input_dim, coord, 3.0 * N, -3.0 * j));
    }
    return affine_combine(parts, std::vector<double>(parts.size(), 1.0), 0.0);
}

ReluNetwork build_band_indicator(int b, const ConstructionPlan& plan) {
    if (plan.A < 3) throw InputError("band indicator needs an odd-case plan");
    if (b < 0 || b > plan.A - 1) throw InputError(fmt::format("band {} out of range", b));
    const double N = plan.N;
    const double lo = -N + plan.A * b + 1;
    const double hi = -N + plan.A * b + plan.A - 1;
    // sigma(1 - sigma(3(lo - 1/3 - Nx)) - sigma(3(Nx - hi - 1/3)))
    std::vector<LayerSpec> layers;
    layers.push_back({SparseMatrix::from_triplets(2, 1, {{0, 0, -3.0 * N}, {1, 0, 3.0 * N}}),
                      {3.0 * lo - 1.0, -3.0 * hi - 1.0}, Activation::ReLU});
    layers.push_back({SparseMatrix::from_triplets(1, 2, {{0, 0, -1.0}, {0, 1, -1.0}}), {1.0},
                      Activation::ReLU});
    layers.push_back({SparseMatrix::identity(1), {0.0}, Activation::Identity});
    return ReluNetwork(1, std::move(layers));
}

ReluNetwork build_half_chain(std::size_t input_dim, const std::vector<std::size_t>& coords,
                             const std::vector<int>& m, const MultiIndex& alpha, int N,
                             const MultGadgetConfig& cfg) {
    std::vector<ReluNetwork> factors;
    for (std::size_t c = 0; c < coords.size(); ++c) {
        factors.push_back(build_psi_of_affine(input_dim, coords[c], 3.0 * N, -3.0 * m[c]));
    }
    for (std::size_t c = 0; c < coords.size(); ++c) {
        for (int r = 0; r < alpha[c]; ++r) {
            factors.push_back(build_shifted_coordinate(input_dim, coords[c],
                                                       static_cast<double>(m[c]) / N, 2));
        }
    }
    return build_product_chain(factors, cfg);
}

namespace {

// Parallel sub-networks sharing the input; counts > 1 only for shape-only nets.
struct PartList {
    std::vector<ReluNetwork> nets;
    std::vector<std::size_t> counts;

    void add(ReluNetwork n, std::size_t count = 1) {
        if (count == 0) return;
        nets.push_back(std::move(n));
        counts.push_back(count);
    }
    std::size_t outputs() const {
        std::size_t s = 0;
        for (std::size_t i = 0; i < nets.size(); ++i) s += nets[i].output_dim() * counts[i];
        return s;
    }
};

ReluNetwork stack_parts(const PartList& parts) {
    std::size_t L = 0;
    for (const auto& n : parts.nets) L = std::max(L, n.depth());
    std::vector<ReluNetwork> padded;
    padded.reserve(parts.nets.size());
    for (const auto& n : parts.nets) padded.push_back(pad_depth(n, L));
    std::vector<std::pair<const ReluNetwork*, std::size_t>> items;
    for (std::size_t i = 0; i < padded.size(); ++i) items.emplace_back(&padded[i], parts.counts[i]);
    return stack_parallel_counted(items, true);
}

ReluNetwork readout(const ReluNetwork& net, std::size_t rows, std::vector<Triplet> tr) {
    if (net.shape_only()) return compose_affine_shape(net, rows);
    return compose_affine(net, SparseMatrix::from_triplets(rows, net.output_dim(), std::move(tr)),
                          std::vector<double>(rows, 0.0));
}

ReluNetwork add_pair_layer(const ReluNetwork& net) { return pad_depth(net, net.depth() + 1); }

std::vector<std::vector<int>> enumerate_grid(std::size_t k, int N) {
    std::vector<std::vector<int>> out;
    std::vector<int> m(k, -N);
    while (true) {
        out.push_back(m);
        std::size_t p = k;
        while (p > 0) {
            --p;
            if (m[p] < N) {
                ++m[p];
                break;
            }
            m[p] = -N;
            if (p == 0) return out;
        }
        if (k == 0) return out;
    }
}

std::size_t grid_size(std::size_t k, int N) {
    std::size_t s = 1;
    for (std::size_t i = 0; i < k; ++i) s *= 2 * static_cast<std::size_t>(N) + 1;
    return s;
}

std::vector<int> concat(const std::vector<int>& a, std::optional<int> c, const std::vector<int>& b) {
    std::vector<int> out = a;
    if (c) out.push_back(*c);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

// index of the concatenated multi-index in the table's alpha list
class AlphaJoin {
public:
    explicit AlphaJoin(const CoefficientTable* t) {
        if (!t) return;
        for (std::size_t i = 0; i < t->alphas().size(); ++i) index_[t->alphas()[i]] = i;
    }
    std::optional<std::size_t> operator()(const MultiIndex& a) const {
        auto it = index_.find(a);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

private:
    std::map<MultiIndex, std::size_t> index_;
};

double rescale_constant(const ConstructionPlan& plan) {
    return std::pow(2.0, plan.d / 2.0) * std::pow(static_cast<double>(plan.d), plan.beta);
}

void require_table(const CoefficientTable* table, const ConstructionPlan& plan, BuildMode mode) {
    if (mode == BuildMode::ShapeOnly) return;
    if (!table) throw ContractViolation("full build needs a coefficient table");
    if (table->N() != plan.N || table->d() != static_cast<std::size_t>(plan.d)) {
        throw ContractViolation("coefficient table does not match the plan");
    }
}

// generic Lemma-style conversion on part lists
ReluNetwork convert_parts(const PartList& m_parts, const PartList& alpha_parts,
                          const std::vector<std::vector<std::pair<std::size_t, double>>>& coeffs,
                          double scale_in, double scale_out, const MultGadgetConfig& cfg) {
    PartList all = m_parts;
    for (std::size_t i = 0; i < alpha_parts.nets.size(); ++i) {
        all.add(alpha_parts.nets[i], alpha_parts.counts[i]);
    }
    auto net = stack_parts(all);
    const std::size_t nM = m_parts.outputs();
    const std::size_t nA = alpha_parts.outputs();
    std::vector<Triplet> tr;
    if (!net.shape_only()) {
        for (std::size_t j = 0; j < nA; ++j) {
            auto r = static_cast<std::uint32_t>(2 * j);
            for (auto [i, c] : coeffs[j]) {
                tr.push_back({r, static_cast<std::uint32_t>(i), c * scale_in});
            }
            tr.push_back({r + 1, static_cast<std::uint32_t>(nM + j), 1.0});
        }
    }
    net = add_pair_layer(readout(net, 2 * nA, std::move(tr)));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (!net.shape_only()) {
        for (std::size_t j = 0; j < nA; ++j) pairs.emplace_back(2 * j, 2 * j + 1);
        net = apply_products(net, pairs, {}, cfg);
    } else {
        net = compose_serial(net, mult_bank_shape(net.output_dim(), nA, 0, cfg));
    }
    std::vector<Triplet> fin;
    if (!net.shape_only()) {
        for (std::size_t j = 0; j < nA; ++j) fin.push_back({0, static_cast<std::uint32_t>(j), scale_out});
    }
    return readout(net, 1, std::move(fin));
}

ReluNetwork bank(const ReluNetwork& net, std::size_t gadgets,
                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                 std::size_t pass_count, const std::vector<std::size_t>& passes,
                 const MultGadgetConfig& cfg) {
    if (net.shape_only()) {
        return compose_serial(net, mult_bank_shape(net.output_dim(), gadgets, pass_count, cfg));
    }
    return apply_products(net, pairs, passes, cfg);
}

}  // namespace

ReluNetwork mlp_convert(const ConvertParts& parts, const MultGadgetConfig& cfg) {
    if (parts.coeffs.size() != parts.alpha_parts.size()) {
        throw ContractViolation("mlp_convert: one coefficient row per alpha part expected");
    }
    if (parts.m_parts.empty() || parts.alpha_parts.empty()) {
        throw ContractViolation("mlp_convert: empty part list");
    }
    std::size_t d = parts.m_parts[0].input_dim();
    PartList mp, ap;
    for (const auto& n : parts.m_parts) {
        if (n.input_dim() != d || n.output_dim() != 1) {
            throw ContractViolation("mlp_convert: parts must be scalar with a shared input");
        }
        mp.add(n);
    }
    for (const auto& n : parts.alpha_parts) {
        if (n.input_dim() != d || n.output_dim() != 1) {
            throw ContractViolation("mlp_convert: parts must be scalar with a shared input");
        }
        ap.add(n);
    }
    for (const auto& row : parts.coeffs) {
        for (auto [i, c] : row) {
            if (i >= parts.m_parts.size()) throw ContractViolation("mlp_convert: bad part index");
            (void)c;
        }
    }
    return convert_parts(mp, ap, parts.coeffs, parts.scale_in, parts.scale_out, cfg);
}

ReluNetwork build_even(const CoefficientTable* table, const ConstructionPlan& plan, BuildMode mode) {
    if (plan.d % 2 != 0) throw InputError("build_even needs an even dimension");
    require_table(table, plan, mode);
    const bool shape = mode == BuildMode::ShapeOnly;
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const std::size_t d = plan.d;
    const std::size_t k = d / 2;
    const auto split = make_half_split(d);
    const auto halves = multi_indices(k, plan.beta - 1);
    const double C = rescale_constant(plan);
    PartList m_parts, a_parts;
    std::vector<std::vector<std::pair<std::size_t, double>>> coeffs;
    if (shape) {
        const std::size_t nH = grid_size(k, N);
        std::vector<int> zero(k, 0);
        for (const auto& a : halves) {
            m_parts.add(to_shape(build_half_chain(d, split.left_dims, zero, a, N, cfg)), nH);
            a_parts.add(to_shape(build_half_chain(d, split.right_dims, zero, a, N, cfg)), nH);
        }
        return convert_parts(m_parts, a_parts, coeffs, 1.0 / C, C, cfg);
    }
    const auto grid = enumerate_grid(k, N);
    AlphaJoin join(table);
    for (const auto& m1 : grid) {
        for (const auto& a1 : halves) m_parts.add(build_half_chain(d, split.left_dims, m1, a1, N, cfg));
    }
    for (const auto& m2 : grid) {
        for (const auto& a2 : halves) {
            a_parts.add(build_half_chain(d, split.right_dims, m2, a2, N, cfg));
            std::vector<std::pair<std::size_t, double>> row;
            std::size_t i = 0;
            for (const auto& m1 : grid) {
                for (const auto& a1 : halves) {
                    if (order(a1) + order(a2) <= plan.beta - 1) {
                        auto ai = join(concat(a1, std::nullopt, a2));
                        double c = table->at(concat(m1, std::nullopt, m2), *ai);
                        if (c != 0.0) row.emplace_back(i, c);
                    }
                    ++i;
                }
            }
            coeffs.push_back(std::move(row));
        }
    }
    return convert_parts(m_parts, a_parts, coeffs, 1.0 / C, C, cfg);
}

ReluNetwork build_odd(const CoefficientTable* table, const ConstructionPlan& plan, BuildMode mode) {
    if (plan.d % 2 != 1 || plan.d < 3) throw InputError("build_odd needs an odd dimension > 1");
    if (plan.N < 4) throw InputError("build_odd needs N >= 4");
    require_table(table, plan, mode);
    const bool shape = mode == BuildMode::ShapeOnly;
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const int beta = plan.beta;
    const std::size_t d = plan.d;
    const std::size_t k = (d - 1) / 2;
    const auto split = make_half_split(d);
    const std::size_t c = *split.center_dim;
    const auto gr = build_grouping(N);
    const int A = gr.A;
    const auto halves = multi_indices(k, beta - 1);
    const std::size_t nA = halves.size();
    const std::size_t nH = grid_size(k, N);
    const std::size_t side = 2 * static_cast<std::size_t>(N) + 1;
    const double C = rescale_constant(plan);
    const auto bands = gr.g2_bands();
    std::vector<int> center_groups;
    for (int g = 2; g <= A - 2; ++g) center_groups.push_back(g);

    // stage one outputs: f1 chains, f2 chains, center chains, band selectors
    PartList s1;
    std::vector<std::vector<int>> grid;
    if (shape) {
        std::vector<int> zero(k, 0);
        for (const auto& a : halves) s1.add(to_shape(build_half_chain(d, split.left_dims, zero, a, N, cfg)), nH);
        for (const auto& a : halves) s1.add(to_shape(build_half_chain(d, split.right_dims, zero, a, N, cfg)), nH);
        for (int ac = 0; ac < beta; ++ac) {
            s1.add(to_shape(build_half_chain(d, {c}, {0}, {ac}, N, cfg)), side);
        }
        s1.add(to_shape(build_kappa(0, plan, d, c)), bands.size());
    } else {
        grid = enumerate_grid(k, N);
        for (const auto& m1 : grid)
            for (const auto& a : halves) s1.add(build_half_chain(d, split.left_dims, m1, a, N, cfg));
        for (const auto& m2 : grid)
            for (const auto& a : halves) s1.add(build_half_chain(d, split.right_dims, m2, a, N, cfg));
        for (int i = -N; i <= N; ++i)
            for (int ac = 0; ac < beta; ++ac) s1.add(build_half_chain(d, {c}, {i}, {ac}, N, cfg));
        for (int b : bands) s1.add(build_kappa(b, plan, d, c));
    }
    const std::size_t off1 = 0;
    const std::size_t off2 = nH * nA;
    const std::size_t off3 = 2 * nH * nA;
    const std::size_t off4 = off3 + side * beta;
    auto f1_out = [&](std::size_t m1, std::size_t a1) { return off1 + m1 * nA + a1; };
    auto f2_out = [&](std::size_t m2, std::size_t a2) { return off2 + m2 * nA + a2; };
    auto t_out = [&](int i, int ac) { return off3 + static_cast<std::size_t>(i + N) * beta + ac; };

    // gadget lists of the first product layer
    struct F1 { int g, ac; std::size_t m1, a1; };
    struct F2 { std::size_t m2, a2; int b; };
    struct H { std::size_t m1, a1; int mc, ac; };
    std::vector<F1> f1s;
    std::vector<F2> f2s;
    std::vector<H> hs;
    for (int g : center_groups)
        for (int ac = 0; ac < beta; ++ac)
            for (std::size_t m1 = 0; m1 < nH; ++m1)
                for (std::size_t a1 = 0; a1 < nA; ++a1)
                    if (order(halves[a1]) + ac <= beta - 1) f1s.push_back({g, ac, m1, a1});
    for (std::size_t m2 = 0; m2 < nH; ++m2)
        for (std::size_t a2 = 0; a2 < nA; ++a2)
            for (std::size_t q = 0; q < bands.size(); ++q) f2s.push_back({m2, a2, bands[q]});
    for (std::size_t m1 = 0; m1 < nH; ++m1)
        for (std::size_t a1 = 0; a1 < nA; ++a1)
            for (int mc : gr.g1_union)
                for (int ac = 0; ac < beta; ++ac)
                    if (order(halves[a1]) + ac <= beta - 1) hs.push_back({m1, a1, mc, ac});
    const std::size_t nF1 = f1s.size(), nF2 = f2s.size(), nHs = hs.size(), nP = nH * nA;
    std::map<int, std::size_t> band_pos;
    for (std::size_t q = 0; q < bands.size(); ++q) band_pos[bands[q]] = q;

    auto net = add_pair_layer(stack_parts(s1));
    std::vector<Triplet> tr;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<std::size_t> passes;
    const std::size_t nG1 = nF1 + nF2 + nHs;
    if (!shape) {
        std::uint32_t r = 0;
        for (const auto& e : f1s) {
            for (int i : gr.groups[e.g]) {
                if (gr.in_range(i)) tr.push_back({r, static_cast<std::uint32_t>(t_out(i, e.ac)), 1.0});
            }
            tr.push_back({r + 1, static_cast<std::uint32_t>(f1_out(e.m1, e.a1)), 1.0});
            r += 2;
        }
        for (const auto& e : f2s) {
            tr.push_back({r, static_cast<std::uint32_t>(f2_out(e.m2, e.a2)), 1.0});
            tr.push_back({r + 1, static_cast<std::uint32_t>(off4 + band_pos[e.b]), 1.0});
            r += 2;
        }
        for (const auto& e : hs) {
            tr.push_back({r, static_cast<std::uint32_t>(f1_out(e.m1, e.a1)), 1.0});
            tr.push_back({r + 1, static_cast<std::uint32_t>(t_out(e.mc, e.ac)), 1.0});
            r += 2;
        }
        for (std::size_t q = 0; q < nP; ++q) {
            tr.push_back({r, static_cast<std::uint32_t>(off2 + q), 1.0});
            ++r;
        }
        for (std::size_t j = 0; j < nG1; ++j) pairs.emplace_back(2 * j, 2 * j + 1);
        for (std::size_t q = 0; q < nP; ++q) passes.push_back(2 * nG1 + q);
    }
    net = readout(net, 2 * nG1 + nP, std::move(tr));
    net = bank(net, nG1, pairs, nP, passes, cfg);

    // second product layer: weighted sums against the band terms and the G1 terms
    net = add_pair_layer(net);
    const std::size_t nG2 = nF2 + nP;
    tr.clear();
    pairs.clear();
    if (!shape) {
        AlphaJoin join(table);
        const double inv = 1.0 / C;
        std::uint32_t r = 0;
        for (std::size_t j2 = 0; j2 < nF2; ++j2) {
            const auto& e2 = f2s[j2];
            for (std::size_t j1 = 0; j1 < nF1; ++j1) {
                const auto& e1 = f1s[j1];
                int mc = GridGrouping::index_of(e2.b, e1.g, N, A);
                if (!gr.in_range(mc)) continue;
                if (order(halves[e1.a1]) + e1.ac + order(halves[e2.a2]) > beta - 1) continue;
                auto ai = join(concat(halves[e1.a1], e1.ac, halves[e2.a2]));
                double a = table->at(concat(grid[e1.m1], mc, grid[e2.m2]), *ai);
                if (a != 0.0) tr.push_back({r, static_cast<std::uint32_t>(j1), a * inv});
            }
            tr.push_back({r + 1, static_cast<std::uint32_t>(nF1 + j2), 1.0});
            r += 2;
        }
        // H terms grouped by their (m2, a2) partner
        for (std::size_t q = 0; q < nP; ++q) {
            std::size_t m2 = q / nA, a2 = q % nA;
            tr.push_back({r, static_cast<std::uint32_t>(nG1 + q), 1.0});
            for (std::size_t jh = 0; jh < nHs; ++jh) {
                const auto& e = hs[jh];
                if (order(halves[e.a1]) + e.ac + order(halves[a2]) > beta - 1) continue;
                auto ai = join(concat(halves[e.a1], e.ac, halves[a2]));
                double a = table->at(concat(grid[e.m1], e.mc, grid[m2]), *ai);
                if (a != 0.0) {
                    tr.push_back({r + 1, static_cast<std::uint32_t>(nF1 + nF2 + jh), a * inv});
                }
            }
            r += 2;
        }
        for (std::size_t j = 0; j < nG2; ++j) pairs.emplace_back(2 * j, 2 * j + 1);
    }
    net = add_pair_layer(readout(net, 2 * nG2, std::move(tr)));
    net = bank(net, nG2, pairs, 0, {}, cfg);
    std::vector<Triplet> fin;
    if (!shape) {
        for (std::size_t j = 0; j < nG2; ++j) fin.push_back({0, static_cast<std::uint32_t>(j), C});
    }
    return readout(net, 1, std::move(fin));
}

namespace {

// z = x - (A/N) stair(x): the stair climbs from b-1 to b inside the gap
// between the supports of bands b-1 and b.
ReluNetwork build_band_shift(const ConstructionPlan& plan, int max_band) {
    const double N = plan.N;
    const int A = plan.A;
    std::vector<Triplet> w1{{0, 0, 1.0}};
    std::vector<double> b1{2.0};
    std::vector<Triplet> w2{{0, 0, 1.0}};
    const double shift = static_cast<double>(A) / N;
    for (int b = 1; b <= max_band; ++b) {
        double yb = -N + A * b - 1.0 / 3.0;
        auto r = static_cast<std::uint32_t>(2 * b - 1);
        w1.push_back({r, 0, 1.5 * N});
        b1.push_back(-1.5 * yb);
        w1.push_back({r + 1, 0, 1.5 * N});
        b1.push_back(-1.5 * yb - 1.0);
        w2.push_back({0, r, -shift});
        w2.push_back({0, r + 1, shift});
    }
    std::size_t h = b1.size();
    std::vector<LayerSpec> layers;
    layers.push_back({SparseMatrix::from_triplets(h, 1, std::move(w1)), std::move(b1), Activation::ReLU});
    layers.push_back({SparseMatrix::from_triplets(1, h, std::move(w2)), {-2.0}, Activation::Identity});
    return ReluNetwork(1, std::move(layers));
}

}  // namespace

ReluNetwork build_1d(const CoefficientTable* table, const ConstructionPlan& plan, BuildMode mode) {
    if (plan.d != 1) throw InputError("build_1d needs d = 1");
    if (plan.N < 4) throw InputError("build_1d needs N >= 4");
    require_table(table, plan, mode);
    const bool shape = mode == BuildMode::ShapeOnly;
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const int beta = plan.beta;
    const auto gr = build_grouping(N);
    const int A = gr.A;
    const auto bands = gr.g2_bands();
    const double C1 = 2.0;   // 2 d^beta with d = 1

    PartList s1;
    for (int b : bands) s1.add(build_band_indicator(b, plan));
    // chains in shifted coordinates for the interior residues g = 2..A-2
    if (A >= 4) {
        std::vector<ReluNetwork> chains;
        for (int g = 2; g <= A - 2; ++g)
            for (int a = 0; a < beta; ++a) chains.push_back(build_half_chain(1, {0}, {-N + g}, {a}, N, cfg));
        auto zbank = compose_serial(build_band_shift(plan, bands.empty() ? 0 : bands.back()),
                                    stack_parallel(pad_to_common_depth(chains), true));
        s1.add(shape ? to_shape(zbank) : zbank);
    }
    for (int m : gr.g1_union)
        for (int a = 0; a < beta; ++a) s1.add(build_half_chain(1, {0}, {m}, {a}, N, cfg));
    if (shape) {
        for (auto& n : s1.nets) n = to_shape(n);
    }
    const std::size_t nB = bands.size();
    const std::size_t offT = nB;
    const std::size_t offG1 = nB + static_cast<std::size_t>(A - 3) * beta;
    auto net = stack_parts(s1);
    std::vector<Triplet> tr;
    if (!shape) {
        for (std::size_t q = 0; q < nB; ++q) {
            auto r = static_cast<std::uint32_t>(2 * q);
            tr.push_back({r, static_cast<std::uint32_t>(q), 1.0});
            for (int g = 2; g <= A - 2; ++g) {
                int m = GridGrouping::index_of(bands[q], g, N, A);
                if (!gr.in_range(m)) continue;
                for (int a = 0; a < beta; ++a) {
                    double c = table->at({m}, static_cast<std::size_t>(a));
                    if (c != 0.0) {
                        tr.push_back({r + 1,
                                      static_cast<std::uint32_t>(offT + (g - 2) * beta + a),
                                      c / C1});
                    }
                }
            }
        }
        std::size_t col = offG1;
        for (int m : gr.g1_union) {
            for (int a = 0; a < beta; ++a) {
                double c = table->at({m}, static_cast<std::size_t>(a));
                if (c != 0.0) {
                    tr.push_back({static_cast<std::uint32_t>(2 * nB), static_cast<std::uint32_t>(col), c});
                }
                ++col;
            }
        }
    }
    net = add_pair_layer(readout(net, 2 * nB + 1, std::move(tr)));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t q = 0; q < nB; ++q) pairs.emplace_back(2 * q, 2 * q + 1);
    net = bank(net, nB, pairs, 1, {2 * nB}, cfg);
    std::vector<Triplet> fin;
    if (!shape) {
        for (std::size_t q = 0; q < nB; ++q) fin.push_back({0, static_cast<std::uint32_t>(q), C1});
        fin.push_back({0, static_cast<std::uint32_t>(nB), 1.0});
    }
    return readout(net, 1, std::move(fin));
}

ReluNetwork build_naive(const CoefficientTable* table, const ConstructionPlan& plan, BuildMode mode) {
    require_table(table, plan, mode);
    const bool shape = mode == BuildMode::ShapeOnly;
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const std::size_t d = plan.d;
    std::vector<std::size_t> coords(d);
    for (std::size_t i = 0; i < d; ++i) coords[i] = i;
    const auto alphas = multi_indices(d, plan.beta - 1);
    PartList parts;
    std::vector<Triplet> tr;
    if (shape) {
        std::vector<int> zero(d, 0);
        for (const auto& a : alphas) {
            parts.add(to_shape(build_half_chain(d, coords, zero, a, N, cfg)), grid_size(d, N));
        }
    } else {
        std::uint32_t col = 0;
        for (const auto& m : enumerate_grid(d, N)) {
            for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
                parts.add(build_half_chain(d, coords, m, alphas[ai], N, cfg));
                double c = table->at(m, ai);
                if (c != 0.0) tr.push_back({0, col, c});
                ++col;
            }
        }
    }
    return readout(stack_parts(parts), 1, std::move(tr));
}

ReluNetwork build_from_plan(const CoefficientTable* table, const ConstructionPlan& plan,
                            BuildMode mode) {
    switch (plan.parity_case) {
        case ParityCase::Even: return build_even(table, plan, mode);
        case ParityCase::OddGt1: return build_odd(table, plan, mode);
        case ParityCase::One: return build_1d(table, plan, mode);
    }
    throw ContractViolation("unknown parity case");
}

BuildResult build_approximator(const TargetFunction& f, double eps, const BuildOptions& opts) {
    auto plan = make_plan(eps, f.beta, static_cast<int>(f.dim), opts.N_override);
    if (opts.mode == BuildMode::ShapeOnly) {
        return {plan, build_from_plan(nullptr, plan, BuildMode::ShapeOnly)};
    }
    CoefficientTable table(f, plan.N);
    return {plan, build_from_plan(&table, plan, BuildMode::Full)};
}

std::vector<BoundCheck> single_build_checks(const ReluNetwork& net, const ConstructionPlan& plan) {
    std::vector<BoundCheck> out;
    auto fc = assert_fully_connected(net);
    out.push_back({"fully_connected", "every layer is a full matrix over the previous layer",
                   fc.fully_connected ? 1.0 : 0.0, fc.fully_connected});
    out.push_back({"dense_weight_bound", "W <= 3 H^2 L + 3 H", fc.empirical_constant, fc.dense_bound});
    auto gw = stats(build_mult(gadget_config(plan))).width;
    out.push_back({"gadget_width", "width of the multiplication gadget <= 12",
                   static_cast<double>(gw), gw <= 12});
    return out;
}

std::string build_manifest_json(const ConstructionPlan& plan, const ReluNetwork& net,
                                const std::vector<BoundCheck>& checks) {
    auto s = stats(net);
    nlohmann::json j;
    j["eps"] = plan.eps;
    j["beta"] = plan.beta;
    j["d"] = plan.d;
    j["N"] = plan.N;
    j["N_formula"] = plan.N_formula;
    j["A"] = plan.A;
    j["delta"] = plan.delta;
    j["Q"] = plan.Q;
    j["parity_case"] = to_string(plan.parity_case);
    j["measured_stats"] = {{"depth", s.depth},
                           {"width", s.width},
                           {"weight_count", s.weight_count},
                           {"nonzeros", s.nonzeros}};
    j["bound_checks"] = nlohmann::json::array();
    for (const auto& c : checks) {
        j["bound_checks"].push_back({{"name", c.name},
                                     {"claimed_form", c.claimed_form},
                                     {"measured", c.measured},
                                     {"pass", c.pass}});
    }
    return j.dump(2);
}

}  // namespace narrownet
