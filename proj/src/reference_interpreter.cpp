#include <cmath>
#include <functional>

#include "narrownet/errors.hpp"
#include "narrownet/narrow_builder.hpp"
#include "narrownet/primitives.hpp"
#include "narrownet/taylor_partition.hpp"

namespace narrownet {

namespace {

double relu(double v) { return v > 0.0 ? v : 0.0; }

double shifted(double x, double shift) { return relu(x + (2.0 - shift)) - 2.0; }

// right-nested chain value, first level on the last two factors
double chain_value(const std::vector<double>& f, const MultGadgetConfig& cfg) {
    if (f.size() == 1) return f[0];
    double p = reference::mult(f[f.size() - 2], f[f.size() - 1], cfg);
    for (std::size_t j = f.size() - 2; j-- > 0;) p = reference::mult(f[j], p, cfg);
    return p;
}

double half_chain(const std::vector<double>& xs, const std::vector<int>& m, const MultiIndex& a,
                  int N, const MultGadgetConfig& cfg) {
    std::vector<double> f;
    for (std::size_t c = 0; c < xs.size(); ++c) f.push_back(reference::psi(3.0 * N * xs[c] - 3.0 * m[c]));
    for (std::size_t c = 0; c < xs.size(); ++c) {
        for (int r = 0; r < a[c]; ++r) f.push_back(shifted(xs[c], static_cast<double>(m[c]) / N));
    }
    return chain_value(f, cfg);
}

// all index tuples with entry k drawn from sets[k]
std::vector<std::vector<int>> product_of(const std::vector<std::vector<int>>& sets) {
    std::vector<std::vector<int>> out{{}};
    for (const auto& s : sets) {
        std::vector<std::vector<int>> next;
        for (const auto& p : out) {
            for (int v : s) {
                auto q = p;
                q.push_back(v);
                next.push_back(std::move(q));
            }
        }
        out = std::move(next);
    }
    return out;
}

std::vector<int> join(const std::vector<int>& a, std::optional<int> c, const std::vector<int>& b) {
    std::vector<int> out = a;
    if (c) out.push_back(*c);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

struct HalfTerm {
    std::vector<int> m;
    std::size_t alpha;
    double value;
};

std::vector<HalfTerm> half_terms(const std::vector<double>& xs, const std::vector<MultiIndex>& alphas,
                                 int N, const MultGadgetConfig& cfg) {
    std::vector<std::vector<int>> sets;
    for (double v : xs) sets.push_back(active_indices(v, N));
    std::vector<HalfTerm> out;
    for (const auto& m : product_of(sets)) {
        for (std::size_t a = 0; a < alphas.size(); ++a) {
            out.push_back({m, a, half_chain(xs, m, alphas[a], N, cfg)});
        }
    }
    return out;
}

double rescale_constant(const ConstructionPlan& plan) {
    return std::pow(2.0, plan.d / 2.0) * std::pow(static_cast<double>(plan.d), plan.beta);
}

double eval_even(const CoefficientTable& t, const ConstructionPlan& plan, std::span<const double> x) {
    const auto cfg = gadget_config(plan);
    const std::size_t k = plan.d / 2;
    const auto halves = multi_indices(k, plan.beta - 1);
    std::vector<double> xl(x.begin(), x.begin() + k), xr(x.begin() + k, x.end());
    auto left = half_terms(xl, halves, plan.N, cfg);
    auto right = half_terms(xr, halves, plan.N, cfg);
    const double C = rescale_constant(plan);
    double total = 0.0;
    for (const auto& r : right) {
        double s = 0.0;
        for (const auto& l : left) {
            if (order(halves[l.alpha]) + order(halves[r.alpha]) > plan.beta - 1) continue;
            auto ai = t.alpha_index(join(halves[l.alpha], std::nullopt, halves[r.alpha]));
            s += t.at(join(l.m, std::nullopt, r.m), ai) / C * l.value;
        }
        total += C * reference::mult(s, r.value, cfg);
    }
    return total;
}

double eval_odd(const CoefficientTable& t, const ConstructionPlan& plan, std::span<const double> x) {
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const int beta = plan.beta;
    const std::size_t k = (plan.d - 1) / 2;
    const auto gr = build_grouping(N);
    const int A = gr.A;
    const auto halves = multi_indices(k, beta - 1);
    std::vector<double> xl(x.begin(), x.begin() + k), xr(x.begin() + k + 1, x.end());
    const double xc = x[k];
    auto left = half_terms(xl, halves, N, cfg);
    auto right = half_terms(xr, halves, N, cfg);
    const double C = rescale_constant(plan);

    auto T = [&](int i, int ac) { return half_chain({xc}, {i}, {ac}, N, cfg); };
    std::vector<int> act_c = active_indices(xc, N);
    auto S = [&](int g, int ac) {
        double s = 0.0;
        for (int i : gr.groups[g]) {
            if (gr.in_range(i)) s += T(i, ac);
        }
        return s;
    };
    auto kappa = [&](int b) {
        double s = 0.0;
        for (int j = -N + 1 + A * b; j <= -N + A * b + A - 1; ++j) s += reference::psi(3.0 * N * xc - 3.0 * j);
        return s;
    };

    double total = 0.0;
    for (int b : gr.g2_bands()) {
        double kb = kappa(b);
        if (kb == 0.0) continue;
        for (const auto& r : right) {
            double s = 0.0;
            for (int g = 2; g <= A - 2; ++g) {
                int mc = GridGrouping::index_of(b, g, N, A);
                if (!gr.in_range(mc)) continue;
                for (int ac = 0; ac < beta; ++ac) {
                    double sg = S(g, ac);
                    for (const auto& l : left) {
                        if (order(halves[l.alpha]) + ac > beta - 1) continue;
                        if (order(halves[l.alpha]) + ac + order(halves[r.alpha]) > beta - 1) continue;
                        auto ai = t.alpha_index(join(halves[l.alpha], ac, halves[r.alpha]));
                        s += t.at(join(l.m, mc, r.m), ai) / C * reference::mult(sg, l.value, cfg);
                    }
                }
            }
            total += C * reference::mult(s, reference::mult(r.value, kb, cfg), cfg);
        }
    }
    for (const auto& r : right) {
        double s = 0.0;
        for (int mc : act_c) {
            int g = (mc + N) % A;
            if (g >= 2 && g <= A - 2) continue;
            for (int ac = 0; ac < beta; ++ac) {
                double tv = T(mc, ac);
                for (const auto& l : left) {
                    if (order(halves[l.alpha]) + ac + order(halves[r.alpha]) > beta - 1) continue;
                    auto ai = t.alpha_index(join(halves[l.alpha], ac, halves[r.alpha]));
                    s += t.at(join(l.m, mc, r.m), ai) / C * reference::mult(l.value, tv, cfg);
                }
            }
        }
        total += C * reference::mult(r.value, s, cfg);
    }
    return total;
}

double eval_one(const CoefficientTable& t, const ConstructionPlan& plan, double x) {
    const auto cfg = gadget_config(plan);
    const int N = plan.N;
    const int beta = plan.beta;
    const auto gr = build_grouping(N);
    const int A = gr.A;
    const auto bands = gr.g2_bands();
    const double C1 = 2.0;
    const double Nd = N;
    double stair = 0.0;
    for (int b = 1; b <= (bands.empty() ? 0 : bands.back()); ++b) {
        double yb = -Nd + A * b - 1.0 / 3.0;
        double u = 1.5 * Nd * x - 1.5 * yb;
        stair += relu(u) - relu(u - 1.0);
    }
    const double z = relu(x + 2.0) - 2.0 - static_cast<double>(A) / Nd * stair;
    double total = 0.0;
    for (int b : bands) {
        double lo = -Nd + A * b + 1, hi = -Nd + A * b + A - 1;
        double psi_b = relu(1.0 - relu(-3.0 * Nd * x + 3.0 * lo - 1.0) - relu(3.0 * Nd * x - 3.0 * hi - 1.0));
        if (psi_b == 0.0) continue;
        double s = 0.0;
        for (int g = 2; g <= A - 2; ++g) {
            int m = GridGrouping::index_of(b, g, N, A);
            if (!gr.in_range(m)) continue;
            for (int a = 0; a < beta; ++a) {
                s += t.at({m}, a) / C1 * half_chain({z}, {-N + g}, {a}, N, cfg);
            }
        }
        total += C1 * reference::mult(psi_b, s, cfg);
    }
    for (int m : active_indices(x, N)) {
        int g = (m + N) % A;
        if (g >= 2 && g <= A - 2) continue;
        for (int a = 0; a < beta; ++a) total += t.at({m}, a) * half_chain({x}, {m}, {a}, N, cfg);
    }
    return total;
}

}  // namespace

double eval_ftilde_reference(const CoefficientTable& table, const ConstructionPlan& plan,
                             std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(plan.d)) {
        throw InputError("reference evaluation: point dimension does not match the plan");
    }
    switch (plan.parity_case) {
        case ParityCase::Even: return eval_even(table, plan, x);
        case ParityCase::OddGt1: return eval_odd(table, plan, x);
        case ParityCase::One: return eval_one(table, plan, x[0]);
    }
    throw ContractViolation("unknown parity case");
}

double eval_ftilde_reference(const TargetFunction& f, const ConstructionPlan& plan,
                             std::span<const double> x) {
    CoefficientTable table(f, plan.N);
    return eval_ftilde_reference(table, plan, x);
}

}  // namespace narrownet
