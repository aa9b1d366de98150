#include "narrownet/taylor_partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "narrownet/errors.hpp"

namespace narrownet {

std::string to_string(ParityCase c) {
    switch (c) {
        case ParityCase::Even: return "even";
        case ParityCase::OddGt1: return "odd";
        case ParityCase::One: return "one";
    }
    return "?";
}

namespace {

double factorial(int n) {
    double r = 1.0;
    for (int k = 2; k <= n; ++k) r *= k;
    return r;
}

void check_eps(double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw InputError(fmt::format("eps={} outside (0,1)", eps));
}

}  // namespace

int choose_N(double eps, int beta, int d) {
    check_eps(eps);
    if (beta < 1 || d < 1) throw InputError("beta and d must be positive");
    double c = factorial(beta) / (std::pow(2.0, d) * std::pow(static_cast<double>(d), beta));
    double x = std::pow(c * eps / 2.0, -1.0 / beta);
    if (!(x <= kMaxGridSize)) {
        throw InfeasibleConstruction(
            fmt::format("grid size {:.3g} exceeds the limit {}", x, kMaxGridSize));
    }
    return std::max(1, static_cast<int>(std::ceil(x - 1e-9)));
}

double choose_delta(double eps, int beta, int d) {
    check_eps(eps);
    return eps / (std::pow(2.0, d + 1) * std::pow(static_cast<double>(d), beta) * (d + beta));
}

ParityCase parity_of(int d) {
    if (d == 1) return ParityCase::One;
    return d % 2 == 0 ? ParityCase::Even : ParityCase::OddGt1;
}

ConstructionPlan make_plan(double eps, int beta, int d, std::optional<int> N_override) {
    check_eps(eps);
    if (beta < 1) throw InputError("beta must be >= 1");
    if (d < 1) throw InputError("d must be >= 1");
    ConstructionPlan p;
    p.eps = eps;
    p.beta = beta;
    p.d = d;
    p.parity_case = parity_of(d);
    if (N_override) {
        if (*N_override < 1 || *N_override > kMaxGridSize) throw InputError("N override out of range");
        p.N_formula = *N_override;
    } else {
        p.N_formula = choose_N(eps, beta, d);
    }
    p.N = p.N_formula;
    if (p.parity_case != ParityCase::Even) p.N = std::max(p.N, 4);
    p.delta = choose_delta(eps, beta, d);
    p.Q = d + beta;
    if (p.parity_case != ParityCase::Even) {
        int A = 1;
        while (A * A < 2 * p.N + 1) ++A;
        p.A = A;
    }
    return p;
}

std::vector<MultiIndex> multi_indices(std::size_t d, int max_order) {
    std::vector<MultiIndex> out;
    if (max_order < 0) return out;
    for (int o = 0; o <= max_order; ++o) {
        // lexicographic enumeration of compositions of o into d parts
        MultiIndex a(d, 0);
        std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
            if (k + 1 == d) {
                a[k] = left;
                out.push_back(a);
                return;
            }
            for (int v = left; v >= 0; --v) {
                a[k] = v;
                rec(k + 1, left - v);
            }
        };
        if (d == 0) continue;
        rec(0, o);
    }
    return out;
}

int order(const MultiIndex& a) {
    int s = 0;
    for (int v : a) s += v;
    return s;
}

double multi_factorial(const MultiIndex& a) {
    double r = 1.0;
    for (int v : a) r *= factorial(v);
    return r;
}

std::vector<double> taylor_coeffs(const TargetFunction& f, const GridIndex& m, int N) {
    if (m.size() != f.dim) throw InputError("grid index dimension mismatch");
    std::vector<double> x(f.dim);
    for (std::size_t k = 0; k < f.dim; ++k) {
        if (m[k] < -N || m[k] > N) throw InputError("grid index out of range");
        x[k] = static_cast<double>(m[k]) / N;
    }
    auto alphas = multi_indices(f.dim, f.beta - 1);
    std::vector<double> out;
    out.reserve(alphas.size());
    for (const auto& a : alphas) {
        double v = f.deriv(a, x);
        if (!std::isfinite(v)) {
            throw InputError(fmt::format("derivative oracle failed at m={} alpha={}",
                                         fmt::join(m, ","), fmt::join(a, ",")));
        }
        double c = v / multi_factorial(a);
        if (std::fabs(c) > 1.0 + 1e-9) {
            throw SobolevViolation(fmt::format(
                "Taylor coefficient {} at m=({}) alpha=({}) exceeds 1; rescale the target",
                c, fmt::join(m, ","), fmt::join(a, ",")));
        }
        out.push_back(c);
    }
    return out;
}

CoefficientTable::CoefficientTable(std::size_t d, int beta, int N)
    : d_(d), N_(N), alphas_(multi_indices(d, beta - 1)) {
    double cells = std::pow(2.0 * N + 1.0, static_cast<double>(d)) * alphas_.size();
    if (cells > 4e8) {
        throw InfeasibleConstruction(fmt::format("coefficient table with {:.3g} entries", cells));
    }
    values_.assign(static_cast<std::size_t>(cells), 0.0);
}

CoefficientTable::CoefficientTable(const TargetFunction& f, int N)
    : CoefficientTable(f.dim, f.beta, N) {
    const std::size_t na = alphas_.size();
    const std::size_t side = 2 * static_cast<std::size_t>(N) + 1;
    std::size_t total = values_.size() / na;
    GridIndex m(d_);
    for (std::size_t lin = 0; lin < total; ++lin) {
        std::size_t r = lin;
        for (std::size_t k = d_; k-- > 0;) {
            m[k] = static_cast<int>(r % side) - N;
            r /= side;
        }
        auto c = taylor_coeffs(f, m, N);
        std::copy(c.begin(), c.end(), values_.begin() + lin * na);
    }
}

std::size_t CoefficientTable::alpha_index(const MultiIndex& a) const {
    auto it = std::find(alphas_.begin(), alphas_.end(), a);
    if (it == alphas_.end()) throw ContractViolation("multi-index not in coefficient table");
    return static_cast<std::size_t>(it - alphas_.begin());
}

std::size_t CoefficientTable::linear(const GridIndex& m) const {
    const std::size_t side = 2 * static_cast<std::size_t>(N_) + 1;
    std::size_t lin = 0;
    for (std::size_t k = 0; k < d_; ++k) lin = lin * side + static_cast<std::size_t>(m[k] + N_);
    return lin;
}

double CoefficientTable::at(const GridIndex& m, std::size_t alpha_idx) const {
    for (int v : m) {
        if (v < -N_ || v > N_) return 0.0;
    }
    return values_[linear(m) * alphas_.size() + alpha_idx];
}

double psi_value(double z) {
    double a = std::fabs(z);
    if (a >= 2.0) return 0.0;
    if (a <= 1.0) return 1.0;
    return 2.0 - a;
}

double grid_bump(double x, int i, int N) { return psi_value(3.0 * N * x - 3.0 * i); }

std::vector<int> active_indices(double x, int N) {
    std::vector<int> out;
    int c = static_cast<int>(std::floor(N * x));
    for (int i = c - 1; i <= c + 2; ++i) {
        if (i < -N || i > N) continue;
        if (grid_bump(x, i, N) != 0.0) out.push_back(i);
    }
    return out;
}

double eval_phi(const GridIndex& m, int N, std::span<const double> x) {
    double r = 1.0;
    for (std::size_t k = 0; k < m.size(); ++k) r *= grid_bump(x[k], m[k], N);
    return r;
}

double eval_f1(const TargetFunction& f, const ConstructionPlan& plan, std::span<const double> x) {
    const std::size_t d = f.dim;
    std::vector<std::vector<int>> act(d);
    for (std::size_t k = 0; k < d; ++k) act[k] = active_indices(x[k], plan.N);
    auto alphas = multi_indices(d, f.beta - 1);
    double total = 0.0;
    std::size_t count = 0;
    GridIndex m(d);
    std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == d) {
            ++count;
            double phi = eval_phi(m, plan.N, x);
            auto a = taylor_coeffs(f, m, plan.N);
            double P = 0.0;
            for (std::size_t j = 0; j < alphas.size(); ++j) {
                double mono = 1.0;
                for (std::size_t q = 0; q < d; ++q) {
                    mono *= std::pow(x[q] - static_cast<double>(m[q]) / plan.N, alphas[j][q]);
                }
                P += a[j] * mono;
            }
            total += phi * P;
            return;
        }
        for (int i : act[k]) {
            m[k] = i;
            rec(k + 1);
        }
    };
    rec(0);
    if (count > (std::size_t{1} << d)) throw ContractViolation("more than 2^d active cells");
    return total;
}

namespace {

double sin_derivative(double s, int order) {
    switch (order % 4) {
        case 0: return std::sin(s);
        case 1: return std::cos(s);
        case 2: return -std::sin(s);
        default: return -std::cos(s);
    }
}

// d^n/dx^n exp(-x^2) = (-1)^n H_n(x) exp(-x^2)
double gauss_derivative(double x, int n) {
    double h0 = 1.0, h1 = 2.0 * x;
    double h = n == 0 ? h0 : h1;
    for (int k = 1; k < n; ++k) {
        h = 2.0 * x * h1 - 2.0 * k * h0;
        h0 = h1;
        h1 = h;
    }
    return (n % 2 ? -1.0 : 1.0) * h * std::exp(-x * x);
}

double gauss_scale(std::size_t d, int beta) {
    std::vector<double> sup(beta + 1, 0.0);
    for (int n = 0; n <= beta; ++n) {
        for (int i = 0; i <= 20000; ++i) {
            double x = -1.0 + i / 10000.0;
            sup[n] = std::max(sup[n], std::fabs(gauss_derivative(x, n)));
        }
    }
    double best = 0.0;
    for (const auto& a : multi_indices(d, beta)) {
        double p = 1.0;
        for (int v : a) p *= sup[v];
        best = std::max(best, p);
    }
    return std::max(best, 1.0);
}

bool is_zero_index(const MultiIndex& a) {
    return std::all_of(a.begin(), a.end(), [](int v) { return v == 0; });
}

}  // namespace

std::vector<std::string> target_names() {
    return {"const", "coord_k", "prod_pair", "sin_scaled", "gauss_bump", "poly_mix", "mean"};
}

TargetFunction make_target(const std::string& spec, std::size_t d, int beta) {
    if (d < 1) throw InputError("target dimension must be positive");
    if (beta < 1) throw InputError("beta must be >= 1");
    std::string name = spec;
    std::string param;
    if (auto pos = spec.find(':'); pos != std::string::npos) {
        name = spec.substr(0, pos);
        param = spec.substr(pos + 1);
    }
    TargetFunction f;
    f.name = spec;
    f.dim = d;
    f.beta = beta;
    if (name == "const") {
        double c = param.empty() ? 0.5 : std::stod(param);
        if (std::fabs(c) > 1.0) throw SobolevViolation("constant target must lie in [-1,1]");
        f.eval = [c](std::span<const double>) { return c; };
        f.deriv = [c](const MultiIndex& a, std::span<const double>) {
            return is_zero_index(a) ? c : 0.0;
        };
    } else if (name == "coord_k" || name.rfind("coord_", 0) == 0) {
        std::size_t k = 1;
        if (name != "coord_k") k = std::stoul(name.substr(6));
        if (!param.empty()) k = std::stoul(param);
        if (k < 1 || k > d) throw InputError(fmt::format("coordinate {} outside 1..{}", k, d));
        --k;
        f.eval = [k](std::span<const double> x) { return x[k]; };
        f.deriv = [k](const MultiIndex& a, std::span<const double> x) {
            int o = order(a);
            if (o == 0) return x[k];
            if (o == 1 && a[k] == 1) return 1.0;
            return 0.0;
        };
    } else if (name == "prod_pair") {
        if (d < 2) throw InputError("prod_pair needs d >= 2");
        f.eval = [](std::span<const double> x) { return x[0] * x[1] / 4.0; };
        f.deriv = [](const MultiIndex& a, std::span<const double> x) {
            for (std::size_t j = 2; j < a.size(); ++j) {
                if (a[j] != 0) return 0.0;
            }
            if (a[0] > 1 || a[1] > 1) return 0.0;
            return (a[0] ? 1.0 : x[0]) * (a[1] ? 1.0 : x[1]) / 4.0;
        };
    } else if (name == "sin_scaled") {
        f.eval = [](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return std::sin(s) / 2.0;
        };
        f.deriv = [](const MultiIndex& a, std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return sin_derivative(s, order(a)) / 2.0;
        };
    } else if (name == "gauss_bump") {
        double S = gauss_scale(d, beta);
        f.sobolev_scale = S;
        f.eval = [S](std::span<const double> x) {
            double r = 1.0;
            for (double v : x) r *= std::exp(-v * v);
            return r / S;
        };
        f.deriv = [S](const MultiIndex& a, std::span<const double> x) {
            double r = 1.0;
            for (std::size_t k = 0; k < a.size(); ++k) r *= gauss_derivative(x[k], a[k]);
            return r / S;
        };
    } else if (name == "poly_mix") {
        const double dd = static_cast<double>(d);
        f.eval = [dd](std::span<const double> x) {
            double sq = 0.0, prod = 1.0;
            for (double v : x) {
                sq += v * v;
                prod *= v;
            }
            return 0.25 * sq / dd + 0.25 * prod + 0.25 * x[0];
        };
        f.deriv = [dd](const MultiIndex& a, std::span<const double> x) {
            int o = order(a);
            double r = 0.0;
            if (o == 0) {
                double sq = 0.0;
                for (double v : x) sq += v * v;
                r += 0.25 * sq / dd + 0.25 * x[0];
            } else {
                std::size_t k = 0;
                while (a[k] == 0) ++k;
                if (o == 1) r += 0.5 * x[k] / dd + (k == 0 ? 0.25 : 0.0);
                if (o == 2 && a[k] == 2) r += 0.5 / dd;
            }
            bool mixed_ok = std::all_of(a.begin(), a.end(), [](int v) { return v <= 1; });
            if (mixed_ok) {
                double p = 0.25;
                for (std::size_t j = 0; j < a.size(); ++j) p *= a[j] ? 1.0 : x[j];
                r += p;
            }
            return r;
        };
    } else if (name == "mean") {
        const double dd = static_cast<double>(d);
        f.eval = [dd](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return s / dd;
        };
        f.deriv = [dd](const MultiIndex& a, std::span<const double> x) {
            int o = order(a);
            if (o == 0) {
                double s = 0.0;
                for (double v : x) s += v;
                return s / dd;
            }
            return o == 1 ? 1.0 / dd : 0.0;
        };
    } else if (name == "sum") {
        f.eval = [](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return s;
        };
        f.deriv = [](const MultiIndex& a, std::span<const double> x) {
            int o = order(a);
            if (o == 0) {
                double s = 0.0;
                for (double v : x) s += v;
                return s;
            }
            return o == 1 ? 1.0 : 0.0;
        };
    } else {
        throw InputError(fmt::format("unknown target '{}' (known: {})", spec,
                                     fmt::join(target_names(), ", ")));
    }
    return f;
}

TargetFunction finite_difference_target(std::string name, std::size_t d, int beta,
                                        std::function<double(std::span<const double>)> eval) {
    TargetFunction f;
    f.name = std::move(name);
    f.dim = d;
    f.beta = beta;
    f.finite_difference = true;
    f.eval = eval;
    const double h = std::cbrt(std::numeric_limits<double>::epsilon());
    auto deriv = std::make_shared<std::function<double(const MultiIndex&, std::vector<double>&)>>();
    *deriv = [eval, h, deriv](const MultiIndex& a, std::vector<double>& x) -> double {
        std::size_t k = 0;
        while (k < a.size() && a[k] == 0) ++k;
        if (k == a.size()) return eval(x);
        MultiIndex rest = a;
        --rest[k];
        const double x0 = x[k];
        const double step = h * std::max(1.0, std::fabs(x0));
        auto at = [&](double off) {
            x[k] = x0 + off * step;
            double v = (*deriv)(rest, x);
            x[k] = x0;
            return v;
        };
        return (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * step);
    };
    f.deriv = [deriv](const MultiIndex& a, std::span<const double> x) {
        std::vector<double> v(x.begin(), x.end());
        return (*deriv)(a, v);
    };
    return f;
}

TargetFunction rescale_into_unit_ball(const TargetFunction& f, std::size_t samples, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto alphas = multi_indices(f.dim, f.beta);
    double bound = 0.0;
    std::vector<double> x(f.dim);
    for (std::size_t s = 0; s < samples; ++s) {
        for (auto& v : x) v = u(rng);
        for (const auto& a : alphas) bound = std::max(bound, std::fabs(f.deriv(a, x)));
    }
    if (bound <= 1.0) return f;
    TargetFunction g = f;
    auto ev = f.eval;
    auto dv = f.deriv;
    g.eval = [ev, bound](std::span<const double> x) { return ev(x) / bound; };
    g.deriv = [dv, bound](const MultiIndex& a, std::span<const double> x) {
        return dv(a, x) / bound;
    };
    g.sobolev_scale = f.sobolev_scale * bound;
    return g;
}

}  // namespace narrownet
