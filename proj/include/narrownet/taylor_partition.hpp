#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace narrownet {

using MultiIndex = std::vector<int>;
using GridIndex = std::vector<int>;

struct TargetFunction {
    std::string name;
    std::size_t dim = 1;
    int beta = 1;
    std::function<double(std::span<const double>)> eval;
    std::function<double(const MultiIndex&, std::span<const double>)> deriv;
    double sobolev_scale = 1.0;
    bool finite_difference = false;

    double operator()(std::span<const double> x) const { return eval(x); }
};

enum class ParityCase { Even, OddGt1, One };

std::string to_string(ParityCase c);

struct ConstructionPlan {
    double eps = 0.0;
    int N = 0;
    int N_formula = 0;   // value of the grid-size formula before any adjustment
    double delta = 0.0;
    double Q = 0.0;
    int beta = 1;
    int d = 1;
    ParityCase parity_case = ParityCase::Even;
    int A = 0;           // ceil(sqrt(2N+1)); 0 in the even case
};

constexpr int kMaxGridSize = 1000000;

int choose_N(double eps, int beta, int d);
double choose_delta(double eps, int beta, int d);
ParityCase parity_of(int d);

// N_override replaces the formula value (still subject to N >= 4 in the odd cases).
ConstructionPlan make_plan(double eps, int beta, int d, std::optional<int> N_override = {});

// all multi-indices of length d with order <= max_order, in graded lexicographic order
std::vector<MultiIndex> multi_indices(std::size_t d, int max_order);
int order(const MultiIndex& a);
double multi_factorial(const MultiIndex& a);

// a_{m,alpha} = D^alpha f(m/N) / alpha! for every |alpha| <= beta-1, in
// multi_indices(d, beta-1) order
std::vector<double> taylor_coeffs(const TargetFunction& f, const GridIndex& m, int N);

// Coefficients for every grid point, row-major over m in [-N,N]^d.
class CoefficientTable {
public:
    CoefficientTable(const TargetFunction& f, int N);
    CoefficientTable(std::size_t d, int beta, int N);   // all zero

    int N() const { return N_; }
    std::size_t d() const { return d_; }
    const std::vector<MultiIndex>& alphas() const { return alphas_; }
    std::size_t alpha_index(const MultiIndex& a) const;

    double at(const GridIndex& m, std::size_t alpha_idx) const;
    std::size_t linear(const GridIndex& m) const;

private:
    std::size_t d_;
    int N_;
    std::vector<MultiIndex> alphas_;
    std::vector<double> values_;
};

double psi_value(double z);

// psi(3N x - 3i): the one-dimensional partition factor at grid index i
double grid_bump(double x, int i, int N);

// grid indices i in [-N,N] with grid_bump(x, i, N) != 0
std::vector<int> active_indices(double x, int N);

double eval_phi(const GridIndex& m, int N, std::span<const double> x);

double eval_f1(const TargetFunction& f, const ConstructionPlan& plan, std::span<const double> x);

// Plain-arithmetic evaluation of the exact formula the constructed network
// implements, with every product replaced by the gadget recurrence.
double eval_ftilde_reference(const TargetFunction& f, const ConstructionPlan& plan,
                             std::span<const double> x);
double eval_ftilde_reference(const CoefficientTable& table, const ConstructionPlan& plan,
                             std::span<const double> x);

// Built-in targets. name is one of const, coord_k, prod_pair, sin_scaled,
// gauss_bump, poly_mix, mean, optionally followed by ":param" (the constant
// for const, the 1-based coordinate for coord_k).
// "sum" is also accepted; it leaves the unit ball for d >= 2 and is not listed
// by target_names().
TargetFunction make_target(const std::string& name, std::size_t d, int beta);
std::vector<std::string> target_names();

// Wraps a plain function; derivatives come from nested fourth-order central
// differences, which lose accuracy quickly with the derivative order.
TargetFunction finite_difference_target(std::string name, std::size_t d, int beta,
                                        std::function<double(std::span<const double>)> eval);

// Samples |D^alpha f| for |alpha| <= beta and, when the bound exceeds one,
// returns f divided by that bound with sobolev_scale set accordingly.
TargetFunction rescale_into_unit_ball(const TargetFunction& f, std::size_t samples = 2000,
                                      unsigned seed = 1);

}  // namespace narrownet
