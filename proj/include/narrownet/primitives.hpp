#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "narrownet/network.hpp"

namespace narrownet {

struct MultGadgetConfig {
    double Q = 1.0;
    double eps = 0.01;
    double delta_sq = 0.0;   // 8 eps / (3 Q^2)

    static MultGadgetConfig make(double Q, double eps);
    void validate() const;

    // Tolerance handed to each squaring branch. The polarization identity
    // multiplies squaring errors by 2 Q^2 and combines three of them.
    double branch_tolerance() const { return delta_sq / 16.0; }
    int stages() const;
};

// Smallest m >= 0 whose sawtooth interpolation error 2^{-2m-2} is below tol.
int squaring_stages(double tol);

ReluNetwork build_psi();

// psi(a * x[coord] + b) on an input of dimension input_dim
ReluNetwork build_psi_of_affine(std::size_t input_dim, std::size_t coord, double a, double b);

// x[coord] - shift as a ReLU network of the requested depth (>= 1), valid for
// x[coord] - shift >= -2.
ReluNetwork build_shifted_coordinate(std::size_t input_dim, std::size_t coord, double shift,
                                     std::size_t depth);

ReluNetwork build_squaring(double delta);

ReluNetwork build_mult(const MultGadgetConfig& cfg);

std::size_t mult_depth(const MultGadgetConfig& cfg);

// Applies one multiplication gadget per pair of input values and carries the
// pass values through unchanged. Outputs are ordered products first, then the
// passed values, both in the given order.
ReluNetwork build_mult_bank(std::size_t input_dim,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                            const std::vector<std::size_t>& passes, const MultGadgetConfig& cfg,
                            bool shape_only = false);

// Shape of a bank with the given gadget and pass counts.
ReluNetwork mult_bank_shape(std::size_t input_dim, std::size_t gadgets, std::size_t passes,
                            const MultGadgetConfig& cfg);

// Right-nested product f_0 x (f_1 x (... x f_{k-1})) of scalar factors that
// share one input.
ReluNetwork build_product_chain(const std::vector<ReluNetwork>& factors,
                                const MultGadgetConfig& cfg);

// follows a stage network with a bank of products on its outputs
ReluNetwork apply_products(const ReluNetwork& stage,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                           const std::vector<std::size_t>& passes, const MultGadgetConfig& cfg);

namespace reference {

double psi(double x);
double sawtooth_square(double x, int stages);
double mult(double x, double y, const MultGadgetConfig& cfg);

}  // namespace reference

}  // namespace narrownet
