#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "narrownet/network.hpp"
#include "narrownet/primitives.hpp"
#include "narrownet/taylor_partition.hpp"

namespace narrownet {

struct HalfSplit {
    std::vector<std::size_t> left_dims;
    std::vector<std::size_t> right_dims;
    std::optional<std::size_t> center_dim;
};

HalfSplit make_half_split(std::size_t d);

// Residue classes of the grid modulo A and the band structure used by the
// odd-dimensional and one-dimensional constructions.
struct GridGrouping {
    int N = 0;
    int A = 0;
    std::vector<std::vector<int>> groups;   // groups[g] = {-N + i A + g : i = 0..A-1}
    std::vector<int> g1_union;              // G_0, G_1, G_{A-1} restricted to [-N, N]
    std::vector<int> g2_union;              // G_2 .. G_{A-2} restricted to [-N, N]

    static int index_of(int b, int g, int N, int A) { return -N + b * A + g; }
    bool in_range(int m) const { return m >= -N && m <= N; }
    bool in_g2(int m) const;
    // (b, g) with m = -N + b A + g
    std::pair<int, int> band_of(int m) const;
    // number of bands meeting [-N, N]
    int band_count() const;
    // bands that contain at least one index of G_2 .. G_{A-2} inside [-N, N]
    std::vector<int> g2_bands() const;
};

GridGrouping build_grouping(int N);

enum class BuildMode { Full, ShapeOnly };

MultGadgetConfig gadget_config(const ConstructionPlan& plan);

// 1-d networks on an input of dimension input_dim, reading coordinate coord
ReluNetwork build_kappa(int b, const ConstructionPlan& plan, std::size_t input_dim = 1,
                        std::size_t coord = 0);
ReluNetwork build_band_indicator(int b, const ConstructionPlan& plan);

// Chain psi(3N(x_c - m_c/N)) ... (x_c - m_c/N)^{alpha_c} ... over the given
// coordinates, psi factors first.
ReluNetwork build_half_chain(std::size_t input_dim, const std::vector<std::size_t>& coords,
                             const std::vector<int>& m, const MultiIndex& alpha, int N,
                             const MultGadgetConfig& cfg);

struct ConvertParts {
    std::vector<ReluNetwork> m_parts;
    std::vector<ReluNetwork> alpha_parts;
    // coeffs[j] lists (m part index, coefficient) for alpha part j
    std::vector<std::vector<std::pair<std::size_t, double>>> coeffs;
    double scale_in = 1.0;
    double scale_out = 1.0;
};

// scale_out * sum_j ~x(scale_in * sum_i c_{j,i} m_part_i, alpha_part_j)
ReluNetwork mlp_convert(const ConvertParts& parts, const MultGadgetConfig& cfg);

ReluNetwork build_even(const CoefficientTable* table, const ConstructionPlan& plan,
                       BuildMode mode = BuildMode::Full);
ReluNetwork build_odd(const CoefficientTable* table, const ConstructionPlan& plan,
                      BuildMode mode = BuildMode::Full);
ReluNetwork build_1d(const CoefficientTable* table, const ConstructionPlan& plan,
                     BuildMode mode = BuildMode::Full);

// Wide comparator: one product chain per (m, alpha) cell of the full grid,
// summed by a single read-out.
ReluNetwork build_naive(const CoefficientTable* table, const ConstructionPlan& plan,
                        BuildMode mode = BuildMode::Full);

ReluNetwork build_from_plan(const CoefficientTable* table, const ConstructionPlan& plan,
                            BuildMode mode = BuildMode::Full);

struct BuildOptions {
    std::optional<int> N_override;
    BuildMode mode = BuildMode::Full;
};

struct BuildResult {
    ConstructionPlan plan;
    ReluNetwork network;
};

// Approximates f, assumed to lie in the unit ball, to sup-norm accuracy eps.
BuildResult build_approximator(const TargetFunction& f, double eps, const BuildOptions& opts = {});

struct BoundCheck {
    std::string name;
    std::string claimed_form;
    double measured = 0.0;
    bool pass = false;
};

std::vector<BoundCheck> single_build_checks(const ReluNetwork& net, const ConstructionPlan& plan);

std::string build_manifest_json(const ConstructionPlan& plan, const ReluNetwork& net,
                                const std::vector<BoundCheck>& checks);

}  // namespace narrownet
