#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrownet/narrow_builder.hpp"
#include "narrownet/network.hpp"
#include "narrownet/taylor_partition.hpp"

namespace narrownet {

// Inputs carry ids 1..d. Vertices carry ids d+1..T and read the values of
// their parents in the listed order.
struct CompositeVertex {
    int id = 0;
    std::vector<int> parents;
    std::string target;
    TargetFunction f;
};

struct CompositionGraph {
    std::size_t d = 0;
    std::size_t d_star = 0;
    int beta = 1;
    std::vector<CompositeVertex> vertices;

    int T() const;
    const CompositeVertex& vertex(int id) const;
};

// Structural checks, plus a sampled derivative-bound check when check_sobolev
// is set. Throws InputError (or SobolevViolation) naming the vertex.
void validate_graph(const CompositionGraph& g, bool check_sobolev = true);

CompositionGraph parse_graph_json(const std::string& text);
CompositionGraph load_graph(const std::string& path);
std::string graph_to_json(const CompositionGraph& g);

// ids of the non-input vertices in a topological order (ties by id)
std::vector<int> topological_order(const CompositionGraph& g);

// longest distance from the inputs; inputs have level 0
std::map<int, int> vertex_levels(const CompositionGraph& g);

// number of directed paths from each vertex to the output vertex
std::map<int, double> path_counts(const CompositionGraph& g);

double eval_composite(const CompositionGraph& g, std::span<const double> x);

// As a single target on [-1,1]^d; derivatives by finite differences.
TargetFunction composite_target(const CompositionGraph& g);

struct VertexBudget {
    int id = 0;
    double paths = 1.0;
    double eps = 0.0;
    ConstructionPlan plan;
    NetworkStats stats;
};

constexpr double kMinVertexEps = 1e-10;

// eps_j = eps / (T_eff * P_j), P_j = paths from j to the output
std::vector<VertexBudget> allocate_budgets(const CompositionGraph& g, double eps);

struct CompositeBuild {
    ReluNetwork network;
    std::vector<VertexBudget> budgets;
};

CompositeBuild build_composite(const CompositionGraph& g, double eps,
                               BuildMode mode = BuildMode::Full);

// clamp(v) = sigma(v+1) - sigma(v-1) - 1
ReluNetwork build_clamp();

// f_a(x1, x2), f_b(x3, x4), output mean(F5, F6)
CompositionGraph additive_pair_model(int beta, const std::string& fa = "sin_scaled",
                                     const std::string& fb = "poly_mix");

// F_{d+j} = f_{I_j}, then running sums F_{d+k+1} = f_{I_1} + f_{I_2}, ...
// over all coordinate subsets of size d_star in lexicographic order.
CompositionGraph interaction_model(std::size_t d, std::size_t d_star, int beta,
                                   const std::vector<std::string>& component_targets);

}  // namespace narrownet
