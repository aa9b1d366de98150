#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "narrownet/sparse_matrix.hpp"

namespace narrownet {

enum class Activation { ReLU, Identity };

struct LayerSpec {
    SparseMatrix weights;         // out_dim x in_dim
    std::vector<double> biases;   // out_dim, empty for shape-only networks
    Activation activation = Activation::ReLU;

    std::size_t out_dim() const { return weights.rows(); }
    std::size_t in_dim() const { return weights.cols(); }
};

struct NetworkStats {
    std::size_t depth = 0;           // number of hidden layers
    std::size_t width = 0;           // widest hidden layer
    std::uint64_t weight_count = 0;  // dense count of weights and biases
    std::uint64_t nonzeros = 0;      // stored nonzero weights
};

// Feedforward ReLU network. Hidden layers use ReLU, the last layer is affine.
// A shape-only network carries layer sizes but no parameters; it exists so the
// size of very large constructions can be measured without materializing them.
class ReluNetwork {
public:
    ReluNetwork() = default;
    ReluNetwork(std::size_t input_dim, std::vector<LayerSpec> layers, bool shape_only = false);

    static ReluNetwork affine(SparseMatrix weights, std::vector<double> biases);
    static ReluNetwork identity(std::size_t dim);
    static ReluNetwork shape(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                             std::size_t output_dim);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return layers_.empty() ? input_dim_ : layers_.back().out_dim(); }
    std::size_t depth() const { return layers_.empty() ? 0 : layers_.size() - 1; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    bool shape_only() const { return shape_only_; }

    std::vector<std::size_t> hidden_sizes() const;

    std::vector<double> eval(std::span<const double> x) const;

    // xs holds count points row-major (count x input_dim); out receives
    // count x output_dim row-major.
    void eval_batch(std::span<const double> xs, std::size_t count, std::span<double> out) const;

private:
    std::size_t input_dim_ = 0;
    std::vector<LayerSpec> layers_;
    bool shape_only_ = false;
    // per layer, rows that can be nonzero when every input is zero
    std::vector<std::vector<std::uint32_t>> live_rows_;
    std::size_t widest_ = 0;
};

std::vector<double> eval_forward(const ReluNetwork& net, std::span<const double> x);
double eval_scalar(const ReluNetwork& net, std::span<const double> x);
double eval_scalar(const ReluNetwork& net, double x);

NetworkStats stats(const ReluNetwork& net);

ReluNetwork compose_serial(const ReluNetwork& first, const ReluNetwork& second);

ReluNetwork stack_parallel(const std::vector<ReluNetwork>& nets, bool shared_input);
ReluNetwork stack_parallel(const std::vector<const ReluNetwork*>& nets, bool shared_input);

// Stack with multiplicities: entry (net, k) contributes k copies of net.
ReluNetwork stack_parallel_counted(
    const std::vector<std::pair<const ReluNetwork*, std::size_t>>& nets, bool shared_input);

ReluNetwork pad_depth(const ReluNetwork& net, std::size_t target_depth);

// Pads every net to the common maximum depth.
std::vector<ReluNetwork> pad_to_common_depth(const std::vector<ReluNetwork>& nets);

ReluNetwork affine_combine(const std::vector<ReluNetwork>& nets, const std::vector<double>& coeffs,
                           double offset);

// net followed by the affine map y -> weights * y + biases
ReluNetwork compose_affine(const ReluNetwork& net, const SparseMatrix& weights,
                           const std::vector<double>& biases);

// Shape-only affine map of the given output size.
ReluNetwork compose_affine_shape(const ReluNetwork& net, std::size_t output_dim);

// Drops weights, keeping the layer sizes.
ReluNetwork to_shape(const ReluNetwork& net);

struct FullyConnectedReport {
    bool fully_connected = false;
    bool chain_ok = false;
    bool activations_ok = false;
    std::uint64_t weight_count = 0;
    std::uint64_t formula_weight_count = 0;
    bool weight_identity = false;
    bool dense_bound = false;   // W <= 3 H^2 L + 3 H
    double empirical_constant = 0.0;   // W / (H^2 max(L,1))
};

FullyConnectedReport assert_fully_connected(const ReluNetwork& net);

void serialize(const ReluNetwork& net, std::ostream& out);
std::string serialize(const ReluNetwork& net);
ReluNetwork deserialize(std::istream& in);
ReluNetwork deserialize(const std::string& text);

void save_network(const ReluNetwork& net, const std::string& path);
ReluNetwork load_network(const std::string& path);

}  // namespace narrownet
