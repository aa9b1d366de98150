#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "narrownet/network.hpp"
#include "narrownet/taylor_partition.hpp"

namespace narrownet {

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimal: H ~ n^{d/(4 beta + 2d)}. Suboptimal: H ~ n^{d/(2(beta + d))} log2(n)^2.
enum class SizingRule { Optimal, Suboptimal };

std::string to_string(SizingRule r);
SizingRule parse_sizing_rule(const std::string& s);

struct TrainerConfig {
    std::size_t steps = 2000;
    double epochs = 100.0;    // when positive, at least this many passes over the data
    std::size_t batch = 64;
    double lr = 1e-2;
    double lr_final = 3e-5;   // cosine decay from lr to lr_final
    int restarts = 8;
};

struct ExperimentConfig {
    int d = 1;
    int beta = 2;
    std::string target = "sin_scaled";
    double noise_sd = 0.1;
    std::vector<std::size_t> n_grid{512, 1024, 2048, 4096, 8192};
    std::vector<SizingRule> rules{SizingRule::Optimal};
    double clamp_M = 1.0;
    double c_H = 1.0;
    double c_L = 1.0;
    TrainerConfig trainer;
    std::uint64_t seed = 1;
    int seeds = 5;
    std::size_t n_test = 100000;
};

void validate(const ExperimentConfig& c);
ExperimentConfig parse_experiment_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& c);

struct Dataset {
    std::size_t d = 0;
    std::vector<double> x;   // n x d row-major
    std::vector<double> y;

    std::size_t size() const { return y.size(); }
};

// X uniform on [-1,1]^d; y = f(x) + noise, noise Gaussian with sd noise_sd,
// redrawn until |y| <= M.
Dataset gen_data(const TargetFunction& f, std::size_t n, double noise_sd, double M, std::uint64_t seed);
Dataset gen_data(const ExperimentConfig& c, std::size_t n, std::uint64_t seed);

struct Architecture {
    std::size_t H = 0;
    std::size_t L = 0;
};

double width_exponent(SizingRule r, int d, int beta);
Architecture size_architecture(SizingRule r, std::size_t n, int d, int beta, double c_H = 1.0,
                               double c_L = 1.0);

// Dense ReLU network with L hidden layers of width H and one output.
class DenseMlp {
public:
    DenseMlp() = default;
    DenseMlp(std::size_t d, Architecture arch);

    // He-normal weights, zero biases
    void init(std::mt19937_64& rng);

    std::size_t input_dim() const { return sizes_.front(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t parameter_count() const;

    // parameters flattened layer by layer, weights (row-major) then biases
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    // index of weight (layer, row, col) inside params()
    std::size_t weight_index(std::size_t layer, std::size_t row, std::size_t col) const;
    std::size_t weight_count() const;

    double predict(std::span<const double> x) const;
    void predict_batch(std::span<const double> xs, std::size_t n, std::span<double> out) const;

    // Mean squared error over the rows listed in idx. grad, when given, receives
    // its gradient; pattern receives the sign of every hidden pre-activation.
    double evaluate(const Dataset& data, std::span<const std::size_t> idx, std::vector<double>* grad,
                    std::vector<std::uint8_t>* pattern = nullptr) const;
    double loss(const Dataset& data, std::span<const std::size_t> idx) const {
        return evaluate(data, idx, nullptr);
    }
    double loss(const Dataset& data) const;

    ReluNetwork to_network() const;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> w_off_, b_off_;
    std::size_t weights_ = 0;
    std::vector<double> params_;
};

// prediction truncated to [-2M, 2M]
double clamp_prediction(double v, double M);

// net followed by v -> clamp(v, -2M, 2M) as one ReLU network
ReluNetwork clamped_network(const DenseMlp& mlp, double M);

struct TrainResult {
    DenseMlp net;
    double train_mse = 0.0;
    int restarts_used = 0;
    int lr_halvings = 0;
};

TrainResult train(const Dataset& data, Architecture arch, const TrainerConfig& trainer, std::uint64_t seed);

double test_mse(const DenseMlp& net, const TargetFunction& f, double M, std::size_t n_points,
                std::uint64_t seed);

struct GradientCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
};

// Backprop against central differences on n_weights randomly chosen weights.
// Weights whose perturbation flips a ReLU on the probe batch are redrawn.
GradientCheck gradient_check(const DenseMlp& net, const Dataset& data, std::size_t n_weights,
                             std::uint64_t seed, double h = 1e-6);

struct RateCell {
    SizingRule rule = SizingRule::Optimal;
    std::size_t n = 0;
    int seed_index = 0;
    Architecture arch;
    double train_mse = 0.0;
    double test_mse = 0.0;
};

struct RateSummary {
    SizingRule rule = SizingRule::Optimal;
    std::vector<std::size_t> n;
    std::vector<double> median_test_mse;
    std::vector<Architecture> arch;
    double slope = 0.0;
    double slope_half_width = 0.0;
};

struct RateResult {
    ExperimentConfig config;
    std::vector<RateCell> cells;
    std::vector<RateSummary> summaries;
    bool partial = false;
    std::string failure;
};

RateResult run_rate_study(const ExperimentConfig& c);

std::string rate_cells_csv(const RateResult& r);
std::string rate_summary_json(const RateResult& r);
// cells.csv, summary.json and one gnuplot data file per rule
void write_rate_outputs(const RateResult& r, const std::string& dir, bool force);

}  // namespace narrownet
