#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "narrownet/narrow_builder.hpp"
#include "narrownet/network.hpp"

namespace narrownet {

using PointFn = std::function<double(std::span<const double>)>;

constexpr double kOracleTolerance = 1e-8;
constexpr double kWidthSlopeSlack = 0.15;
constexpr double kWeightSlopeSlack = 0.2;
// largest admitted depth increase per halving of eps
constexpr double kDepthStepPerHalving = 8.0;

// NARROWNET_THREADS if set and positive, else the hardware concurrency.
std::size_t worker_count();

// Splits [0, n) into contiguous chunks and runs body(begin, end) on up to
// worker_count() threads.
void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Intervals per axis of the default tensor grid; 0 above three dimensions.
int default_resolution(std::size_t d);

struct SupError {
    double grid_max = 0.0;
    double random_max = 0.0;
    std::size_t grid_points = 0;
    std::size_t random_points = 0;
};

// Grid with resolution intervals per axis (skipped for d > 3) plus n_random
// uniform points drawn from seed.
SupError sup_error(const ReluNetwork& net, const PointFn& f, std::size_t d, int resolution,
                   std::size_t n_random, std::uint64_t seed);

// least-squares slope of log(ys) against log(xs)
double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

// series of (eps, stats) with at least three eps in geometric progression
std::vector<BoundCheck> check_bounds(const std::vector<std::pair<double, NetworkStats>>& series,
                                     int d, int beta);

double oracle_compare(const ReluNetwork& net, const PointFn& reference, std::size_t n_points,
                      std::uint64_t seed);

struct VerificationReport {
    std::string target;
    int d = 0;
    int beta = 0;
    double eps = 0.0;
    int resolution = 0;
    SupError sup;
    NetworkStats stats;
    std::vector<BoundCheck> bound_checks;
    std::optional<double> oracle_max_dev;
    std::uint64_t seed = 0;

    bool pass() const;
};

// Sup-error sweep plus the eps gate, the oracle gate when a reference is
// given, and any extra checks.
VerificationReport verify_network(const ReluNetwork& net, const PointFn& f, const std::string& target,
                                  int d, int beta, double eps, int resolution, std::size_t n_random,
                                  std::uint64_t seed, const PointFn* reference = nullptr,
                                  std::vector<BoundCheck> extra_checks = {});

std::string report_json(const VerificationReport& r);
std::string bound_checks_csv(const std::vector<BoundCheck>& checks);

}  // namespace narrownet
