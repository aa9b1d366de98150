#include "narrownet/verification.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/errors.hpp"

namespace narrownet {

std::size_t worker_count() {
    if (const char* env = std::getenv("NARROWNET_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t tasks = (n + chunk - 1) / chunk;
    const std::size_t workers = std::min(worker_count(), tasks);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n; b += chunk) body(b, std::min(n, b + chunk));
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t t = next.fetch_add(1);
                if (t >= tasks) return;
                try {
                    body(t * chunk, std::min(n, (t + 1) * chunk));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!failure) failure = std::current_exception();
                    next.store(tasks);
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

int default_resolution(std::size_t d) {
    switch (d) {
        case 1: return 4096;
        case 2: return 256;
        case 3: return 48;
        default: return 0;
    }
}

namespace {

double gap(double a, double b) {
    double g = std::fabs(a - b);
    return std::isnan(g) ? std::numeric_limits<double>::infinity() : g;
}

// max |net - f| over count points produced by fill(index, dest)
double max_gap(const ReluNetwork& net, const PointFn& f, std::size_t d, std::size_t count,
               const std::function<void(std::size_t, double*)>& fill) {
    std::mutex m;
    double worst = 0.0;
    parallel_for(count, 4096, [&](std::size_t begin, std::size_t end) {
        const std::size_t n = end - begin;
        std::vector<double> xs(n * d), out(n);
        for (std::size_t i = 0; i < n; ++i) fill(begin + i, &xs[i * d]);
        net.eval_batch(xs, n, out);
        double local = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            local = std::max(local, gap(out[i], f(std::span<const double>(&xs[i * d], d))));
        }
        std::lock_guard<std::mutex> lock(m);
        worst = std::max(worst, local);
    });
    return worst;
}

std::vector<double> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> pts(n * d);
    for (auto& v : pts) v = u(rng);
    return pts;
}

}  // namespace

SupError sup_error(const ReluNetwork& net, const PointFn& f, std::size_t d, int resolution,
                   std::size_t n_random, std::uint64_t seed) {
    if (net.shape_only()) throw InputError("cannot measure the error of a shape-only network");
    if (net.input_dim() != d || net.output_dim() != 1) {
        throw InputError(fmt::format("network maps {} -> {}, expected {} -> 1", net.input_dim(),
                                     net.output_dim(), d));
    }
    SupError r;
    if (d <= 3) {
        if (resolution < 2) throw InputError(fmt::format("grid resolution {} below 2", resolution));
        const std::size_t side = static_cast<std::size_t>(resolution) + 1;
        std::size_t total = 1;
        for (std::size_t k = 0; k < d; ++k) total *= side;
        r.grid_points = total;
        r.grid_max = max_gap(net, f, d, total, [&](std::size_t id, double* x) {
            for (std::size_t k = d; k-- > 0;) {
                x[k] = -1.0 + 2.0 * static_cast<double>(id % side) / resolution;
                id /= side;
            }
        });
    }
    if (n_random > 0) {
        auto pts = random_points(n_random, d, seed);
        r.random_points = n_random;
        r.random_max = max_gap(net, f, d, n_random, [&](std::size_t id, double* x) {
            std::copy_n(&pts[id * d], d, x);
        });
    }
    return r;
}

double fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw InputError("slope fit needs two or more points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InputError("log-log fit needs positive values");
        mx += std::log(xs[i]);
        my += std::log(ys[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = std::log(xs[i]) - mx;
        sxy += dx * (std::log(ys[i]) - my);
        sxx += dx * dx;
    }
    if (sxx == 0.0) throw InputError("slope fit needs distinct abscissae");
    return sxy / sxx;
}

std::vector<BoundCheck> check_bounds(const std::vector<std::pair<double, NetworkStats>>& series,
                                     int d, int beta) {
    if (series.size() < 3) throw InputError("bound checks need at least three eps values");
    auto s = series;
    std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double ratio = s[0].first / s[1].first;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(s[i].first > 0.0 && s[i].first < 1.0)) throw InputError("eps values must lie in (0,1)");
        if (i > 0 && std::fabs(s[i - 1].first / s[i].first - ratio) > 1e-6 * ratio) {
            throw InputError("eps values must form a geometric progression");
        }
    }
    if (!(ratio > 1.0)) throw InputError("eps values must be distinct");
    std::vector<double> inv, width, weights;
    for (const auto& [eps, st] : s) {
        inv.push_back(1.0 / eps);
        width.push_back(static_cast<double>(std::max<std::size_t>(st.width, 1)));
        weights.push_back(static_cast<double>(std::max<std::uint64_t>(st.weight_count, 1)));
    }
    const double dd = d, bb = beta;
    std::vector<BoundCheck> out;
    double ws = fit_loglog_slope(inv, width);
    double wl = dd / (2.0 * bb) + kWidthSlopeSlack;
    out.push_back({"width_slope", fmt::format("H ~ eps^-s with s <= {:.4g}", wl), ws, ws <= wl});
    double cs = fit_loglog_slope(inv, weights);
    double cl = dd / bb + kWeightSlopeSlack;
    out.push_back({"weight_slope", fmt::format("W ~ eps^-s with s <= {:.4g}", cl), cs, cs <= cl});
    double step = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        double inc = static_cast<double>(s[i].second.depth) - static_cast<double>(s[i - 1].second.depth);
        step = std::max(step, inc * std::log(2.0) / std::log(ratio));
    }
    out.push_back({"depth_step",
                   fmt::format("depth increase per halving of eps <= {:.4g}", kDepthStepPerHalving), step,
                   step <= kDepthStepPerHalving});
    return out;
}

double oracle_compare(const ReluNetwork& net, const PointFn& reference, std::size_t n_points,
                      std::uint64_t seed) {
    const std::size_t d = net.input_dim();
    auto pts = random_points(n_points, d, seed);
    return max_gap(net, reference, d, n_points, [&](std::size_t id, double* x) {
        std::copy_n(&pts[id * d], d, x);
    });
}

bool VerificationReport::pass() const {
    return std::all_of(bound_checks.begin(), bound_checks.end(), [](const auto& c) { return c.pass; });
}

VerificationReport verify_network(const ReluNetwork& net, const PointFn& f, const std::string& target,
                                  int d, int beta, double eps, int resolution, std::size_t n_random,
                                  std::uint64_t seed, const PointFn* reference,
                                  std::vector<BoundCheck> extra_checks) {
    VerificationReport r;
    r.target = target;
    r.d = d;
    r.beta = beta;
    r.eps = eps;
    r.resolution = d <= 3 ? resolution : 0;
    r.seed = seed;
    r.sup = sup_error(net, f, static_cast<std::size_t>(d), resolution, n_random, seed);
    r.stats = stats(net);
    const double worst = std::max(r.sup.grid_max, r.sup.random_max);
    r.bound_checks.push_back({"sup_error", fmt::format("max |net - f| <= {}", eps), worst, worst <= eps});
    if (reference) {
        double dev = oracle_compare(net, *reference, 1000, seed ^ 0x9e3779b97f4a7c15ULL);
        r.oracle_max_dev = dev;
        r.bound_checks.push_back(
            {"oracle", fmt::format("max |net - reference| <= {:g}", kOracleTolerance), dev, dev <= kOracleTolerance});
    }
    for (auto& c : extra_checks) r.bound_checks.push_back(std::move(c));
    return r;
}

std::string report_json(const VerificationReport& r) {
    nlohmann::ordered_json j;
    j["target"] = r.target;
    j["d"] = r.d;
    j["beta"] = r.beta;
    j["eps"] = r.eps;
    j["resolution"] = r.resolution;
    j["sup_error_grid"] = r.sup.grid_max;
    j["sup_error_random"] = r.sup.random_max;
    j["grid_points"] = r.sup.grid_points;
    j["n_samples"] = r.sup.random_points;
    j["stats"] = {{"depth", r.stats.depth},
                  {"width", r.stats.width},
                  {"weight_count", r.stats.weight_count},
                  {"nonzeros", r.stats.nonzeros}};
    j["bound_checks"] = nlohmann::ordered_json::array();
    for (const auto& c : r.bound_checks) {
        j["bound_checks"].push_back(
            {{"name", c.name}, {"claimed_form", c.claimed_form}, {"measured", c.measured}, {"pass", c.pass}});
    }
    j["oracle_max_dev"] = r.oracle_max_dev ? nlohmann::ordered_json(*r.oracle_max_dev) : nlohmann::ordered_json();
    j["seed"] = r.seed;
    j["pass"] = r.pass();
    return j.dump(2);
}

std::string bound_checks_csv(const std::vector<BoundCheck>& checks) {
    std::ostringstream out;
    out << "name,claimed_form,measured,pass\n";
    for (const auto& c : checks) {
        out << c.name << ",\"" << c.claimed_form << "\"," << fmt::format("{:.17g}", c.measured) << ","
            << (c.pass ? "true" : "false") << "\n";
    }
    return out.str();
}

}  // namespace narrownet
