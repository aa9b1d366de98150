#include "narrownet/rate_experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/errors.hpp"
#include "narrownet/verification.hpp"

namespace narrownet {

std::string to_string(SizingRule r) { return r == SizingRule::Optimal ? "Optimal" : "Suboptimal"; }

SizingRule parse_sizing_rule(const std::string& s) {
    if (s == "Optimal" || s == "optimal") return SizingRule::Optimal;
    if (s == "Suboptimal" || s == "suboptimal") return SizingRule::Suboptimal;
    throw InputError(fmt::format("unknown sizing rule '{}' (Optimal or Suboptimal)", s));
}

void validate(const ExperimentConfig& c) {
    if (c.d < 1) throw InputError("experiment needs d >= 1");
    if (c.beta < 1) throw InputError("experiment needs beta >= 1");
    if (!(c.noise_sd >= 0.0)) throw InputError("noise_sd must be nonnegative");
    if (!(c.clamp_M >= 1.0)) throw InputError("clamp_M must be at least 1, the bound on the targets");
    if (c.n_grid.size() < 4) throw InputError("n_grid needs at least four sample sizes");
    for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
        if (c.n_grid[i] < 2) throw InputError("sample sizes must be at least 2");
        if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) throw InputError("n_grid must be strictly increasing");
    }
    if (c.rules.empty()) throw InputError("experiment needs at least one sizing rule");
    if (!(c.c_H > 0.0) || !(c.c_L > 0.0)) throw InputError("c_H and c_L must be positive");
    if (c.seeds < 1) throw InputError("experiment needs at least one seed");
    if (c.n_test < 1) throw InputError("n_test must be positive");
    const auto& t = c.trainer;
    if (t.steps < 1 || t.batch < 1) throw InputError("trainer needs positive steps and batch");
    if (!(t.epochs >= 0.0)) throw InputError("trainer epochs must be nonnegative");
    if (!(t.lr > 0.0) || !(t.lr_final > 0.0) || t.lr_final > t.lr) {
        throw InputError("trainer needs 0 < lr_final <= lr");
    }
    if (t.restarts < 1) throw InputError("trainer needs at least one restart");
    make_target(c.target, static_cast<std::size_t>(c.d), c.beta);
}

ExperimentConfig parse_experiment_json(const std::string& text) {
    ExperimentConfig c;
    try {
        auto j = nlohmann::json::parse(text);
        c.d = j.value("d", c.d);
        c.beta = j.value("beta", c.beta);
        c.target = j.value("target", c.target);
        c.noise_sd = j.value("noise_sd", c.noise_sd);
        if (j.contains("n_grid")) c.n_grid = j["n_grid"].get<std::vector<std::size_t>>();
        if (j.contains("rules")) {
            c.rules.clear();
            for (const auto& r : j["rules"]) c.rules.push_back(parse_sizing_rule(r.get<std::string>()));
        }
        c.clamp_M = j.value("clamp_M", c.clamp_M);
        c.c_H = j.value("c_H", c.c_H);
        c.c_L = j.value("c_L", c.c_L);
        c.seed = j.value("seed", c.seed);
        c.seeds = j.value("seeds", c.seeds);
        c.n_test = j.value("n_test", c.n_test);
        if (j.contains("trainer")) {
            const auto& t = j["trainer"];
            c.trainer.steps = t.value("steps", c.trainer.steps);
            c.trainer.epochs = t.value("epochs", c.trainer.epochs);
            c.trainer.batch = t.value("batch", c.trainer.batch);
            c.trainer.lr = t.value("lr", c.trainer.lr);
            c.trainer.lr_final = t.value("lr_final", c.trainer.lr_final);
            c.trainer.restarts = t.value("restarts", c.trainer.restarts);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("experiment config: {}", e.what()));
    }
    validate(c);
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("cannot open experiment config '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_json(ss.str());
}

std::string experiment_config_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["d"] = c.d;
    j["beta"] = c.beta;
    j["target"] = c.target;
    j["noise_sd"] = c.noise_sd;
    j["n_grid"] = c.n_grid;
    j["rules"] = nlohmann::ordered_json::array();
    for (auto r : c.rules) j["rules"].push_back(to_string(r));
    j["clamp_M"] = c.clamp_M;
    j["c_H"] = c.c_H;
    j["c_L"] = c.c_L;
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["n_test"] = c.n_test;
    j["trainer"] = {{"steps", c.trainer.steps},
                    {"epochs", c.trainer.epochs},
                    {"batch", c.trainer.batch},
                    {"lr", c.trainer.lr},
                    {"lr_final", c.trainer.lr_final},
                    {"restarts", c.trainer.restarts}};
    return j.dump(2);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

}  // namespace

Dataset gen_data(const TargetFunction& f, std::size_t n, double noise_sd, double M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    Dataset data;
    data.d = f.dim;
    data.x.resize(n * f.dim);
    data.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double* x = &data.x[i * f.dim];
        for (std::size_t k = 0; k < f.dim; ++k) x[k] = u(rng);
        double fx = f.eval(std::span<const double>(x, f.dim));
        if (std::fabs(fx) > M) throw InputError(fmt::format("target value {} exceeds M = {}", fx, M));
        double y = fx;
        if (noise_sd > 0.0) {
            do {
                y = fx + noise_sd * g(rng);
            } while (std::fabs(y) > M);
        }
        data.y[i] = y;
    }
    return data;
}

Dataset gen_data(const ExperimentConfig& c, std::size_t n, std::uint64_t seed) {
    return gen_data(make_target(c.target, static_cast<std::size_t>(c.d), c.beta), n, c.noise_sd, c.clamp_M,
                    seed);
}

double width_exponent(SizingRule r, int d, int beta) {
    const double dd = d, bb = beta;
    return r == SizingRule::Optimal ? dd / (4.0 * bb + 2.0 * dd) : dd / (2.0 * (bb + dd));
}

Architecture size_architecture(SizingRule r, std::size_t n, int d, int beta, double c_H, double c_L) {
    if (n < 2) throw InputError("size_architecture needs n >= 2");
    const double lg = std::log2(static_cast<double>(n));
    const double p = r == SizingRule::Optimal ? 0.0 : 2.0;
    double H = c_H * std::pow(static_cast<double>(n), width_exponent(r, d, beta)) * std::pow(lg, p);
    Architecture a;
    a.H = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(H)));
    a.L = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(c_L * lg)));
    return a;
}

DenseMlp::DenseMlp(std::size_t d, Architecture arch) {
    if (d < 1 || arch.H < 1 || arch.L < 1) throw InputError("MLP needs positive input dim, width and depth");
    sizes_.push_back(d);
    for (std::size_t l = 0; l < arch.L; ++l) sizes_.push_back(arch.H);
    sizes_.push_back(1);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        w_off_.push_back(off);
        off += sizes_[l + 1] * sizes_[l];
        weights_ += sizes_[l + 1] * sizes_[l];
        b_off_.push_back(off);
        off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
}

void DenseMlp::init(std::mt19937_64& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        std::normal_distribution<double> g(0.0, std::sqrt(2.0 / static_cast<double>(sizes_[l])));
        for (std::size_t k = 0; k < sizes_[l + 1] * sizes_[l]; ++k) params_[w_off_[l] + k] = g(rng);
    }
}

std::size_t DenseMlp::parameter_count() const { return params_.size(); }

std::size_t DenseMlp::weight_count() const { return weights_; }

std::size_t DenseMlp::weight_index(std::size_t layer, std::size_t row, std::size_t col) const {
    return w_off_.at(layer) + row * sizes_[layer] + col;
}

double DenseMlp::predict(std::span<const double> x) const {
    double out = 0.0;
    predict_batch(x, 1, std::span<double>(&out, 1));
    return out;
}

void DenseMlp::predict_batch(std::span<const double> xs, std::size_t n, std::span<double> out) const {
    const std::size_t d = sizes_.front();
    if (xs.size() < n * d || out.size() < n) throw InputError("predict_batch buffer too small");
    std::size_t widest = *std::max_element(sizes_.begin(), sizes_.end());
    std::vector<double> a(widest), z(widest);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&xs[i * d], d, a.begin());
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const std::size_t in = sizes_[l], o = sizes_[l + 1];
            const double* W = &params_[w_off_[l]];
            const double* b = &params_[b_off_[l]];
            const bool last = l + 2 == sizes_.size();
            for (std::size_t r = 0; r < o; ++r) {
                double s = b[r];
                for (std::size_t c = 0; c < in; ++c) s += W[r * in + c] * a[c];
                z[r] = last ? s : std::max(s, 0.0);
            }
            std::swap(a, z);
        }
        out[i] = a[0];
    }
}

double DenseMlp::evaluate(const Dataset& data, std::span<const std::size_t> idx, std::vector<double>* grad,
                          std::vector<std::uint8_t>* pattern) const {
    const std::size_t layers = sizes_.size() - 1;
    const std::size_t d = sizes_.front();
    if (data.d != d) throw InputError("dataset dimension does not match the network");
    if (grad) grad->assign(params_.size(), 0.0);
    if (pattern) pattern->clear();
    // acts[l] holds the input to layer l, zs[l] its pre-activation
    std::vector<std::vector<double>> acts(layers + 1), zs(layers);
    for (std::size_t l = 0; l <= layers; ++l) acts[l].resize(sizes_[l]);
    for (std::size_t l = 0; l < layers; ++l) zs[l].resize(sizes_[l + 1]);
    std::vector<double> delta, prev;
    double total = 0.0;
    for (std::size_t id : idx) {
        std::copy_n(&data.x[id * d], d, acts[0].begin());
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes_[l], o = sizes_[l + 1];
            const double* W = &params_[w_off_[l]];
            const double* b = &params_[b_off_[l]];
            const bool last = l + 1 == layers;
            for (std::size_t r = 0; r < o; ++r) {
                double s = b[r];
                for (std::size_t c = 0; c < in; ++c) s += W[r * in + c] * acts[l][c];
                zs[l][r] = s;
                acts[l + 1][r] = last ? s : std::max(s, 0.0);
                if (pattern && !last) pattern->push_back(s > 0.0);
            }
        }
        const double diff = acts[layers][0] - data.y[id];
        total += diff * diff;
        if (!grad) continue;
        delta.assign(1, 2.0 * diff / static_cast<double>(idx.size()));
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = sizes_[l], o = sizes_[l + 1];
            const double* W = &params_[w_off_[l]];
            double* gW = &(*grad)[w_off_[l]];
            double* gb = &(*grad)[b_off_[l]];
            for (std::size_t r = 0; r < o; ++r) {
                gb[r] += delta[r];
                for (std::size_t c = 0; c < in; ++c) gW[r * in + c] += delta[r] * acts[l][c];
            }
            if (l == 0) break;
            prev.assign(in, 0.0);
            for (std::size_t r = 0; r < o; ++r) {
                for (std::size_t c = 0; c < in; ++c) prev[c] += W[r * in + c] * delta[r];
            }
            for (std::size_t c = 0; c < in; ++c) {
                if (!(zs[l - 1][c] > 0.0)) prev[c] = 0.0;
            }
            std::swap(delta, prev);
        }
    }
    return idx.empty() ? 0.0 : total / static_cast<double>(idx.size());
}

double DenseMlp::loss(const Dataset& data) const {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return loss(data, idx);
}

ReluNetwork DenseMlp::to_network() const {
    std::vector<LayerSpec> layers;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        const std::size_t in = sizes_[l], o = sizes_[l + 1];
        std::vector<Triplet> tr;
        for (std::size_t r = 0; r < o; ++r) {
            for (std::size_t c = 0; c < in; ++c) {
                double w = params_[w_off_[l] + r * in + c];
                if (w != 0.0) tr.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), w});
            }
        }
        std::vector<double> b(params_.begin() + static_cast<std::ptrdiff_t>(b_off_[l]),
                              params_.begin() + static_cast<std::ptrdiff_t>(b_off_[l] + o));
        layers.push_back({SparseMatrix::from_triplets(o, in, std::move(tr)), std::move(b),
                          l + 2 == sizes_.size() ? Activation::Identity : Activation::ReLU});
    }
    return ReluNetwork(sizes_.front(), std::move(layers));
}

double clamp_prediction(double v, double M) { return std::clamp(v, -2.0 * M, 2.0 * M); }

ReluNetwork clamped_network(const DenseMlp& mlp, double M) {
    const double c = 2.0 * M;
    std::vector<LayerSpec> layers;
    layers.push_back({SparseMatrix::from_triplets(2, 1, {{0, 0, 1.0}, {1, 0, 1.0}}), {c, -c}, Activation::ReLU});
    layers.push_back({SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}}), {-c}, Activation::Identity});
    return compose_serial(mlp.to_network(), ReluNetwork(1, std::move(layers)));
}

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::size_t total_steps(const TrainerConfig& t, std::size_t n) {
    const double batch = static_cast<double>(std::min(t.batch, n));
    auto by_epochs = static_cast<std::size_t>(std::ceil(t.epochs * static_cast<double>(n) / batch));
    return std::max(t.steps, by_epochs);
}

// One Adam run from a fresh init; false when the loss or parameters blow up.
bool adam_run(DenseMlp& net, const Dataset& data, const TrainerConfig& t, double lr0, std::mt19937_64& rng) {
    net.init(rng);
    const std::size_t n = data.size();
    const std::size_t batch = std::min(t.batch, n);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::size_t pos = n;
    auto& p = net.params();
    std::vector<double> m(p.size(), 0.0), v(p.size(), 0.0), g;
    const double b1 = 0.9, b2 = 0.999, tiny = 1e-8;
    const double lr1 = lr0 * t.lr_final / t.lr;
    const std::size_t steps = total_steps(t, n);
    for (std::size_t step = 0; step < steps; ++step) {
        if (pos + batch > n) {
            std::shuffle(perm.begin(), perm.end(), rng);
            pos = 0;
        }
        double loss = net.evaluate(data, std::span<const std::size_t>(&perm[pos], batch), &g);
        pos += batch;
        if (!std::isfinite(loss) || !all_finite(g)) return false;
        const double frac = static_cast<double>(step) / static_cast<double>(steps);
        const double lr = lr1 + 0.5 * (lr0 - lr1) * (1.0 + std::cos(std::numbers::pi * frac));
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + tiny);
        }
    }
    return all_finite(p) && std::isfinite(net.loss(data));
}

}  // namespace

TrainResult train(const Dataset& data, Architecture arch, const TrainerConfig& t, std::uint64_t seed) {
    if (data.size() == 0) throw InputError("cannot train on an empty dataset");
    TrainResult best;
    bool have = false;
    for (int r = 0; r < t.restarts; ++r) {
        DenseMlp net(data.d, arch);
        double lr = t.lr;
        int halvings = 0;
        for (;;) {
            std::mt19937_64 rng(mix(seed, static_cast<std::uint64_t>(r) * 16 + static_cast<std::uint64_t>(halvings)));
            if (adam_run(net, data, t, lr, rng)) break;
            if (++halvings > 3) {
                throw TrainingDiverged(fmt::format("training diverged after {} learning-rate halvings", halvings - 1));
            }
            lr /= 2.0;
        }
        double mse = net.loss(data);
        if (!have || mse < best.train_mse) {
            best.net = std::move(net);
            best.train_mse = mse;
            best.lr_halvings = halvings;
            have = true;
        }
        best.restarts_used = r + 1;
    }
    return best;
}

double test_mse(const DenseMlp& net, const TargetFunction& f, double M, std::size_t n_points, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t d = f.dim;
    std::vector<double> xs(n_points * d), out(n_points);
    for (auto& v : xs) v = u(rng);
    net.predict_batch(xs, n_points, out);
    double s = 0.0;
    for (std::size_t i = 0; i < n_points; ++i) {
        double e = clamp_prediction(out[i], M) - f.eval(std::span<const double>(&xs[i * d], d));
        s += e * e;
    }
    return s / static_cast<double>(n_points);
}

GradientCheck gradient_check(const DenseMlp& net, const Dataset& data, std::size_t n_weights, std::uint64_t seed,
                             double h) {
    const std::size_t probe = std::min<std::size_t>(16, data.size());
    std::vector<std::size_t> idx(probe);
    for (std::size_t i = 0; i < probe; ++i) idx[i] = i;
    std::vector<double> grad;
    std::vector<std::uint8_t> base, pat;
    net.evaluate(data, idx, &grad, &base);
    // weight positions in params order
    std::vector<std::size_t> weight_pos;
    const auto& sz = net.sizes();
    for (std::size_t l = 0; l + 1 < sz.size(); ++l) {
        for (std::size_t r = 0; r < sz[l + 1]; ++r) {
            for (std::size_t c = 0; c < sz[l]; ++c) weight_pos.push_back(net.weight_index(l, r, c));
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, weight_pos.size() - 1);
    DenseMlp work = net;
    GradientCheck out;
    const std::size_t max_draws = 1000 * std::max<std::size_t>(n_weights, 1);
    for (std::size_t draw = 0; out.checked < n_weights && draw < max_draws; ++draw) {
        const std::size_t k = weight_pos[pick(rng)];
        const double w = net.params()[k];
        work.params()[k] = w + h;
        double lp = work.evaluate(data, idx, nullptr, &pat);
        bool kink = pat != base;
        work.params()[k] = w - h;
        double lm = work.evaluate(data, idx, nullptr, &pat);
        kink = kink || pat != base;
        work.params()[k] = w;
        if (kink) {
            ++out.skipped_kinks;
            continue;
        }
        const double num = (lp - lm) / (2.0 * h);
        const double rel = std::fabs(grad[k] - num) / std::max({std::fabs(grad[k]), std::fabs(num), 1e-8});
        out.max_rel_error = std::max(out.max_rel_error, rel);
        ++out.checked;
    }
    return out;
}

RateResult run_rate_study(const ExperimentConfig& c) {
    validate(c);
    RateResult res;
    res.config = c;
    const auto f = make_target(c.target, static_cast<std::size_t>(c.d), c.beta);
    for (auto rule : c.rules) {
        for (std::size_t n : c.n_grid) {
            for (int s = 0; s < c.seeds; ++s) {
                RateCell cell;
                cell.rule = rule;
                cell.n = n;
                cell.seed_index = s;
                cell.arch = size_architecture(rule, n, c.d, c.beta, c.c_H, c.c_L);
                res.cells.push_back(cell);
            }
        }
    }
    std::vector<std::uint8_t> done(res.cells.size(), 0);
    std::mutex m;
    parallel_for(res.cells.size(), 1, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            auto& cell = res.cells[i];
            const std::uint64_t key = mix(mix(c.seed, cell.n), static_cast<std::uint64_t>(cell.seed_index));
            try {
                auto data = gen_data(f, cell.n, c.noise_sd, c.clamp_M, mix(key, 1));
                auto tr = train(data, cell.arch, c.trainer, mix(key, 2));
                cell.train_mse = tr.train_mse;
                cell.test_mse = test_mse(tr.net, f, c.clamp_M, c.n_test, mix(key, 3));
                done[i] = 1;
            } catch (const TrainingDiverged& e) {
                std::lock_guard<std::mutex> lock(m);
                if (!res.partial) {
                    res.partial = true;
                    res.failure = fmt::format("{} n={} seed={}: {}", to_string(cell.rule), cell.n, cell.seed_index,
                                              e.what());
                }
            }
        }
    });
    if (res.partial) {
        std::vector<RateCell> kept;
        for (std::size_t i = 0; i < res.cells.size(); ++i) {
            if (done[i]) kept.push_back(res.cells[i]);
        }
        res.cells = std::move(kept);
        return res;
    }
    for (auto rule : c.rules) {
        RateSummary sum;
        sum.rule = rule;
        std::vector<std::vector<double>> per_seed(static_cast<std::size_t>(c.seeds));
        for (std::size_t n : c.n_grid) {
            std::vector<double> v;
            Architecture arch;
            for (const auto& cell : res.cells) {
                if (cell.rule == rule && cell.n == n) {
                    v.push_back(cell.test_mse);
                    per_seed[static_cast<std::size_t>(cell.seed_index)].push_back(cell.test_mse);
                    arch = cell.arch;
                }
            }
            std::sort(v.begin(), v.end());
            const std::size_t h = v.size() / 2;
            sum.n.push_back(n);
            sum.median_test_mse.push_back(v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]));
            sum.arch.push_back(arch);
        }
        std::vector<double> ns(sum.n.begin(), sum.n.end());
        sum.slope = fit_loglog_slope(ns, sum.median_test_mse);
        if (c.seeds >= 2) {
            std::vector<double> slopes;
            for (const auto& ps : per_seed) slopes.push_back(fit_loglog_slope(ns, ps));
            double mean = 0.0, var = 0.0;
            for (double s : slopes) mean += s;
            mean /= static_cast<double>(slopes.size());
            for (double s : slopes) var += (s - mean) * (s - mean);
            var /= static_cast<double>(slopes.size() - 1);
            sum.slope_half_width = 1.96 * std::sqrt(var / static_cast<double>(slopes.size()));
        }
        res.summaries.push_back(std::move(sum));
    }
    return res;
}

std::string rate_cells_csv(const RateResult& r) {
    std::ostringstream out;
    out << "rule,d,beta,n,seed,H,L,train_mse,test_mse\n";
    for (const auto& c : r.cells) {
        out << fmt::format("{},{},{},{},{},{},{},{:.17g},{:.17g}\n", to_string(c.rule), r.config.d, r.config.beta,
                           c.n, c.seed_index, c.arch.H, c.arch.L, c.train_mse, c.test_mse);
    }
    return out.str();
}

std::string rate_summary_json(const RateResult& r) {
    nlohmann::ordered_json j;
    j["config"] = nlohmann::ordered_json::parse(experiment_config_json(r.config));
    j["partial"] = r.partial;
    if (r.partial) j["failure"] = r.failure;
    j["rules"] = nlohmann::ordered_json::array();
    for (const auto& s : r.summaries) {
        nlohmann::ordered_json e;
        e["rule"] = to_string(s.rule);
        e["theoretical_slope"] = -2.0 * r.config.beta / (2.0 * r.config.beta + r.config.d);
        e["slope"] = s.slope;
        e["slope_half_width"] = s.slope_half_width;
        e["n"] = s.n;
        e["median_test_mse"] = s.median_test_mse;
        e["H"] = nlohmann::ordered_json::array();
        e["L"] = nlohmann::ordered_json::array();
        for (const auto& a : s.arch) {
            e["H"].push_back(a.H);
            e["L"].push_back(a.L);
        }
        j["rules"].push_back(std::move(e));
    }
    return j.dump(2);
}

void write_rate_outputs(const RateResult& r, const std::string& dir, bool force) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::pair<fs::path, std::string>> files{{fs::path(dir) / "cells.csv", rate_cells_csv(r)},
                                                         {fs::path(dir) / "summary.json", rate_summary_json(r)}};
    for (const auto& s : r.summaries) {
        std::ostringstream dat;
        dat << "# n median_test_mse H L\n";
        for (std::size_t i = 0; i < s.n.size(); ++i) {
            dat << fmt::format("{} {:.17g} {} {}\n", s.n[i], s.median_test_mse[i], s.arch[i].H, s.arch[i].L);
        }
        files.push_back({fs::path(dir) / fmt::format("rate_{}.dat", to_string(s.rule)), dat.str()});
    }
    for (const auto& [path, text] : files) {
        if (fs::exists(path) && !force) {
            throw InputError(fmt::format("{} exists; pass --force to overwrite", path.string()));
        }
    }
    for (const auto& [path, text] : files) {
        std::ofstream out(path);
        if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
        out << text;
    }
}

}  // namespace narrownet
