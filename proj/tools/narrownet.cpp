#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/composite_builder.hpp"
#include "narrownet/errors.hpp"
#include "narrownet/narrow_builder.hpp"
#include "narrownet/network.hpp"
#include "narrownet/primitives.hpp"
#include "narrownet/rate_experiment.hpp"
#include "narrownet/verification.hpp"

using namespace narrownet;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kBadInput = 2;
constexpr int kInfeasible = 3;
constexpr int kGateFailed = 4;

struct GateFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("cannot open '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// refuses to replace an existing file unless force is set
void write_file(const fs::path& path, const std::string& text, bool force) {
    if (fs::exists(path) && !force) {
        throw InputError(fmt::format("{} exists; pass --force to overwrite", path.string()));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError(fmt::format("cannot write {}", path.string()));
    out << text;
}

void check_outputs(const std::vector<fs::path>& paths, bool force) {
    for (const auto& p : paths) {
        if (fs::exists(p) && !force) throw InputError(fmt::format("{} exists; pass --force to overwrite", p.string()));
    }
}

std::vector<double> parse_point(const std::string& s) {
    std::vector<double> x;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            x.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw InputError(fmt::format("cannot parse coordinate '{}'", item));
        }
    }
    if (x.empty()) throw InputError("empty point");
    return x;
}

void print_stats(const NetworkStats& s) {
    fmt::print("{:<14}{}\n", "width H", s.width);
    fmt::print("{:<14}{}\n", "depth L", s.depth);
    fmt::print("{:<14}{}\n", "weights W", s.weight_count);
    fmt::print("{:<14}{}\n", "nonzeros", s.nonzeros);
}

void print_checks(const std::vector<BoundCheck>& checks) {
    for (const auto& c : checks) {
        fmt::print("{:<20}{:<50}{:<14.6g}{}\n", c.name, c.claimed_form, c.measured, c.pass ? "pass" : "FAIL");
    }
}

// build ---------------------------------------------------------------------

struct BuildArgs {
    std::string target;
    std::string primitive;
    int d = 1;
    int beta = 1;
    double eps = 0.0;
    int N = 0;
    double Q = 1.0;
    std::string out;
    bool shape = false;
    bool force = false;
};

int cmd_build(const BuildArgs& a) {
    if (a.out.empty() && !a.shape) throw InputError("--out is required unless --shape is given");
    const fs::path dir(a.out);
    if (!a.primitive.empty()) {
        ReluNetwork net;
        if (a.primitive == "psi") {
            net = build_psi();
        } else if (a.primitive == "square") {
            net = build_squaring(a.eps);
        } else if (a.primitive == "mult") {
            net = build_mult(MultGadgetConfig::make(a.Q, a.eps));
        } else {
            throw InputError(fmt::format("unknown primitive '{}' (psi, square, mult)", a.primitive));
        }
        fs::path file = dir.extension() == ".json" ? dir : dir / "network.json";
        write_file(file, serialize(net), a.force);
        print_stats(stats(net));
        return kOk;
    }
    if (a.target.empty()) throw InputError("--target or --primitive is required");
    if (!(a.eps > 0.0 && a.eps < 1.0)) throw InputError(fmt::format("--eps {} outside (0,1)", a.eps));
    auto f = make_target(a.target, static_cast<std::size_t>(a.d), a.beta);
    BuildOptions opts;
    if (a.N > 0) opts.N_override = a.N;
    opts.mode = a.shape ? BuildMode::ShapeOnly : BuildMode::Full;
    if (!a.shape) check_outputs({dir / "network.json", dir / "manifest.json"}, a.force);
    auto b = build_approximator(f, a.eps, opts);
    auto s = stats(b.network);
    std::vector<BoundCheck> checks;
    if (!a.shape) checks = single_build_checks(b.network, b.plan);
    auto manifest = nlohmann::json::parse(build_manifest_json(b.plan, b.network, checks));
    manifest["target"] = a.target;
    fmt::print("{:<14}{}\n", "target", a.target);
    fmt::print("{:<14}{}\n", "case", to_string(b.plan.parity_case));
    fmt::print("{:<14}{}\n", "N", b.plan.N);
    fmt::print("{:<14}{:.6g}\n", "delta", b.plan.delta);
    print_stats(s);
    print_checks(checks);
    if (!a.shape) {
        write_file(dir / "network.json", serialize(b.network), a.force);
        write_file(dir / "manifest.json", manifest.dump(2), a.force);
    }
    return kOk;
}

// verify --------------------------------------------------------------------

struct VerifyArgs {
    std::string net;
    std::string target;
    std::string manifest;
    int beta = 0;
    double eps = 0.0;
    int resolution = 0;
    std::size_t samples = 10000;
    std::uint64_t seed = 1;
    std::string report;
    bool force = false;
};

int cmd_verify(const VerifyArgs& a) {
    auto net = load_network(a.net);
    const int d = static_cast<int>(net.input_dim());
    nlohmann::json man;
    fs::path man_path = a.manifest.empty() ? fs::path(a.net).parent_path() / "manifest.json" : fs::path(a.manifest);
    if (fs::exists(man_path)) {
        try {
            man = nlohmann::json::parse(read_file(man_path.string()));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("manifest: {}", e.what()));
        }
    } else if (!a.manifest.empty()) {
        throw InputError(fmt::format("cannot open manifest '{}'", a.manifest));
    }
    std::string target = a.target.empty() ? man.value("target", std::string()) : a.target;
    if (target.empty()) throw InputError("--target is required when no manifest names one");
    int beta = a.beta > 0 ? a.beta : man.value("beta", 1);
    double eps = a.eps > 0.0 ? a.eps : man.value("eps", 0.0);
    if (!(eps > 0.0)) throw InputError("--eps is required when no manifest gives one");
    auto f = make_target(target, static_cast<std::size_t>(d), beta);
    int resolution = a.resolution > 0 ? a.resolution : default_resolution(static_cast<std::size_t>(d));

    std::optional<ConstructionPlan> plan;
    std::optional<CoefficientTable> table;
    PointFn ref;
    if (man.contains("N") && man.value("d", 0) == d && target == man.value("target", std::string())) {
        plan = make_plan(man["eps"].get<double>(), man.value("beta", beta), d, man["N"].get<int>());
        table.emplace(f, plan->N);
        ref = [&](std::span<const double> x) { return eval_ftilde_reference(*table, *plan, x); };
    }
    std::vector<BoundCheck> extra;
    if (plan) extra = single_build_checks(net, *plan);
    auto r = verify_network(net, f.eval, target, d, beta, eps, resolution, a.samples, a.seed,
                            plan ? &ref : nullptr, extra);
    auto json = report_json(r);
    if (!a.report.empty()) {
        fs::path rp(a.report);
        fs::path csv = rp;
        csv.replace_extension(".csv");
        check_outputs({rp, csv}, a.force);
        write_file(rp, json, a.force);
        write_file(csv, bound_checks_csv(r.bound_checks), a.force);
    }
    std::cout << json << "\n";
    if (!r.pass()) throw GateFailure("verification gate failed");
    return kOk;
}

// bounds --------------------------------------------------------------------

struct BoundsArgs {
    std::string series_dir;
    std::string target = "poly_mix";
    int d = 0;
    int beta = 0;
    std::vector<double> eps;
};

int cmd_bounds(const BoundsArgs& a) {
    std::vector<std::pair<double, NetworkStats>> series;
    int d = a.d, beta = a.beta;
    if (!a.series_dir.empty()) {
        if (!fs::is_directory(a.series_dir)) throw InputError(fmt::format("'{}' is not a directory", a.series_dir));
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(a.series_dir)) {
            if (e.is_regular_file() && e.path().filename() == "manifest.json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            nlohmann::json m;
            try {
                m = nlohmann::json::parse(read_file(p.string()));
                NetworkStats s;
                const auto& ms = m.at("measured_stats");
                s.depth = ms.at("depth").get<std::size_t>();
                s.width = ms.at("width").get<std::size_t>();
                s.weight_count = ms.at("weight_count").get<std::uint64_t>();
                series.push_back({m.at("eps").get<double>(), s});
                int md = m.at("d").get<int>(), mb = m.at("beta").get<int>();
                if (d == 0) d = md;
                if (beta == 0) beta = mb;
                if (md != d || mb != beta) throw InputError(fmt::format("{} has a different d or beta", p.string()));
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(fmt::format("{}: {}", p.string(), e.what()));
            }
        }
    } else {
        if (d < 1 || beta < 1) throw InputError("--d and --beta are required without --series-dir");
        BuildOptions opts;
        opts.mode = BuildMode::ShapeOnly;
        auto f = make_target(a.target, static_cast<std::size_t>(d), beta);
        for (double e : a.eps) series.push_back({e, stats(build_approximator(f, e, opts).network)});
    }
    auto checks = check_bounds(series, d, beta);
    fmt::print("{:<10}{:<10}{:<10}{}\n", "eps", "width", "depth", "weights");
    for (const auto& [e, s] : series) fmt::print("{:<10.4g}{:<10}{:<10}{}\n", e, s.width, s.depth, s.weight_count);
    print_checks(checks);
    for (const auto& c : checks) {
        if (!c.pass) throw GateFailure("bound check failed");
    }
    return kOk;
}

// composite -----------------------------------------------------------------

struct CompositeArgs {
    std::string graph;
    double eps = 0.0;
    std::string out;
    std::size_t samples = 0;
    std::uint64_t seed = 1;
    bool shape = false;
    bool force = false;
};

int cmd_composite(const CompositeArgs& a) {
    auto g = load_graph(a.graph);
    if (!(a.eps > 0.0 && a.eps < 1.0)) throw InputError(fmt::format("--eps {} outside (0,1)", a.eps));
    const fs::path dir(a.out);
    if (!a.shape) {
        if (a.out.empty()) throw InputError("--out is required unless --shape is given");
        check_outputs({dir / "network.json", dir / "manifest.json"}, a.force);
    }
    auto b = build_composite(g, a.eps, a.shape ? BuildMode::ShapeOnly : BuildMode::Full);
    auto s = stats(b.network);
    fmt::print("{:<8}{:<8}{:<14}{:<6}{}\n", "vertex", "paths", "eps", "N", "width");
    nlohmann::json man;
    man["graph"] = nlohmann::json::parse(graph_to_json(g));
    man["eps"] = a.eps;
    man["measured_stats"] = {{"depth", s.depth}, {"width", s.width}, {"weight_count", s.weight_count},
                             {"nonzeros", s.nonzeros}};
    man["budgets"] = nlohmann::json::array();
    for (const auto& v : b.budgets) {
        fmt::print("{:<8}{:<8}{:<14.6g}{:<6}{}\n", v.id, v.paths, v.eps, v.plan.N, v.stats.width);
        man["budgets"].push_back({{"id", v.id}, {"paths", v.paths}, {"eps", v.eps}, {"N", v.plan.N},
                                  {"width", v.stats.width}, {"depth", v.stats.depth}});
    }
    print_stats(s);
    bool pass = true;
    if (a.samples > 0 && !a.shape) {
        auto f = [&g](std::span<const double> x) { return eval_composite(g, x); };
        int res = g.d <= 3 ? default_resolution(g.d) : 0;
        auto r = verify_network(b.network, f, "composite", static_cast<int>(g.d), g.beta, a.eps, res, a.samples,
                                a.seed);
        man["verification"] = nlohmann::json::parse(report_json(r));
        print_checks(r.bound_checks);
        pass = r.pass();
    }
    if (!a.shape) {
        write_file(dir / "network.json", serialize(b.network), a.force);
        write_file(dir / "manifest.json", man.dump(2), a.force);
    }
    if (!pass) throw GateFailure("composite verification failed");
    return kOk;
}

// experiment ----------------------------------------------------------------

struct ExperimentArgs {
    std::string config;
    std::string out_dir;
    bool force = false;
};

int cmd_experiment(const ExperimentArgs& a) {
    auto c = load_experiment_config(a.config);
    const fs::path dir(a.out_dir);
    std::vector<fs::path> outs{dir / "cells.csv", dir / "summary.json"};
    for (auto r : c.rules) outs.push_back(dir / fmt::format("rate_{}.dat", to_string(r)));
    check_outputs(outs, a.force);
    auto res = run_rate_study(c);
    write_rate_outputs(res, a.out_dir, a.force);
    for (const auto& s : res.summaries) {
        fmt::print("{} rule: slope {:.3f} +- {:.3f} (theory {:.3f})\n", to_string(s.rule), s.slope,
                   s.slope_half_width, -2.0 * c.beta / (2.0 * c.beta + c.d));
        fmt::print("  {:<8}{:<6}{:<6}{}\n", "n", "H", "L", "median test mse");
        for (std::size_t i = 0; i < s.n.size(); ++i) {
            fmt::print("  {:<8}{:<6}{:<6}{:.4g}\n", s.n[i], s.arch[i].H, s.arch[i].L, s.median_test_mse[i]);
        }
    }
    if (res.partial) {
        fmt::print(stderr, "study incomplete: {}\n", res.failure);
        return kInternal;
    }
    return kOk;
}

// eval / export-info ----------------------------------------------------------

int cmd_eval(const std::string& net_path, const std::string& point) {
    auto net = load_network(net_path);
    auto x = parse_point(point);
    auto y = net.eval(x);
    for (std::size_t i = 0; i < y.size(); ++i) fmt::print("{}{}", i ? "," : "", y[i]);
    fmt::print("\n");
    return kOk;
}

int cmd_export_info(const std::string& net_path) {
    auto net = load_network(net_path);
    auto s = stats(net);
    auto fc = assert_fully_connected(net);
    nlohmann::ordered_json j;
    j["input_dim"] = net.input_dim();
    j["output_dim"] = net.output_dim();
    j["hidden_sizes"] = net.hidden_sizes();
    j["depth"] = s.depth;
    j["width"] = s.width;
    j["weight_count"] = s.weight_count;
    j["nonzeros"] = s.nonzeros;
    j["fully_connected"] = fc.fully_connected;
    j["dense_bound"] = fc.dense_bound;
    j["empirical_constant"] = fc.empirical_constant;
    std::cout << j.dump(2) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explicit narrow ReLU approximators: build, verify and study."};
    app.require_subcommand(1);

    BuildArgs ba;
    auto* build = app.add_subcommand("build", "Build an approximator (or a primitive) and write network + manifest");
    build->add_option("--target", ba.target, "Library target, e.g. sin_scaled, prod_pair, const:0.3");
    build->add_option("--primitive", ba.primitive, "Write a primitive instead: psi, square (uses --eps), mult");
    build->add_option("--d", ba.d, "Input dimension")->check(CLI::PositiveNumber);
    build->add_option("--beta", ba.beta, "Smoothness order")->check(CLI::PositiveNumber);
    build->add_option("--eps", ba.eps, "Target sup-norm accuracy in (0,1)");
    build->add_option("--N", ba.N, "Override the grid size");
    build->add_option("--Q", ba.Q, "Input range of the mult primitive");
    build->add_option("--out", ba.out, "Output directory (or .json file for primitives)");
    build->add_flag("--shape", ba.shape, "Measure sizes only; writes nothing");
    build->add_flag("--force", ba.force, "Overwrite existing outputs");

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "Measure the sup error of a network against a target");
    verify->add_option("--net", va.net, "Network file")->required();
    verify->add_option("--target", va.target, "Library target (default: from the manifest)");
    verify->add_option("--manifest", va.manifest, "Manifest (default: manifest.json next to the network)");
    verify->add_option("--beta", va.beta, "Smoothness order of the target (default: manifest or 1)");
    verify->add_option("--eps", va.eps, "Error gate (default: manifest eps)");
    verify->add_option("--resolution", va.resolution, "Grid intervals per axis (default depends on d)");
    verify->add_option("--samples", va.samples, "Uniform random points");
    verify->add_option("--seed", va.seed, "Random seed");
    verify->add_option("--report", va.report, "Write the report JSON here and the checks CSV beside it");
    verify->add_flag("--force", va.force, "Overwrite existing outputs");

    BoundsArgs bo;
    auto* bounds = app.add_subcommand("bounds", "Fit width, weight and depth growth over an eps series");
    bounds->add_option("--series-dir", bo.series_dir, "Directory searched for manifest.json files");
    bounds->add_option("--target", bo.target, "Target for a generated series");
    bounds->add_option("--d", bo.d, "Input dimension for a generated series");
    bounds->add_option("--beta", bo.beta, "Smoothness order for a generated series");
    bounds->add_option("--eps", bo.eps, "Comma-separated eps values for a generated series")->delimiter(',');

    CompositeArgs ca;
    auto* comp = app.add_subcommand("composite", "Build a network for a composition graph");
    comp->add_option("--graph", ca.graph, "Graph JSON file")->required();
    comp->add_option("--eps", ca.eps, "Target accuracy in (0,1)")->required();
    comp->add_option("--out", ca.out, "Output directory");
    comp->add_option("--samples", ca.samples, "Random points for an error check (0 skips it)");
    comp->add_option("--seed", ca.seed, "Random seed");
    comp->add_flag("--shape", ca.shape, "Measure sizes only; writes nothing");
    comp->add_flag("--force", ca.force, "Overwrite existing outputs");

    ExperimentArgs ea;
    auto* exp = app.add_subcommand("experiment", "Run a sample-size study from a JSON config");
    exp->add_option("--config", ea.config, "Experiment JSON")->required();
    exp->add_option("--out-dir", ea.out_dir, "Directory for cells.csv, summary.json and .dat files")->required();
    exp->add_flag("--force", ea.force, "Overwrite existing outputs");

    std::string eval_net, eval_point;
    auto* ev = app.add_subcommand("eval", "Evaluate a network at one point");
    ev->add_option("--net", eval_net, "Network file")->required();
    ev->add_option("--point", eval_point, "Comma-separated coordinates")->required();

    std::string info_net;
    auto* info = app.add_subcommand("export-info", "Print sizes and structure checks of a network file");
    info->add_option("--net", info_net, "Network file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*build) return cmd_build(ba);
        if (*verify) return cmd_verify(va);
        if (*bounds) return cmd_bounds(bo);
        if (*comp) return cmd_composite(ca);
        if (*exp) return cmd_experiment(ea);
        if (*ev) return cmd_eval(eval_net, eval_point);
        if (*info) return cmd_export_info(info_net);
    } catch (const GateFailure& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kGateFailed;
    } catch (const InfeasibleConstruction& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kInfeasible;
    } catch (const InputError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kBadInput;
    } catch (const std::exception& e) {
        fmt::print(stderr, "internal error: {}\n", e.what());
        return kInternal;
    }
    return kInternal;
}
