#include "narrownet/composite_builder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/errors.hpp"

namespace narrownet {

int CompositionGraph::T() const {
    if (vertices.empty()) throw InputError("composition graph has no vertices");
    int t = 0;
    for (const auto& v : vertices) t = std::max(t, v.id);
    return t;
}

const CompositeVertex& CompositionGraph::vertex(int id) const {
    for (const auto& v : vertices) {
        if (v.id == id) return v;
    }
    throw InputError(fmt::format("no vertex with id {}", id));
}

namespace {

bool is_input(const CompositionGraph& g, int id) { return id >= 1 && id <= static_cast<int>(g.d); }

std::map<int, std::vector<int>> children_of(const CompositionGraph& g) {
    std::map<int, std::vector<int>> ch;
    for (const auto& v : g.vertices) {
        for (int p : v.parents) ch[p].push_back(v.id);
    }
    return ch;
}

}  // namespace

std::vector<int> topological_order(const CompositionGraph& g) {
    std::map<int, int> indeg;
    for (const auto& v : g.vertices) {
        int n = 0;
        for (int p : v.parents) n += is_input(g, p) ? 0 : 1;
        indeg[v.id] = n;
    }
    auto ch = children_of(g);
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (auto [id, n] : indeg) {
        if (n == 0) ready.push(id);
    }
    std::vector<int> order;
    while (!ready.empty()) {
        int id = ready.top();
        ready.pop();
        order.push_back(id);
        for (int c : ch[id]) {
            if (--indeg[c] == 0) ready.push(c);
        }
    }
    if (order.size() != g.vertices.size()) throw InputError("composition graph has a cycle");
    return order;
}

void validate_graph(const CompositionGraph& g, bool check_sobolev) {
    if (g.d < 1) throw InputError("graph needs at least one input");
    if (g.d_star < 1) throw InputError("graph needs d_star >= 1");
    if (g.beta < 1) throw InputError("graph needs beta >= 1");
    if (g.vertices.empty()) throw InputError("graph has no vertices");
    std::set<int> ids;
    for (const auto& v : g.vertices) {
        if (v.id <= static_cast<int>(g.d)) {
            throw InputError(fmt::format("vertex id {} collides with the inputs 1..{}", v.id, g.d));
        }
        if (!ids.insert(v.id).second) throw InputError(fmt::format("duplicate vertex id {}", v.id));
    }
    const int T = g.T();
    if (static_cast<std::size_t>(T) != g.d + g.vertices.size()) {
        throw InputError(fmt::format("vertex ids must be {}..{}", g.d + 1, g.d + g.vertices.size()));
    }
    for (const auto& v : g.vertices) {
        if (v.parents.empty() || v.parents.size() > g.d_star) {
            throw InputError(fmt::format("vertex {} has {} parents, allowed 1..{}", v.id,
                                         v.parents.size(), g.d_star));
        }
        std::set<int> seen;
        for (int p : v.parents) {
            if (!is_input(g, p) && !ids.count(p)) {
                throw InputError(fmt::format("vertex {} reads unknown vertex {}", v.id, p));
            }
            if (!seen.insert(p).second) {
                throw InputError(fmt::format("vertex {} lists parent {} twice", v.id, p));
            }
        }
        if (v.f.dim != v.parents.size()) {
            throw InputError(fmt::format("vertex {}: target dimension {} but {} parents", v.id,
                                         v.f.dim, v.parents.size()));
        }
    }
    topological_order(g);
    auto ch = children_of(g);
    if (!ch[T].empty()) throw InputError(fmt::format("output vertex {} has outgoing edges", T));
    for (const auto& v : g.vertices) {
        if (v.id != T && ch[v.id].empty()) {
            throw InputError(fmt::format("vertex {} does not reach the output", v.id));
        }
    }
    if (!check_sobolev) return;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const auto& v : g.vertices) {
        auto alphas = multi_indices(v.f.dim, v.f.beta);
        std::vector<double> x(v.f.dim);
        for (int s = 0; s < 200; ++s) {
            for (auto& c : x) c = s == 0 ? 1.0 : u(rng);
            for (const auto& a : alphas) {
                double val = v.f.deriv(a, x);
                if (!(std::fabs(val) <= 1.0 + 1e-9)) {
                    throw SobolevViolation(fmt::format("vertex {} ({}): derivative of order {} reaches {:.6g}",
                                                       v.id, v.target, order(a), val));
                }
            }
        }
    }
}

std::map<int, int> vertex_levels(const CompositionGraph& g) {
    std::map<int, int> level;
    for (int i = 1; i <= static_cast<int>(g.d); ++i) level[i] = 0;
    for (int id : topological_order(g)) {
        int l = 0;
        for (int p : g.vertex(id).parents) l = std::max(l, level.at(p));
        level[id] = l + 1;
    }
    return level;
}

std::map<int, double> path_counts(const CompositionGraph& g) {
    auto order = topological_order(g);
    auto ch = children_of(g);
    std::map<int, double> paths;
    const int T = g.T();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        double p = *it == T ? 1.0 : 0.0;
        for (int c : ch[*it]) p += paths[c];
        paths[*it] = p;
    }
    for (int i = 1; i <= static_cast<int>(g.d); ++i) {
        double p = 0.0;
        for (int c : ch[i]) p += paths[c];
        paths[i] = p;
    }
    return paths;
}

namespace {

double eval_impl(const CompositionGraph& g, std::span<const double> x, bool strict) {
    if (x.size() != g.d) {
        throw InputError(fmt::format("composite expects {} inputs, got {}", g.d, x.size()));
    }
    const double tol = 1e-12;
    std::map<int, double> value;
    for (std::size_t i = 0; i < g.d; ++i) {
        if (strict && !(std::fabs(x[i]) <= 1.0 + tol)) {
            throw DomainViolation(fmt::format("input {} = {} outside [-1,1]", i + 1, x[i]));
        }
        value[static_cast<int>(i) + 1] = x[i];
    }
    for (int id : topological_order(g)) {
        const auto& v = g.vertex(id);
        std::vector<double> in;
        for (int p : v.parents) {
            double val = value.at(p);
            if (strict && !(std::fabs(val) <= 1.0 + tol)) {
                throw DomainViolation(fmt::format("vertex {} receives {} from {} outside [-1,1]", id, val, p));
            }
            in.push_back(val);
        }
        value[id] = v.f.eval(in);
    }
    return value.at(g.T());
}

}  // namespace

double eval_composite(const CompositionGraph& g, std::span<const double> x) {
    return eval_impl(g, x, true);
}

TargetFunction composite_target(const CompositionGraph& g) {
    auto copy = std::make_shared<CompositionGraph>(g);
    return finite_difference_target("composite", g.d, g.beta, [copy](std::span<const double> x) {
        return eval_impl(*copy, x, false);
    });
}

std::vector<VertexBudget> allocate_budgets(const CompositionGraph& g, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw InputError(fmt::format("eps = {} outside (0,1)", eps));
    auto paths = path_counts(g);
    const double T_eff = static_cast<double>(g.vertices.size());
    std::vector<VertexBudget> out;
    for (int id : topological_order(g)) {
        const auto& v = g.vertex(id);
        VertexBudget b;
        b.id = id;
        b.paths = paths.at(id);
        b.eps = eps / (T_eff * b.paths);
        if (b.eps < kMinVertexEps) {
            throw InfeasibleConstruction(
                fmt::format("vertex {} needs eps {:.3g}, below the floor {:.0e}", id, b.eps, kMinVertexEps));
        }
        b.plan = make_plan(b.eps, v.f.beta, static_cast<int>(v.f.dim));
        out.push_back(b);
    }
    return out;
}

ReluNetwork build_clamp() {
    std::vector<LayerSpec> layers;
    layers.push_back({SparseMatrix::from_triplets(2, 1, {{0, 0, 1.0}, {1, 0, 1.0}}), {1.0, -1.0},
                      Activation::ReLU});
    layers.push_back({SparseMatrix::from_triplets(1, 2, {{0, 0, 1.0}, {0, 1, -1.0}}), {-1.0},
                      Activation::Identity});
    return ReluNetwork(1, std::move(layers));
}

namespace {

ReluNetwork selection(std::size_t state_dim, const std::vector<std::size_t>& picks, bool shape) {
    if (shape) return ReluNetwork::shape(state_dim, {}, picks.size());
    std::vector<Triplet> tr;
    for (std::size_t r = 0; r < picks.size(); ++r) {
        tr.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(picks[r]), 1.0});
    }
    return ReluNetwork::affine(SparseMatrix::from_triplets(picks.size(), state_dim, std::move(tr)),
                               std::vector<double>(picks.size(), 0.0));
}

}  // namespace

CompositeBuild build_composite(const CompositionGraph& g, double eps, BuildMode mode) {
    validate_graph(g, true);
    const bool shape = mode == BuildMode::ShapeOnly;
    auto budgets = allocate_budgets(g, eps);
    auto levels = vertex_levels(g);
    const int T = g.T();
    const int depth = levels.at(T);
    auto clamp = shape ? to_shape(build_clamp()) : build_clamp();

    std::vector<int> state_ids;
    for (int i = 1; i <= static_cast<int>(g.d); ++i) state_ids.push_back(i);
    ReluNetwork state = ReluNetwork::identity(g.d);
    if (shape) state = to_shape(state);

    for (int l = 1; l <= depth; ++l) {
        auto position = [&](int id) {
            return static_cast<std::size_t>(std::find(state_ids.begin(), state_ids.end(), id) - state_ids.begin());
        };
        std::vector<ReluNetwork> parts;
        std::vector<int> next_ids;
        for (auto& b : budgets) {
            if (levels.at(b.id) != l) continue;
            const auto& v = g.vertex(b.id);
            ReluNetwork net = shape ? build_from_plan(nullptr, b.plan, BuildMode::ShapeOnly) : [&] {
                CoefficientTable table(v.f, b.plan.N);
                return build_from_plan(&table, b.plan, BuildMode::Full);
            }();
            b.stats = stats(net);
            std::vector<std::size_t> picks;
            for (int p : v.parents) picks.push_back(position(p));
            parts.push_back(compose_serial(compose_serial(selection(state_ids.size(), picks, shape), net), clamp));
            next_ids.push_back(b.id);
        }
        // values read by later levels ride along as identity channels
        for (int id : state_ids) {
            bool needed = false;
            for (const auto& v : g.vertices) {
                if (levels.at(v.id) > l &&
                    std::find(v.parents.begin(), v.parents.end(), id) != v.parents.end()) {
                    needed = true;
                }
            }
            if (!needed) continue;
            parts.push_back(selection(state_ids.size(), {position(id)}, shape));
            next_ids.push_back(id);
        }
        auto block = stack_parallel(pad_to_common_depth(parts), true);
        state = compose_serial(state, block);
        state_ids = std::move(next_ids);
    }
    if (state_ids.size() != 1 || state_ids[0] != T) {
        throw ContractViolation("composite assembly did not end at the output vertex");
    }
    return {std::move(state), std::move(budgets)};
}

CompositionGraph parse_graph_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(fmt::format("graph JSON: {}", e.what()));
    }
    CompositionGraph g;
    try {
        g.d = j.at("d").get<std::size_t>();
        g.d_star = j.at("d_star").get<std::size_t>();
        g.beta = j.value("beta", 1);
        for (const auto& jv : j.at("vertices")) {
            CompositeVertex v;
            v.id = jv.at("id").get<int>();
            v.parents = jv.at("parents").get<std::vector<int>>();
            v.target = jv.at("target").get<std::string>();
            g.vertices.push_back(std::move(v));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("graph JSON: {}", e.what()));
    }
    if (g.beta < 1) throw InputError("graph needs beta >= 1");
    for (auto& v : g.vertices) {
        if (v.parents.empty()) throw InputError(fmt::format("vertex {} has no parents", v.id));
        v.f = make_target(v.target, v.parents.size(), g.beta);
    }
    validate_graph(g, true);
    return g;
}

CompositionGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError(fmt::format("cannot open graph file '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_graph_json(ss.str());
}

std::string graph_to_json(const CompositionGraph& g) {
    nlohmann::json j;
    j["d"] = g.d;
    j["d_star"] = g.d_star;
    j["beta"] = g.beta;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : g.vertices) {
        j["vertices"].push_back({{"id", v.id}, {"parents", v.parents}, {"target", v.target}});
    }
    return j.dump(2);
}

namespace {

CompositeVertex make_vertex(int id, std::vector<int> parents, const std::string& target, int beta) {
    CompositeVertex v;
    v.id = id;
    v.parents = std::move(parents);
    v.target = target;
    v.f = make_target(target, v.parents.size(), beta);
    return v;
}

}  // namespace

CompositionGraph additive_pair_model(int beta, const std::string& fa, const std::string& fb) {
    CompositionGraph g;
    g.d = 4;
    g.d_star = 2;
    g.beta = beta;
    g.vertices.push_back(make_vertex(5, {1, 2}, fa, beta));
    g.vertices.push_back(make_vertex(6, {3, 4}, fb, beta));
    g.vertices.push_back(make_vertex(7, {5, 6}, "mean", beta));
    validate_graph(g, true);
    return g;
}

CompositionGraph interaction_model(std::size_t d, std::size_t d_star, int beta,
                                   const std::vector<std::string>& component_targets) {
    if (d_star < 1 || d_star > d) throw InputError("interaction model needs 1 <= d_star <= d");
    if (component_targets.empty()) throw InputError("interaction model needs component targets");
    CompositionGraph g;
    g.d = d;
    g.d_star = std::max<std::size_t>(d_star, 2);
    g.beta = beta;
    std::vector<std::vector<int>> subsets;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int start) {
        if (cur.size() == d_star) {
            subsets.push_back(cur);
            return;
        }
        for (int i = start; i <= static_cast<int>(d); ++i) {
            cur.push_back(i);
            rec(i + 1);
            cur.pop_back();
        }
    };
    rec(1);
    const int k = static_cast<int>(subsets.size());
    const int base = static_cast<int>(d);
    for (int j = 1; j <= k; ++j) {
        g.vertices.push_back(make_vertex(base + j, subsets[j - 1],
                                         component_targets[(j - 1) % component_targets.size()], beta));
    }
    if (k >= 2) {
        g.vertices.push_back(make_vertex(base + k + 1, {base + 1, base + 2}, "sum", beta));
        for (int j = 2; j <= k - 1; ++j) {
            g.vertices.push_back(make_vertex(base + k + j, {base + k + j - 1, base + j + 1}, "sum", beta));
        }
    }
    validate_graph(g, false);
    return g;
}

}  // namespace narrownet
