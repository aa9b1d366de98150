#include "narrownet/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "narrownet/errors.hpp"

namespace narrownet {

namespace {

void validate(std::size_t input_dim, const std::vector<LayerSpec>& layers, bool shape_only) {
    if (input_dim == 0) throw ContractViolation("network input_dim must be positive");
    std::size_t prev = input_dim;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.in_dim() != prev) {
            throw ContractViolation(fmt::format("layer {} expects {} inputs but receives {}", l,
                                                L.in_dim(), prev));
        }
        if (!shape_only) {
            if (L.biases.size() != L.out_dim()) {
                throw ContractViolation(fmt::format("layer {} bias length mismatch", l));
            }
            if (!L.weights.all_finite() ||
                !std::all_of(L.biases.begin(), L.biases.end(),
                             [](double v) { return std::isfinite(v); })) {
                throw ContractViolation(fmt::format("layer {} holds non-finite parameters", l));
            }
        }
        bool last = l + 1 == layers.size();
        if (last && L.activation != Activation::Identity) {
            throw ContractViolation("final layer must be affine");
        }
        if (!last && L.activation != Activation::ReLU) {
            throw ContractViolation(fmt::format("hidden layer {} must use ReLU", l));
        }
        prev = L.out_dim();
    }
}

LayerSpec shape_layer(std::size_t out, std::size_t in, Activation act) {
    return LayerSpec{SparseMatrix(out, in), {}, act};
}

}  // namespace

ReluNetwork::ReluNetwork(std::size_t input_dim, std::vector<LayerSpec> layers, bool shape_only)
    : input_dim_(input_dim), layers_(std::move(layers)), shape_only_(shape_only) {
    validate(input_dim_, layers_, shape_only_);
    widest_ = input_dim_;
    if (shape_only_) return;
    live_rows_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        widest_ = std::max(widest_, L.out_dim());
        for (std::size_t r = 0; r < L.out_dim(); ++r) {
            double b = L.biases[r];
            if (L.activation == Activation::ReLU ? b > 0.0 : b != 0.0) {
                live_rows_[l].push_back(static_cast<std::uint32_t>(r));
            }
        }
    }
}

ReluNetwork ReluNetwork::affine(SparseMatrix weights, std::vector<double> biases) {
    std::size_t in = weights.cols();
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec{std::move(weights), std::move(biases), Activation::Identity});
    return ReluNetwork(in, std::move(layers));
}

ReluNetwork ReluNetwork::identity(std::size_t dim) {
    return affine(SparseMatrix::identity(dim), std::vector<double>(dim, 0.0));
}

ReluNetwork ReluNetwork::shape(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                               std::size_t output_dim) {
    std::vector<LayerSpec> layers;
    std::size_t prev = input_dim;
    for (auto h : hidden) {
        layers.push_back(shape_layer(h, prev, Activation::ReLU));
        prev = h;
    }
    layers.push_back(shape_layer(output_dim, prev, Activation::Identity));
    return ReluNetwork(input_dim, std::move(layers), true);
}

std::vector<std::size_t> ReluNetwork::hidden_sizes() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) out.push_back(layers_[l].out_dim());
    return out;
}

std::vector<double> ReluNetwork::eval(std::span<const double> x) const {
    std::vector<double> out(output_dim());
    eval_batch(x, 1, out);
    return out;
}

void ReluNetwork::eval_batch(std::span<const double> xs, std::size_t count,
                             std::span<double> out) const {
    if (shape_only_) throw ContractViolation("cannot evaluate a shape-only network");
    if (xs.size() != count * input_dim_) {
        throw InputError(fmt::format("expected {} input values, got {}", count * input_dim_,
                                     xs.size()));
    }
    if (out.size() != count * output_dim()) throw InputError("output buffer has wrong size");
    for (double v : xs) {
        if (!std::isfinite(v)) throw InputError("non-finite network input");
    }
    // Rows outside live_rows_ are touched only through an active column, so
    // work scales with the active part of each layer. Wide networks have
    // few active units per point and are evaluated in small chunks.
    const std::size_t widest = widest_;
    const auto& live = live_rows_;
    const std::size_t chunk =
        std::clamp<std::size_t>((std::size_t{1} << 22) / widest, 1, 512);
    std::vector<double> cur(widest * std::min(chunk, std::max<std::size_t>(count, 1)), 0.0);
    std::vector<double> next(cur.size(), 0.0);
    std::vector<std::uint64_t> mark((widest + 63) / 64, 0);
    std::vector<std::uint32_t> active;
    const std::size_t od = output_dim();
    for (std::size_t start = 0; start < count; start += chunk) {
        const std::size_t B = std::min(chunk, count - start);
        active.clear();
        for (std::size_t j = 0; j < input_dim_; ++j) {
            active.push_back(static_cast<std::uint32_t>(j));
            for (std::size_t p = 0; p < B; ++p) cur[j * B + p] = xs[(start + p) * input_dim_ + j];
        }
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const auto& L = layers_[l];
            auto touch = [&](std::uint32_t r) {
                mark[r >> 6] |= std::uint64_t{1} << (r & 63);
                std::fill_n(next.data() + static_cast<std::size_t>(r) * B, B, L.biases[r]);
            };
            for (auto r : live[l]) touch(r);
            for (auto j : active) {
                const double* v = cur.data() + static_cast<std::size_t>(j) * B;
                bool any = false;
                for (std::size_t p = 0; p < B; ++p) any |= (v[p] != 0.0);
                if (!any) continue;
                auto rs = L.weights.col_rows(j);
                auto ws = L.weights.col_values(j);
                for (std::size_t t = 0; t < rs.size(); ++t) {
                    if (!(mark[rs[t] >> 6] >> (rs[t] & 63) & 1)) touch(rs[t]);
                    double* z = next.data() + static_cast<std::size_t>(rs[t]) * B;
                    const double w = ws[t];
                    for (std::size_t p = 0; p < B; ++p) z[p] += w * v[p];
                }
            }
            for (auto j : active) std::fill_n(cur.data() + static_cast<std::size_t>(j) * B, B, 0.0);
            // collect touched rows in increasing order, keeping the nonzero ones
            active.clear();
            const bool relu = L.activation == Activation::ReLU;
            const std::size_t words = (L.out_dim() + 63) / 64;
            for (std::size_t w = 0; w < words; ++w) {
                std::uint64_t bits = mark[w];
                mark[w] = 0;
                while (bits) {
                    auto r = static_cast<std::uint32_t>(w * 64 + std::countr_zero(bits));
                    bits &= bits - 1;
                    double* z = next.data() + static_cast<std::size_t>(r) * B;
                    bool any = false;
                    for (std::size_t p = 0; p < B; ++p) {
                        if (relu && z[p] < 0.0) z[p] = 0.0;
                        any |= (z[p] != 0.0);
                    }
                    if (any) active.push_back(r);
                }
            }
            cur.swap(next);
        }
        for (std::size_t p = 0; p < B; ++p) {
            for (std::size_t i = 0; i < od; ++i) out[(start + p) * od + i] = 0.0;
        }
        for (auto r : active) {
            for (std::size_t p = 0; p < B; ++p) {
                out[(start + p) * od + r] = cur[static_cast<std::size_t>(r) * B + p];
            }
        }
        for (auto r : active) std::fill_n(cur.data() + static_cast<std::size_t>(r) * B, B, 0.0);
    }
}

std::vector<double> eval_forward(const ReluNetwork& net, std::span<const double> x) {
    return net.eval(x);
}

double eval_scalar(const ReluNetwork& net, std::span<const double> x) {
    if (net.output_dim() != 1) throw InputError("network is not scalar valued");
    return net.eval(x)[0];
}

double eval_scalar(const ReluNetwork& net, double x) {
    return eval_scalar(net, std::span<const double>(&x, 1));
}

NetworkStats stats(const ReluNetwork& net) {
    NetworkStats s;
    s.depth = net.depth();
    s.width = 0;
    for (auto h : net.hidden_sizes()) s.width = std::max(s.width, h);
    if (s.depth == 0) s.width = net.input_dim();
    for (const auto& L : net.layers()) {
        s.weight_count += static_cast<std::uint64_t>(L.out_dim()) * L.in_dim() + L.out_dim();
        s.nonzeros += L.weights.nnz();
    }
    return s;
}

ReluNetwork compose_serial(const ReluNetwork& first, const ReluNetwork& second) {
    if (first.output_dim() != second.input_dim()) {
        throw ContractViolation(fmt::format("compose_serial: {} outputs feed {} inputs",
                                            first.output_dim(), second.input_dim()));
    }
    if (first.layers().empty()) return second;
    if (second.layers().empty()) return first;
    bool shape = first.shape_only() || second.shape_only();
    std::vector<LayerSpec> layers;
    const auto& fl = first.layers();
    const auto& sl = second.layers();
    layers.reserve(fl.size() + sl.size() - 1);
    for (std::size_t l = 0; l + 1 < fl.size(); ++l) {
        layers.push_back(shape ? shape_layer(fl[l].out_dim(), fl[l].in_dim(), Activation::ReLU)
                               : fl[l]);
    }
    const auto& a = fl.back();
    const auto& b = sl.front();
    if (shape) {
        layers.push_back(shape_layer(b.out_dim(), a.in_dim(), b.activation));
    } else {
        LayerSpec fused;
        fused.weights = b.weights.multiply(a.weights);
        fused.biases.assign(b.out_dim(), 0.0);
        b.weights.gemv_add(a.biases, fused.biases);
        for (std::size_t i = 0; i < fused.biases.size(); ++i) fused.biases[i] += b.biases[i];
        fused.activation = b.activation;
        layers.push_back(std::move(fused));
    }
    for (std::size_t l = 1; l < sl.size(); ++l) {
        layers.push_back(shape ? shape_layer(sl[l].out_dim(), sl[l].in_dim(), sl[l].activation)
                               : sl[l]);
    }
    return ReluNetwork(first.input_dim(), std::move(layers), shape);
}

ReluNetwork stack_parallel(const std::vector<ReluNetwork>& nets, bool shared_input) {
    std::vector<const ReluNetwork*> ptrs;
    for (const auto& n : nets) ptrs.push_back(&n);
    return stack_parallel(ptrs, shared_input);
}

ReluNetwork stack_parallel(const std::vector<const ReluNetwork*>& nets, bool shared_input) {
    std::vector<std::pair<const ReluNetwork*, std::size_t>> counted;
    for (auto* n : nets) counted.emplace_back(n, 1);
    return stack_parallel_counted(counted, shared_input);
}

ReluNetwork stack_parallel_counted(
    const std::vector<std::pair<const ReluNetwork*, std::size_t>>& nets, bool shared_input) {
    std::vector<std::pair<const ReluNetwork*, std::size_t>> items;
    for (const auto& it : nets) {
        if (it.second > 0) items.push_back(it);
    }
    if (items.empty()) throw ContractViolation("stack_parallel needs at least one network");
    const std::size_t depth = items[0].first->depth();
    const std::size_t d0 = items[0].first->input_dim();
    bool shape = false;
    for (const auto& [n, k] : items) {
        if (n->depth() != depth) {
            throw ContractViolation("stack_parallel: networks have unequal depths");
        }
        if (shared_input && n->input_dim() != d0) {
            throw ContractViolation("stack_parallel: shared input with unequal input_dim");
        }
        shape |= n->shape_only();
    }
    std::size_t input_dim = 0;
    for (const auto& [n, k] : items) input_dim += shared_input ? 0 : n->input_dim() * k;
    if (shared_input) input_dim = d0;

    std::vector<LayerSpec> layers;
    for (std::size_t l = 0; l <= depth; ++l) {
        Activation act = l == depth ? Activation::Identity : Activation::ReLU;
        if (shape) {
            std::size_t out = 0, in = 0;
            for (const auto& [n, k] : items) {
                out += n->layers()[l].out_dim() * k;
                in += n->layers()[l].in_dim() * k;
            }
            if (l == 0 && shared_input) in = d0;
            layers.push_back(shape_layer(out, in, act));
            continue;
        }
        std::vector<const SparseMatrix*> blocks;
        LayerSpec L;
        L.activation = act;
        for (const auto& [n, k] : items) {
            for (std::size_t c = 0; c < k; ++c) {
                blocks.push_back(&n->layers()[l].weights);
                const auto& b = n->layers()[l].biases;
                L.biases.insert(L.biases.end(), b.begin(), b.end());
            }
        }
        L.weights = (l == 0 && shared_input) ? SparseMatrix::vstack(blocks)
                                             : SparseMatrix::block_diag(blocks);
        layers.push_back(std::move(L));
    }
    return ReluNetwork(input_dim, std::move(layers), shape);
}

ReluNetwork pad_depth(const ReluNetwork& net, std::size_t target_depth) {
    const std::size_t depth = net.depth();
    if (target_depth < depth) {
        throw ContractViolation(fmt::format("pad_depth: target {} below current depth {}",
                                            target_depth, depth));
    }
    if (target_depth == depth) return net;
    const std::size_t out = net.output_dim();
    const std::size_t extra = target_depth - depth;
    if (net.shape_only()) {
        auto hidden = net.hidden_sizes();
        for (std::size_t k = 0; k < extra; ++k) hidden.push_back(2 * out);
        return ReluNetwork::shape(net.input_dim(), hidden, out);
    }
    std::vector<LayerSpec> layers;
    if (net.layers().empty()) {
        layers.push_back(LayerSpec{SparseMatrix::identity(out), std::vector<double>(out, 0.0),
                                   Activation::Identity});
    } else {
        layers = net.layers();
    }
    // the final affine layer turns into the pair layer (sigma(v), sigma(-v))
    LayerSpec& last = layers.back();
    {
        const auto& W = last.weights;
        ColumnBuilder cb(2 * out, W.cols(), 2 * W.nnz());
        for (std::size_t j = 0; j < W.cols(); ++j) {
            auto rs = W.col_rows(j);
            auto vs = W.col_values(j);
            for (std::size_t t = 0; t < rs.size(); ++t) {
                cb.push(2 * rs[t], vs[t]);
                cb.push(2 * rs[t] + 1, -vs[t]);
            }
            cb.end_column();
        }
        last.weights = cb.finish();
    }
    std::vector<double> bias(2 * out);
    for (std::size_t i = 0; i < out; ++i) {
        bias[2 * i] = last.biases[i];
        bias[2 * i + 1] = -last.biases[i];
    }
    last.biases = std::move(bias);
    last.activation = Activation::ReLU;

    std::vector<Triplet> carry;
    for (std::uint32_t i = 0; i < out; ++i) {
        carry.push_back({2 * i, 2 * i, 1.0});
        carry.push_back({2 * i + 1, 2 * i, -1.0});
        carry.push_back({2 * i, 2 * i + 1, -1.0});
        carry.push_back({2 * i + 1, 2 * i + 1, 1.0});
    }
    for (std::size_t k = 1; k < extra; ++k) {
        layers.push_back(LayerSpec{SparseMatrix::from_triplets(2 * out, 2 * out, carry),
                                   std::vector<double>(2 * out, 0.0), Activation::ReLU});
    }
    std::vector<Triplet> rec;
    for (std::uint32_t i = 0; i < out; ++i) {
        rec.push_back({i, 2 * i, 1.0});
        rec.push_back({i, 2 * i + 1, -1.0});
    }
    layers.push_back(LayerSpec{SparseMatrix::from_triplets(out, 2 * out, std::move(rec)),
                               std::vector<double>(out, 0.0), Activation::Identity});
    return ReluNetwork(net.input_dim(), std::move(layers));
}

std::vector<ReluNetwork> pad_to_common_depth(const std::vector<ReluNetwork>& nets) {
    std::size_t L = 0;
    for (const auto& n : nets) L = std::max(L, n.depth());
    std::vector<ReluNetwork> out;
    out.reserve(nets.size());
    for (const auto& n : nets) out.push_back(pad_depth(n, L));
    return out;
}

ReluNetwork affine_combine(const std::vector<ReluNetwork>& nets, const std::vector<double>& coeffs,
                           double offset) {
    if (nets.size() != coeffs.size()) {
        throw ContractViolation("affine_combine: nets and coeffs differ in length");
    }
    if (nets.empty()) throw ContractViolation("affine_combine: no networks");
    for (const auto& n : nets) {
        if (n.output_dim() != 1) throw ContractViolation("affine_combine: non-scalar part");
    }
    auto padded = pad_to_common_depth(nets);
    auto stacked = stack_parallel(padded, true);
    std::vector<Triplet> row;
    for (std::uint32_t j = 0; j < coeffs.size(); ++j) row.push_back({0, j, coeffs[j]});
    return compose_affine(stacked, SparseMatrix::from_triplets(1, coeffs.size(), std::move(row)),
                          {offset});
}

ReluNetwork compose_affine(const ReluNetwork& net, const SparseMatrix& weights,
                           const std::vector<double>& biases) {
    if (net.shape_only()) return compose_affine_shape(net, weights.rows());
    return compose_serial(net, ReluNetwork::affine(weights, biases));
}

ReluNetwork compose_affine_shape(const ReluNetwork& net, std::size_t output_dim) {
    return ReluNetwork::shape(net.input_dim(), net.hidden_sizes(), output_dim);
}

ReluNetwork to_shape(const ReluNetwork& net) {
    return ReluNetwork::shape(net.input_dim(), net.hidden_sizes(), net.output_dim());
}

FullyConnectedReport assert_fully_connected(const ReluNetwork& net) {
    FullyConnectedReport r;
    auto s = stats(net);
    r.chain_ok = true;
    r.activations_ok = true;
    std::size_t prev = net.input_dim();
    std::uint64_t raw = 0;
    const auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (L.in_dim() != prev) r.chain_ok = false;
        bool last = l + 1 == layers.size();
        if ((last && L.activation != Activation::Identity) ||
            (!last && L.activation != Activation::ReLU)) {
            r.activations_ok = false;
        }
        // every entry of the logical rows x cols matrix and bias vector
        raw += static_cast<std::uint64_t>(L.weights.rows()) * L.weights.cols();
        raw += net.shape_only() ? L.out_dim() : L.biases.size();
        prev = L.out_dim();
    }
    std::vector<std::size_t> sizes{net.input_dim()};
    for (auto h : net.hidden_sizes()) sizes.push_back(h);
    sizes.push_back(net.output_dim());
    std::uint64_t formula = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        formula += static_cast<std::uint64_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    }
    r.weight_count = raw;
    r.formula_weight_count = formula;
    r.weight_identity = raw == formula && raw == s.weight_count;
    double H = static_cast<double>(s.width);
    double L = static_cast<double>(s.depth);
    r.dense_bound = static_cast<double>(s.weight_count) <= 3.0 * H * H * L + 3.0 * H;
    r.empirical_constant = static_cast<double>(s.weight_count) / (H * H * std::max(L, 1.0));
    r.fully_connected = r.chain_ok && r.activations_ok && r.weight_identity;
    return r;
}

namespace {

constexpr std::uint64_t kDenseLimit = 1u << 20;

void write_double(std::ostream& out, double v) { out << fmt::format("{:.17g}", v); }

}  // namespace

void serialize(const ReluNetwork& net, std::ostream& out) {
    if (net.shape_only()) throw ContractViolation("cannot serialize a shape-only network");
    out << "{\"version\":1,\"input_dim\":" << net.input_dim() << ",\"layers\":[";
    const auto& layers = net.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        if (l) out << ',';
        out << "{\"activation\":\""
            << (L.activation == Activation::ReLU ? "relu" : "identity") << "\",";
        std::uint64_t cells = static_cast<std::uint64_t>(L.out_dim()) * L.in_dim();
        if (cells <= kDenseLimit) {
            out << "\"weights\":[";
            auto dense = L.weights.to_dense();
            for (std::size_t i = 0; i < dense.size(); ++i) {
                if (i) out << ',';
                out << '[';
                for (std::size_t j = 0; j < dense[i].size(); ++j) {
                    if (j) out << ',';
                    write_double(out, dense[i][j]);
                }
                out << ']';
            }
            out << "],";
        } else {
            out << "\"sparse_weights\":{\"rows\":" << L.out_dim() << ",\"cols\":" << L.in_dim()
                << ",\"entries\":[";
            bool firstEntry = true;
            for (std::size_t j = 0; j < L.in_dim(); ++j) {
                auto rs = L.weights.col_rows(j);
                auto vs = L.weights.col_values(j);
                for (std::size_t t = 0; t < rs.size(); ++t) {
                    if (!firstEntry) out << ',';
                    firstEntry = false;
                    out << '[' << rs[t] << ',' << j << ',';
                    write_double(out, vs[t]);
                    out << ']';
                }
            }
            out << "]},";
        }
        out << "\"biases\":[";
        for (std::size_t i = 0; i < L.biases.size(); ++i) {
            if (i) out << ',';
            write_double(out, L.biases[i]);
        }
        out << "]}";
    }
    out << "]}\n";
}

std::string serialize(const ReluNetwork& net) {
    std::ostringstream os;
    serialize(net, os);
    return os.str();
}

namespace {

ReluNetwork from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("network document is not a JSON object");
    if (!doc.contains("version")) throw ParseError("network document has no version field");
    if (!doc["version"].is_number_integer() || doc["version"].get<int>() != 1) {
        throw UnsupportedVersionError(
            fmt::format("unsupported network format version {}", doc["version"].dump()));
    }
    if (!doc.contains("input_dim") || !doc["input_dim"].is_number_unsigned()) {
        throw ParseError("missing or invalid input_dim");
    }
    if (!doc.contains("layers") || !doc["layers"].is_array()) {
        throw ParseError("missing layers array");
    }
    std::size_t input_dim = doc["input_dim"].get<std::size_t>();
    std::vector<LayerSpec> layers;
    std::size_t prev = input_dim;
    const auto& arr = doc["layers"];
    for (std::size_t l = 0; l < arr.size(); ++l) {
        try {
            const auto& jl = arr[l];
            LayerSpec L;
            std::string act = jl.at("activation").get<std::string>();
            if (act == "relu") {
                L.activation = Activation::ReLU;
            } else if (act == "identity") {
                L.activation = Activation::Identity;
            } else {
                throw ParseError("unknown activation '" + act + "'");
            }
            L.biases = jl.at("biases").get<std::vector<double>>();
            if (jl.contains("weights")) {
                auto rows = jl.at("weights").get<std::vector<std::vector<double>>>();
                if (rows.size() != L.biases.size()) throw ParseError("weight rows != biases");
                if (rows.empty()) {
                    L.weights = SparseMatrix(0, prev);
                } else {
                    L.weights = SparseMatrix::from_dense(rows);
                }
            } else if (jl.contains("sparse_weights")) {
                const auto& sw = jl.at("sparse_weights");
                std::size_t r = sw.at("rows").get<std::size_t>();
                std::size_t c = sw.at("cols").get<std::size_t>();
                std::vector<Triplet> tr;
                for (const auto& e : sw.at("entries")) {
                    if (!e.is_array() || e.size() != 3) throw ParseError("malformed sparse entry");
                    auto row = e[0].get<std::size_t>();
                    auto col = e[1].get<std::size_t>();
                    if (row >= r || col >= c) throw ParseError("sparse entry out of range");
                    tr.push_back({static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col),
                                  e[2].get<double>()});
                }
                L.weights = SparseMatrix::from_triplets(r, c, std::move(tr));
            } else {
                throw ParseError("layer has no weights");
            }
            if (L.weights.cols() != prev) throw ParseError("layer input size does not chain");
            if (L.weights.rows() != L.biases.size()) throw ParseError("bias length mismatch");
            prev = L.out_dim();
            layers.push_back(std::move(L));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(fmt::format("layer {}: {}", l, e.what()));
        } catch (const ParseError& e) {
            throw ParseError(fmt::format("layer {}: {}", l, e.what()));
        }
    }
    if (layers.empty()) throw ParseError("network has no layers");
    try {
        return ReluNetwork(input_dim, std::move(layers));
    } catch (const ContractViolation& e) {
        throw ParseError(e.what());
    }
}

}  // namespace

ReluNetwork deserialize(std::istream& in) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("malformed network document: {}", e.what()));
    }
    return from_json(doc);
}

ReluNetwork deserialize(const std::string& text) {
    std::istringstream is(text);
    return deserialize(is);
}

void save_network(const ReluNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    serialize(net, out);
    if (!out) throw InputError("write to '" + path + "' failed");
}

ReluNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open network file '" + path + "'");
    return deserialize(in);
}

}  // namespace narrownet
