#include "gcm/model.hpp"

#include <algorithm>
#include <cmath>

#include "gcm/textio.hpp"

namespace gcm {

const char* gcm_mode_name(GcmMode m) {
    switch (m) {
        case GcmMode::gcn: return "gcn";
        case GcmMode::mlp: return "mlp";
        case GcmMode::meanpool: return "meanpool";
    }
    return "unknown";
}

GcmMode gcm_mode_from_name(const std::string& name) {
    if (name == "gcn") return GcmMode::gcn;
    if (name == "mlp") return GcmMode::mlp;
    if (name == "meanpool") return GcmMode::meanpool;
    throw ConfigError("unknown gcm mode '" + name + "'");
}

std::vector<int> resolve_layer_dims(int input_dim, const GcmConfig& cfg) {
    if (cfg.depth < 1) throw ConfigError("gcm depth must be >= 1");
    if (input_dim < 1) throw ConfigError("gcm input dimension must be >= 1");
    if (cfg.dropout_drop < 0.0 || cfg.dropout_drop >= 1.0) {
        throw ConfigError("dropout drop probability must lie in [0, 1)");
    }
    std::vector<int> dims = cfg.hidden_dims;
    if (dims.empty()) {
        dims.assign(static_cast<size_t>(cfg.depth), input_dim);
    }
    if (static_cast<int>(dims.size()) != cfg.depth) {
        throw ConfigError("hidden_dims must list one dimension per layer");
    }
    for (int d : dims) {
        if (d < 1) throw ConfigError("hidden dimensions must be positive");
    }
    if (dims.back() != input_dim) {
        throw ConfigError("residual output dim (" + format_int(dims.back()) +
                          ") must equal the input dim (" + format_int(input_dim) + ")");
    }
    return dims;
}

GcmWeights GcmWeights::init(int input_dim, const GcmConfig& cfg, Rng& rng) {
    std::vector<int> dims = resolve_layer_dims(input_dim, cfg);
    GcmWeights w;
    int prev = input_dim;
    for (int k = 0; k < cfg.depth; ++k) {
        DenseMatrix m(prev, dims[static_cast<size_t>(k)]);
        double scale = std::sqrt(2.0 / prev);
        for (double& v : m.data) v = scale * rng.normal();
        w.layers.emplace_back(std::move(m));
        prev = dims[static_cast<size_t>(k)];
    }
    return w;
}

void GcmWeights::zero() {
    for (ParamTensor& p : layers) {
        std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
    }
}

namespace {

constexpr uint64_t kSampleTag = 0x5A4D504C45ULL;
constexpr uint64_t kDropTag = 0x44524F50ULL;

DenseMatrix dropout_mask(int rows, int cols, double drop, uint64_t seed, int layer) {
    DenseMatrix mask(rows, cols);
    double keep_scale = 1.0 / (1.0 - drop);
    for (int i = 0; i < rows; ++i) {
        Rng rng(seed_mix({seed, kDropTag, static_cast<uint64_t>(layer),
                          static_cast<uint64_t>(i)}));
        double* row = mask.row(i);
        for (int j = 0; j < cols; ++j) {
            row[j] = rng.uniform() < drop ? 0.0 : keep_scale;
        }
    }
    return mask;
}

// Neighborhood-mean matrix over the graph pattern, self column included.
SparseAdjacency build_pool_matrix(const SparseAdjacency& a) {
    SparseAdjacency pool(a.rows, a.cols);
    std::vector<int> cols;
    for (int i = 0; i < a.rows; ++i) {
        cols.clear();
        bool has_self = false;
        for (int e = a.row_begin(i); e < a.row_end(i); ++e) {
            int c = a.col_indices[static_cast<size_t>(e)];
            cols.push_back(c);
            if (c == i) has_self = true;
        }
        if (!has_self) {
            cols.push_back(i);
            std::sort(cols.begin(), cols.end());
        }
        double w = 1.0 / static_cast<double>(cols.size());
        for (int c : cols) {
            pool.col_indices.push_back(c);
            pool.weights.push_back(w);
        }
        pool.row_offsets[static_cast<size_t>(i) + 1] =
            static_cast<int>(pool.col_indices.size());
    }
    return pool;
}

// Shared layer stack: per_layer[k] is the aggregation matrix for layer k, or
// null for a plain dense layer. Returns X^(K); pooling and the residual are
// handled by the callers.
DenseMatrix layer_stack(const DenseMatrix& x0,
                        const std::vector<const SparseAdjacency*>& per_layer,
                        const GcmWeights& w, const GcmConfig& cfg, bool training,
                        uint64_t seed, GcmForwardContext* ctx) {
    std::vector<int> dims = resolve_layer_dims(x0.cols, cfg);
    if (static_cast<int>(w.layers.size()) != cfg.depth) {
        throw ShapeError("gcm weights do not match the configured depth");
    }
    bool use_dropout = training && cfg.dropout_drop > 0.0;
    DenseMatrix x = x0;
    for (int k = 0; k < cfg.depth; ++k) {
        const ParamTensor& wk = w.layers[static_cast<size_t>(k)];
        if (wk.value.rows != x.cols || wk.value.cols != dims[static_cast<size_t>(k)]) {
            throw ShapeError("gcm layer " + format_int(k) + " weight shape mismatch");
        }
        const SparseAdjacency* a = per_layer[static_cast<size_t>(k)];
        if (a != nullptr && a->cols != x.rows) {
            throw ShapeError("gcm adjacency size does not match node count");
        }
        DenseMatrix agg = a != nullptr ? sparse_dense_matmul(*a, x) : x;
        DenseMatrix pre = dense_affine(agg, wk);
        DenseMatrix act = relu(pre);
        DenseMatrix mask;
        if (use_dropout) {
            mask = dropout_mask(act.rows, act.cols, cfg.dropout_drop, seed, k);
            act = hadamard(act, mask);
        }
        if (ctx != nullptr) {
            ctx->layer_input.push_back(std::move(x));
            ctx->aggregated.push_back(std::move(agg));
            ctx->preact.push_back(std::move(pre));
            ctx->dropmask.push_back(std::move(mask));
        }
        x = std::move(act);
    }
    return x;
}

DenseMatrix finish_forward(DenseMatrix top, const DenseMatrix& x0, const SparseAdjacency& a,
                           const GcmConfig& cfg, bool training, GcmForwardContext* ctx) {
    DenseMatrix y;
    if (cfg.mode == GcmMode::meanpool) {
        SparseAdjacency pool = build_pool_matrix(a);
        y = sparse_dense_matmul(pool, top);
        if (ctx != nullptr) {
            ctx->pooled_input = std::move(top);
            ctx->pool = std::move(pool);
        }
    } else {
        y = std::move(top);
    }
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += x0.data[i];
    if (ctx != nullptr) ctx->training = training;
    require_finite(y, "gcm forward output");
    return y;
}

} // namespace

DenseMatrix gcm_forward(const DenseMatrix& x0, const SparseAdjacency& a,
                        const GcmWeights& w, const GcmConfig& cfg, bool training,
                        uint64_t seed, GcmForwardContext* ctx) {
    std::vector<const SparseAdjacency*> per_layer(
        static_cast<size_t>(cfg.depth), cfg.mode == GcmMode::gcn ? &a : nullptr);
    DenseMatrix top = layer_stack(x0, per_layer, w, cfg, training, seed, ctx);
    return finish_forward(std::move(top), x0, a, cfg, training, ctx);
}

std::vector<std::pair<int, double>> sample_row_coefficients(const SparseAdjacency& a,
                                                            int i, int n_s, Rng& rng) {
    int begin = a.row_begin(i);
    int count = a.row_end(i) - begin;
    std::vector<std::pair<int, double>> coeffs;
    coeffs.emplace_back(i, 1.0); // enforced self-addition
    if (count > 0 && n_s > 0) {
        double inv = 1.0 / static_cast<double>(n_s);
        for (int s = 0; s < n_s; ++s) {
            int pick = begin + rng.uniform_int(count);
            int col = a.col_indices[static_cast<size_t>(pick)];
            double w = a.weights[static_cast<size_t>(pick)] * inv;
            coeffs.emplace_back(col, w);
        }
    }
    std::sort(coeffs.begin(), coeffs.end(),
              [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<std::pair<int, double>> merged;
    for (const auto& c : coeffs) {
        if (!merged.empty() && merged.back().first == c.first) {
            merged.back().second += c.second;
        } else {
            merged.push_back(c);
        }
    }
    return merged;
}

SparseAdjacency sample_adjacency(const SparseAdjacency& a, int n_s, uint64_t seed,
                                 int layer) {
    SparseAdjacency s(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i) {
        Rng rng(seed_mix({seed, kSampleTag, static_cast<uint64_t>(layer),
                          static_cast<uint64_t>(i)}));
        auto coeffs = sample_row_coefficients(a, i, n_s, rng);
        for (const auto& [col, w] : coeffs) {
            s.col_indices.push_back(col);
            s.weights.push_back(w);
        }
        s.row_offsets[static_cast<size_t>(i) + 1] = static_cast<int>(s.col_indices.size());
    }
    return s;
}

DenseMatrix sampled_aggregate(int i, const DenseMatrix& x_prev, const SparseAdjacency& a,
                              int n_s, const ParamTensor& w, Rng& rng) {
    if (i < 0 || i >= a.rows) throw ShapeError("sampled_aggregate: node index out of range");
    if (a.cols != x_prev.rows) throw ShapeError("sampled_aggregate: shape mismatch");
    auto coeffs = sample_row_coefficients(a, i, n_s, rng);
    DenseMatrix agg(1, x_prev.cols);
    for (const auto& [col, cw] : coeffs) {
        const double* row = x_prev.row(col);
        for (int j = 0; j < x_prev.cols; ++j) agg.data[static_cast<size_t>(j)] += cw * row[j];
    }
    return dense_affine(agg, w);
}

DenseMatrix gcm_train_forward(const DenseMatrix& x0, const SparseAdjacency& a,
                              const GcmWeights& w, const GcmConfig& cfg, uint64_t seed,
                              GcmForwardContext* ctx, bool full_enumeration) {
    if (cfg.mode != GcmMode::gcn || cfg.sampling_size <= 0) {
        return gcm_forward(x0, a, w, cfg, true, seed, ctx);
    }
    // top-down: draw every node's neighborhoods for all layers first
    std::vector<SparseAdjacency> sampled(static_cast<size_t>(cfg.depth));
    for (int k = cfg.depth - 1; k >= 0; --k) {
        sampled[static_cast<size_t>(k)] =
            full_enumeration ? a : sample_adjacency(a, cfg.sampling_size, seed, k);
    }

    // bottom-up aggregation
    std::vector<const SparseAdjacency*> per_layer;
    per_layer.reserve(sampled.size());
    for (const auto& s : sampled) per_layer.push_back(&s);
    DenseMatrix top = layer_stack(x0, per_layer, w, cfg, true, seed, ctx);
    DenseMatrix y = finish_forward(std::move(top), x0, a, cfg, true, ctx);
    if (ctx != nullptr) {
        ctx->sampled = std::move(sampled);
        ctx->used_sampling = true;
    }
    return y;
}

void gcm_backward(const GcmForwardContext& ctx, const SparseAdjacency& a,
                  GcmWeights& w, const GcmConfig& cfg, const DenseMatrix& dy,
                  DenseMatrix* dx0, SparseAdjacency* da) {
    if (static_cast<int>(ctx.preact.size()) != cfg.depth) {
        throw ShapeError("gcm_backward: context does not match config depth");
    }
    DenseMatrix dx = dy;
    if (cfg.mode == GcmMode::meanpool) {
        dx = sparse_dense_matmul_backward_x(ctx.pool, dy);
    }
    for (int k = cfg.depth - 1; k >= 0; --k) {
        const DenseMatrix& mask = ctx.dropmask[static_cast<size_t>(k)];
        if (!mask.empty()) dx = hadamard(dx, mask);
        DenseMatrix dpre = relu_backward(ctx.preact[static_cast<size_t>(k)], dx);
        DenseMatrix dagg;
        dense_affine_backward(ctx.aggregated[static_cast<size_t>(k)],
                              w.layers[static_cast<size_t>(k)], dpre, &dagg);
        if (cfg.mode == GcmMode::gcn) {
            const SparseAdjacency& ak =
                ctx.used_sampling ? ctx.sampled[static_cast<size_t>(k)] : a;
            if (da != nullptr && !ctx.used_sampling) {
                sparse_dense_matmul_backward_a(ak, ctx.layer_input[static_cast<size_t>(k)],
                                               dagg, *da);
            }
            dx = sparse_dense_matmul_backward_x(ak, dagg);
        } else {
            dx = std::move(dagg);
        }
    }
    if (dx0 != nullptr) {
        *dx0 = dx;
        // residual path
        for (size_t i = 0; i < dx0->data.size(); ++i) dx0->data[i] += dy.data[i];
    }
}

} // namespace gcm
