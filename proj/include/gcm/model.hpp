#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcm/sparse.hpp"
#include "gcm/tensor.hpp"

namespace gcm {

enum class GcmMode : uint8_t { gcn = 0, mlp = 1, meanpool = 2 };

const char* gcm_mode_name(GcmMode m);
GcmMode gcm_mode_from_name(const std::string& name);

struct GcmConfig {
    int depth = 2;                 // K
    std::vector<int> hidden_dims;  // size K; empty means every layer keeps the input dim
    double dropout_drop = 0.8;     // probability of dropping a hidden activation
    int sampling_size = 4;         // N_s; 0 disables neighborhood sampling
    GcmMode mode = GcmMode::gcn;
};

// Per-layer dims d_1..d_K; throws ConfigError unless the chain is consistent
// and d_K equals input_dim (the residual addition requires it).
std::vector<int> resolve_layer_dims(int input_dim, const GcmConfig& cfg);

struct GcmWeights {
    std::vector<ParamTensor> layers;

    static GcmWeights init(int input_dim, const GcmConfig& cfg, Rng& rng);
    void zero();
};

// Intermediates captured by a forward pass, consumed by gcm_backward.
struct GcmForwardContext {
    std::vector<DenseMatrix> layer_input; // X^(k-1) as fed to layer k
    std::vector<DenseMatrix> aggregated;  // A X^(k-1) (or X^(k-1) for mlp paths)
    std::vector<DenseMatrix> preact;      // aggregated * W_k
    std::vector<DenseMatrix> dropmask;    // empty rows when dropout is off
    std::vector<SparseAdjacency> sampled; // per-layer matrices when sampling
    DenseMatrix pooled_input;             // meanpool: network output before pooling
    SparseAdjacency pool;                 // meanpool averaging matrix
    bool used_sampling = false;
    bool training = false;
};

// Full-sum propagation (testing path):
//   X^(k) = relu(A X^(k-1) W^(k)), k = 1..K;  Y = X^(K) + X^(0).
// mode = mlp drops A; mode = meanpool runs the mlp then averages each row
// over its graph neighborhood (self included) before the residual.
// Dropout applies to hidden features only when training.
DenseMatrix gcm_forward(const DenseMatrix& x0, const SparseAdjacency& a,
                        const GcmWeights& w, const GcmConfig& cfg, bool training,
                        uint64_t seed, GcmForwardContext* ctx = nullptr);

// Sorted, deduplicated sampled row: the self column gets +1 and every draw
// adds A_ij / n_s, so applying it reproduces Eq-style
//   ((1/N_s) sum_s A_{i,j_s} x_{j_s}) + x_i.
std::vector<std::pair<int, double>> sample_row_coefficients(const SparseAdjacency& a,
                                                            int i, int n_s, Rng& rng);

// Per-layer aggregation matrix with one sampled row per node; seeds are
// derived per (seed, layer, node) so results are schedule-independent.
SparseAdjacency sample_adjacency(const SparseAdjacency& a, int n_s, uint64_t seed,
                                 int layer);

// One node's sampled aggregation: ((1/N_s) sum_s A_{i,j_s} x_{j_s}^(prev) +
// x_i^(prev)) W, as a 1 x q matrix. A node with no neighbors degenerates to
// x_i W.
DenseMatrix sampled_aggregate(int i, const DenseMatrix& x_prev, const SparseAdjacency& a,
                              int n_s, const ParamTensor& w, Rng& rng);

// Training-time forward: neighborhoods are sampled for every node and layer
// first, then aggregation runs bottom-up through relu/dropout with the final
// residual. This estimator aggregates the neighborhood MEAN plus an explicit
// self-addition, while gcm_forward uses the full SUM; the mismatch is
// intentional and covered by the estimator tests. full_enumeration is a test
// hook that swaps the sampled matrices for A itself, making the pass equal
// gcm_forward bit for bit.
DenseMatrix gcm_train_forward(const DenseMatrix& x0, const SparseAdjacency& a,
                              const GcmWeights& w, const GcmConfig& cfg, uint64_t seed,
                              GcmForwardContext* ctx = nullptr,
                              bool full_enumeration = false);

// Reverse pass over a captured context. Accumulates into w.layers[k].grad;
// writes the input gradient when dx0 is non-null and per-edge adjacency
// gradients when da is non-null (pattern must match the forward matrices).
void gcm_backward(const GcmForwardContext& ctx, const SparseAdjacency& a,
                  GcmWeights& w, const GcmConfig& cfg, const DenseMatrix& dy,
                  DenseMatrix* dx0 = nullptr, SparseAdjacency* da = nullptr);

} // namespace gcm
