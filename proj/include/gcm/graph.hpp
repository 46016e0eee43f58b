#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gcm/core.hpp"
#include "gcm/sparse.hpp"
#include "gcm/tensor.hpp"

namespace gcm {

enum class EdgeKind : uint8_t { contextual = 0, surrounding = 1, semantic = 2 };

const char* edge_kind_name(EdgeKind k);

struct GraphEdge {
    int src = 0;
    int dst = 0;
    EdgeKind kind = EdgeKind::contextual;

    bool operator==(const GraphEdge&) const = default;
};

struct GraphParams {
    double theta_ctx = 0.7;  // contextual threshold on tIoU (strict >)
    double theta_sur = 1.0;  // surrounding threshold on normalized distance (strict <)
    int semantic_l = 10;     // nearest neighborhoods per node; 0 disables
    bool one_stage_mode = false; // drop the contextual rule entirely
};

// Typed directed edge list, sorted by (src, dst); no duplicate pairs.
struct UnitGraph {
    int node_count = 0;
    std::vector<GraphEdge> edges;

    bool operator==(const UnitGraph&) const = default;
    uint64_t structural_hash() const;
};

// Temporal IoU (intersection over union) of two intervals, in [0, 1].
double tiou(const Interval& a, const Interval& b);

// |center(a) - center(b)| / U(a, b) with the same union measure as tiou.
double center_distance(const Interval& a, const Interval& b);

// Indices of the l rows (j != i) most cosine-similar to row i, ties broken
// by lower index, returned sorted ascending. Throws DegenerateFeatureError
// on any zero-norm row.
std::vector<int> semantic_candidates(const DenseMatrix& features, int i, int l);

// Sweep-line construction of the typed unit graph. Edge rules, applied with
// precedence contextual > surrounding > semantic:
//   contextual:  tiou(i,j) > theta_ctx           (skipped in one-stage mode)
//   surrounding: tiou(i,j) = 0 and center_distance(i,j) < theta_sur
//   semantic:    tiou(i,j) = 0 and j among the semantic_l nearest neighbors of i
// Contextual and surrounding edges are stored in both directions; semantic
// edges are directed. Contextual self-edges appear for every node.
UnitGraph build_graph(const std::vector<ActionUnit>& units, const GraphParams& p,
                      int threads = 1);

// Exhaustive O(N^2) reference with the identical contract; kept deliberately
// naive as the correctness oracle for build_graph.
UnitGraph build_graph_oracle(const std::vector<ActionUnit>& units, const GraphParams& p);

enum class AdjacencyScheme : uint8_t { cosine = 0, embed_cosine = 1, attention = 2, uniform = 3 };

const char* adjacency_scheme_name(AdjacencyScheme s);
AdjacencyScheme adjacency_scheme_from_name(const std::string& name);

// Scheme plus whatever parameters it needs. embed_cosine uses fixed linear
// maps; attention uses trainable ones and is the only scheme whose weights
// receive gradients.
struct AdjacencySpec {
    AdjacencyScheme scheme = AdjacencyScheme::cosine;
    const DenseMatrix* embed1 = nullptr;
    const DenseMatrix* embed2 = nullptr;
    const ParamTensor* attn1 = nullptr;
    const ParamTensor* attn2 = nullptr;
};

// Edge weights on the graph pattern:
//   cosine       A_ij = <x_i, x_j> / (|x_i| |x_j|), clamped to [-1, 1]
//   embed_cosine same after mapping rows through embed1 / embed2
//   attention    A_ij = exp((x_i W1) . (x_j W2)) normalized over row i's edges
//   uniform      A_ij = 1
SparseAdjacency compute_adjacency(const UnitGraph& g, const DenseMatrix& features,
                                  const AdjacencySpec& spec);

// Routes d(loss)/d(A) into the attention maps' gradient accumulators.
void attention_adjacency_backward(const DenseMatrix& features, const SparseAdjacency& a,
                                  const SparseAdjacency& da, ParamTensor& attn1,
                                  ParamTensor& attn2);

// Text dump, one line per edge: "src dst kind weight", sorted by (src, dst).
// weights may be null (dumps the bare graph).
void dump_graph(std::ostream& os, const UnitGraph& g, const SparseAdjacency* weights);

} // namespace gcm
