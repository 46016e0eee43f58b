#include "gcm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_set>

#include "gcm/parallel.hpp"
#include "gcm/rng.hpp"
#include "gcm/textio.hpp"

namespace gcm {

const char* edge_kind_name(EdgeKind k) {
    switch (k) {
        case EdgeKind::contextual: return "contextual";
        case EdgeKind::surrounding: return "surrounding";
        case EdgeKind::semantic: return "semantic";
    }
    return "unknown";
}

const char* adjacency_scheme_name(AdjacencyScheme s) {
    switch (s) {
        case AdjacencyScheme::cosine: return "cosine";
        case AdjacencyScheme::embed_cosine: return "embed_cosine";
        case AdjacencyScheme::attention: return "attention";
        case AdjacencyScheme::uniform: return "uniform";
    }
    return "unknown";
}

AdjacencyScheme adjacency_scheme_from_name(const std::string& name) {
    if (name == "cosine") return AdjacencyScheme::cosine;
    if (name == "embed_cosine") return AdjacencyScheme::embed_cosine;
    if (name == "attention") return AdjacencyScheme::attention;
    if (name == "uniform") return AdjacencyScheme::uniform;
    throw ConfigError("unknown adjacency scheme '" + name + "'");
}

uint64_t UnitGraph::structural_hash() const {
    uint64_t h = fnv1a("unitgraph");
    h = splitmix64(h ^ static_cast<uint64_t>(node_count));
    for (const GraphEdge& e : edges) {
        uint64_t packed = (static_cast<uint64_t>(static_cast<uint32_t>(e.src)) << 34) ^
                          (static_cast<uint64_t>(static_cast<uint32_t>(e.dst)) << 2) ^
                          static_cast<uint64_t>(e.kind);
        h = splitmix64(h ^ packed);
    }
    return h;
}

double tiou(const Interval& a, const Interval& b) {
    require_valid(a);
    require_valid(b);
    double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter <= 0.0) return 0.0;
    double uni = (a.end - a.start) + (b.end - b.start) - inter;
    return inter / uni;
}

double center_distance(const Interval& a, const Interval& b) {
    require_valid(a);
    require_valid(b);
    double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
    if (inter < 0.0) inter = 0.0;
    double uni = (a.end - a.start) + (b.end - b.start) - inter;
    double ca = (a.start + a.end) / 2.0;
    double cb = (b.start + b.end) / 2.0;
    return std::fabs(ca - cb) / uni;
}

namespace {

// Shared similarity expression: both graph builders and both kNN routes must
// produce bit-identical values, so every path funnels through here.
inline double cosine_between(const DenseMatrix& x, const std::vector<double>& norms,
                             int i, int j) {
    const double* a = x.row(i);
    const double* b = x.row(j);
    double dot = 0.0;
    for (int k = 0; k < x.cols; ++k) dot += a[k] * b[k];
    return dot / (norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)]);
}

std::vector<double> row_norms(const DenseMatrix& x) {
    std::vector<double> norms(static_cast<size_t>(x.rows));
    for (int i = 0; i < x.rows; ++i) {
        const double* r = x.row(i);
        double s = 0.0;
        for (int k = 0; k < x.cols; ++k) s += r[k] * r[k];
        norms[static_cast<size_t>(i)] = std::sqrt(s);
    }
    return norms;
}

void require_nonzero_norms(const std::vector<double>& norms) {
    for (size_t i = 0; i < norms.size(); ++i) {
        if (norms[i] == 0.0) {
            throw DegenerateFeatureError("feature row " + format_int(static_cast<int64_t>(i)) +
                                         " has zero norm; cosine similarity undefined");
        }
    }
}

struct ScoredIndex {
    double sim;
    int idx;
};

// Total order: higher similarity first, ties by lower index.
inline bool better(const ScoredIndex& a, const ScoredIndex& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.idx < b.idx;
}

// Bounded keeper of the l best candidates; top of the heap is the worst kept.
class TopL {
public:
    explicit TopL(int l) : l_(l) {}

    void offer(const ScoredIndex& c) {
        if (l_ == 0) return;
        if (static_cast<int>(heap_.size()) < l_) {
            heap_.push_back(c);
            std::push_heap(heap_.begin(), heap_.end(), better);
            return;
        }
        if (better(c, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), better);
            heap_.back() = c;
            std::push_heap(heap_.begin(), heap_.end(), better);
        }
    }

    bool full() const { return static_cast<int>(heap_.size()) >= l_; }
    double worst_sim() const { return heap_.front().sim; }

    std::vector<int> sorted_indices() const {
        std::vector<int> out;
        out.reserve(heap_.size());
        for (const auto& c : heap_) out.push_back(c.idx);
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    int l_;
    std::vector<ScoredIndex> heap_;
};

std::vector<int> knn_row_exhaustive(const DenseMatrix& x, const std::vector<double>& norms,
                                    int i, int l) {
    TopL top(std::min(l, x.rows - 1));
    for (int j = 0; j < x.rows; ++j) {
        if (j == i) continue;
        top.offer({cosine_between(x, norms, i, j), j});
    }
    return top.sorted_indices();
}

// Exact kNN with angular pruning for large N. Candidates are visited in order
// of increasing angle to the query around a fixed pivot direction; for unit
// vectors at angles t_i, t_j to the pivot, cos(t_i - t_j) upper-bounds their
// cosine, so expansion stops once that bound falls below the current worst.
std::vector<std::vector<int>> knn_all_pruned(const DenseMatrix& x,
                                             const std::vector<double>& norms,
                                             int l, int threads) {
    int n = x.rows;
    std::vector<double> pivot(static_cast<size_t>(x.cols), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        double inv = 1.0 / norms[static_cast<size_t>(i)];
        for (int k = 0; k < x.cols; ++k) pivot[static_cast<size_t>(k)] += r[k] * inv;
    }
    double pnorm = 0.0;
    for (double v : pivot) pnorm += v * v;
    pnorm = std::sqrt(pnorm);
    if (pnorm < 1e-9) {
        pivot.assign(pivot.size(), 0.0);
        pivot[0] = 1.0;
        pnorm = 1.0;
    }
    for (double& v : pivot) v /= pnorm;

    std::vector<double> theta(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        double dot = 0.0;
        for (int k = 0; k < x.cols; ++k) dot += r[k] * pivot[static_cast<size_t>(k)];
        double c = dot / norms[static_cast<size_t>(i)];
        c = std::clamp(c, -1.0, 1.0);
        theta[static_cast<size_t>(i)] = std::acos(c);
    }

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (theta[static_cast<size_t>(a)] != theta[static_cast<size_t>(b)]) {
            return theta[static_cast<size_t>(a)] < theta[static_cast<size_t>(b)];
        }
        return a < b;
    });
    std::vector<int> pos(static_cast<size_t>(n));
    for (int p = 0; p < n; ++p) pos[static_cast<size_t>(order[static_cast<size_t>(p)])] = p;

    std::vector<std::vector<int>> result(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t ii = lo; ii < hi; ++ii) {
            int i = static_cast<int>(ii);
            TopL top(std::min(l, n - 1));
            int p = pos[static_cast<size_t>(i)];
            int left = p - 1;
            int right = p + 1;
            bool left_open = left >= 0;
            bool right_open = right < n;
            while (left_open || right_open) {
                double dl = left_open ? theta[static_cast<size_t>(i)] -
                                            theta[static_cast<size_t>(order[static_cast<size_t>(left)])]
                                      : HUGE_VAL;
                double dr = right_open ? theta[static_cast<size_t>(order[static_cast<size_t>(right)])] -
                                             theta[static_cast<size_t>(i)]
                                       : HUGE_VAL;
                bool take_left = dl <= dr;
                int cand = take_left ? order[static_cast<size_t>(left)]
                                     : order[static_cast<size_t>(right)];
                double gap = take_left ? dl : dr;
                if (top.full() && std::cos(gap) < top.worst_sim() - 1e-9) {
                    // everything further on this side is provably worse
                    if (take_left) left_open = false; else right_open = false;
                } else {
                    top.offer({cosine_between(x, norms, i, cand), cand});
                    if (take_left) {
                        --left;
                        left_open = left >= 0;
                    } else {
                        ++right;
                        right_open = right < n;
                    }
                }
            }
            result[static_cast<size_t>(ii)] = top.sorted_indices();
        }
    });
    return result;
}

DenseMatrix features_of(const std::vector<ActionUnit>& units) {
    int n = static_cast<int>(units.size());
    int d = n == 0 ? 0 : static_cast<int>(units[0].feature.size());
    DenseMatrix x(n, d);
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(units[static_cast<size_t>(i)].feature.size()) != d) {
            throw ValidationError("unit feature dimensions differ within one video");
        }
        std::copy(units[static_cast<size_t>(i)].feature.begin(),
                  units[static_cast<size_t>(i)].feature.end(), x.row(i));
    }
    return x;
}

void check_units(const std::vector<ActionUnit>& units) {
    for (size_t i = 0; i < units.size(); ++i) {
        require_valid(units[i].interval);
        if (units[i].video_id != units[0].video_id) {
            throw ValidationError("build_graph expects units from a single video");
        }
    }
}

void sort_edges(std::vector<GraphEdge>& edges) {
    std::sort(edges.begin(), edges.end(), [](const GraphEdge& a, const GraphEdge& b) {
        if (a.src != b.src) return a.src < b.src;
        return a.dst < b.dst;
    });
}

} // namespace

std::vector<int> semantic_candidates(const DenseMatrix& features, int i, int l) {
    if (i < 0 || i >= features.rows) {
        throw ShapeError("semantic_candidates: node index out of range");
    }
    if (l <= 0) return {};
    std::vector<double> norms = row_norms(features);
    require_nonzero_norms(norms);
    return knn_row_exhaustive(features, norms, i, l);
}

UnitGraph build_graph(const std::vector<ActionUnit>& units, const GraphParams& p,
                      int threads) {
    check_units(units);
    int n = static_cast<int>(units.size());
    UnitGraph g;
    g.node_count = n;
    if (n == 0) return g;

    struct Span {
        double start, end, center, len;
        int idx;
    };
    std::vector<Span> spans(static_cast<size_t>(n));
    double max_len = 0.0;
    for (int i = 0; i < n; ++i) {
        const Interval& iv = units[static_cast<size_t>(i)].interval;
        spans[static_cast<size_t>(i)] = {iv.start, iv.end, (iv.start + iv.end) / 2.0,
                                         iv.end - iv.start, i};
        max_len = std::max(max_len, iv.end - iv.start);
    }
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
        if (a.start != b.start) return a.start < b.start;
        if (a.end != b.end) return a.end < b.end;
        return a.idx < b.idx;
    });

    // temporal pass: one forward scan per node covers both contextual and
    // surrounding candidates; anything past the reach bound provably fails
    // the strict d < theta_sur test.
    std::vector<std::vector<GraphEdge>> local(static_cast<size_t>(n));
    parallel_for(n, threads, [&](int64_t lo, int64_t hi) {
        for (int64_t aa = lo; aa < hi; ++aa) {
            const Span& a = spans[static_cast<size_t>(aa)];
            auto& out = local[static_cast<size_t>(aa)];
            if (!p.one_stage_mode &&
                tiou(units[static_cast<size_t>(a.idx)].interval,
                     units[static_cast<size_t>(a.idx)].interval) > p.theta_ctx) {
                out.push_back({a.idx, a.idx, EdgeKind::contextual});
            }
            double reach = a.center + p.theta_sur * (a.len + max_len);
            double limit = std::max(a.end, reach);
            for (int64_t bb = aa + 1; bb < n; ++bb) {
                const Span& b = spans[static_cast<size_t>(bb)];
                if (b.start >= limit) break;
                const Interval& ia = units[static_cast<size_t>(a.idx)].interval;
                const Interval& ib = units[static_cast<size_t>(b.idx)].interval;
                if (b.start < a.end) { // overlapping
                    if (p.one_stage_mode) continue;
                    double r = tiou(ia, ib);
                    if (r > p.theta_ctx) {
                        out.push_back({a.idx, b.idx, EdgeKind::contextual});
                        out.push_back({b.idx, a.idx, EdgeKind::contextual});
                    }
                } else { // disjoint, tiou = 0
                    if (b.start >= reach) continue;
                    double d = center_distance(ia, ib);
                    if (d < p.theta_sur) {
                        out.push_back({a.idx, b.idx, EdgeKind::surrounding});
                        out.push_back({b.idx, a.idx, EdgeKind::surrounding});
                    }
                }
            }
        }
    });
    for (auto& chunk : local) {
        g.edges.insert(g.edges.end(), chunk.begin(), chunk.end());
    }

    // semantic pass
    int l = std::min(p.semantic_l, n - 1);
    if (l > 0) {
        DenseMatrix x = features_of(units);
        std::vector<double> norms = row_norms(x);
        require_nonzero_norms(norms);
        std::vector<std::vector<int>> knn;
        if (n <= 4096) {
            knn.resize(static_cast<size_t>(n));
            parallel_for(n, threads, [&](int64_t lo, int64_t hi) {
                for (int64_t i = lo; i < hi; ++i) {
                    knn[static_cast<size_t>(i)] =
                        knn_row_exhaustive(x, norms, static_cast<int>(i), l);
                }
            });
        } else {
            knn = knn_all_pruned(x, norms, l, threads);
        }

        sort_edges(g.edges);
        std::vector<int> row_start(static_cast<size_t>(n) + 1, 0);
        for (const GraphEdge& e : g.edges) row_start[static_cast<size_t>(e.src) + 1]++;
        for (int i = 0; i < n; ++i) row_start[static_cast<size_t>(i) + 1] += row_start[static_cast<size_t>(i)];
        auto has_edge = [&](int s, int d) {
            int lo2 = row_start[static_cast<size_t>(s)];
            int hi2 = row_start[static_cast<size_t>(s) + 1];
            while (lo2 < hi2) {
                int mid = (lo2 + hi2) / 2;
                if (g.edges[static_cast<size_t>(mid)].dst < d) lo2 = mid + 1;
                else hi2 = mid;
            }
            return lo2 < row_start[static_cast<size_t>(s) + 1] &&
                   g.edges[static_cast<size_t>(lo2)].dst == d;
        };

        std::vector<GraphEdge> sem;
        for (int i = 0; i < n; ++i) {
            for (int j : knn[static_cast<size_t>(i)]) {
                if (!intervals_disjoint(units[static_cast<size_t>(i)].interval,
                                        units[static_cast<size_t>(j)].interval)) {
                    continue;
                }
                if (has_edge(i, j)) continue;
                sem.push_back({i, j, EdgeKind::semantic});
            }
        }
        g.edges.insert(g.edges.end(), sem.begin(), sem.end());
    }

    sort_edges(g.edges);
    return g;
}

UnitGraph build_graph_oracle(const std::vector<ActionUnit>& units, const GraphParams& p) {
    check_units(units);
    int n = static_cast<int>(units.size());
    UnitGraph g;
    g.node_count = n;
    if (n == 0) return g;

    int l = std::min(p.semantic_l, n - 1);
    std::vector<std::vector<int>> knn(static_cast<size_t>(n));
    if (l > 0) {
        DenseMatrix x = features_of(units);
        std::vector<double> norms = row_norms(x);
        require_nonzero_norms(norms);
        std::vector<ScoredIndex> scored;
        for (int i = 0; i < n; ++i) {
            scored.clear();
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                scored.push_back({cosine_between(x, norms, i, j), j});
            }
            std::nth_element(scored.begin(), scored.begin() + l, scored.end(), better);
            scored.resize(static_cast<size_t>(l));
            std::vector<int> ids;
            ids.reserve(scored.size());
            for (const auto& s : scored) ids.push_back(s.idx);
            std::sort(ids.begin(), ids.end());
            knn[static_cast<size_t>(i)] = std::move(ids);
        }
    }

    for (int i = 0; i < n; ++i) {
        const auto& cand = knn[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) {
            double r = tiou(units[static_cast<size_t>(i)].interval,
                            units[static_cast<size_t>(j)].interval);
            if (!p.one_stage_mode && r > p.theta_ctx) {
                g.edges.push_back({i, j, EdgeKind::contextual});
                continue;
            }
            if (i == j || r != 0.0) continue;
            double d = center_distance(units[static_cast<size_t>(i)].interval,
                                       units[static_cast<size_t>(j)].interval);
            if (d < p.theta_sur) {
                g.edges.push_back({i, j, EdgeKind::surrounding});
                continue;
            }
            if (std::binary_search(cand.begin(), cand.end(), j)) {
                g.edges.push_back({i, j, EdgeKind::semantic});
            }
        }
    }
    sort_edges(g.edges);
    return g;
}

SparseAdjacency compute_adjacency(const UnitGraph& g, const DenseMatrix& features,
                                  const AdjacencySpec& spec) {
    if (features.rows != g.node_count) {
        throw ShapeError("compute_adjacency: graph has " + format_int(g.node_count) +
                         " nodes but features have " + format_int(features.rows) + " rows");
    }
    SparseAdjacency a(g.node_count, g.node_count);
    a.col_indices.reserve(g.edges.size());
    a.weights.assign(g.edges.size(), 0.0);
    {
        int prev_src = 0, prev_dst = -1;
        for (const GraphEdge& e : g.edges) {
            if (e.src < prev_src || (e.src == prev_src && e.dst <= prev_dst)) {
                throw ValidationError("compute_adjacency: edges not in canonical order");
            }
            if (e.src != prev_src) prev_dst = -1;
            prev_src = e.src;
            prev_dst = e.dst;
            a.col_indices.push_back(e.dst);
            a.row_offsets[static_cast<size_t>(e.src) + 1]++;
        }
        for (int i = 0; i < g.node_count; ++i) {
            a.row_offsets[static_cast<size_t>(i) + 1] += a.row_offsets[static_cast<size_t>(i)];
        }
    }

    switch (spec.scheme) {
        case AdjacencyScheme::uniform: {
            std::fill(a.weights.begin(), a.weights.end(), 1.0);
            break;
        }
        case AdjacencyScheme::cosine: {
            std::vector<double> norms = row_norms(features);
            require_nonzero_norms(norms);
            for (size_t k = 0; k < g.edges.size(); ++k) {
                const GraphEdge& e = g.edges[k];
                double c = cosine_between(features, norms, e.src, e.dst);
                a.weights[k] = std::clamp(c, -1.0, 1.0);
            }
            break;
        }
        case AdjacencyScheme::embed_cosine: {
            if (spec.embed1 == nullptr || spec.embed2 == nullptr) {
                throw ConfigError("embed_cosine scheme requires both embedding maps");
            }
            DenseMatrix u = matmul(features, *spec.embed1);
            DenseMatrix v = matmul(features, *spec.embed2);
            std::vector<double> nu = row_norms(u);
            std::vector<double> nv = row_norms(v);
            require_nonzero_norms(nu);
            require_nonzero_norms(nv);
            for (size_t k = 0; k < g.edges.size(); ++k) {
                const GraphEdge& e = g.edges[k];
                const double* ur = u.row(e.src);
                const double* vr = v.row(e.dst);
                double dot = 0.0;
                for (int c = 0; c < u.cols; ++c) dot += ur[c] * vr[c];
                double w = dot / (nu[static_cast<size_t>(e.src)] * nv[static_cast<size_t>(e.dst)]);
                a.weights[k] = std::clamp(w, -1.0, 1.0);
            }
            break;
        }
        case AdjacencyScheme::attention: {
            if (spec.attn1 == nullptr || spec.attn2 == nullptr) {
                throw ConfigError("attention scheme requires both projection tensors");
            }
            DenseMatrix u = matmul(features, spec.attn1->value);
            DenseMatrix v = matmul(features, spec.attn2->value);
            for (int i = 0; i < a.rows; ++i) {
                int b = a.row_begin(i), e = a.row_end(i);
                if (b == e) continue;
                double mx = -HUGE_VAL;
                for (int k = b; k < e; ++k) {
                    const double* ur = u.row(i);
                    const double* vr = v.row(a.col_indices[static_cast<size_t>(k)]);
                    double s = 0.0;
                    for (int c = 0; c < u.cols; ++c) s += ur[c] * vr[c];
                    a.weights[static_cast<size_t>(k)] = s;
                    mx = std::max(mx, s);
                }
                double sum = 0.0;
                for (int k = b; k < e; ++k) {
                    double w = std::exp(a.weights[static_cast<size_t>(k)] - mx);
                    a.weights[static_cast<size_t>(k)] = w;
                    sum += w;
                }
                for (int k = b; k < e; ++k) a.weights[static_cast<size_t>(k)] /= sum;
            }
            break;
        }
    }
    return a;
}

void attention_adjacency_backward(const DenseMatrix& features, const SparseAdjacency& a,
                                  const SparseAdjacency& da, ParamTensor& attn1,
                                  ParamTensor& attn2) {
    DenseMatrix u = matmul(features, attn1.value);
    DenseMatrix v = matmul(features, attn2.value);
    DenseMatrix du(u.rows, u.cols);
    DenseMatrix dv(v.rows, v.cols);
    for (int i = 0; i < a.rows; ++i) {
        int b = a.row_begin(i), e = a.row_end(i);
        if (b == e) continue;
        double dot_pg = 0.0;
        for (int k = b; k < e; ++k) {
            dot_pg += a.weights[static_cast<size_t>(k)] * da.weights[static_cast<size_t>(k)];
        }
        for (int k = b; k < e; ++k) {
            double ds = a.weights[static_cast<size_t>(k)] *
                        (da.weights[static_cast<size_t>(k)] - dot_pg);
            int j = a.col_indices[static_cast<size_t>(k)];
            double* du_row = du.row(i);
            double* dv_row = dv.row(j);
            const double* ur = u.row(i);
            const double* vr = v.row(j);
            for (int c = 0; c < u.cols; ++c) {
                du_row[c] += ds * vr[c];
                dv_row[c] += ds * ur[c];
            }
        }
    }
    dense_affine_backward(features, attn1, du, nullptr);
    dense_affine_backward(features, attn2, dv, nullptr);
}

void dump_graph(std::ostream& os, const UnitGraph& g, const SparseAdjacency* weights) {
    if (weights != nullptr && weights->nnz() != static_cast<int>(g.edges.size())) {
        throw ShapeError("dump_graph: weights do not match the edge set");
    }
    for (size_t k = 0; k < g.edges.size(); ++k) {
        const GraphEdge& e = g.edges[k];
        os << e.src << ' ' << e.dst << ' ' << edge_kind_name(e.kind);
        if (weights != nullptr) {
            os << ' ' << format_double(weights->weights[k]);
        }
        os << '\n';
    }
}

} // namespace gcm
