#pragma once

#include <vector>

namespace gcm {

// Compressed sparse row matrix of edge weights. Column indices are sorted
// ascending within each row; the pattern mirrors a UnitGraph edge set.
struct SparseAdjacency {
    int rows = 0;
    int cols = 0;
    std::vector<int> row_offsets; // size rows + 1
    std::vector<int> col_indices; // size nnz
    std::vector<double> weights;  // size nnz

    SparseAdjacency() : row_offsets(1, 0) {}
    SparseAdjacency(int r, int c) : rows(r), cols(c), row_offsets(static_cast<size_t>(r) + 1, 0) {}

    int nnz() const { return static_cast<int>(col_indices.size()); }
    int row_begin(int r) const { return row_offsets[static_cast<size_t>(r)]; }
    int row_end(int r) const { return row_offsets[static_cast<size_t>(r) + 1]; }
    int row_size(int r) const { return row_end(r) - row_begin(r); }

    static SparseAdjacency identity(int n) {
        SparseAdjacency a(n, n);
        a.col_indices.resize(static_cast<size_t>(n));
        a.weights.assign(static_cast<size_t>(n), 1.0);
        for (int i = 0; i < n; ++i) {
            a.col_indices[static_cast<size_t>(i)] = i;
            a.row_offsets[static_cast<size_t>(i) + 1] = i + 1;
        }
        return a;
    }

    // Same pattern, all weights zero; gradient accumulator for attention.
    SparseAdjacency zeros_like() const {
        SparseAdjacency a = *this;
        a.weights.assign(a.weights.size(), 0.0);
        return a;
    }
};

} // namespace gcm
