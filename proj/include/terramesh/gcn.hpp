#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "terramesh/autodiff.hpp"
#include "terramesh/geometry.hpp"

namespace terramesh {

// Symmetric sparse matrix in CSR form; used for the normalized mesh
// adjacency operator.
struct SparseMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<int> col;
  std::vector<double> value;
};

// A_hat = D^{-1/2} (A + I) D^{-1/2} with D the degree-plus-self-loop matrix.
// Symmetric with spectrum in [-1, 1].
inline SparseMatrix normalized_adjacency(const MeshTopology& topo) {
  const std::size_t n = topo.vertex_count;
  auto adj = topo.adjacency();
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(adj[i].size() + 1));
  }
  SparseMatrix s;
  s.n = n;
  s.row_ptr.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) s.row_ptr[i + 1] = s.row_ptr[i] + adj[i].size() + 1;
  s.col.resize(s.row_ptr[n]);
  s.value.resize(s.row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = s.row_ptr[i];
    std::sort(adj[i].begin(), adj[i].end());
    bool self_inserted = false;
    for (int j : adj[i]) {
      if (!self_inserted && static_cast<std::size_t>(j) > i) {
        s.col[k] = static_cast<int>(i);
        s.value[k] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
        ++k;
        self_inserted = true;
      }
      s.col[k] = j;
      s.value[k] = inv_sqrt_deg[i] * inv_sqrt_deg[j];
      ++k;
    }
    if (!self_inserted) {
      s.col[k] = static_cast<int>(i);
      s.value[k] = inv_sqrt_deg[i] * inv_sqrt_deg[i];
      ++k;
    }
  }
  return s;
}

// y = S x for a constant symmetric S and a (n, f) variable. The backward
// pass reuses S (S^T = S).
inline Var sparse_matmul(Tape& tape, const SparseMatrix& s, const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != s.n) {
    throw std::invalid_argument("sparse_matmul: operand rows do not match matrix size");
  }
  const std::size_t f = xv.dim(1);
  Tensor out({s.n, f});
  for (std::size_t i = 0; i < s.n; ++i) {
    double* out_row = out.data() + i * f;
    for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
      const double w = s.value[k];
      const double* x_row = xv.data() + static_cast<std::size_t>(s.col[k]) * f;
      for (std::size_t c = 0; c < f; ++c) out_row[c] += w * x_row[c];
    }
  }
  const std::size_t xi = x.id();
  const std::size_t oi = tape.size();
  return tape.record(std::move(out), {xi}, [xi, oi, s, f](Tape& tp) {
    const Tensor& g = tp.grad(oi);
    Tensor& gx = tp.grad(xi);
    for (std::size_t i = 0; i < s.n; ++i) {
      const double* g_row = g.data() + i * f;
      for (std::size_t k = s.row_ptr[i]; k < s.row_ptr[i + 1]; ++k) {
        const double w = s.value[k];
        double* gx_row = gx.data() + static_cast<std::size_t>(s.col[k]) * f;
        for (std::size_t c = 0; c < f; ++c) gx_row[c] += w * g_row[c];
      }
    }
  });
}

// One refinement stage's graph-convolution parameters lifted onto a tape:
// three propagation weight matrices and the final 64 -> 3 projection.
struct GcnVars {
  Var g1, g2, g3, w;
};

// H_k = ReLU(A_hat H_{k-1} g_k) for k = 1..3, then offsets = H_3 W.
inline Var gcn_forward(Tape& tape, const Var& features, const SparseMatrix& a_hat,
                       const GcnVars& params) {
  if (features.value().dim(1) != params.g1.value().dim(0)) {
    throw std::invalid_argument("gcn_forward: feature width " +
                                std::to_string(features.value().dim(1)) +
                                " does not match g1 input width " +
                                std::to_string(params.g1.value().dim(0)));
  }
  Var h = features;
  for (const Var* g : {&params.g1, &params.g2, &params.g3}) {
    h = relu(sparse_matmul(tape, a_hat, matmul(h, *g)));
  }
  return matmul(h, params.w);
}

}  // namespace terramesh
