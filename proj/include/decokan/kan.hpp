#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "decokan/tensor.hpp"

namespace decokan {

/// Uniform B-spline knot grid over [-1, 1] with `order` extension knots per
/// side (spacing 2/grid_size everywhere). grid_size + order basis functions.
/// Inputs beyond the extended span evaluate to zero.
struct SplineGrid {
  Dim grid_size = 5;  // G
  Dim order = 3;      // k, the spline degree
  std::vector<double> knots;  // G + 2k + 1 ascending values

  Dim basis_count() const { return grid_size + order; }
  double spacing() const { return 2.0 / static_cast<double>(grid_size); }

  static SplineGrid make(Dim grid_size = 5, Dim order = 3);
};

/// Parameters of one KAN linear layer. Every edge (o, i) carries
/// phi(x) = w_b * silu(x) + w_s * sum_j c_j B_j(x); outputs sum over inputs.
struct KanLayerParams {
  Dim in_dim = 0;
  Dim out_dim = 0;
  Tensor base_weight;    // (out, in)
  Tensor spline_scale;   // (out, in)
  Tensor spline_coeffs;  // (out, in, G+k)
  SplineGrid grid;
  /// Structural prune mask, row-major (out, in); empty means all edges kept.
  /// A masked edge contributes exactly zero, equivalent to zeroed parameters.
  std::vector<std::uint8_t> edge_mask;

  bool edge_kept(Dim o, Dim i) const {
    return edge_mask.empty() ||
           edge_mask[static_cast<std::size_t>(o * in_dim + i)] != 0;
  }
  Dim edge_count() const { return out_dim * in_dim; }
};

/// Two KAN linear layers, in -> hidden -> out.
struct KanStack {
  std::vector<KanLayerParams> layers;
};

/// All basis values at each element of x: shape(x) + (G+k,). Differentiable.
Tensor bspline_basis(const Tensor& x, const SplineGrid& grid);

/// x (..., in) -> (..., out). Differentiable in x and all parameters.
Tensor kan_linear_forward(const Tensor& x, const KanLayerParams& p);

/// The single-edge activation phi_{o,i} evaluated on a 1-D sample vector,
/// exactly as it enters the forward sum (mask ignored; values only, untaped).
Tensor edge_activation(const KanLayerParams& p, Dim o, Dim i, const Tensor& xs);

/// lambda1 * sum_edges mean_j |c_j|  +  lambda2 * sum_edges S(edge) where
/// S = -sum_j p_j log p_j with p_j = |c_j| / sum_k |c_k|. Edges whose
/// coefficients are all zero contribute zero entropy. Differentiable in c.
Tensor regularization_loss(const KanLayerParams& p, double lambda1 = 1.0,
                           double lambda2 = 1.0);

/// base weights scaled-uniform with fan-in bound sqrt(6/in), spline scales 1,
/// coefficients Normal(0, 0.1/sqrt(G+k)). Deterministic under the rng state.
KanLayerParams init_kan_layer(Dim in_dim, Dim out_dim, const SplineGrid& grid,
                              std::mt19937_64& rng);

KanStack init_kan_stack(Dim dim, Dim hidden, const SplineGrid& grid,
                        std::mt19937_64& rng);

Tensor kan_stack_forward(const Tensor& x, const KanStack& stack);

namespace kan_detail {
/// Nonzero window of the basis (and optionally derivative) at a scalar x.
struct LocalBasis {
  Dim first = 0;  // basis index of val[0]
  int count = 0;  // valid entries in val/der, 0 when x is out of span
  double val[8] = {0};
  double der[8] = {0};
};
void eval_local_basis(const SplineGrid& grid, double x, bool with_derivative,
                      LocalBasis& out);
}  // namespace kan_detail

}  // namespace decokan
