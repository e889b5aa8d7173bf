#include "decokan/kan.hpp"

#include <algorithm>
#include <cmath>

namespace decokan {

SplineGrid SplineGrid::make(Dim grid_size, Dim order) {
  if (grid_size < 1) throw contract_error("SplineGrid: grid_size >= 1");
  if (order < 1 || order > 7)
    throw contract_error("SplineGrid: order must be in [1, 7]");
  SplineGrid g;
  g.grid_size = grid_size;
  g.order = order;
  const double h = 2.0 / static_cast<double>(grid_size);
  const Dim count = grid_size + 2 * order + 1;
  g.knots.resize(static_cast<std::size_t>(count));
  for (Dim i = 0; i < count; ++i)
    g.knots[static_cast<std::size_t>(i)] =
        -1.0 + h * static_cast<double>(i - order);
  return g;
}

namespace kan_detail {

void eval_local_basis(const SplineGrid& grid, double x, bool with_derivative,
                      LocalBasis& out) {
  const Dim k = grid.order;
  const Dim nb = grid.basis_count();
  const Dim last_knot = static_cast<Dim>(grid.knots.size()) - 1;
  const double* t = grid.knots.data();
  out.count = 0;
  if (x < t[0] || x >= t[last_knot]) return;

  const double h = grid.spacing();
  Dim ell = static_cast<Dim>(std::floor((x - t[0]) / h));
  ell = std::clamp<Dim>(ell, 0, last_knot - 1);
  while (ell > 0 && x < t[ell]) --ell;
  while (ell < last_knot - 1 && x >= t[ell + 1]) ++ell;

  // Triangular scheme: N[r] = B_{ell-k+r, d}(x) at degree d.
  double N[8] = {1.0};
  double Nm1[8] = {0};  // degree k-1 row, kept for the derivative identity
  double left[8], right[8];
  for (Dim d = 1; d <= k; ++d) {
    if (with_derivative && d == k)
      std::copy(std::begin(N), std::end(N), std::begin(Nm1));
    left[d] = x - t[ell + 1 - d];
    right[d] = t[ell + d] - x;
    double saved = 0.0;
    for (Dim r = 0; r < d; ++r) {
      const double denom = right[r + 1] + left[d - r];
      const double temp = N[r] / denom;
      N[r] = saved + right[r + 1] * temp;
      saved = left[d - r] * temp;
    }
    N[d] = saved;
  }

  // Clip to existing basis indices [0, nb).
  const Dim j_lo = ell - k;
  Dim from = std::max<Dim>(0, j_lo);
  Dim to = std::min<Dim>(nb - 1, ell);
  out.first = from;
  out.count = static_cast<int>(to - from + 1);
  for (Dim j = from; j <= to; ++j) {
    const Dim r = j - j_lo;
    out.val[j - from] = N[r];
    if (with_derivative) {
      const double a = r >= 1 ? Nm1[r - 1] : 0.0;
      const double b = r <= k - 1 ? Nm1[r] : 0.0;
      out.der[j - from] = (a - b) / h;
    }
  }
}

}  // namespace kan_detail

using kan_detail::LocalBasis;

Tensor bspline_basis(const Tensor& x, const SplineGrid& grid) {
  const Dim nb = grid.basis_count();
  const Dim n = x.numel();
  Shape out_shape = x.shape();
  out_shape.push_back(nb);
  std::vector<double> out(static_cast<std::size_t>(n * nb), 0.0);
  auto bases = std::make_shared<std::vector<LocalBasis>>(
      static_cast<std::size_t>(n));
  const auto xv = x.values();
  for (Dim e = 0; e < n; ++e) {
    LocalBasis& lb = (*bases)[static_cast<std::size_t>(e)];
    kan_detail::eval_local_basis(grid, xv[static_cast<std::size_t>(e)], true, lb);
    for (int r = 0; r < lb.count; ++r)
      out[static_cast<std::size_t>(e * nb + lb.first + r)] = lb.val[r];
  }
  return detail::make_node(
      std::move(out_shape), std::move(out), {x},
      [xi = x.impl(), bases, n, nb](detail::TensorImpl& o) {
        xi->ensure_grad();
        for (Dim e = 0; e < n; ++e) {
          const LocalBasis& lb = (*bases)[static_cast<std::size_t>(e)];
          double acc = 0;
          for (int r = 0; r < lb.count; ++r)
            acc += lb.der[r] *
                   o.grad[static_cast<std::size_t>(e * nb + lb.first + r)];
          xi->grad[static_cast<std::size_t>(e)] += acc;
        }
      },
      "bspline_basis");
}

namespace {

double silu_val(double x) {
  const double s =
      x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return x * s;
}

double silu_der(double x) {
  const double s =
      x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return s * (1.0 + x * (1.0 - s));
}

void validate_layer(const KanLayerParams& p) {
  const Dim nb = p.grid.basis_count();
  if (!p.base_weight.defined() || p.base_weight.shape() != Shape{p.out_dim, p.in_dim})
    throw shape_error("kan layer: base_weight shape mismatch");
  if (p.spline_scale.shape() != Shape{p.out_dim, p.in_dim})
    throw shape_error("kan layer: spline_scale shape mismatch");
  if (p.spline_coeffs.shape() != Shape{p.out_dim, p.in_dim, nb})
    throw shape_error("kan layer: spline_coeffs shape mismatch");
  if (!p.edge_mask.empty() &&
      p.edge_mask.size() != static_cast<std::size_t>(p.out_dim * p.in_dim))
    throw shape_error("kan layer: edge mask size mismatch");
}

}  // namespace

Tensor kan_linear_forward(const Tensor& x, const KanLayerParams& p) {
  validate_layer(p);
  if (x.rank() < 1 || x.shape().back() != p.in_dim)
    throw shape_error("kan_linear_forward: trailing dim " +
                      shape_str(x.shape()) + " != in_dim " +
                      std::to_string(p.in_dim));
  const Dim in = p.in_dim, out_dim = p.out_dim, nb = p.grid.basis_count();
  const Dim rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;

  // Per (row, input) caches reused by the adjoint rule.
  auto bases = std::make_shared<std::vector<LocalBasis>>(
      static_cast<std::size_t>(rows * in));
  auto base_vals =
      std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * in));
  auto base_ders =
      std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * in));

  const double* X = x.values().data();
  const double* WB = p.base_weight.values().data();
  const double* WS = p.spline_scale.values().data();
  const double* C = p.spline_coeffs.values().data();
  const std::uint8_t* mask = p.edge_mask.empty() ? nullptr : p.edge_mask.data();

  for (Dim r = 0; r < rows; ++r)
    for (Dim i = 0; i < in; ++i) {
      const double xi = X[r * in + i];
      kan_detail::eval_local_basis(p.grid, xi, true,
                                   (*bases)[static_cast<std::size_t>(r * in + i)]);
      (*base_vals)[static_cast<std::size_t>(r * in + i)] = silu_val(xi);
      (*base_ders)[static_cast<std::size_t>(r * in + i)] = silu_der(xi);
    }

  std::vector<double> out(static_cast<std::size_t>(rows * out_dim), 0.0);
  for (Dim r = 0; r < rows; ++r) {
    double* yr = out.data() + r * out_dim;
    for (Dim o = 0; o < out_dim; ++o) {
      const double* wb = WB + o * in;
      const double* ws = WS + o * in;
      const double* crow = C + o * in * nb;
      double acc = 0.0;
      for (Dim i = 0; i < in; ++i) {
        if (mask && !mask[o * in + i]) continue;
        const LocalBasis& lb = (*bases)[static_cast<std::size_t>(r * in + i)];
        double spline = 0.0;
        const double* ce = crow + i * nb + lb.first;
        for (int j = 0; j < lb.count; ++j) spline += ce[j] * lb.val[j];
        acc += wb[i] * (*base_vals)[static_cast<std::size_t>(r * in + i)] +
               ws[i] * spline;
      }
      yr[o] = acc;
    }
  }

  std::vector<std::uint8_t> mask_copy = p.edge_mask;
  return detail::make_node(
      std::move(out_shape), std::move(out),
      {x, p.base_weight, p.spline_scale, p.spline_coeffs},
      [xi = x.impl(), wbi = p.base_weight.impl(), wsi = p.spline_scale.impl(),
       ci = p.spline_coeffs.impl(), bases, base_vals, base_ders, rows, in,
       out_dim, nb, mask_copy = std::move(mask_copy)](detail::TensorImpl& o) {
        xi->ensure_grad();
        wbi->ensure_grad();
        wsi->ensure_grad();
        ci->ensure_grad();
        const std::uint8_t* mask = mask_copy.empty() ? nullptr : mask_copy.data();
        const double* WB = wbi->values.data();
        const double* WS = wsi->values.data();
        const double* C = ci->values.data();
        for (Dim r = 0; r < rows; ++r) {
          const double* gr = o.grad.data() + r * out_dim;
          double* dxr = xi->grad.data() + r * in;
          for (Dim oo = 0; oo < out_dim; ++oo) {
            const double g = gr[oo];
            if (g == 0.0) continue;
            const double* wb = WB + oo * in;
            const double* ws = WS + oo * in;
            const double* crow = C + oo * in * nb;
            double* dwb = wbi->grad.data() + oo * in;
            double* dws = wsi->grad.data() + oo * in;
            double* dcrow = ci->grad.data() + oo * in * nb;
            for (Dim i = 0; i < in; ++i) {
              if (mask && !mask[oo * in + i]) continue;
              const std::size_t cell = static_cast<std::size_t>(r * in + i);
              const LocalBasis& lb = (*bases)[cell];
              const double* ce = crow + i * nb + lb.first;
              double* dce = dcrow + i * nb + lb.first;
              double spline = 0.0, dspline = 0.0;
              for (int j = 0; j < lb.count; ++j) {
                spline += ce[j] * lb.val[j];
                dspline += ce[j] * lb.der[j];
                dce[j] += g * ws[i] * lb.val[j];
              }
              dwb[i] += g * (*base_vals)[cell];
              dws[i] += g * spline;
              dxr[i] += g * (wb[i] * (*base_ders)[cell] + ws[i] * dspline);
            }
          }
        }
      },
      "kan_linear");
}

Tensor edge_activation(const KanLayerParams& p, Dim o, Dim i, const Tensor& xs) {
  validate_layer(p);
  if (o < 0 || o >= p.out_dim || i < 0 || i >= p.in_dim)
    throw contract_error("edge_activation: edge index out of range");
  if (xs.rank() != 1) throw shape_error("edge_activation: xs must be 1-D");
  const Dim nb = p.grid.basis_count();
  const double wb = p.base_weight.at({o, i});
  const double ws = p.spline_scale.at({o, i});
  const double* ce =
      p.spline_coeffs.values().data() + (o * p.in_dim + i) * nb;
  const auto xv = xs.values();
  std::vector<double> out(xv.size());
  LocalBasis lb;
  for (std::size_t e = 0; e < xv.size(); ++e) {
    kan_detail::eval_local_basis(p.grid, xv[e], false, lb);
    double spline = 0.0;
    for (int j = 0; j < lb.count; ++j) spline += ce[lb.first + j] * lb.val[j];
    out[e] = wb * silu_val(xv[e]) + ws * spline;
  }
  return Tensor::from_vector(xs.shape(), std::move(out));
}

Tensor regularization_loss(const KanLayerParams& p, double lambda1,
                           double lambda2) {
  validate_layer(p);
  const Dim nb = p.grid.basis_count();
  const Dim edges = p.out_dim * p.in_dim;
  const double* C = p.spline_coeffs.values().data();

  double total = 0.0;
  for (Dim e = 0; e < edges; ++e) {
    const double* ce = C + e * nb;
    double a_sum = 0.0;
    for (Dim j = 0; j < nb; ++j) a_sum += std::fabs(ce[j]);
    total += lambda1 * a_sum / static_cast<double>(nb);
    if (a_sum > 0.0) {
      double entropy = 0.0;
      for (Dim j = 0; j < nb; ++j) {
        const double pj = std::fabs(ce[j]) / a_sum;
        if (pj > 0.0) entropy -= pj * std::log(pj);
      }
      total += lambda2 * entropy;
    }
  }
  return detail::make_node(
      {}, {total}, {p.spline_coeffs},
      [ci = p.spline_coeffs.impl(), edges, nb, lambda1, lambda2](
          detail::TensorImpl& o) {
        ci->ensure_grad();
        const double g = o.grad[0];
        const double* C = ci->values.data();
        for (Dim e = 0; e < edges; ++e) {
          const double* ce = C + e * nb;
          double* dce = ci->grad.data() + e * nb;
          double a_sum = 0.0;
          for (Dim j = 0; j < nb; ++j) a_sum += std::fabs(ce[j]);
          double entropy = 0.0;
          if (a_sum > 0.0)
            for (Dim j = 0; j < nb; ++j) {
              const double pj = std::fabs(ce[j]) / a_sum;
              if (pj > 0.0) entropy -= pj * std::log(pj);
            }
          for (Dim j = 0; j < nb; ++j) {
            if (ce[j] == 0.0) continue;  // subgradient choice at the kink
            const double sign = ce[j] > 0 ? 1.0 : -1.0;
            double d = lambda1 * sign / static_cast<double>(nb);
            const double pj = std::fabs(ce[j]) / a_sum;
            if (pj > 0.0)
              d += lambda2 * sign * (-(std::log(pj) + entropy) / a_sum);
            dce[j] += g * d;
          }
        }
      },
      "kan_regularization");
}

KanLayerParams init_kan_layer(Dim in_dim, Dim out_dim, const SplineGrid& grid,
                              std::mt19937_64& rng) {
  if (in_dim < 1 || out_dim < 1)
    throw contract_error("init_kan_layer: dims >= 1 required");
  KanLayerParams p;
  p.in_dim = in_dim;
  p.out_dim = out_dim;
  p.grid = grid;
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
  p.base_weight = uniform({out_dim, in_dim}, -bound, bound, rng, true);
  p.spline_scale = Tensor::full({out_dim, in_dim}, 1.0, true);
  const double sigma = 0.1 / std::sqrt(static_cast<double>(grid.basis_count()));
  p.spline_coeffs =
      normal({out_dim, in_dim, grid.basis_count()}, sigma, rng, true);
  return p;
}

KanStack init_kan_stack(Dim dim, Dim hidden, const SplineGrid& grid,
                        std::mt19937_64& rng) {
  KanStack s;
  s.layers.push_back(init_kan_layer(dim, hidden, grid, rng));
  s.layers.push_back(init_kan_layer(hidden, dim, grid, rng));
  return s;
}

Tensor kan_stack_forward(const Tensor& x, const KanStack& stack) {
  Tensor cur = x;
  for (const auto& layer : stack.layers) cur = kan_linear_forward(cur, layer);
  return cur;
}

}  // namespace decokan
