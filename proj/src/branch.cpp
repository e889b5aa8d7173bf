#include "decokan/branch.hpp"

#include <cmath>

namespace decokan {

Dim patch_count(Dim series_len, const PatchConfig& cfg) {
  if (cfg.stride < 1 || cfg.stride > cfg.patch)
    throw contract_error("patch config: require 1 <= stride <= patch");
  if (series_len + cfg.stride < cfg.patch)
    throw shape_error("patching: series of length " +
                      std::to_string(series_len) +
                      " too short for patch size " + std::to_string(cfg.patch));
  return (series_len - cfg.patch) / cfg.stride + 2;
}

Tensor patch_and_embed(const Tensor& x, const PatchConfig& cfg,
                       const Tensor& embed_w, const Tensor& embed_b) {
  if (x.rank() != 2) throw shape_error("patch_and_embed: expected (C, L)");
  patch_count(x.dim(1), cfg);  // validates
  Tensor padded = pad_tail_replicate(x, cfg.stride);
  Tensor patches = gather_patches(padded, cfg.patch, cfg.stride);
  return linear(patches, embed_w, embed_b);
}

Tensor mix_stack_forward(const Tensor& x, const MixStack& stack) {
  if (stack.kind == StackKind::kan) return kan_stack_forward(x, stack.kan);
  Tensor h = silu(linear(x, stack.mlp.w1, stack.mlp.b1));
  return linear(h, stack.mlp.w2, stack.mlp.b2);
}

Tensor mixer_forward(const Tensor& x, const MixerParams& p, EvalContext& ctx) {
  if (x.rank() != 3) throw shape_error("mixer_forward: expected (C, N, d)");
  auto drop = [&](const Tensor& t) {
    if (!ctx.training || p.dropout_rate == 0.0) return t;
    if (ctx.rng == nullptr)
      throw contract_error("mixer_forward: training mode needs an rng");
    return dropout(t, p.dropout_rate, true, *ctx.rng);
  };
  Tensor y1 = swap_last_two(
      mix_stack_forward(swap_last_two(mixer_norm(x)), p.temporal));
  Tensor xpp = add(x, drop(y1));
  Tensor y2 = mix_stack_forward(mixer_norm(xpp), p.feature);
  return add(xpp, drop(y2));
}

std::pair<Tensor, RevinState> branch_forward(const Tensor& x_wi,
                                             const BranchParams& p,
                                             const PatchConfig& cfg,
                                             EvalContext& ctx) {
  auto [xn, state] = revin_norm(x_wi, 0);
  Tensor embedded = patch_and_embed(xn, cfg, p.embed_w, p.embed_b);
  Tensor mixed = mixer_forward(mixer_forward(embedded, p.mixer1, ctx), p.mixer2, ctx);
  Tensor residual = add(embedded, mixed);
  const Dim C = residual.dim(0);
  Tensor flat = reshape(residual, {C, residual.dim(1) * residual.dim(2)});
  Tensor head = linear(flat, p.head_w, p.head_b);
  return {revin_denorm(head, state, 0), state};
}

namespace {

Tensor linear_init_weight(Dim out, Dim in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return uniform({out, in}, -bound, bound, rng, true);
}

Tensor linear_init_bias(Dim out, Dim in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return uniform({out}, -bound, bound, rng, true);
}

}  // namespace

MixStack init_mix_stack(StackKind kind, Dim dim, Dim hidden,
                        const SplineGrid& grid, std::mt19937_64& rng) {
  MixStack s;
  s.kind = kind;
  if (kind == StackKind::kan) {
    s.kan = init_kan_stack(dim, hidden, grid, rng);
  } else {
    s.mlp.w1 = linear_init_weight(hidden, dim, rng);
    s.mlp.b1 = linear_init_bias(hidden, dim, rng);
    s.mlp.w2 = linear_init_weight(dim, hidden, rng);
    s.mlp.b2 = linear_init_bias(dim, hidden, rng);
  }
  return s;
}

BranchParams init_branch(const BranchDims& dims, const PatchConfig& cfg,
                         const SplineGrid& grid, double dropout,
                         const StackKinds& kinds, std::mt19937_64& rng) {
  const Dim N = patch_count(dims.series_len, cfg);
  const Dim d = dims.embed_dim;
  BranchParams p;
  p.embed_w = linear_init_weight(d, cfg.patch, rng);
  p.embed_b = linear_init_bias(d, cfg.patch, rng);
  for (MixerParams* mixer : {&p.mixer1, &p.mixer2}) {
    mixer->dropout_rate = dropout;
    mixer->temporal =
        init_mix_stack(kinds.temporal, N, dims.tfactor * N, grid, rng);
    mixer->feature =
        init_mix_stack(kinds.feature, d, dims.dfactor * d, grid, rng);
  }
  p.head_w = linear_init_weight(dims.horizon, N * d, rng);
  p.head_b = linear_init_bias(dims.horizon, N * d, rng);
  return p;
}

void collect_params(const MixStack& s, const std::string& prefix,
                    std::vector<NamedParam>& out) {
  if (s.kind == StackKind::kan) {
    for (std::size_t l = 0; l < s.kan.layers.size(); ++l) {
      const std::string base = prefix + ".kan" + std::to_string(l);
      out.push_back({base + ".base_weight", s.kan.layers[l].base_weight});
      out.push_back({base + ".spline_scale", s.kan.layers[l].spline_scale});
      out.push_back({base + ".spline_coeffs", s.kan.layers[l].spline_coeffs});
    }
  } else {
    out.push_back({prefix + ".mlp.w1", s.mlp.w1});
    out.push_back({prefix + ".mlp.b1", s.mlp.b1});
    out.push_back({prefix + ".mlp.w2", s.mlp.w2});
    out.push_back({prefix + ".mlp.b2", s.mlp.b2});
  }
}

void collect_params(const BranchParams& p, const std::string& prefix,
                    std::vector<NamedParam>& out) {
  out.push_back({prefix + ".embed_w", p.embed_w});
  out.push_back({prefix + ".embed_b", p.embed_b});
  int mi = 1;
  for (const MixerParams* mixer : {&p.mixer1, &p.mixer2}) {
    const std::string base = prefix + ".mixer" + std::to_string(mi++);
    collect_params(mixer->temporal, base + ".temporal", out);
    collect_params(mixer->feature, base + ".feature", out);
  }
  out.push_back({prefix + ".head_w", p.head_w});
  out.push_back({prefix + ".head_b", p.head_b});
}

}  // namespace decokan
