#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "decokan/kan.hpp"
#include "decokan/normalization.hpp"
#include "decokan/tensor.hpp"

namespace decokan {

struct PatchConfig {
  Dim patch = 16;   // P
  Dim stride = 8;   // S, 1 <= S <= P
};

/// One named learnable tensor; the traversal order defines the checkpoint
/// layout and the optimizer state binding.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

enum class StackKind { kan, mlp };

/// MLP replacement used by the ablation variants: Linear -> SiLU -> Linear
/// at the same widths as the KAN stack it stands in for.
struct MlpStack {
  Tensor w1, b1;  // (hidden, in), (hidden)
  Tensor w2, b2;  // (out, hidden), (out)
};

/// Either a KAN stack or its MLP ablation twin.
struct MixStack {
  StackKind kind = StackKind::kan;
  KanStack kan;
  MlpStack mlp;
};

/// One KAN Mixer block: temporal stack over the patch axis, feature stack
/// over the embedding axis, each normalized, dropped out, and residual.
struct MixerParams {
  MixStack temporal;  // operates on the N_i axis
  MixStack feature;   // operates on the d axis
  double dropout_rate = 0.0;
};

struct BranchParams {
  Tensor embed_w, embed_b;  // P -> d, shared across channels and patches
  MixerParams mixer1, mixer2;
  Tensor head_w, head_b;  // (N_i * d) -> T_i
};

/// Per-forward-pass mode switches. rng is only touched when training (dropout).
struct EvalContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

/// floor((L_i - P) / S) + 2: all windows over the series after its tail is
/// padded with S replicated samples. Throws when L_i + S < P.
Dim patch_count(Dim series_len, const PatchConfig& cfg);

/// (C, L_i) -> (C, N_i, d): replicate-pad the tail by S, window, then apply
/// the shared linear embedding.
Tensor patch_and_embed(const Tensor& x, const PatchConfig& cfg,
                       const Tensor& embed_w, const Tensor& embed_b);

Tensor mix_stack_forward(const Tensor& x, const MixStack& stack);

/// x'' = x + Dropout(P(KAN_p(P(N(x))))); out = x'' + Dropout(KAN_e(N(x''))).
Tensor mixer_forward(const Tensor& x, const MixerParams& p, EvalContext& ctx);

/// Full branch: branch RevIN, patch+embed, two mixers, branch residual,
/// flatten, head, branch denorm. Returns the C x T_i forecast and the state.
std::pair<Tensor, RevinState> branch_forward(const Tensor& x_wi,
                                             const BranchParams& p,
                                             const PatchConfig& cfg,
                                             EvalContext& ctx);

struct StackKinds {
  StackKind temporal = StackKind::kan;
  StackKind feature = StackKind::kan;
};

struct BranchDims {
  Dim series_len = 0;  // L_i
  Dim horizon = 0;     // T_i
  Dim embed_dim = 0;   // d
  Dim tfactor = 2;
  Dim dfactor = 2;
};

MixStack init_mix_stack(StackKind kind, Dim dim, Dim hidden,
                        const SplineGrid& grid, std::mt19937_64& rng);

BranchParams init_branch(const BranchDims& dims, const PatchConfig& cfg,
                         const SplineGrid& grid, double dropout,
                         const StackKinds& kinds, std::mt19937_64& rng);

void collect_params(const BranchParams& p, const std::string& prefix,
                    std::vector<NamedParam>& out);
void collect_params(const MixStack& s, const std::string& prefix,
                    std::vector<NamedParam>& out);

}  // namespace decokan
