#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "decokan/branch.hpp"
#include "decokan/wavelet.hpp"

namespace decokan {

enum class AblationMode { full_kan, temporal_kan_only, feature_kan_only, mlp_only };

AblationMode ablation_from_string(const std::string& s);
std::string ablation_to_string(AblationMode mode);

struct ModelConfig {
  Dim lookback = 96;  // L
  Dim horizon = 24;   // T
  Dim channels = 1;   // C
  std::string wavelet = "db4";
  Dim level = 1;  // m
  Dim patch = 16;
  Dim stride = 8;
  Dim embed_dim = 64;  // d
  Dim tfactor = 2;
  Dim dfactor = 2;
  double dropout = 0.1;
  Dim grid_size = 5;  // G
  Dim order = 3;      // k
  AblationMode ablation = AblationMode::full_kan;
};

/// The full parameter tree: one resolution branch per coefficient series,
/// ordered approx first then details coarse-to-fine (matches CoefficientSet).
struct DecoKanModel {
  ModelConfig config;
  WaveletFilterBank bank;
  SplineGrid grid;
  std::vector<BranchParams> branches;   // m + 1
  std::vector<Dim> branch_series_len;   // L_i per branch
  std::vector<Dim> branch_horizon;      // T_i per branch
};

/// Builds and initializes the model for the requested ablation variant.
/// Deterministic under seed. Validates that the lookback survives m levels.
DecoKanModel build_model(const ModelConfig& config, std::uint64_t seed);

/// x (L, C) -> forecast (T, C). Boundary RevIN, DWT, per-branch mixing,
/// IDWT, boundary denorm. Deterministic in eval mode.
Tensor forward(const DecoKanModel& model, const Tensor& x, EvalContext& ctx);

/// MSE(pred, truth) + gamma * sum of KAN regularization over every layer.
/// gamma == 0 reduces to the plain MSE term exactly.
Tensor total_loss(const Tensor& pred, const Tensor& truth,
                  const DecoKanModel& model, double gamma);

/// Stable, documented traversal order; defines checkpoint layout.
std::vector<NamedParam> model_parameters(const DecoKanModel& model);

Dim parameter_count(const DecoKanModel& model);

/// Mutable access to every KAN layer (pruning, regularization sweeps).
std::vector<KanLayerParams*> kan_layers(DecoKanModel& model);
std::vector<const KanLayerParams*> kan_layers(const DecoKanModel& model);

/// Location of one KAN layer inside the model tree; refs align with the
/// kan_layers() traversal order.
struct KanLayerRef {
  std::size_t layer_index = 0;   // position in kan_layers()
  std::size_t branch_index = 0;  // position in model.branches
  int mixer = 1;                 // 1 or 2
  bool temporal = true;          // temporal vs feature stack
  int stack_layer = 0;           // 0 or 1 within the two-layer stack
};

std::vector<KanLayerRef> kan_layer_refs(const DecoKanModel& model);

/// "approx" for branch 0, "detail<level>" otherwise.
std::string branch_label(const DecoKanModel& model, std::size_t branch_index);

/// Human-readable location of kan_layers()[index].
std::string kan_layer_label(const DecoKanModel& model, std::size_t index);

void ensure_compatible(const ModelConfig& expected, const ModelConfig& actual);

// ---- checkpoint container ---------------------------------------------
// Versioned binary file: magic, format version, a key=value text header
// (config plus caller metadata such as scaler statistics), then raw
// little-endian float64 parameter blocks in model_parameters() order.

struct Checkpoint {
  DecoKanModel model;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const DecoKanModel& model, const std::string& path,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace decokan
