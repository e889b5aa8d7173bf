#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "decokan/model.hpp"

namespace decokan {

/// Per-layer keep flags plus per-branch counts, Table-style:
/// {Total, Pruned, Preserved, Prune Ratio}.
struct BranchPruneStats {
  std::string branch;
  Dim total = 0;
  Dim pruned = 0;
  Dim preserved = 0;
  double ratio() const {
    return total == 0 ? 0.0
                      : static_cast<double>(pruned) / static_cast<double>(total);
  }
};

struct LayerMask {
  Dim out_dim = 0;
  Dim in_dim = 0;
  std::vector<std::uint8_t> kept;  // row-major (out, in), 1 = kept

  bool is_kept(Dim o, Dim i) const {
    return kept[static_cast<std::size_t>(o * in_dim + i)] != 0;
  }
};

struct PruneMask {
  double tau = 0.05;
  std::vector<LayerMask> layers;  // aligned with kan_layers(model)
  std::vector<BranchPruneStats> per_branch;
  BranchPruneStats overall;
};

/// 512 uniform points over [-1.5, 1.5]: the spline span plus margin.
Tensor default_sample_grid();

/// Edge norm = RMS of phi over the sample grid; edges with norm < tau are
/// masked. Statistics are reported per branch and overall.
PruneMask prune(const DecoKanModel& model, double tau, const Tensor& sample_grid);

/// Installs the mask into the model's KAN layers; masked edges then
/// contribute exactly zero in every subsequent forward pass.
void apply_prune_mask(DecoKanModel& model, const PruneMask& mask);

/// One closed-form fit for a surviving edge. The formula string is
/// full-precision and re-parses (eval_formula) to reproduce r2 on the
/// stored held-out grid.
struct SymbolicFit {
  std::string branch;
  int mixer = 1;
  std::string stack;   // "temporal" | "feature"
  int stack_layer = 0;
  Dim input_node = 0;   // Layer i
  Dim output_node = 0;  // Layer j
  std::string family;
  std::vector<double> params;
  std::string formula;
  double r2 = 0;
  std::vector<double> grid_x;   // held-out half of the sample grid
  std::vector<double> grid_y;   // phi on grid_x
};

struct CandidateFamily {
  std::string name;
  int param_count = 0;
  std::function<double(const std::vector<double>&, double)> eval;
  /// Fits on (xs, ys); empty result means the family does not apply
  /// (e.g. log domain guard).
  std::function<std::vector<double>(std::span<const double>,
                                    std::span<const double>)>
      fit;
  std::function<std::string(const std::vector<double>&)> format;
};

/// Ordered families: constant; polynomial deg 4; a sin(bx+c); a cos(bx+c);
/// a sin(bx+c) + d cos(ex); a tanh(bx+c); a x + b; a exp(bx) + c;
/// a log(x - b) + c (domain-guarded). Nonlinear families run bounded
/// multi-start least squares with 8 frequency starts in (0, 4].
class CandidateLibrary {
 public:
  static CandidateLibrary standard();
  const std::vector<CandidateFamily>& families() const { return families_; }

 private:
  std::vector<CandidateFamily> families_;
};

struct EdgeFitResult {
  std::string family;
  std::vector<double> params;
  double r2 = 0;
};

/// Fits every family to (xs, ys) sampled from one activation: parameters on
/// the even-index half, R^2 on the held-out odd-index half. Families within
/// 1e-3 of the best R^2 compete by parameter count (fewest wins).
EdgeFitResult fit_candidates(const CandidateLibrary& lib,
                             std::span<const double> xs,
                             std::span<const double> ys);

/// Fits all surviving edges; results ranked by R^2 descending (stable).
std::vector<SymbolicFit> symbolify(const DecoKanModel& model,
                                   const PruneMask& mask,
                                   const CandidateLibrary& lib,
                                   const Tensor& sample_grid);

/// Pruning summary in the four-column layout (thousands separators,
/// percentage with two decimals).
std::string prune_stats_text(const PruneMask& mask);

/// Machine-readable table: one row per fit, tab-separated, full precision.
std::string symbolic_table_tsv(const std::vector<SymbolicFit>& fits);

/// Rendered table with columns Branch | KAN Mixer | Layer i | Layer j |
/// Symbolic Formula | R^2, top_k rows ranked by R^2 descending.
std::string symbolic_table_text(const std::vector<SymbolicFit>& fits, Dim top_k);

/// Parses an emitted formula (numbers, x, + - * / ^, sin/cos/tanh/exp/log)
/// and evaluates it at every x.
std::vector<double> eval_formula(const std::string& formula,
                                 std::span<const double> xs);
double eval_formula(const std::string& formula, double x);

}  // namespace decokan
