#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decokan/ingestion.hpp"
#include "decokan/model.hpp"

namespace decokan {

enum class Split { train, val, test };

std::string split_name(Split s);

/// One supervised sample: x is the L x C lookback, y the T x C target,
/// both standard-scaled by the train-split scaler; y starts right after x.
struct WindowSample {
  Tensor x;
  Tensor y;
  Dim origin = 0;  // absolute row index of the first lookback sample
};

/// All maximal stride-1 windows fully contained in the split:
/// count = split_len - L - T + 1. Deterministic order by origin.
std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, Split split,
                                       Dim lookback, Dim horizon);

struct Metrics {
  double mse = 0;
  double mae = 0;
};

/// Running reduction over forecast/target pairs; evaluate() and the
/// persistence baseline share it.
struct MetricAccumulator {
  double sse = 0;
  double sae = 0;
  std::int64_t count = 0;
  void add(std::span<const double> pred, std::span<const double> truth);
  Metrics finalize() const;
};

struct TrainOptions {
  double lr = 3e-4;
  Dim batch = 8;
  Dim epochs = 30;
  double gamma = 1e-5;
  Dim patience = 5;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct EpochStats {
  Dim epoch = 0;        // 1-based
  double train_loss = 0;  // batch-averaged total loss
  double val_mse = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  Dim best_epoch = 0;
  double best_val_mse = 0;
  double test_mse = 0;
  double test_mae = 0;
  std::uint64_t seed = 0;
  double wall_seconds = 0;
};

/// Algorithm: Adam (beta1 0.9, beta2 0.999, eps 1e-8) at fixed lr over
/// shuffled drop-last batches; early stopping on validation MSE with the
/// given patience; parameters restored to the best epoch before the final
/// test evaluation. Deterministic under seed. Throws on divergence.
TrainReport train(DecoKanModel& model, const TimeSeriesDataset& ds,
                  const TrainOptions& opts);

/// MSE/MAE over every window of the split, averaged over windows and all
/// T x C entries, on scaled data. Read-only and parallel over windows.
Metrics evaluate(const DecoKanModel& model, const TimeSeriesDataset& ds,
                 Split split);

/// Metrics over the first `steps` forecast rows only (1 <= steps <= T).
Metrics evaluate_prefix(const DecoKanModel& model, const TimeSeriesDataset& ds,
                        Split split, Dim steps);

/// Naive forecaster repeating the last observed value across the horizon,
/// run through the same windows and metric pipeline.
Metrics persistence_baseline(const TimeSeriesDataset& ds, Split split,
                             Dim lookback, Dim horizon);

/// Key-value per-line serialization of the report (one `epoch=` line each).
std::string train_report_text(const TrainReport& report);

/// Mean absolute spline coefficient across every KAN layer (sparsity probe).
double mean_abs_spline_coeff(const DecoKanModel& model);

}  // namespace decokan
