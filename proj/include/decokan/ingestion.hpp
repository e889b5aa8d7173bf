#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decokan/tensor.hpp"

namespace decokan {

struct CsvSchema {
  std::string timestamp_column;               // empty: first column
  std::vector<std::string> value_columns;     // empty: all other columns
  char delimiter = ',';
  // Missing cells (empty, na, nan, null) are forward-filled then back-filled.
};

/// Per-channel standardization statistics fit on the train split.
struct ChannelScaler {
  std::vector<double> mean;
  std::vector<double> std;
};

struct TimeSeriesDataset {
  Tensor values;  // rows x channels, raw (unscaled)
  std::vector<std::string> channel_names;
  std::vector<std::int64_t> timestamps;  // epoch seconds, strictly increasing
  Dim train_size = 0;
  Dim val_size = 0;
  Dim test_size = 0;
  ChannelScaler scaler;
  std::vector<std::string> log;  // fills, dropped columns, skipped rows

  Dim rows() const { return values.defined() ? values.dim(0) : 0; }
  Dim channels() const { return values.defined() ? values.dim(1) : 0; }
  /// Median timestamp delta; 0 when fewer than two rows.
  std::int64_t frequency_seconds() const;
};

/// Parses an ETT-style or Coin Metrics community CSV: header row, one
/// timestamp column (ISO-8601 date/datetime or epoch), float channels.
/// Unparseable rows are skipped and logged; more than 1% of them is an error.
/// Constant and all-missing columns are dropped with a warning.
TimeSeriesDataset load_csv(const std::string& path, const CsvSchema& schema = {});

/// Contiguous chronological train/val/test sizes; fits the scaler on the
/// train rows. Empty val/test are allowed (logged); oversubscription throws.
/// (0, 0, 0) defers the split (no scaler is fit).
void apply_split_sizes(TimeSeriesDataset& ds, Dim train, Dim val, Dim test);

/// floor(ratio * rows) per split; when the ratios sum to 1 the test split
/// absorbs the rounding remainder.
void apply_split_ratios(TimeSeriesDataset& ds, double train, double val,
                        double test);

/// In-memory constructor used by synthetic experiments and the bindings.
TimeSeriesDataset dataset_from_values(Tensor values,
                                      std::vector<std::string> channel_names,
                                      Dim train, Dim val, Dim test);

std::int64_t parse_timestamp(const std::string& text);

}  // namespace decokan
