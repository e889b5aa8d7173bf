#pragma once

#include <string>
#include <vector>

#include "decokan/training.hpp"

namespace decokan {

/// Everything one run needs: model + training options + data locations.
/// Loaded from a flat key = value file whose keys mirror the module names
/// (model.*, train.*, data.*, output.*); command-line overrides reuse the
/// same keys.
struct RunConfig {
  ModelConfig model;
  TrainOptions train_opts;

  std::string data_csv;
  std::string timestamp_column;            // empty: first column
  std::vector<std::string> value_columns;  // empty: all others
  char delimiter = ',';

  bool use_ratio_split = true;
  double ratio_train = 0.7, ratio_val = 0.1, ratio_test = 0.2;
  Dim split_train = 0, split_val = 0, split_test = 0;

  std::string output_dir = "runs/latest";
};

RunConfig parse_run_config(const std::string& path);

/// Applies one `key=value` override (same keys as the file).
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

/// Non-fatal warnings for values outside the documented search ranges.
std::vector<std::string> validate_ranges(const RunConfig& cfg);

/// Loads the dataset named by the config and applies its split.
TimeSeriesDataset load_dataset(const RunConfig& cfg);

std::string run_config_text(const RunConfig& cfg);

}  // namespace decokan
