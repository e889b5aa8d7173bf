// decokan: wavelet-decomposed KAN forecaster command line.
// Subcommands: prepare, train, evaluate, forecast, interpret.
// Exit codes: 0 success, 2 configuration, 3 checkpoint, 4 input data,
// 1 internal error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "decokan/config.hpp"
#include "decokan/interpret.hpp"

namespace fs = std::filesystem;
using namespace decokan;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;
constexpr int kExitInput = 4;

struct CliError {
  int code;
  std::string message;
};

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  bool overwrite = false;
  std::string ablation;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path,
                              "run configuration file (key = value lines)");
  if (config_required) opt->required();
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set train.epochs=5");
  cmd->add_option("--seed", args.seed, "override train.seed");
  cmd->add_flag("--overwrite", args.overwrite,
                "allow clobbering existing output files");
  cmd->add_option("--ablation", args.ablation,
                  "full_kan|temporal_kan_only|feature_kan_only|mlp_only");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  try {
    cfg = parse_run_config(args.config_path);
    for (const auto& kv : args.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw config_error("--set expects key=value, got '" + kv + "'");
      apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0)
      cfg.train_opts.seed = static_cast<std::uint64_t>(args.seed);
    if (!args.ablation.empty())
      cfg.model.ablation = ablation_from_string(args.ablation);
  } catch (const config_error& e) {
    throw CliError{kExitConfig, e.what()};
  }
  for (const auto& w : validate_ranges(cfg)) std::cerr << w << '\n';
  return cfg;
}

TimeSeriesDataset resolve_dataset(const RunConfig& cfg) {
  try {
    return load_dataset(cfg);
  } catch (const config_error& e) {
    throw CliError{kExitConfig, e.what()};
  } catch (const io_error& e) {
    throw CliError{kExitInput, e.what()};
  } catch (const value_error& e) {
    throw CliError{kExitInput, e.what()};
  }
}

void write_file(const fs::path& path, const std::string& content,
                bool overwrite) {
  if (fs::exists(path) && !overwrite)
    throw CliError{kExitConfig, "refusing to overwrite existing '" +
                                    path.string() + "' (pass --overwrite)"};
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path);
  if (!os) throw CliError{kExitInternal, "cannot write '" + path.string() + "'"};
  os << content;
}

void guard_output(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite)
    throw CliError{kExitConfig, "refusing to overwrite existing '" +
                                    path.string() + "' (pass --overwrite)"};
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
}

std::string join_doubles(const std::vector<double>& vals) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i) os << ',';
    os << vals[i];
  }
  return os.str();
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::string join_strings(const std::vector<std::string>& vals) {
  std::string out;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (i) out += ',';
    out += vals[i];
  }
  return out;
}

std::vector<std::string> split_strings(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// ISO timestamp from epoch seconds (UTC).
std::string format_timestamp(std::int64_t epoch, bool date_only) {
  std::int64_t days = epoch / 86400;
  std::int64_t rem = epoch % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  // civil_from_days
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : static_cast<unsigned>(-9));
  const std::int64_t year = y + (m <= 2);
  char buf[32];
  if (date_only && rem == 0) {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u",
                  static_cast<long long>(year), m, d);
  } else {
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02u %02lld:%02lld:%02lld",
                  static_cast<long long>(year), m, d,
                  static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem % 3600) / 60),
                  static_cast<long long>(rem % 60));
  }
  return buf;
}

Checkpoint resolve_checkpoint(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const error& e) {
    throw CliError{kExitCheckpoint, e.what()};
  }
}

std::map<std::string, std::string> dataset_metadata(
    const TimeSeriesDataset& ds) {
  return {
      {"channel_names", join_strings(ds.channel_names)},
      {"scaler_mean", join_doubles(ds.scaler.mean)},
      {"scaler_std", join_doubles(ds.scaler.std)},
      {"frequency_seconds", std::to_string(ds.frequency_seconds())},
  };
}

// ---- subcommands ---------------------------------------------------------

int cmd_prepare(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  TimeSeriesDataset ds = resolve_dataset(cfg);
  std::printf("file:      %s\n", cfg.data_csv.c_str());
  std::printf("rows:      %lld\n", static_cast<long long>(ds.rows()));
  std::printf("channels:  %lld\n", static_cast<long long>(ds.channels()));
  std::printf("splits:    train %lld / val %lld / test %lld\n",
              static_cast<long long>(ds.train_size),
              static_cast<long long>(ds.val_size),
              static_cast<long long>(ds.test_size));
  std::printf("frequency: %lld s\n",
              static_cast<long long>(ds.frequency_seconds()));
  for (std::size_t c = 0; c < ds.channel_names.size(); ++c)
    std::printf("channel %-3zu %-24s mean %12.6g  std %12.6g\n", c,
                ds.channel_names[c].c_str(), ds.scaler.mean[c],
                ds.scaler.std[c]);
  for (const auto& note : ds.log) std::printf("note: %s\n", note.c_str());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  TimeSeriesDataset ds = resolve_dataset(cfg);
  cfg.model.channels = ds.channels();

  const fs::path out(cfg.output_dir);
  const fs::path ckpt_path = out / "checkpoint.dkpt";
  const fs::path report_path = out / "train_report.txt";
  const fs::path curve_path = out / "loss_curve.tsv";
  guard_output(ckpt_path, args.overwrite);
  guard_output(report_path, args.overwrite);
  guard_output(curve_path, args.overwrite);

  DecoKanModel model = build_model(cfg.model, cfg.train_opts.seed);
  TrainReport report = train(model, ds, cfg.train_opts);

  save_checkpoint(model, ckpt_path.string(), dataset_metadata(ds));
  write_file(report_path, train_report_text(report), true);
  std::ostringstream curve;
  curve.precision(17);
  curve << "epoch\ttrain_loss\tval_mse\n";
  for (const auto& e : report.epochs)
    curve << e.epoch << '\t' << e.train_loss << '\t' << e.val_mse << '\n';
  write_file(curve_path, curve.str(), true);

  std::printf("trained %lld epochs (best %lld), test mse %.6f mae %.6f\n",
              static_cast<long long>(report.epochs.size()),
              static_cast<long long>(report.best_epoch), report.test_mse,
              report.test_mae);
  std::printf("checkpoint: %s\n", ckpt_path.string().c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& ckpt_arg,
                 const std::string& horizons_arg) {
  RunConfig cfg = resolve_config(args);
  Checkpoint ckpt = resolve_checkpoint(
      ckpt_arg.empty() ? (fs::path(cfg.output_dir) / "checkpoint.dkpt").string()
                       : ckpt_arg);
  TimeSeriesDataset ds = resolve_dataset(cfg);
  if (ds.channels() != ckpt.model.config.channels)
    throw CliError{kExitCheckpoint,
                   "checkpoint/config mismatch: dataset has " +
                       std::to_string(ds.channels()) + " channels, checkpoint " +
                       std::to_string(ckpt.model.config.channels)};

  std::vector<Dim> horizons;
  if (horizons_arg.empty()) {
    horizons.push_back(ckpt.model.config.horizon);
  } else {
    for (double v : split_doubles(horizons_arg))
      horizons.push_back(static_cast<Dim>(v));
  }

  const fs::path metrics_path = fs::path(cfg.output_dir) / "metrics.tsv";
  guard_output(metrics_path, args.overwrite);

  std::ostringstream os;
  os.precision(17);
  os << "model\thorizon\tmse\tmae\n";
  for (Dim h : horizons) {
    if (h < 1 || h > ckpt.model.config.horizon)
      throw CliError{kExitConfig,
                     "horizon " + std::to_string(h) +
                         " outside the checkpoint horizon 1.." +
                         std::to_string(ckpt.model.config.horizon)};
    const Metrics m = evaluate_prefix(ckpt.model, ds, Split::test, h);
    os << "decokan\t" << h << '\t' << m.mse << '\t' << m.mae << '\n';
    std::printf("decokan      T=%-4lld mse %.6f  mae %.6f\n",
                static_cast<long long>(h), m.mse, m.mae);
  }
  const Metrics base = persistence_baseline(
      ds, Split::test, ckpt.model.config.lookback, ckpt.model.config.horizon);
  os << "persistence\t" << ckpt.model.config.horizon << '\t' << base.mse << '\t'
     << base.mae << '\n';
  std::printf("persistence  T=%-4lld mse %.6f  mae %.6f\n",
              static_cast<long long>(ckpt.model.config.horizon), base.mse,
              base.mae);
  write_file(metrics_path, os.str(), true);
  return 0;
}

int cmd_forecast(const CommonArgs& args, const std::string& ckpt_arg,
                 const std::string& input_arg) {
  RunConfig cfg = resolve_config(args);
  Checkpoint ckpt = resolve_checkpoint(
      ckpt_arg.empty() ? (fs::path(cfg.output_dir) / "checkpoint.dkpt").string()
                       : ckpt_arg);
  const ModelConfig& mc = ckpt.model.config;

  const std::string input_csv = input_arg.empty() ? cfg.data_csv : input_arg;
  TimeSeriesDataset input;
  try {
    CsvSchema schema;
    schema.timestamp_column = cfg.timestamp_column;
    schema.value_columns = cfg.value_columns;
    schema.delimiter = cfg.delimiter;
    input = load_csv(input_csv, schema);
  } catch (const error& e) {
    throw CliError{kExitInput, e.what()};
  }
  if (input.rows() < mc.lookback)
    throw CliError{kExitInput, "input has " + std::to_string(input.rows()) +
                                   " rows; the model needs at least " +
                                   std::to_string(mc.lookback)};
  if (input.channels() != mc.channels)
    throw CliError{kExitInput,
                   "input has " + std::to_string(input.channels()) +
                       " channels, the checkpoint expects " +
                       std::to_string(mc.channels)};

  const auto mean = split_doubles(ckpt.metadata.at("scaler_mean"));
  const auto sd = split_doubles(ckpt.metadata.at("scaler_std"));
  const auto names = split_strings(ckpt.metadata.at("channel_names"));

  // scale the trailing lookback window with the training scaler
  const Dim C = mc.channels, L = mc.lookback, T = mc.horizon;
  const Dim start = input.rows() - L;
  auto x = Tensor::zeros({L, C});
  for (Dim t = 0; t < L; ++t)
    for (Dim c = 0; c < C; ++c)
      x.mutable_values()[static_cast<std::size_t>(t * C + c)] =
          (input.values.at({start + t, c}) - mean[static_cast<std::size_t>(c)]) /
          sd[static_cast<std::size_t>(c)];
  EvalContext ctx;
  Tensor pred = forward(ckpt.model, x, ctx);

  const std::int64_t freq = input.frequency_seconds();
  const std::int64_t last_ts = input.timestamps.back();
  const bool date_only = freq % 86400 == 0;

  const fs::path out_path = fs::path(cfg.output_dir) / "forecast.csv";
  guard_output(out_path, args.overwrite);
  std::ostringstream os;
  os.precision(17);
  os << "timestamp";
  for (const auto& name : names) os << ',' << name;
  os << '\n';
  for (Dim t = 0; t < T; ++t) {
    os << format_timestamp(last_ts + (t + 1) * freq, date_only);
    for (Dim c = 0; c < C; ++c)
      os << ','
         << pred.at({t, c}) * sd[static_cast<std::size_t>(c)] +
                mean[static_cast<std::size_t>(c)];
    os << '\n';
  }
  write_file(out_path, os.str(), true);
  std::printf("forecast of %lld steps written to %s\n",
              static_cast<long long>(T), out_path.string().c_str());
  return 0;
}

int cmd_interpret(const CommonArgs& args, const std::string& ckpt_arg,
                  double tau, Dim top_k) {
  RunConfig cfg = resolve_config(args);
  Checkpoint ckpt = resolve_checkpoint(
      ckpt_arg.empty() ? (fs::path(cfg.output_dir) / "checkpoint.dkpt").string()
                       : ckpt_arg);

  const fs::path out(cfg.output_dir);
  const fs::path stats_path = out / "prune_stats.txt";
  const fs::path tsv_path = out / "symbolic_report.tsv";
  const fs::path table_path = out / "symbolic_report.txt";
  const fs::path curves_path = out / "edge_curves.tsv";
  for (const auto& p : {stats_path, tsv_path, table_path, curves_path})
    guard_output(p, args.overwrite);

  const Tensor grid = default_sample_grid();
  PruneMask mask = prune(ckpt.model, tau, grid);
  auto lib = CandidateLibrary::standard();
  auto fits = symbolify(ckpt.model, mask, lib, grid);

  write_file(stats_path, prune_stats_text(mask), true);
  write_file(tsv_path, symbolic_table_tsv(fits), true);
  write_file(table_path, symbolic_table_text(fits, top_k), true);

  // activation curves for the reported edges: x, phi(x), fit(x)
  std::ostringstream curves;
  curves.precision(17);
  curves << "rank\tx\tactivation\tfit\n";
  Dim rank = 0;
  for (const auto& f : fits) {
    if (rank++ >= top_k) break;
    const auto fitted = eval_formula(f.formula, f.grid_x);
    for (std::size_t i = 0; i < f.grid_x.size(); ++i)
      curves << rank << '\t' << f.grid_x[i] << '\t' << f.grid_y[i] << '\t'
             << fitted[i] << '\n';
  }
  write_file(curves_path, curves.str(), true);

  std::printf("%s", prune_stats_text(mask).c_str());
  std::printf("\n%s", symbolic_table_text(fits, top_k).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DecoKAN: interpretable wavelet-KAN time-series forecasting"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, eval_args, forecast_args, interpret_args;
  std::string eval_ckpt, forecast_ckpt, interpret_ckpt;
  std::string eval_horizons, forecast_input;
  double tau = 0.05;
  std::int64_t top_k = 10;

  auto* prepare = app.add_subcommand("prepare", "ingestion dry-run");
  add_common(prepare, prepare_args);

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_common(train_cmd, train_args);

  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path");
  eval_cmd->add_option("--horizons", eval_horizons,
                       "comma-separated horizons, e.g. 24,48,96,168");

  auto* forecast_cmd = app.add_subcommand("forecast", "forecast past the data");
  add_common(forecast_cmd, forecast_args);
  forecast_cmd->add_option("--checkpoint", forecast_ckpt, "checkpoint path");
  forecast_cmd->add_option("--input", forecast_input,
                           "input CSV (defaults to data.csv)");

  auto* interpret_cmd =
      app.add_subcommand("interpret", "prune and extract symbolic formulas");
  add_common(interpret_cmd, interpret_args);
  interpret_cmd->add_option("--checkpoint", interpret_ckpt, "checkpoint path");
  interpret_cmd->add_option("--tau", tau, "prune threshold (default 0.05)");
  interpret_cmd->add_option("--top-k", top_k, "rows in the report (default 10)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prepare->parsed()) return cmd_prepare(prepare_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_evaluate(eval_args, eval_ckpt, eval_horizons);
    if (forecast_cmd->parsed())
      return cmd_forecast(forecast_args, forecast_ckpt, forecast_input);
    if (interpret_cmd->parsed())
      return cmd_interpret(interpret_args, interpret_ckpt, tau, top_k);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << '\n';
    return e.code;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
