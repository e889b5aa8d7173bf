#include "decokan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace decokan {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw contract_error("invalid split");
}

namespace {

void split_bounds(const TimeSeriesDataset& ds, Split split, Dim& begin,
                  Dim& length) {
  switch (split) {
    case Split::train:
      begin = 0;
      length = ds.train_size;
      return;
    case Split::val:
      begin = ds.train_size;
      length = ds.val_size;
      return;
    case Split::test:
      begin = ds.train_size + ds.val_size;
      length = ds.test_size;
      return;
  }
  throw contract_error("invalid split");
}

}  // namespace

std::vector<WindowSample> make_windows(const TimeSeriesDataset& ds, Split split,
                                       Dim lookback, Dim horizon) {
  if (ds.scaler.mean.empty())
    throw contract_error("make_windows: dataset has no splits applied");
  Dim begin = 0, length = 0;
  split_bounds(ds, split, begin, length);
  if (length < lookback + horizon)
    throw config_error("windowing: " + split_name(split) + " split of length " +
                       std::to_string(length) + " is shorter than L + T = " +
                       std::to_string(lookback + horizon));
  const Dim C = ds.channels();
  const Dim count = length - lookback - horizon + 1;
  const auto raw = ds.values.values();

  std::vector<WindowSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Dim w = 0; w < count; ++w) {
    const Dim origin = begin + w;
    std::vector<double> xv(static_cast<std::size_t>(lookback * C));
    std::vector<double> yv(static_cast<std::size_t>(horizon * C));
    for (Dim t = 0; t < lookback + horizon; ++t)
      for (Dim c = 0; c < C; ++c) {
        const double scaled =
            (raw[static_cast<std::size_t>((origin + t) * C + c)] -
             ds.scaler.mean[static_cast<std::size_t>(c)]) /
            ds.scaler.std[static_cast<std::size_t>(c)];
        if (t < lookback)
          xv[static_cast<std::size_t>(t * C + c)] = scaled;
        else
          yv[static_cast<std::size_t>((t - lookback) * C + c)] = scaled;
      }
    WindowSample sample;
    sample.x = Tensor::from_vector({lookback, C}, std::move(xv));
    sample.y = Tensor::from_vector({horizon, C}, std::move(yv));
    sample.origin = origin;
    out.push_back(std::move(sample));
  }
  return out;
}

void MetricAccumulator::add(std::span<const double> pred,
                            std::span<const double> truth) {
  if (pred.size() != truth.size())
    throw shape_error("metrics: prediction/truth size mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    sse += e * e;
    sae += std::fabs(e);
  }
  count += static_cast<std::int64_t>(pred.size());
}

Metrics MetricAccumulator::finalize() const {
  if (count == 0) throw contract_error("metrics: nothing accumulated");
  return {sse / static_cast<double>(count), sae / static_cast<double>(count)};
}

namespace {

/// Adam with bias correction; state is bound to the parameter order.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr)
      : params_(std::move(params)), lr_(lr) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
      v_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto vals = params_[i].mutable_values();
      if (!params_[i].has_grad()) continue;
      auto g = params_[i].grad();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        m_[i][j] = kBeta1 * m_[i][j] + (1.0 - kBeta1) * g[j];
        v_[i][j] = kBeta2 * v_[i][j] + (1.0 - kBeta2) * g[j] * g[j];
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        vals[j] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<Tensor> params_;
  double lr_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

Metrics metrics_over_windows(const DecoKanModel& model,
                             const std::vector<WindowSample>& windows) {
  std::vector<MetricAccumulator> per_window(windows.size());
  parallel_for(static_cast<std::int64_t>(windows.size()), [&](std::int64_t i) {
    EvalContext ctx;
    const auto& w = windows[static_cast<std::size_t>(i)];
    Tensor pred = forward(model, w.x, ctx);
    per_window[static_cast<std::size_t>(i)].add(pred.values(), w.y.values());
  });
  MetricAccumulator total;  // index-ordered reduce keeps results thread-count independent
  for (const auto& acc : per_window) {
    total.sse += acc.sse;
    total.sae += acc.sae;
    total.count += acc.count;
  }
  return total.finalize();
}

}  // namespace

TrainReport train(DecoKanModel& model, const TimeSeriesDataset& ds,
                  const TrainOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model.config;
  if (ds.channels() != cfg.channels)
    throw config_error("train: dataset has " + std::to_string(ds.channels()) +
                       " channels, model expects " +
                       std::to_string(cfg.channels));
  auto train_windows = make_windows(ds, Split::train, cfg.lookback, cfg.horizon);
  auto val_windows = make_windows(ds, Split::val, cfg.lookback, cfg.horizon);
  auto test_windows = make_windows(ds, Split::test, cfg.lookback, cfg.horizon);
  if (opts.batch < 1 || opts.epochs < 1 || opts.patience < 1)
    throw config_error("train: batch, epochs, patience must be >= 1");
  const Dim batches = static_cast<Dim>(train_windows.size()) / opts.batch;
  if (batches == 0)
    throw config_error("train: fewer training windows (" +
                       std::to_string(train_windows.size()) +
                       ") than the batch size");

  auto named = model_parameters(model);
  std::vector<Tensor> params;
  for (auto& np : named) params.push_back(np.tensor);
  Adam optimizer(params, opts.lr);
  std::mt19937_64 rng(opts.seed);

  TrainReport report;
  report.seed = opts.seed;
  report.best_val_mse = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  Dim stale_epochs = 0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (Dim epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (Dim b = 0; b < batches; ++b) {  // drop-last
      optimizer.zero_grad();
      EvalContext ctx{true, &rng};
      Tensor batch_mse;
      for (Dim k = 0; k < opts.batch; ++k) {
        const auto& w = train_windows[order[static_cast<std::size_t>(b * opts.batch + k)]];
        Tensor pred = forward(model, w.x, ctx);
        Tensor mse = mean_all(square(sub(pred, w.y)));
        batch_mse = batch_mse.defined() ? add(batch_mse, mse) : mse;
      }
      Tensor loss =
          mul_scalar(batch_mse, 1.0 / static_cast<double>(opts.batch));
      if (opts.gamma != 0.0) {
        Tensor reg;
        for (const KanLayerParams* layer : kan_layers(model)) {
          Tensor r = regularization_loss(*layer);
          reg = reg.defined() ? add(reg, r) : r;
        }
        if (reg.defined()) loss = add(loss, mul_scalar(reg, opts.gamma));
      }
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw value_error("train: loss diverged (non-finite) at epoch " +
                          std::to_string(epoch) + ", batch " +
                          std::to_string(b + 1));
      backward(loss);
      optimizer.step();
      epoch_loss += loss_value;
    }
    epoch_loss /= static_cast<double>(batches);

    const Metrics val = metrics_over_windows(model, val_windows);
    report.epochs.push_back({epoch, epoch_loss, val.mse});
    if (opts.verbose)
      std::printf("epoch %3lld  train %.6f  val %.6f\n",
                  static_cast<long long>(epoch), epoch_loss, val.mse);

    if (val.mse < report.best_val_mse) {
      report.best_val_mse = val.mse;
      report.best_epoch = epoch;
      stale_epochs = 0;
      best_params.clear();
      for (const auto& p : params)
        best_params.emplace_back(p.values().begin(), p.values().end());
    } else if (++stale_epochs >= opts.patience) {
      break;
    }
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < params.size(); ++i)
      std::copy(best_params[i].begin(), best_params[i].end(),
                params[i].mutable_values().begin());

  const Metrics test = metrics_over_windows(model, test_windows);
  report.test_mse = test.mse;
  report.test_mae = test.mae;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

Metrics evaluate(const DecoKanModel& model, const TimeSeriesDataset& ds,
                 Split split) {
  return metrics_over_windows(
      model, make_windows(ds, split, model.config.lookback, model.config.horizon));
}

Metrics evaluate_prefix(const DecoKanModel& model, const TimeSeriesDataset& ds,
                        Split split, Dim steps) {
  const ModelConfig& cfg = model.config;
  if (steps < 1 || steps > cfg.horizon)
    throw contract_error("evaluate_prefix: steps must be in [1, T]");
  auto windows = make_windows(ds, split, cfg.lookback, cfg.horizon);
  std::vector<MetricAccumulator> per_window(windows.size());
  const std::size_t take = static_cast<std::size_t>(steps * cfg.channels);
  parallel_for(static_cast<std::int64_t>(windows.size()), [&](std::int64_t i) {
    EvalContext ctx;
    const auto& w = windows[static_cast<std::size_t>(i)];
    Tensor pred = forward(model, w.x, ctx);
    per_window[static_cast<std::size_t>(i)].add(pred.values().subspan(0, take),
                                                w.y.values().subspan(0, take));
  });
  MetricAccumulator total;
  for (const auto& acc : per_window) {
    total.sse += acc.sse;
    total.sae += acc.sae;
    total.count += acc.count;
  }
  return total.finalize();
}

Metrics persistence_baseline(const TimeSeriesDataset& ds, Split split,
                             Dim lookback, Dim horizon) {
  auto windows = make_windows(ds, split, lookback, horizon);
  const Dim C = ds.channels();
  MetricAccumulator acc;
  std::vector<double> pred(static_cast<std::size_t>(horizon * C));
  for (const auto& w : windows) {
    const auto xv = w.x.values();
    for (Dim t = 0; t < horizon; ++t)
      for (Dim c = 0; c < C; ++c)
        pred[static_cast<std::size_t>(t * C + c)] =
            xv[static_cast<std::size_t>((lookback - 1) * C + c)];
    acc.add(pred, w.y.values());
  }
  return acc.finalize();
}

std::string train_report_text(const TrainReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << report.seed << '\n';
  os << "epochs_run=" << report.epochs.size() << '\n';
  os << "best_epoch=" << report.best_epoch << '\n';
  os << "best_val_mse=" << report.best_val_mse << '\n';
  os << "test_mse=" << report.test_mse << '\n';
  os << "test_mae=" << report.test_mae << '\n';
  os << "wall_seconds=" << report.wall_seconds << '\n';
  for (const auto& e : report.epochs)
    os << "epoch=" << e.epoch << " train_loss=" << e.train_loss
       << " val_mse=" << e.val_mse << '\n';
  return os.str();
}

double mean_abs_spline_coeff(const DecoKanModel& model) {
  double sum = 0;
  std::int64_t n = 0;
  for (const KanLayerParams* layer : kan_layers(model)) {
    for (double v : layer->spline_coeffs.values()) sum += std::fabs(v);
    n += layer->spline_coeffs.numel();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace decokan
