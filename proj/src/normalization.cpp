#include "decokan/normalization.hpp"

#include <algorithm>
#include <cmath>

namespace decokan {

namespace {

constexpr double kVarEps = 1e-6;
constexpr double kStdClamp = 1e-4;

void stats_shapes(const Tensor& x, Dim channel_axis, Dim& channels, Dim& steps) {
  if (x.rank() != 2) throw shape_error("revin: expected a rank-2 series");
  if (channel_axis != 0 && channel_axis != 1)
    throw contract_error("revin: channel_axis must be 0 or 1");
  channels = x.dim(channel_axis);
  steps = x.dim(1 - channel_axis);
  if (steps < 1) throw shape_error("revin: empty time axis");
}

// Broadcast shape that aligns per-channel stats with the series layout.
Shape stat_shape(Dim channels, Dim channel_axis) {
  return channel_axis == 1 ? Shape{channels} : Shape{channels, 1};
}

}  // namespace

std::pair<Tensor, RevinState> revin_norm(const Tensor& x, Dim channel_axis) {
  Dim C = 0, L = 0;
  stats_shapes(x, channel_axis, C, L);
  RevinState state;
  state.mean.resize(static_cast<std::size_t>(C));
  state.std.resize(static_cast<std::size_t>(C));
  const auto xv = x.values();
  for (Dim c = 0; c < C; ++c) {
    double mu = 0;
    for (Dim t = 0; t < L; ++t) {
      const Dim off = channel_axis == 1 ? t * C + c : c * L + t;
      mu += xv[static_cast<std::size_t>(off)];
    }
    mu /= static_cast<double>(L);
    double var = 0;
    for (Dim t = 0; t < L; ++t) {
      const Dim off = channel_axis == 1 ? t * C + c : c * L + t;
      const double dv = xv[static_cast<std::size_t>(off)] - mu;
      var += dv * dv;
    }
    var /= static_cast<double>(L);
    state.mean[static_cast<std::size_t>(c)] = mu;
    state.std[static_cast<std::size_t>(c)] =
        std::max(std::sqrt(var + kVarEps), kStdClamp);
  }
  auto mean_t = Tensor::from_vector(stat_shape(C, channel_axis), state.mean);
  auto std_t = Tensor::from_vector(stat_shape(C, channel_axis), state.std);
  return {div(sub(x, mean_t), std_t), state};
}

Tensor revin_denorm(const Tensor& y, const RevinState& state, Dim channel_axis) {
  Dim C = 0, L = 0;
  stats_shapes(y, channel_axis, C, L);
  if (C != state.channels())
    throw contract_error("revin_denorm: channel count " + std::to_string(C) +
                         " does not match stored state (" +
                         std::to_string(state.channels()) + ")");
  auto mean_t = Tensor::from_vector(stat_shape(C, channel_axis), state.mean);
  auto std_t = Tensor::from_vector(stat_shape(C, channel_axis), state.std);
  return add(mul(y, std_t), mean_t);
}

Tensor mixer_norm(const Tensor& x) { return normalize_last(x, 1e-5); }

}  // namespace decokan
