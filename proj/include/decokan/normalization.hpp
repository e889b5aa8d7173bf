#pragma once

#include <utility>
#include <vector>

#include "decokan/tensor.hpp"

namespace decokan {

/// Per-channel statistics captured by revin_norm for later inversion.
/// std is clamped: max(sqrt(var + 1e-6), 1e-4), population variance.
struct RevinState {
  std::vector<double> mean;
  std::vector<double> std;

  Dim channels() const { return static_cast<Dim>(mean.size()); }
};

/// Reversible instance normalization without learnable affine parameters.
/// channel_axis selects the layout: 1 for (L, C) series, 0 for (C, L).
/// Statistics are taken over the time axis and treated as constants by the
/// tape (no gradient ever reaches a revin input in this architecture).
std::pair<Tensor, RevinState> revin_norm(const Tensor& x, Dim channel_axis);

/// y * std + mean with the stored per-channel statistics.
Tensor revin_denorm(const Tensor& y, const RevinState& state, Dim channel_axis);

/// Mixer-internal normalization over the embedding axis:
/// (x - mean) / sqrt(var + 1e-5) per (channel, patch) slice. Differentiable.
Tensor mixer_norm(const Tensor& x);

}  // namespace decokan
