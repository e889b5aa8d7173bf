#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "decokan/tensor.hpp"

namespace decokan {

/// Orthogonal Daubechies analysis/synthesis filter quadruple.
/// dec_hi is derived from dec_lo by the quadrature-mirror relation
/// dec_hi[n] = (-1)^n * dec_lo[len-1-n]; rec filters are time reversals.
struct WaveletFilterBank {
  std::string name;
  std::vector<double> dec_lo;
  std::vector<double> dec_hi;
  std::vector<double> rec_lo;
  std::vector<double> rec_hi;

  Dim filter_length() const { return static_cast<Dim>(dec_lo.size()); }

  /// Supported: "db2", "db4".
  static WaveletFilterBank make(std::string_view name);
};

/// Result of an m-level analysis: approx at level m plus details ordered
/// coarse-to-fine [D_m, ..., D_1]; m+1 series total.
struct CoefficientSet {
  Dim level = 0;
  Tensor approx;
  std::vector<Tensor> details;

  Dim series_count() const { return level + 1; }
};

/// Coefficient length after one analysis level under half-point symmetric
/// padding: floor((input_len + filter_len - 1) / 2).
Dim coefficient_length(Dim input_len, const WaveletFilterBank& bank);

/// Multi-level analysis of channel-first series x (C x L). Differentiable.
/// Throws when any level would see a series shorter than the filter.
CoefficientSet dwt_multilevel(const Tensor& x, const WaveletFilterBank& bank,
                              Dim level);

/// Synthesis back to exactly target_len samples (C x target_len).
/// Differentiable. Coefficient lengths must chain consistently.
Tensor idwt_multilevel(const CoefficientSet& coeffs,
                       const WaveletFilterBank& bank, Dim target_len);

namespace wavelet_detail {
/// Single-level filtered downsampling (exposed for tests).
Tensor analysis_downsample(const Tensor& x, const std::vector<double>& filter);
}  // namespace wavelet_detail

}  // namespace decokan
