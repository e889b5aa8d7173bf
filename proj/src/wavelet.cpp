#include "decokan/wavelet.hpp"

#include <algorithm>
#include <cmath>

namespace decokan {

namespace {

// Daubechies scaling filters, sum = sqrt(2).
const std::vector<double> kDb2Scaling = {
    0.482962913144690, 0.836516303737469, 0.224143868041857,
    -0.129409522550921};

const std::vector<double> kDb4Scaling = {
    0.230377813308855, 0.714846570552542, 0.630880767929590,
    -0.027983769416984, -0.187034811718881, 0.030841381835987,
    0.032883011666983, -0.010597401784997};

constexpr double kSqrt2 = 1.4142135623730951;

void validate_bank(const WaveletFilterBank& bank) {
  const std::size_t f = bank.dec_lo.size();
  double lo_sum = 0, hi_sum = 0;
  for (double v : bank.dec_lo) lo_sum += v;
  for (double v : bank.dec_hi) hi_sum += v;
  if (std::fabs(lo_sum - kSqrt2) > 1e-12)
    throw value_error("wavelet '" + bank.name + "': dec_lo does not sum to sqrt(2)");
  if (std::fabs(hi_sum) > 1e-12)
    throw value_error("wavelet '" + bank.name + "': dec_hi does not sum to 0");
  for (std::size_t n = 0; n < f; ++n) {
    const double qmf = (n % 2 == 0 ? 1.0 : -1.0) * bank.dec_lo[f - 1 - n];
    if (bank.dec_hi[n] != qmf)
      throw value_error("wavelet '" + bank.name + "': quadrature-mirror relation broken");
  }
}

// Half-point symmetric reflection of index i into [0, len).
Dim reflect_index(Dim i, Dim len) {
  while (i < 0 || i >= len) {
    if (i < 0) i = -i - 1;
    if (i >= len) i = 2 * len - 1 - i;
  }
  return i;
}

}  // namespace

WaveletFilterBank WaveletFilterBank::make(std::string_view name) {
  WaveletFilterBank bank;
  bank.name = std::string(name);
  std::vector<double> scaling;
  if (name == "db2")
    scaling = kDb2Scaling;
  else if (name == "db4")
    scaling = kDb4Scaling;
  else
    throw config_error("unknown wavelet '" + bank.name + "' (supported: db2, db4)");
  const std::size_t f = scaling.size();
  bank.dec_lo.assign(scaling.rbegin(), scaling.rend());
  bank.dec_hi.resize(f);
  for (std::size_t n = 0; n < f; ++n)
    bank.dec_hi[n] = (n % 2 == 0 ? 1.0 : -1.0) * bank.dec_lo[f - 1 - n];
  bank.rec_lo.assign(bank.dec_lo.rbegin(), bank.dec_lo.rend());
  bank.rec_hi.assign(bank.dec_hi.rbegin(), bank.dec_hi.rend());
  validate_bank(bank);
  return bank;
}

Dim coefficient_length(Dim input_len, const WaveletFilterBank& bank) {
  if (input_len < 1) throw contract_error("coefficient_length: input_len >= 1");
  return (input_len + bank.filter_length() - 1) / 2;
}

namespace wavelet_detail {

// out[c, k] = sum_j filter[j] * ext[c, 2k + F - j] where ext is the input
// extended by F-1 symmetric samples per side.
Tensor analysis_downsample(const Tensor& x, const std::vector<double>& filter) {
  if (x.rank() != 2) throw shape_error("dwt: expected channel-first (C, L)");
  const Dim C = x.dim(0), L = x.dim(1);
  const Dim F = static_cast<Dim>(filter.size());
  const Dim out_len = (L + F - 1) / 2;

  // Source index map shared across channels: src[k*F + j].
  std::vector<Dim> src(static_cast<std::size_t>(out_len * F));
  for (Dim k = 0; k < out_len; ++k)
    for (Dim j = 0; j < F; ++j)
      src[static_cast<std::size_t>(k * F + j)] =
          reflect_index(2 * k + F - j - (F - 1), L);

  std::vector<double> out(static_cast<std::size_t>(C * out_len), 0.0);
  const double* X = x.values().data();
  for (Dim c = 0; c < C; ++c) {
    const double* xc = X + c * L;
    double* oc = out.data() + c * out_len;
    for (Dim k = 0; k < out_len; ++k) {
      double acc = 0;
      const Dim* row = src.data() + k * F;
      for (Dim j = 0; j < F; ++j) acc += filter[static_cast<std::size_t>(j)] * xc[row[j]];
      oc[k] = acc;
    }
  }
  return detail::make_node(
      {C, out_len}, std::move(out), {x},
      [xi = x.impl(), src = std::move(src), filter, C, L, out_len,
       F](detail::TensorImpl& o) {
        xi->ensure_grad();
        for (Dim c = 0; c < C; ++c) {
          double* dxc = xi->grad.data() + c * L;
          const double* gc = o.grad.data() + c * out_len;
          for (Dim k = 0; k < out_len; ++k) {
            const double g = gc[k];
            if (g == 0.0) continue;
            const Dim* row = src.data() + k * F;
            for (Dim j = 0; j < F; ++j)
              dxc[row[j]] += filter[static_cast<std::size_t>(j)] * g;
          }
        }
      },
      "dwt_level");
}

// Upsample-filter-add synthesis of one level. Uses the first La columns of
// approx where La = len(detail); emits out_len <= 2*La - F + 2 samples.
Tensor synthesis_upsample(const Tensor& approx, const Tensor& det,
                          const std::vector<double>& rec_lo,
                          const std::vector<double>& rec_hi, Dim out_len) {
  const Dim C = approx.dim(0);
  const Dim La = det.dim(1);
  const Dim F = static_cast<Dim>(rec_lo.size());
  const Dim natural = 2 * La - F + 2;
  if (approx.dim(0) != det.dim(0))
    throw shape_error("idwt: channel count mismatch between approx and detail");
  if (out_len < 1 || out_len > natural)
    throw shape_error("idwt: requested length " + std::to_string(out_len) +
                      " exceeds natural length " + std::to_string(natural));
  const Dim La_in = approx.dim(1);

  // out[t] = sum_j rec[j] * up[t + F - 2 - j], up[2i] = coef[i].
  std::vector<double> out(static_cast<std::size_t>(C * out_len), 0.0);
  const double* A = approx.values().data();
  const double* D = det.values().data();
  for (Dim c = 0; c < C; ++c) {
    const double* ac = A + c * La_in;
    const double* dc = D + c * La;
    double* oc = out.data() + c * out_len;
    for (Dim t = 0; t < out_len; ++t) {
      const Dim n = t + F - 2;
      double acc = 0;
      for (Dim j = 0; j < F; ++j) {
        const Dim u = n - j;
        if (u < 0 || u > 2 * (La - 1) || (u & 1)) continue;
        const Dim i = u / 2;
        acc += rec_lo[static_cast<std::size_t>(j)] * ac[i] +
               rec_hi[static_cast<std::size_t>(j)] * dc[i];
      }
      oc[t] = acc;
    }
  }
  return detail::make_node(
      {C, out_len}, std::move(out), {approx, det},
      [ai = approx.impl(), di = det.impl(), rec_lo, rec_hi, C, La, La_in,
       out_len, F](detail::TensorImpl& o) {
        ai->ensure_grad();
        di->ensure_grad();
        for (Dim c = 0; c < C; ++c) {
          double* dac = ai->grad.data() + c * La_in;
          double* ddc = di->grad.data() + c * La;
          const double* gc = o.grad.data() + c * out_len;
          for (Dim t = 0; t < out_len; ++t) {
            const double g = gc[t];
            if (g == 0.0) continue;
            const Dim n = t + F - 2;
            for (Dim j = 0; j < F; ++j) {
              const Dim u = n - j;
              if (u < 0 || u > 2 * (La - 1) || (u & 1)) continue;
              const Dim i = u / 2;
              dac[i] += rec_lo[static_cast<std::size_t>(j)] * g;
              ddc[i] += rec_hi[static_cast<std::size_t>(j)] * g;
            }
          }
        }
      },
      "idwt_level");
}

}  // namespace wavelet_detail

CoefficientSet dwt_multilevel(const Tensor& x, const WaveletFilterBank& bank,
                              Dim level) {
  if (level < 1) throw contract_error("dwt_multilevel: level >= 1 required");
  if (x.rank() != 2) throw shape_error("dwt_multilevel: expected (C, L)");
  const Dim F = bank.filter_length();

  CoefficientSet set;
  set.level = level;
  Tensor cur = x;
  std::vector<Tensor> fine_to_coarse;
  for (Dim lev = 0; lev < level; ++lev) {
    if (cur.dim(1) < F)
      throw shape_error(
          "dwt_multilevel: series of length " + std::to_string(cur.dim(1)) +
          " at level " + std::to_string(lev + 1) +
          " is shorter than the filter (decomposition depth too large)");
    Tensor a = wavelet_detail::analysis_downsample(cur, bank.dec_lo);
    Tensor d = wavelet_detail::analysis_downsample(cur, bank.dec_hi);
    fine_to_coarse.push_back(d);
    cur = a;
  }
  set.approx = cur;
  set.details.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
  return set;
}

Tensor idwt_multilevel(const CoefficientSet& coeffs,
                       const WaveletFilterBank& bank, Dim target_len) {
  if (coeffs.level < 1 || static_cast<Dim>(coeffs.details.size()) != coeffs.level)
    throw shape_error("idwt_multilevel: detail count does not match level");
  const Dim F = bank.filter_length();
  Tensor a = coeffs.approx;
  for (Dim i = 0; i < coeffs.level; ++i) {
    const Tensor& d = coeffs.details[static_cast<std::size_t>(i)];
    const Dim La = a.dim(1), Ld = d.dim(1);
    if (La != Ld && La != Ld + 1)
      throw shape_error("idwt_multilevel: inconsistent coefficient lengths (" +
                        std::to_string(La) + " vs " + std::to_string(Ld) + ")");
    const Dim natural = 2 * Ld - F + 2;
    Dim out_len = natural;
    if (i + 1 < coeffs.level) {
      const Dim next = coeffs.details[static_cast<std::size_t>(i + 1)].dim(1);
      if (natural != next && natural != next + 1)
        throw shape_error("idwt_multilevel: reconstructed length " +
                          std::to_string(natural) +
                          " cannot feed next level of length " +
                          std::to_string(next));
      out_len = natural;  // any trim is applied on the next iteration
    } else {
      if (target_len > natural || target_len < natural - 1)
        throw shape_error("idwt_multilevel: target length " +
                          std::to_string(target_len) +
                          " unreachable from natural length " +
                          std::to_string(natural));
      out_len = target_len;
    }
    a = wavelet_detail::synthesis_upsample(a, d, bank.rec_lo, bank.rec_hi,
                                           out_len);
  }
  return a;
}

}  // namespace decokan
