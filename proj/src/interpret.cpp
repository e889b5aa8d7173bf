#include "decokan/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace decokan {

Tensor default_sample_grid() {
  const Dim n = 512;
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (Dim i = 0; i < n; ++i)
    xs[static_cast<std::size_t>(i)] =
        -1.5 + 3.0 * static_cast<double>(i) / static_cast<double>(n - 1);
  return Tensor::from_vector({n}, std::move(xs));
}

// ---- pruning ------------------------------------------------------------

namespace {

std::string stats_branch_name(const DecoKanModel& model, std::size_t b) {
  if (b == 0) return "Approximation";
  const Dim level = model.config.level - static_cast<Dim>(b) + 1;
  return model.config.level == 1 ? "Detail" : "Detail " + std::to_string(level);
}

std::string table_branch_name(const DecoKanModel& model, std::size_t b) {
  if (b == 0) return "Approx Branch";
  const Dim level = model.config.level - static_cast<Dim>(b) + 1;
  return model.config.level == 1 ? "Detail Branch"
                                 : "Detail " + std::to_string(level) + " Branch";
}

}  // namespace

PruneMask prune(const DecoKanModel& model, double tau, const Tensor& sample_grid) {
  if (tau < 0) throw contract_error("prune: tau must be >= 0");
  if (sample_grid.rank() != 1 || sample_grid.numel() < 1)
    throw contract_error("prune: sample grid must be a non-empty vector");
  const auto layers = kan_layers(model);
  const auto refs = kan_layer_refs(model);

  PruneMask mask;
  mask.tau = tau;
  mask.layers.resize(layers.size());
  const double inv_n = 1.0 / static_cast<double>(sample_grid.numel());

  for (std::size_t li = 0; li < layers.size(); ++li) {
    const KanLayerParams& layer = *layers[li];
    LayerMask& lm = mask.layers[li];
    lm.out_dim = layer.out_dim;
    lm.in_dim = layer.in_dim;
    lm.kept.assign(static_cast<std::size_t>(layer.edge_count()), 0);
    parallel_for(layer.edge_count(), [&](std::int64_t e) {
      const Dim o = e / layer.in_dim;
      const Dim i = e % layer.in_dim;
      Tensor phi = edge_activation(layer, o, i, sample_grid);
      double ms = 0;
      for (double v : phi.values()) ms += v * v;
      const double rms = std::sqrt(ms * inv_n);
      lm.kept[static_cast<std::size_t>(e)] = rms < tau ? 0 : 1;
    });
  }

  mask.per_branch.resize(model.branches.size());
  for (std::size_t b = 0; b < model.branches.size(); ++b)
    mask.per_branch[b].branch = stats_branch_name(model, b);
  for (const auto& ref : refs) {
    BranchPruneStats& stats = mask.per_branch[ref.branch_index];
    const LayerMask& lm = mask.layers[ref.layer_index];
    for (std::uint8_t kept : lm.kept) {
      ++stats.total;
      if (kept)
        ++stats.preserved;
      else
        ++stats.pruned;
    }
  }
  mask.overall.branch = "Overall Model";
  for (const auto& s : mask.per_branch) {
    mask.overall.total += s.total;
    mask.overall.pruned += s.pruned;
    mask.overall.preserved += s.preserved;
  }
  return mask;
}

void apply_prune_mask(DecoKanModel& model, const PruneMask& mask) {
  auto layers = kan_layers(model);
  if (mask.layers.size() != layers.size())
    throw contract_error("apply_prune_mask: mask does not match this model");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (mask.layers[li].out_dim != layers[li]->out_dim ||
        mask.layers[li].in_dim != layers[li]->in_dim)
      throw contract_error("apply_prune_mask: layer shape mismatch");
    layers[li]->edge_mask = mask.layers[li].kept;
  }
}

// ---- fitting machinery ------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gaussian elimination with partial pivoting for small dense systems.
std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b,
                                int p) {
  for (int col = 0; col < p; ++col) {
    int piv = col;
    for (int r = col + 1; r < p; ++r)
      if (std::fabs(A[r * p + col]) > std::fabs(A[piv * p + col])) piv = r;
    if (piv != col) {
      for (int c = 0; c < p; ++c) std::swap(A[col * p + c], A[piv * p + c]);
      std::swap(b[col], b[piv]);
    }
    const double diag = A[col * p + col];
    if (std::fabs(diag) < 1e-300) {
      b[col] = 0;  // singular direction: leave coefficient at zero
      continue;
    }
    for (int r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = A[r * p + col] / diag;
      if (f == 0) continue;
      for (int c = col; c < p; ++c) A[r * p + c] -= f * A[col * p + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    const double diag = A[i * p + i];
    x[static_cast<std::size_t>(i)] = std::fabs(diag) < 1e-300 ? 0.0 : b[i] / diag;
  }
  return x;
}

// Least squares over explicit basis columns (normal equations).
std::vector<double> linear_ls(const std::vector<std::vector<double>>& cols,
                              std::span<const double> ys) {
  const int p = static_cast<int>(cols.size());
  std::vector<double> A(static_cast<std::size_t>(p * p), 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(p), 0.0);
  for (int i = 0; i < p; ++i) {
    for (int j = i; j < p; ++j) {
      double acc = 0;
      for (std::size_t n = 0; n < ys.size(); ++n)
        acc += cols[static_cast<std::size_t>(i)][n] * cols[static_cast<std::size_t>(j)][n];
      A[i * p + j] = A[j * p + i] = acc;
    }
    double acc = 0;
    for (std::size_t n = 0; n < ys.size(); ++n)
      acc += cols[static_cast<std::size_t>(i)][n] * ys[n];
    rhs[static_cast<std::size_t>(i)] = acc;
  }
  return solve_dense(std::move(A), std::move(rhs), p);
}

using EvalFn = std::function<double(const std::vector<double>&, double)>;

double sse_of(const EvalFn& eval, const std::vector<double>& params,
              std::span<const double> xs, std::span<const double> ys) {
  double acc = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double v = eval(params, xs[i]);
    if (!std::isfinite(v)) return kInf;
    const double e = v - ys[i];
    acc += e * e;
  }
  return acc;
}

// Levenberg-Marquardt with numeric Jacobian; refines params in place.
void lm_refine(const EvalFn& eval, std::vector<double>& params,
               std::span<const double> xs, std::span<const double> ys,
               int max_iters = 60) {
  const int p = static_cast<int>(params.size());
  const std::size_t n = xs.size();
  double cur = sse_of(eval, params, xs, ys);
  if (!std::isfinite(cur)) return;
  double lambda = 1e-3;
  std::vector<double> residual(n), jac(n * static_cast<std::size_t>(p));
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i)
      residual[i] = eval(params, xs[i]) - ys[i];
    for (int j = 0; j < p; ++j) {
      const double h = 1e-7 * std::max(1.0, std::fabs(params[static_cast<std::size_t>(j)]));
      auto bumped = params;
      bumped[static_cast<std::size_t>(j)] += h;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = eval(bumped, xs[i]);
        jac[i * static_cast<std::size_t>(p) + static_cast<std::size_t>(j)] =
            std::isfinite(v) ? (v - (residual[i] + ys[i])) / h : 0.0;
      }
    }
    std::vector<double> JtJ(static_cast<std::size_t>(p * p), 0.0);
    std::vector<double> Jtr(static_cast<std::size_t>(p), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (int a = 0; a < p; ++a) {
        const double ja = jac[i * static_cast<std::size_t>(p) + static_cast<std::size_t>(a)];
        Jtr[static_cast<std::size_t>(a)] += ja * residual[i];
        for (int b = a; b < p; ++b)
          JtJ[a * p + b] += ja * jac[i * static_cast<std::size_t>(p) + static_cast<std::size_t>(b)];
      }
    for (int a = 0; a < p; ++a)
      for (int b = 0; b < a; ++b) JtJ[a * p + b] = JtJ[b * p + a];

    bool accepted = false;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      auto damped = JtJ;
      for (int a = 0; a < p; ++a)
        damped[a * p + a] += lambda * std::max(JtJ[a * p + a], 1e-12);
      std::vector<double> neg_Jtr(static_cast<std::size_t>(p));
      for (int a = 0; a < p; ++a) neg_Jtr[static_cast<std::size_t>(a)] = -Jtr[static_cast<std::size_t>(a)];
      const auto delta = solve_dense(damped, neg_Jtr, p);
      auto trial = params;
      for (int a = 0; a < p; ++a) trial[static_cast<std::size_t>(a)] += delta[static_cast<std::size_t>(a)];
      const double trial_sse = sse_of(eval, trial, xs, ys);
      if (trial_sse < cur) {
        const double gain = cur - trial_sse;
        params = std::move(trial);
        cur = trial_sse;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        if (gain < 1e-15 * (1.0 + cur)) return;
      } else {
        lambda *= 4.0;
      }
    }
    if (!accepted) return;
  }
}

const std::vector<double> kFreqStarts = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0};

// Minimizes f over [lo, hi] by golden-section search.
double golden_min(const std::function<double(double)>& f, double lo, double hi,
                  int iters = 48) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// "a*x + b"-style tail with a sign-aware joiner.
std::string signed_term(double v, const std::string& term) {
  if (v >= 0) return " + " + fmt(v) + term;
  return " - " + fmt(-v) + term;
}

}  // namespace

CandidateLibrary CandidateLibrary::standard() {
  CandidateLibrary lib;
  auto& fams = lib.families_;

  fams.push_back(CandidateFamily{
      "constant", 1,
      [](const std::vector<double>& p, double) { return p[0]; },
      [](std::span<const double>, std::span<const double> ys) {
        double mu = 0;
        for (double v : ys) mu += v;
        return std::vector<double>{ys.empty() ? 0.0 : mu / static_cast<double>(ys.size())};
      },
      [](const std::vector<double>& p) { return fmt(p[0]); }});

  fams.push_back(CandidateFamily{
      "poly4", 5,
      [](const std::vector<double>& p, double x) {
        // p = {c0, c1, c2, c3, c4}
        return ((((p[4] * x + p[3]) * x + p[2]) * x + p[1]) * x) + p[0];
      },
      [](std::span<const double> xs, std::span<const double> ys) {
        std::vector<std::vector<double>> cols(5, std::vector<double>(xs.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) {
          double v = 1.0;
          for (int d = 0; d < 5; ++d) {
            cols[static_cast<std::size_t>(d)][i] = v;
            v *= xs[i];
          }
        }
        return linear_ls(cols, ys);
      },
      [](const std::vector<double>& p) {
        std::string s = fmt(p[4]) + "*x^4";
        s += signed_term(p[3], "*x^3");
        s += signed_term(p[2], "*x^2");
        s += signed_term(p[1], "*x");
        s += signed_term(p[0], "");
        return s;
      }});

  // a*sin(b*x + c) and a*cos(b*x + c) share the two-column phase trick.
  auto sinusoid_fit = [](bool is_sin, std::span<const double> xs,
                         std::span<const double> ys) {
    auto ls_at = [&](double b, std::vector<double>& coeffs) {
      std::vector<std::vector<double>> cols(2, std::vector<double>(xs.size()));
      for (std::size_t i = 0; i < xs.size(); ++i) {
        cols[0][i] = std::sin(b * xs[i]);
        cols[1][i] = std::cos(b * xs[i]);
      }
      coeffs = linear_ls(cols, ys);
      double sse = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = coeffs[0] * cols[0][i] + coeffs[1] * cols[1][i] - ys[i];
        sse += e * e;
      }
      return sse;
    };
    double best_b = kFreqStarts[0], best_sse = kInf;
    for (double b : kFreqStarts) {
      std::vector<double> c;
      const double s = ls_at(b, c);
      if (s < best_sse) {
        best_sse = s;
        best_b = b;
      }
    }
    std::vector<double> dummy;
    best_b = golden_min(
        [&](double b) {
          std::vector<double> c;
          return ls_at(b, c);
        },
        std::max(1e-3, best_b - 0.5), std::min(4.0, best_b + 0.5));
    std::vector<double> ab;
    ls_at(best_b, ab);
    const double alpha = ab[0], beta = ab[1];
    (void)dummy;
    // alpha*sin(bx) + beta*cos(bx) = a*sin(bx + c) with a = hypot, c = atan2
    double a, c;
    if (is_sin) {
      a = std::hypot(alpha, beta);
      c = std::atan2(beta, alpha);
    } else {
      // = a*cos(bx + c): alpha = -a sin c, beta = a cos c
      a = std::hypot(alpha, beta);
      c = std::atan2(-alpha, beta);
    }
    return std::vector<double>{a, best_b, c};
  };

  fams.push_back(CandidateFamily{
      "sin", 3,
      [](const std::vector<double>& p, double x) {
        return p[0] * std::sin(p[1] * x + p[2]);
      },
      [sinusoid_fit](std::span<const double> xs, std::span<const double> ys) {
        auto p = sinusoid_fit(true, xs, ys);
        lm_refine(
            [](const std::vector<double>& q, double x) {
              return q[0] * std::sin(q[1] * x + q[2]);
            },
            p, xs, ys);
        return p;
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*sin(" + fmt(p[1]) + "*x" +
               signed_term(p[2], "") + ")";
      }});

  fams.push_back(CandidateFamily{
      "cos", 3,
      [](const std::vector<double>& p, double x) {
        return p[0] * std::cos(p[1] * x + p[2]);
      },
      [sinusoid_fit](std::span<const double> xs, std::span<const double> ys) {
        auto p = sinusoid_fit(false, xs, ys);
        lm_refine(
            [](const std::vector<double>& q, double x) {
              return q[0] * std::cos(q[1] * x + q[2]);
            },
            p, xs, ys);
        return p;
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*cos(" + fmt(p[1]) + "*x" +
               signed_term(p[2], "") + ")";
      }});

  fams.push_back(CandidateFamily{
      "sin+cos", 5,
      [](const std::vector<double>& p, double x) {
        return p[0] * std::sin(p[1] * x + p[2]) + p[3] * std::cos(p[4] * x);
      },
      [](std::span<const double> xs, std::span<const double> ys) {
        auto ls_at = [&](double b, double e, std::vector<double>& coeffs) {
          std::vector<std::vector<double>> cols(3, std::vector<double>(xs.size()));
          for (std::size_t i = 0; i < xs.size(); ++i) {
            cols[0][i] = std::sin(b * xs[i]);
            cols[1][i] = std::cos(b * xs[i]);
            cols[2][i] = std::cos(e * xs[i]);
          }
          coeffs = linear_ls(cols, ys);
          double sse = 0;
          for (std::size_t i = 0; i < xs.size(); ++i) {
            const double v = coeffs[0] * cols[0][i] + coeffs[1] * cols[1][i] +
                             coeffs[2] * cols[2][i];
            const double err = v - ys[i];
            sse += err * err;
          }
          return sse;
        };
        double best_b = 1, best_e = 1, best_sse = kInf;
        for (double b : kFreqStarts)
          for (double e : kFreqStarts) {
            std::vector<double> c;
            const double s = ls_at(b, e, c);
            if (s < best_sse) {
              best_sse = s;
              best_b = b;
              best_e = e;
            }
          }
        for (int round = 0; round < 3; ++round) {
          best_b = golden_min(
              [&](double b) {
                std::vector<double> c;
                return ls_at(b, best_e, c);
              },
              std::max(1e-3, best_b - 0.5), std::min(4.0, best_b + 0.5));
          best_e = golden_min(
              [&](double e) {
                std::vector<double> c;
                return ls_at(best_b, e, c);
              },
              std::max(1e-3, best_e - 0.5), std::min(4.0, best_e + 0.5));
        }
        std::vector<double> co;
        ls_at(best_b, best_e, co);
        std::vector<double> p = {std::hypot(co[0], co[1]), best_b,
                                 std::atan2(co[1], co[0]), co[2], best_e};
        lm_refine(
            [](const std::vector<double>& q, double x) {
              return q[0] * std::sin(q[1] * x + q[2]) + q[3] * std::cos(q[4] * x);
            },
            p, xs, ys);
        return p;
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*sin(" + fmt(p[1]) + "*x" + signed_term(p[2], "") +
               ")" + (p[3] >= 0 ? " + " + fmt(p[3]) : " - " + fmt(-p[3])) +
               "*cos(" + fmt(p[4]) + "*x)";
      }});

  fams.push_back(CandidateFamily{
      "tanh", 3,
      [](const std::vector<double>& p, double x) {
        return p[0] * std::tanh(p[1] * x + p[2]);
      },
      [](std::span<const double> xs, std::span<const double> ys) {
        double best_sse = kInf;
        std::vector<double> best = {1, 1, 0};
        for (double b : kFreqStarts) {
          std::vector<std::vector<double>> cols(1, std::vector<double>(xs.size()));
          for (std::size_t i = 0; i < xs.size(); ++i)
            cols[0][i] = std::tanh(b * xs[i]);
          const auto a = linear_ls(cols, ys);
          std::vector<double> p = {a[0], b, 0.0};
          lm_refine(
              [](const std::vector<double>& q, double x) {
                return q[0] * std::tanh(q[1] * x + q[2]);
              },
              p, xs, ys, 40);
          const double s = sse_of(
              [](const std::vector<double>& q, double x) {
                return q[0] * std::tanh(q[1] * x + q[2]);
              },
              p, xs, ys);
          if (s < best_sse) {
            best_sse = s;
            best = p;
          }
        }
        return best;
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*tanh(" + fmt(p[1]) + "*x" + signed_term(p[2], "") +
               ")";
      }});

  fams.push_back(CandidateFamily{
      "affine", 2,
      [](const std::vector<double>& p, double x) { return p[0] * x + p[1]; },
      [](std::span<const double> xs, std::span<const double> ys) {
        std::vector<std::vector<double>> cols(2, std::vector<double>(xs.size()));
        for (std::size_t i = 0; i < xs.size(); ++i) {
          cols[0][i] = xs[i];
          cols[1][i] = 1.0;
        }
        return linear_ls(cols, ys);
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*x" + signed_term(p[1], "");
      }});

  auto exp_eval = [](const std::vector<double>& p, double x) {
    const double t = p[1] * x;
    if (t > 500.0) return std::numeric_limits<double>::quiet_NaN();
    return p[0] * std::exp(t) + p[2];
  };
  fams.push_back(CandidateFamily{
      "exp", 3, exp_eval,
      [exp_eval](std::span<const double> xs, std::span<const double> ys) {
        double best_sse = kInf;
        std::vector<double> best = {0, 0.5, 0};
        for (double mag : {0.5, 1.0, 2.0, 4.0})
          for (double sign : {1.0, -1.0}) {
            const double b = mag * sign;
            std::vector<std::vector<double>> cols(2, std::vector<double>(xs.size()));
            for (std::size_t i = 0; i < xs.size(); ++i) {
              cols[0][i] = std::exp(b * xs[i]);
              cols[1][i] = 1.0;
            }
            const auto ac = linear_ls(cols, ys);
            std::vector<double> p = {ac[0], b, ac[1]};
            lm_refine(exp_eval, p, xs, ys, 40);
            const double s = sse_of(exp_eval, p, xs, ys);
            if (s < best_sse) {
              best_sse = s;
              best = p;
            }
          }
        return best;
      },
      [](const std::vector<double>& p) {
        return fmt(p[0]) + "*exp(" + fmt(p[1]) + "*x)" + signed_term(p[2], "");
      }});

  auto log_eval = [](const std::vector<double>& p, double x) {
    const double t = x - p[1];
    if (t <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return p[0] * std::log(t) + p[2];
  };
  fams.push_back(CandidateFamily{
      "log", 3, log_eval,
      [log_eval](std::span<const double> xs, std::span<const double> ys) {
        double xmin = kInf;
        for (double x : xs) xmin = std::min(xmin, x);
        double best_sse = kInf;
        std::vector<double> best;
        for (double off : {0.25, 0.5, 1.0, 2.0, 4.0}) {
          const double b = xmin - off;
          std::vector<std::vector<double>> cols(2, std::vector<double>(xs.size()));
          for (std::size_t i = 0; i < xs.size(); ++i) {
            cols[0][i] = std::log(xs[i] - b);
            cols[1][i] = 1.0;
          }
          const auto ac = linear_ls(cols, ys);
          std::vector<double> p = {ac[0], b, ac[1]};
          lm_refine(log_eval, p, xs, ys, 40);
          const double s = sse_of(log_eval, p, xs, ys);
          if (s < best_sse) {
            best_sse = s;
            best = p;
          }
        }
        return best;
      },
      [](const std::vector<double>& p) {
        const std::string inner =
            p[1] >= 0 ? "x - " + fmt(p[1]) : "x + " + fmt(-p[1]);
        return fmt(p[0]) + "*log(" + inner + ")" + signed_term(p[2], "");
      }});

  return lib;
}

namespace {

double r_squared(std::span<const double> pred, std::span<const double> truth) {
  double mu = 0;
  for (double v : truth) mu += v;
  mu /= static_cast<double>(truth.size());
  double sst = 0, sse = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sst += (truth[i] - mu) * (truth[i] - mu);
    sse += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  }
  if (sse < 1e-12 && sst < 1e-12) return 1.0;
  return 1.0 - sse / std::max(sst, 1e-300);
}

}  // namespace

EdgeFitResult fit_candidates(const CandidateLibrary& lib,
                             std::span<const double> xs,
                             std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 8)
    throw contract_error("fit_candidates: need >= 8 samples");
  // even indices fit the parameters; odd indices score the fit
  std::vector<double> fit_x, fit_y, ho_x, ho_y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i % 2 == 0) {
      fit_x.push_back(xs[i]);
      fit_y.push_back(ys[i]);
    } else {
      ho_x.push_back(xs[i]);
      ho_y.push_back(ys[i]);
    }
  }

  struct Scored {
    const CandidateFamily* family;
    std::vector<double> params;
    double r2;
  };
  std::vector<Scored> scored;
  for (const auto& family : lib.families()) {
    auto params = family.fit(fit_x, fit_y);
    if (params.empty()) continue;
    std::vector<double> pred(ho_x.size());
    bool ok = true;
    for (std::size_t i = 0; i < ho_x.size(); ++i) {
      pred[i] = family.eval(params, ho_x[i]);
      if (!std::isfinite(pred[i])) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    scored.push_back({&family, std::move(params), r_squared(pred, ho_y)});
  }
  if (scored.empty())
    throw contract_error("fit_candidates: no family produced a valid fit");

  double best_r2 = -kInf;
  for (const auto& s : scored) best_r2 = std::max(best_r2, s.r2);
  const Scored* winner = nullptr;
  for (const auto& s : scored) {
    if (s.r2 < best_r2 - 1e-3) continue;  // parsimony window
    if (winner == nullptr ||
        s.family->param_count < winner->family->param_count ||
        (s.family->param_count == winner->family->param_count &&
         s.r2 > winner->r2))
      winner = &s;
  }
  return {winner->family->name, winner->params, winner->r2};
}

std::vector<SymbolicFit> symbolify(const DecoKanModel& model,
                                   const PruneMask& mask,
                                   const CandidateLibrary& lib,
                                   const Tensor& sample_grid) {
  const auto layers = kan_layers(model);
  const auto refs = kan_layer_refs(model);
  if (mask.layers.size() != layers.size())
    throw contract_error("symbolify: mask does not match this model");

  struct Task {
    std::size_t ref_index;
    Dim o, i;
  };
  std::vector<Task> tasks;
  for (std::size_t li = 0; li < layers.size(); ++li)
    for (Dim o = 0; o < layers[li]->out_dim; ++o)
      for (Dim i = 0; i < layers[li]->in_dim; ++i)
        if (mask.layers[li].is_kept(o, i)) tasks.push_back({li, o, i});

  std::vector<SymbolicFit> fits(tasks.size());
  parallel_for(static_cast<std::int64_t>(tasks.size()), [&](std::int64_t t) {
    const Task& task = tasks[static_cast<std::size_t>(t)];
    const KanLayerRef& ref = refs[task.ref_index];
    const KanLayerParams& layer = *layers[task.ref_index];
    Tensor phi = edge_activation(layer, task.o, task.i, sample_grid);
    const auto xs = sample_grid.values();
    const auto ys = phi.values();
    EdgeFitResult fit = fit_candidates(lib, xs, ys);

    SymbolicFit out;
    out.branch = table_branch_name(model, ref.branch_index);
    out.mixer = ref.mixer;
    out.stack = ref.temporal ? "temporal" : "feature";
    out.stack_layer = ref.stack_layer;
    out.input_node = task.i;
    out.output_node = task.o;
    out.family = fit.family;
    out.params = fit.params;
    for (const auto& fam : lib.families())
      if (fam.name == fit.family) out.formula = fam.format(fit.params);
    out.r2 = fit.r2;
    for (std::size_t i = 1; i < xs.size(); i += 2) {
      out.grid_x.push_back(xs[i]);
      out.grid_y.push_back(ys[i]);
    }
    fits[static_cast<std::size_t>(t)] = std::move(out);
  });

  std::stable_sort(fits.begin(), fits.end(),
                   [](const SymbolicFit& a, const SymbolicFit& b) {
                     return a.r2 > b.r2;
                   });
  return fits;
}

// ---- reports --------------------------------------------------------------

namespace {

std::string with_commas(Dim v) {
  std::string digits = std::to_string(v);
  std::string out;
  int count = 0;
  for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
    if (count != 0 && count % 3 == 0) out.push_back(',');
    out.push_back(*it);
    ++count;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string pct(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * ratio);
  return buf;
}

void pad_to(std::string& s, std::size_t width) {
  while (s.size() < width) s.push_back(' ');
}

// Shortens every numeric literal in a stored formula for display; integer
// exponents after '^' are kept as-is.
std::string compact_numbers(const std::string& formula) {
  std::string out;
  std::size_t i = 0;
  while (i < formula.size()) {
    const char c = formula[i];
    const bool digit_start =
        std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < formula.size() &&
         std::isdigit(static_cast<unsigned char>(formula[i + 1])));
    if (!digit_start || (!out.empty() && out.back() == '^')) {
      out.push_back(c);
      ++i;
      continue;
    }
    char* end = nullptr;
    const double v = std::strtod(formula.c_str() + i, &end);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    out += buf;
    i = static_cast<std::size_t>(end - formula.c_str());
  }
  return out;
}

}  // namespace

std::string prune_stats_text(const PruneMask& mask) {
  std::ostringstream os;
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Branch", "Total", "Pruned", "Preserved", "Prune Ratio"});
  auto add = [&](const BranchPruneStats& s) {
    rows.push_back({s.branch, with_commas(s.total), with_commas(s.pruned),
                    with_commas(s.preserved), pct(s.ratio())});
  };
  for (const auto& s : mask.per_branch) add(s);
  add(mask.overall);
  std::vector<std::size_t> widths(5, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 5; ++c)
      widths[c] = std::max(widths[c], row[c].size());
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < 5; ++c) {
      std::string cell = row[c];
      pad_to(cell, widths[c] + 2);
      line += cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

std::string symbolic_table_tsv(const std::vector<SymbolicFit>& fits) {
  std::ostringstream os;
  os << "branch\tmixer\tstack\tstack_layer\tlayer_i\tlayer_j\tfamily\tr2\tformula\n";
  os.precision(17);
  for (const auto& f : fits)
    os << f.branch << '\t' << f.mixer << '\t' << f.stack << '\t'
       << f.stack_layer << '\t' << f.input_node << '\t' << f.output_node
       << '\t' << f.family << '\t' << f.r2 << '\t' << f.formula << '\n';
  return os.str();
}

std::string symbolic_table_text(const std::vector<SymbolicFit>& fits, Dim top_k) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back(
      {"Branch", "KAN Mixer", "Layer i", "Layer j", "Symbolic Formula", "R2"});
  Dim taken = 0;
  for (const auto& f : fits) {
    if (taken++ >= top_k) break;
    char r2buf[16];
    std::snprintf(r2buf, sizeof r2buf, "%.4f", f.r2);
    rows.push_back({f.branch, "KAN Mixer " + std::to_string(f.mixer),
                    std::to_string(f.input_node), std::to_string(f.output_node),
                    compact_numbers(f.formula), r2buf});
  }
  std::vector<std::size_t> widths(6, 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < 6; ++c)
      widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream os;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < 6; ++c) {
      std::string cell = row[c];
      pad_to(cell, widths[c] + 2);
      line += cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << '\n';
  }
  return os.str();
}

// ---- formula parsing -----------------------------------------------------

namespace {

class FormulaParser {
 public:
  using Fn = std::function<double(double)>;

  explicit FormulaParser(std::string src) : src_(std::move(src)) {}

  Fn parse() {
    Fn fn = expr();
    skip_space();
    if (pos_ != src_.size())
      throw value_error("formula: trailing characters at position " +
                        std::to_string(pos_) + " in '" + src_ + "'");
    return fn;
  }

 private:
  std::string src_;
  std::size_t pos_ = 0;

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
      ++pos_;
  }

  bool eat(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_space();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  Fn expr() {
    Fn left = term();
    for (;;) {
      if (eat('+')) {
        Fn right = term();
        left = [left, right](double x) { return left(x) + right(x); };
      } else if (eat('-')) {
        Fn right = term();
        left = [left, right](double x) { return left(x) - right(x); };
      } else {
        return left;
      }
    }
  }

  Fn term() {
    Fn left = factor();
    for (;;) {
      if (eat('*')) {
        Fn right = factor();
        left = [left, right](double x) { return left(x) * right(x); };
      } else if (eat('/')) {
        Fn right = factor();
        left = [left, right](double x) { return left(x) / right(x); };
      } else {
        return left;
      }
    }
  }

  Fn factor() {
    if (eat('-')) {
      Fn inner = factor();
      return [inner](double x) { return -inner(x); };
    }
    if (eat('+')) return factor();
    return power();
  }

  Fn power() {
    Fn base = atom();
    if (eat('^')) {
      Fn exponent = factor();
      return [base, exponent](double x) { return std::pow(base(x), exponent(x)); };
    }
    return base;
  }

  Fn atom() {
    skip_space();
    if (pos_ >= src_.size()) throw value_error("formula: unexpected end");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      char* end = nullptr;
      const double v = std::strtod(src_.c_str() + pos_, &end);
      pos_ = static_cast<std::size_t>(end - src_.c_str());
      return [v](double) { return v; };
    }
    if (eat('(')) {
      Fn inner = expr();
      if (!eat(')')) throw value_error("formula: missing ')'");
      return inner;
    }
    // identifier: x or a function name
    std::string name;
    while (pos_ < src_.size() &&
           std::isalpha(static_cast<unsigned char>(src_[pos_])))
      name.push_back(src_[pos_++]);
    if (name == "x") return [](double x) { return x; };
    if (name.empty())
      throw value_error("formula: unexpected character '" + std::string(1, peek()) + "'");
    if (!eat('('))
      throw value_error("formula: expected '(' after '" + name + "'");
    Fn arg = expr();
    if (!eat(')')) throw value_error("formula: missing ')'");
    if (name == "sin") return [arg](double x) { return std::sin(arg(x)); };
    if (name == "cos") return [arg](double x) { return std::cos(arg(x)); };
    if (name == "tanh") return [arg](double x) { return std::tanh(arg(x)); };
    if (name == "exp") return [arg](double x) { return std::exp(arg(x)); };
    if (name == "log") return [arg](double x) { return std::log(arg(x)); };
    throw value_error("formula: unknown function '" + name + "'");
  }
};

}  // namespace

std::vector<double> eval_formula(const std::string& formula,
                                 std::span<const double> xs) {
  auto fn = FormulaParser(formula).parse();
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fn(xs[i]);
  return out;
}

double eval_formula(const std::string& formula, double x) {
  return FormulaParser(formula).parse()(x);
}

}  // namespace decokan
