#include "decokan/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace decokan {

namespace {
std::atomic<bool> g_checked{true};
}

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(); }

int worker_threads() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    int n = std::min(hw, 8);
    if (const char* env = std::getenv("DECOKAN_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end != env && v >= 1) n = static_cast<int>(std::min<long>(v, 64));
    }
    return n;
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int threads = worker_threads();
  if (threads <= 1 || n < 2 * threads) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto work = [&] {
    for (;;) {
      std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
}

Dim shape_numel(const Shape& shape) {
  Dim n = 1;
  for (Dim d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {

void check_finite(const std::vector<double>& values, const char* op) {
  if (!g_checked.load()) return;
  for (double v : values) {
    if (!std::isfinite(v))
      throw value_error(std::string("non-finite value produced by op '") + op + "'");
  }
}

void accumulate(TensorImpl& t, const std::vector<double>& delta) {
  t.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) t.grad[i] += delta[i];
}

Tensor make_node(Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs,
                 std::function<void(TensorImpl&)> rule, const char* name) {
  if (shape_numel(shape) != static_cast<Dim>(values.size()))
    throw shape_error(std::string(name) + ": shape/value count mismatch");
  check_finite(values, name);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->op_name = name;
  bool tracked = false;
  for (const auto& in : inputs)
    if (in.defined() && in.impl()->tracked()) tracked = true;
  if (tracked) {
    impl->parents.reserve(inputs.size());
    for (const auto& in : inputs)
      if (in.defined()) impl->parents.push_back(in.impl());
    impl->adjoint_rule = std::move(rule);
  }
  return Tensor(std::move(impl));
}

}  // namespace detail

using detail::ImplPtr;
using detail::TensorImpl;

// ---- construction ---------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->values.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  detail::check_finite(t.impl_->values, "full");
  return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<Dim>(values.size()))
    throw shape_error("from_vector: " + shape_str(shape) + " does not hold " +
                      std::to_string(values.size()) + " values");
  detail::check_finite(values, "from_vector");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_vector({}, {value}); }

Dim Tensor::dim(Dim axis) const {
  if (axis < 0 || axis >= rank())
    throw contract_error("dim: axis out of range");
  return impl_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (numel() != 1) throw contract_error("item: tensor is not scalar");
  return impl_->values[0];
}

double Tensor::at(std::initializer_list<Dim> idx) const {
  const Shape& s = impl_->shape;
  if (idx.size() != s.size()) throw contract_error("at: rank mismatch");
  Dim off = 0;
  std::size_t d = 0;
  for (Dim i : idx) {
    if (i < 0 || i >= s[d]) throw contract_error("at: index out of range");
    off = off * s[d] + i;
    ++d;
  }
  return impl_->values[static_cast<std::size_t>(off)];
}

std::span<const double> Tensor::grad() const {
  if (impl_->grad.empty())
    throw contract_error("grad: no gradient accumulated");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty())
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  return Tensor(std::move(impl));
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw contract_error("backward: loss must be a defined scalar");
  TensorImpl* root = loss.impl().get();

  // Reverse topological order via iterative post-order DFS over parents.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      TensorImpl* p = node->parents[child++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->adjoint_rule && !node->grad.empty()) node->adjoint_rule(*node);
  }

  // Tape cleared: drop the graph so parameters hold only their gradients.
  for (TensorImpl* node : order) {
    node->adjoint_rule = nullptr;
    node->parents.clear();
  }
}

// ---- broadcasting helpers ---------------------------------------------

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<Dim> a_stride;  // per out axis, 0 where broadcast
  std::vector<Dim> b_stride;
};

std::vector<Dim> element_strides(const Shape& s) {
  std::vector<Dim> st(s.size());
  Dim acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan p;
  const std::size_t ra = a.size(), rb = b.size();
  const std::size_t r = std::max(ra, rb);
  p.out.resize(r);
  p.a_stride.assign(r, 0);
  p.b_stride.assign(r, 0);
  auto sa = element_strides(a), sb = element_strides(b);
  for (std::size_t i = 0; i < r; ++i) {
    const bool ha = i >= r - ra;
    const bool hb = i >= r - rb;
    const Dim da = ha ? a[i - (r - ra)] : 1;
    const Dim db = hb ? b[i - (r - rb)] : 1;
    if (da != db && da != 1 && db != 1)
      throw shape_error(std::string(op) + ": cannot broadcast " +
                        shape_str(a) + " with " + shape_str(b));
    p.out[i] = std::max(da, db);
    if (ha && da != 1) p.a_stride[i] = sa[i - (r - ra)];
    if (hb && db != 1) p.b_stride[i] = sb[i - (r - rb)];
  }
  return p;
}

// Walks the broadcast iteration space calling f(out_pos, a_off, b_off).
template <class F>
void broadcast_walk(const BroadcastPlan& p, F&& f) {
  const Dim n = shape_numel(p.out);
  if (n == 0) return;
  const std::size_t r = p.out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<Dim> idx(r, 0);
  Dim aoff = 0, boff = 0;
  for (Dim pos = 0;; ++pos) {
    f(pos, aoff, boff);
    std::size_t ax = r;
    while (ax-- > 0) {
      ++idx[ax];
      aoff += p.a_stride[ax];
      boff += p.b_stride[ax];
      if (idx[ax] < p.out[ax]) break;
      aoff -= p.a_stride[ax] * p.out[ax];
      boff -= p.b_stride[ax] * p.out[ax];
      idx[ax] = 0;
      if (ax == 0) return;
    }
  }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Generic broadcast binary op. fwd(av, bv) -> out value;
// bwd(av, bv, go, &da, &db) adds local adjoints.
template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd,
                 const char* name) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  std::vector<double> out;
  Shape out_shape;
  if (same_shape(as, bs)) {
    out_shape = as;
    const auto av = a.values();
    const auto bv = b.values();
    out.resize(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return detail::make_node(
        out_shape, std::move(out), {a, b},
        [ai = a.impl(), bi = b.impl(), bwd](TensorImpl& o) {
          ai->ensure_grad();
          bi->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) {
            double da = 0, db = 0;
            bwd(ai->values[i], bi->values[i], o.grad[i], da, db);
            ai->grad[i] += da;
            bi->grad[i] += db;
          }
        },
        name);
  }
  BroadcastPlan plan = broadcast_plan(as, bs, name);
  out_shape = plan.out;
  out.resize(static_cast<std::size_t>(shape_numel(out_shape)));
  const auto av = a.values();
  const auto bv = b.values();
  broadcast_walk(plan, [&](Dim pos, Dim ao, Dim bo) {
    out[static_cast<std::size_t>(pos)] =
        fwd(av[static_cast<std::size_t>(ao)], bv[static_cast<std::size_t>(bo)]);
  });
  return detail::make_node(
      out_shape, std::move(out), {a, b},
      [ai = a.impl(), bi = b.impl(), plan, bwd](TensorImpl& o) {
        ai->ensure_grad();
        bi->ensure_grad();
        broadcast_walk(plan, [&](Dim pos, Dim ao, Dim bo) {
          double da = 0, db = 0;
          bwd(ai->values[static_cast<std::size_t>(ao)],
              bi->values[static_cast<std::size_t>(bo)],
              o.grad[static_cast<std::size_t>(pos)], da, db);
          ai->grad[static_cast<std::size_t>(ao)] += da;
          bi->grad[static_cast<std::size_t>(bo)] += db;
        });
      },
      name);
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd, const char* name) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return detail::make_node(
      a.shape(), std::move(out), {a},
      [ai = a.impl(), bwd](TensorImpl& o) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
          ai->grad[i] += bwd(ai->values[i], o.values[i]) * o.grad[i];
      },
      name);
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- elementwise ops --------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      },
      "div");
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x + s; },
      [](double, double) { return 1.0; }, "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(
      a, [s](double x) { return x * s; },
      [s](double, double) { return s; }, "mul_scalar");
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); },
      "abs");
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; }, "square");
}

Tensor silu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x * logistic(x); },
      [](double x, double) {
        const double s = logistic(x);
        return s * (1.0 + x * (1.0 - s));
      },
      "silu");
}

// ---- matmul / linear ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw shape_error("matmul: operands must have rank >= 2");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const Dim m = as[as.size() - 2], k = as[as.size() - 1];
  const Dim kb = bs[bs.size() - 2], n = bs[bs.size() - 1];
  if (k != kb)
    throw shape_error("matmul: inner dims disagree " + shape_str(as) + " x " +
                      shape_str(bs));
  Shape abatch(as.begin(), as.end() - 2), bbatch(bs.begin(), bs.end() - 2);
  Shape batch_shape;
  bool a_bcast = false, b_bcast = false;
  if (abatch == bbatch) {
    batch_shape = abatch;
  } else if (abatch.empty()) {
    batch_shape = bbatch;
    a_bcast = true;
  } else if (bbatch.empty()) {
    batch_shape = abatch;
    b_bcast = true;
  } else {
    throw shape_error("matmul: batch dims must match or one operand be rank-2");
  }
  const Dim batches = shape_numel(batch_shape);
  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(static_cast<std::size_t>(batches * m * n), 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (Dim t = 0; t < batches; ++t) {
    const double* At = A + (a_bcast ? 0 : t * m * k);
    const double* Bt = B + (b_bcast ? 0 : t * k * n);
    double* Ct = out.data() + t * m * n;
    for (Dim i = 0; i < m; ++i)
      for (Dim l = 0; l < k; ++l) {
        const double av = At[i * k + l];
        if (av == 0.0) continue;
        const double* brow = Bt + l * n;
        double* crow = Ct + i * n;
        for (Dim j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
  }
  return detail::make_node(
      std::move(out_shape), std::move(out), {a, b},
      [ai = a.impl(), bi = b.impl(), batches, m, k, n, a_bcast,
       b_bcast](TensorImpl& o) {
        ai->ensure_grad();
        bi->ensure_grad();
        const double* A = ai->values.data();
        const double* B = bi->values.data();
        const double* G = o.grad.data();
        for (Dim t = 0; t < batches; ++t) {
          const double* At = A + (a_bcast ? 0 : t * m * k);
          const double* Bt = B + (b_bcast ? 0 : t * k * n);
          double* dAt = ai->grad.data() + (a_bcast ? 0 : t * m * k);
          double* dBt = bi->grad.data() + (b_bcast ? 0 : t * k * n);
          const double* Gt = G + t * m * n;
          for (Dim i = 0; i < m; ++i)
            for (Dim j = 0; j < n; ++j) {
              const double g = Gt[i * n + j];
              if (g == 0.0) continue;
              for (Dim l = 0; l < k; ++l) {
                dAt[i * k + l] += g * Bt[l * n + j];
                dBt[l * n + j] += g * At[i * k + l];
              }
            }
        }
      },
      "matmul");
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
  if (x.rank() < 1 || w.rank() != 2)
    throw shape_error("linear: x rank >= 1 and w rank == 2 required");
  const Dim in = x.shape().back();
  const Dim out_dim = w.dim(0);
  if (w.dim(1) != in)
    throw shape_error("linear: weight " + shape_str(w.shape()) +
                      " incompatible with input " + shape_str(x.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != out_dim))
    throw shape_error("linear: bias shape mismatch");
  const Dim rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim), 0.0);
  const double* X = x.values().data();
  const double* W = w.values().data();
  for (Dim r = 0; r < rows; ++r) {
    const double* xr = X + r * in;
    double* yr = out.data() + r * out_dim;
    for (Dim o = 0; o < out_dim; ++o) {
      const double* wr = W + o * in;
      double acc = bias ? bias->values()[static_cast<std::size_t>(o)] : 0.0;
      for (Dim i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
  std::vector<Tensor> inputs = {x, w};
  if (bias) inputs.push_back(*bias);
  detail::ImplPtr bimpl = bias ? bias->impl() : nullptr;
  return detail::make_node(
      std::move(out_shape), std::move(out), std::move(inputs),
      [xi = x.impl(), wi = w.impl(), bimpl, rows, in, out_dim](TensorImpl& o) {
        xi->ensure_grad();
        wi->ensure_grad();
        if (bimpl) bimpl->ensure_grad();
        const double* X = xi->values.data();
        const double* W = wi->values.data();
        const double* G = o.grad.data();
        for (Dim r = 0; r < rows; ++r) {
          const double* xr = X + r * in;
          const double* gr = G + r * out_dim;
          double* dxr = xi->grad.data() + r * in;
          for (Dim oo = 0; oo < out_dim; ++oo) {
            const double g = gr[oo];
            if (g == 0.0) continue;
            const double* wr = W + oo * in;
            double* dwr = wi->grad.data() + oo * in;
            for (Dim i = 0; i < in; ++i) {
              dxr[i] += g * wr[i];
              dwr[i] += g * xr[i];
            }
            if (bimpl) bimpl->grad[static_cast<std::size_t>(oo)] += g;
          }
        }
      },
      "linear");
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  return linear_impl(x, w, &bias);
}

Tensor linear(const Tensor& x, const Tensor& w) {
  return linear_impl(x, w, nullptr);
}

// ---- shape ops ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw shape_error("reshape: cannot view " + shape_str(x.shape()) + " as " +
                      shape_str(shape));
  std::vector<double> vals(x.values().begin(), x.values().end());
  return detail::make_node(
      std::move(shape), std::move(vals), {x},
      [xi = x.impl()](TensorImpl& o) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xi->grad[i] += o.grad[i];
      },
      "reshape");
}

namespace {

std::vector<Dim> permute_map(const Shape& in_shape,
                             const std::vector<Dim>& axes, Shape& out_shape) {
  const std::size_t r = in_shape.size();
  if (axes.size() != r) throw shape_error("permute: axes rank mismatch");
  std::vector<bool> seen(r, false);
  out_shape.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Dim a = axes[i];
    if (a < 0 || a >= static_cast<Dim>(r) || seen[static_cast<std::size_t>(a)])
      throw shape_error("permute: invalid axes");
    seen[static_cast<std::size_t>(a)] = true;
    out_shape[i] = in_shape[static_cast<std::size_t>(a)];
  }
  // map[out_pos] = in_pos
  auto in_strides = element_strides(in_shape);
  auto out_strides = element_strides(out_shape);
  const Dim n = shape_numel(in_shape);
  std::vector<Dim> map(static_cast<std::size_t>(n));
  std::vector<Dim> idx(r, 0);
  for (Dim pos = 0; pos < n; ++pos) {
    Dim in_off = 0;
    for (std::size_t i = 0; i < r; ++i)
      in_off += idx[i] * in_strides[static_cast<std::size_t>(axes[i])];
    map[static_cast<std::size_t>(pos)] = in_off;
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) break;
      idx[ax] = 0;
    }
  }
  return map;
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<Dim>& axes) {
  Shape out_shape;
  auto map = permute_map(x.shape(), axes, out_shape);
  std::vector<double> vals(map.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < map.size(); ++i)
    vals[i] = xv[static_cast<std::size_t>(map[i])];
  return detail::make_node(
      std::move(out_shape), std::move(vals), {x},
      [xi = x.impl(), map = std::move(map)](TensorImpl& o) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < map.size(); ++i)
          xi->grad[static_cast<std::size_t>(map[i])] += o.grad[i];
      },
      "permute");
}

Tensor swap_last_two(const Tensor& x) {
  if (x.rank() < 2) throw shape_error("swap_last_two: rank >= 2 required");
  std::vector<Dim> axes(static_cast<std::size_t>(x.rank()));
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

Tensor gather_patches(const Tensor& x, Dim patch, Dim stride) {
  if (x.rank() != 2) throw shape_error("gather_patches: expected (C, L)");
  if (patch < 1 || stride < 1 || stride > patch)
    throw contract_error("gather_patches: require 1 <= stride <= patch");
  const Dim C = x.dim(0), L = x.dim(1);
  if (L < patch)
    throw shape_error("gather_patches: series shorter than patch size");
  const Dim N = (L - patch) / stride + 1;
  std::vector<double> vals(static_cast<std::size_t>(C * N * patch));
  const auto xv = x.values();
  std::size_t pos = 0;
  for (Dim c = 0; c < C; ++c)
    for (Dim w = 0; w < N; ++w)
      for (Dim p = 0; p < patch; ++p)
        vals[pos++] = xv[static_cast<std::size_t>(c * L + w * stride + p)];
  return detail::make_node(
      {C, N, patch}, std::move(vals), {x},
      [xi = x.impl(), C, L, N, patch, stride](TensorImpl& o) {
        xi->ensure_grad();
        std::size_t pos = 0;
        for (Dim c = 0; c < C; ++c)
          for (Dim w = 0; w < N; ++w)
            for (Dim p = 0; p < patch; ++p)
              xi->grad[static_cast<std::size_t>(c * L + w * stride + p)] +=
                  o.grad[pos++];
      },
      "gather_patches");
}

Tensor pad_tail_replicate(const Tensor& x, Dim n) {
  if (x.rank() != 2) throw shape_error("pad_tail_replicate: expected (C, L)");
  if (n < 0) throw contract_error("pad_tail_replicate: n >= 0 required");
  const Dim C = x.dim(0), L = x.dim(1);
  if (L < 1) throw shape_error("pad_tail_replicate: empty series");
  std::vector<double> vals(static_cast<std::size_t>(C * (L + n)));
  const auto xv = x.values();
  for (Dim c = 0; c < C; ++c) {
    for (Dim i = 0; i < L; ++i)
      vals[static_cast<std::size_t>(c * (L + n) + i)] =
          xv[static_cast<std::size_t>(c * L + i)];
    const double last = xv[static_cast<std::size_t>(c * L + L - 1)];
    for (Dim j = 0; j < n; ++j)
      vals[static_cast<std::size_t>(c * (L + n) + L + j)] = last;
  }
  return detail::make_node(
      {C, L + n}, std::move(vals), {x},
      [xi = x.impl(), C, L, n](TensorImpl& o) {
        xi->ensure_grad();
        for (Dim c = 0; c < C; ++c) {
          for (Dim i = 0; i < L; ++i)
            xi->grad[static_cast<std::size_t>(c * L + i)] +=
                o.grad[static_cast<std::size_t>(c * (L + n) + i)];
          double acc = 0;
          for (Dim j = 0; j < n; ++j)
            acc += o.grad[static_cast<std::size_t>(c * (L + n) + L + j)];
          xi->grad[static_cast<std::size_t>(c * L + L - 1)] += acc;
        }
      },
      "pad_tail_replicate");
}

// ---- reductions ---------------------------------------------------------

Tensor sum_all(const Tensor& x) {
  double acc = 0;
  for (double v : x.values()) acc += v;
  return detail::make_node(
      {}, {acc}, {x},
      [xi = x.impl()](TensorImpl& o) {
        xi->ensure_grad();
        const double g = o.grad[0];
        for (auto& gx : xi->grad) gx += g;
      },
      "sum_all");
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw contract_error("mean_all: empty tensor");
  double acc = 0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return detail::make_node(
      {}, {acc * inv}, {x},
      [xi = x.impl(), inv](TensorImpl& o) {
        xi->ensure_grad();
        const double g = o.grad[0] * inv;
        for (auto& gx : xi->grad) gx += g;
      },
      "mean_all");
}

// ---- normalization / dropout ---------------------------------------------

Tensor normalize_last(const Tensor& x, double eps) {
  if (x.rank() < 1) throw shape_error("normalize_last: rank >= 1 required");
  const Dim d = x.shape().back();
  if (d < 1) throw shape_error("normalize_last: empty last axis");
  const Dim rows = x.numel() / d;
  std::vector<double> out(static_cast<std::size_t>(rows * d));
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  const double* X = x.values().data();
  for (Dim r = 0; r < rows; ++r) {
    const double* xr = X + r * d;
    double mu = 0;
    for (Dim i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0;
    for (Dim i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = inv;
    double* yr = out.data() + r * d;
    for (Dim i = 0; i < d; ++i) yr[i] = (xr[i] - mu) * inv;
  }
  return detail::make_node(
      x.shape(), std::move(out), {x},
      [xi = x.impl(), inv_std = std::move(inv_std), rows, d](TensorImpl& o) {
        // dx = inv * (g - mean(g) - xhat * mean(g * xhat))
        xi->ensure_grad();
        const double* G = o.grad.data();
        const double* Y = o.values.data();
        for (Dim r = 0; r < rows; ++r) {
          const double* gr = G + r * d;
          const double* yr = Y + r * d;
          double gmean = 0, gymean = 0;
          for (Dim i = 0; i < d; ++i) {
            gmean += gr[i];
            gymean += gr[i] * yr[i];
          }
          gmean /= static_cast<double>(d);
          gymean /= static_cast<double>(d);
          const double inv = inv_std[static_cast<std::size_t>(r)];
          double* dxr = xi->grad.data() + r * d;
          for (Dim i = 0; i < d; ++i)
            dxr[i] += inv * (gr[i] - gmean - yr[i] * gymean);
        }
      },
      "normalize_last");
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0)
    throw contract_error("dropout: rate must be in [0, 1)");
  if (!training || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  std::vector<double> mask(static_cast<std::size_t>(x.numel()));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& m : mask) m = unit(rng) < p ? 0.0 : scale;
  std::vector<double> out(mask.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = xv[i] * mask[i];
  return detail::make_node(
      x.shape(), std::move(out), {x},
      [xi = x.impl(), mask = std::move(mask)](TensorImpl& o) {
        xi->ensure_grad();
        for (std::size_t i = 0; i < mask.size(); ++i)
          xi->grad[i] += o.grad[i] * mask[i];
      },
      "dropout");
}

// ---- init helpers -----------------------------------------------------

Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
               bool requires_grad) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.mutable_values()) v = dist(rng);
  return t;
}

Tensor normal(Shape shape, double sigma, std::mt19937_64& rng,
              bool requires_grad) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.mutable_values()) v = dist(rng);
  return t;
}

}  // namespace decokan
