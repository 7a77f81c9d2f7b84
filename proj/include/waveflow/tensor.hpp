#pragma once

// Reverse-mode autodiff over a flat tape. Tensors are immutable after an op
// produces them; a Tape records backward closures in execution order.

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace waveflow {

using Shape = std::vector<int>;

inline long numel(const Shape& s) {
  long n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

template <class S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first backward touch
  bool requires_grad = false;

  long size() const { return static_cast<long>(value.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return value.size() == 1; }
  S scalar() const { return value[0]; }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), S(0)); }
};

template <class S>
using Var = std::shared_ptr<TensorNode<S>>;

template <class S>
inline Var<S> make_var(Shape shape, std::vector<S> data, bool requires_grad = false) {
  if (numel(shape) != static_cast<long>(data.size()))
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

template <class S>
inline Var<S> zeros_var(Shape shape, bool requires_grad = false) {
  std::vector<S> d(numel(shape), S(0));
  return make_var<S>(std::move(shape), std::move(d), requires_grad);
}

template <class S>
inline Var<S> scalar_var(S v, bool requires_grad = false) {
  return make_var<S>({1}, {v}, requires_grad);
}

template <class S>
inline void check_finite(const char* op, const std::vector<S>& v) {
  for (S x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
}

// Records backward closures; backward() replays them in reverse, visiting each
// node exactly once. Topological order holds because ops append at execution.
template <class S>
class Tape {
 public:
  bool recording = true;
  bool finite_checks = true;

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Truncate back to a previously captured size() mark.
  void truncate(size_t mark) { ops_.resize(mark); }

  void backward(const Var<S>& loss) {
    if (!loss->is_scalar()) throw ShapeError("backward requires a scalar loss");
    loss->ensure_grad();
    loss->grad[0] += S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> ops_;
};

template <class S>
struct NoGradGuard {
  explicit NoGradGuard(Tape<S>& t) : tape(t), prev(t.recording) { tape.recording = false; }
  ~NoGradGuard() { tape.recording = prev; }
  Tape<S>& tape;
  bool prev;
};

namespace detail {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using EMap = Eigen::Map<EMat<S>>;
template <class S>
using ECMap = Eigen::Map<const EMat<S>>;

template <class S>
inline ECMap<S> mat(const TensorNode<S>& t) {
  return ECMap<S>(t.value.data(), t.rows(), t.cols());
}
template <class S>
inline EMap<S> mut(std::vector<S>& v, int r, int c) {
  return EMap<S>(v.data(), r, c);
}

template <class S>
inline bool track(const Tape<S>& tape, std::initializer_list<Var<S>> ins) {
  if (!tape.recording) return false;
  for (const auto& v : ins)
    if (v && v->requires_grad) return true;
  return false;
}

}  // namespace detail

// ---- elementwise ----

template <class S>
inline Var<S> add(Tape<S>& tape, const Var<S>& a, const Var<S>& b) {
  if (a->shape != b->shape) throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_var<S>(a->shape, a->value);
  for (long i = 0; i < out->size(); ++i) out->value[i] += b->value[i];
  if (tape.finite_checks) check_finite("add", out->value);
  if (detail::track(tape, {a, b})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (long i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (long i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i];
      }
    });
  }
  return out;
}

template <class S>
inline Var<S> sub(Tape<S>& tape, const Var<S>& a, const Var<S>& b) {
  if (a->shape != b->shape) throw ShapeError("sub: shape mismatch");
  auto out = make_var<S>(a->shape, a->value);
  for (long i = 0; i < out->size(); ++i) out->value[i] -= b->value[i];
  if (tape.finite_checks) check_finite("sub", out->value);
  if (detail::track(tape, {a, b})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (long i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (long i = 0; i < out->size(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

template <class S>
inline Var<S> mul(Tape<S>& tape, const Var<S>& a, const Var<S>& b) {
  if (a->shape != b->shape) throw ShapeError("mul: shape mismatch");
  auto out = make_var<S>(a->shape, a->value);
  for (long i = 0; i < out->size(); ++i) out->value[i] *= b->value[i];
  if (tape.finite_checks) check_finite("mul", out->value);
  if (detail::track(tape, {a, b})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (long i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * b->value[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (long i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i] * a->value[i];
      }
    });
  }
  return out;
}

template <class S>
inline Var<S> scale(Tape<S>& tape, const Var<S>& a, S c) {
  auto out = make_var<S>(a->shape, a->value);
  for (auto& v : out->value) v *= c;
  if (tape.finite_checks) check_finite("scale", out->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, c] {
      a->ensure_grad();
      for (long i = 0; i < out->size(); ++i) a->grad[i] += c * out->grad[i];
    });
  }
  return out;
}

template <class S>
inline Var<S> add_const(Tape<S>& tape, const Var<S>& a, S c) {
  auto out = make_var<S>(a->shape, a->value);
  for (auto& v : out->value) v += c;
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out] {
      a->ensure_grad();
      for (long i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i];
    });
  }
  return out;
}

template <class S, class F, class DF>
inline Var<S> unary_op(Tape<S>& tape, const Var<S>& a, const char* name, F f, DF df) {
  auto out = make_var<S>(a->shape, a->value);
  for (auto& v : out->value) v = f(v);
  if (tape.finite_checks) check_finite(name, out->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, df] {
      a->ensure_grad();
      for (long i = 0; i < out->size(); ++i)
        a->grad[i] += out->grad[i] * df(a->value[i], out->value[i]);
    });
  }
  return out;
}

template <class S>
inline Var<S> tanh_op(Tape<S>& tape, const Var<S>& a) {
  return unary_op(tape, a, "tanh", [](S x) { return std::tanh(x); },
                  [](S, S y) { return S(1) - y * y; });
}

template <class S>
inline Var<S> sigmoid(Tape<S>& tape, const Var<S>& a) {
  return unary_op(tape, a, "sigmoid",
                  [](S x) { return S(1) / (S(1) + std::exp(-x)); },
                  [](S, S y) { return y * (S(1) - y); });
}

template <class S>
inline Var<S> exp_op(Tape<S>& tape, const Var<S>& a) {
  return unary_op(tape, a, "exp", [](S x) { return std::exp(x); },
                  [](S, S y) { return y; });
}

template <class S>
inline Var<S> log_op(Tape<S>& tape, const Var<S>& a) {
  return unary_op(tape, a, "log", [](S x) { return std::log(x); },
                  [](S x, S) { return S(1) / x; });
}

// Straight-through clamp: gradient passes only inside (lo, hi).
template <class S>
inline Var<S> clamp(Tape<S>& tape, const Var<S>& a, S lo, S hi) {
  auto out = make_var<S>(a->shape, a->value);
  for (auto& v : out->value) v = std::min(hi, std::max(lo, v));
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, lo, hi] {
      a->ensure_grad();
      for (long i = 0; i < out->size(); ++i)
        if (a->value[i] > lo && a->value[i] < hi) a->grad[i] += out->grad[i];
    });
  }
  return out;
}

// Elementwise max across a list; gradient follows the (first) argmax.
template <class S>
inline Var<S> max_elems(Tape<S>& tape, const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw ShapeError("max_elems: empty input list");
  for (const auto& x : xs)
    if (x->shape != xs[0]->shape) throw ShapeError("max_elems: shape mismatch");
  auto out = make_var<S>(xs[0]->shape, xs[0]->value);
  std::vector<int> argmax(out->size(), 0);
  for (size_t k = 1; k < xs.size(); ++k)
    for (long i = 0; i < out->size(); ++i)
      if (xs[k]->value[i] > out->value[i]) {
        out->value[i] = xs[k]->value[i];
        argmax[i] = static_cast<int>(k);
      }
  bool any = false;
  for (const auto& x : xs) any = any || x->requires_grad;
  if (tape.recording && any) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([xs, out, argmax = std::move(argmax)] {
      for (long i = 0; i < out->size(); ++i) {
        const auto& x = xs[argmax[i]];
        if (x->requires_grad) {
          x->ensure_grad();
          x->grad[i] += out->grad[i];
        }
      }
    });
  }
  return out;
}

// ---- reductions ----

template <class S>
inline Var<S> sum(Tape<S>& tape, const Var<S>& a) {
  S s = std::accumulate(a->value.begin(), a->value.end(), S(0));
  auto out = scalar_var<S>(s);
  if (tape.finite_checks) check_finite("sum", out->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out] {
      a->ensure_grad();
      for (long i = 0; i < a->size(); ++i) a->grad[i] += out->grad[0];
    });
  }
  return out;
}

template <class S>
inline Var<S> mean(Tape<S>& tape, const Var<S>& a) {
  return scale(tape, sum(tape, a), S(1) / S(a->size()));
}

template <class S>
inline Var<S> sum_sq(Tape<S>& tape, const Var<S>& a) {
  S s = 0;
  for (S v : a->value) s += v * v;
  auto out = scalar_var<S>(s);
  if (tape.finite_checks) check_finite("sum_sq", out->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out] {
      a->ensure_grad();
      for (long i = 0; i < a->size(); ++i) a->grad[i] += S(2) * a->value[i] * out->grad[0];
    });
  }
  return out;
}

// ---- linear algebra ----

template <class S>
inline Var<S> matmul(Tape<S>& tape, const Var<S>& a, const Var<S>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " x " + shape_str(b->shape));
  int n = a->shape[0], k = a->shape[1], m = b->shape[1];
  auto out = zeros_var<S>({n, m});
  detail::mut(out->value, n, m).noalias() = detail::mat(*a) * detail::mat(*b);
  if (tape.finite_checks) check_finite("matmul", out->value);
  if (detail::track(tape, {a, b})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, b, out, n, k, m] {
      detail::ECMap<S> go(out->grad.data(), n, m);
      if (a->requires_grad) {
        a->ensure_grad();
        detail::EMap<S>(a->grad.data(), n, k).noalias() += go * detail::mat(*b).transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        detail::EMap<S>(b->grad.data(), k, m).noalias() += detail::mat(*a).transpose() * go;
      }
    });
  }
  return out;
}

template <class S>
inline Var<S> transpose(Tape<S>& tape, const Var<S>& a) {
  if (a->shape.size() != 2) throw ShapeError("transpose: rank-2 only");
  int n = a->shape[0], m = a->shape[1];
  auto out = zeros_var<S>({m, n});
  detail::mut(out->value, m, n) = detail::mat(*a).transpose();
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, n, m] {
      a->ensure_grad();
      detail::EMap<S>(a->grad.data(), n, m) += detail::ECMap<S>(out->grad.data(), m, n).transpose();
    });
  }
  return out;
}

// y[t,:] = x[t,:] + v  (bias over rows)
template <class S>
inline Var<S> add_rowvec(Tape<S>& tape, const Var<S>& x, const Var<S>& v) {
  if (x->shape.size() != 2 || v->size() != x->shape[1])
    throw ShapeError("add_rowvec: shape mismatch");
  int n = x->shape[0], m = x->shape[1];
  auto out = make_var<S>(x->shape, x->value);
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < m; ++c) out->value[t * m + c] += v->value[c];
  if (tape.finite_checks) check_finite("add_rowvec", out->value);
  if (detail::track(tape, {x, v})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([x, v, out, n, m] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (long i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (int t = 0; t < n; ++t)
          for (int c = 0; c < m; ++c) v->grad[c] += out->grad[t * m + c];
      }
    });
  }
  return out;
}

// y[t,:] = x[t,:] .* v
template <class S>
inline Var<S> mul_rowvec(Tape<S>& tape, const Var<S>& x, const Var<S>& v) {
  if (x->shape.size() != 2 || v->size() != x->shape[1])
    throw ShapeError("mul_rowvec: shape mismatch");
  int n = x->shape[0], m = x->shape[1];
  auto out = make_var<S>(x->shape, x->value);
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < m; ++c) out->value[t * m + c] *= v->value[c];
  if (tape.finite_checks) check_finite("mul_rowvec", out->value);
  if (detail::track(tape, {x, v})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([x, v, out, n, m] {
      if (x->requires_grad) {
        x->ensure_grad();
        for (int t = 0; t < n; ++t)
          for (int c = 0; c < m; ++c) x->grad[t * m + c] += out->grad[t * m + c] * v->value[c];
      }
      if (v->requires_grad) {
        v->ensure_grad();
        for (int t = 0; t < n; ++t)
          for (int c = 0; c < m; ++c) v->grad[c] += out->grad[t * m + c] * x->value[t * m + c];
      }
    });
  }
  return out;
}

// ---- shape ops ----

template <class S>
inline Var<S> reshape(Tape<S>& tape, const Var<S>& a, Shape shape) {
  if (numel(shape) != a->size())
    throw ShapeError("reshape: numel mismatch " + shape_str(a->shape) + " -> " + shape_str(shape));
  auto out = make_var<S>(std::move(shape), a->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out] {
      a->ensure_grad();
      for (long i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
    });
  }
  return out;
}

template <class S>
inline Var<S> slice_cols(Tape<S>& tape, const Var<S>& a, int c0, int c1) {
  if (a->shape.size() != 2 || c0 < 0 || c1 > a->shape[1] || c0 >= c1)
    throw ShapeError("slice_cols: bad range");
  int n = a->shape[0], m = a->shape[1], w = c1 - c0;
  auto out = zeros_var<S>({n, w});
  for (int t = 0; t < n; ++t)
    std::memcpy(&out->value[t * w], &a->value[t * m + c0], sizeof(S) * w);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, n, m, w, c0] {
      a->ensure_grad();
      for (int t = 0; t < n; ++t)
        for (int c = 0; c < w; ++c) a->grad[t * m + c0 + c] += out->grad[t * w + c];
    });
  }
  return out;
}

template <class S>
inline Var<S> concat_cols(Tape<S>& tape, const Var<S>& a, const Var<S>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[0] != b->shape[0])
    throw ShapeError("concat_cols: row mismatch");
  int n = a->shape[0], ma = a->shape[1], mb = b->shape[1];
  auto out = zeros_var<S>({n, ma + mb});
  for (int t = 0; t < n; ++t) {
    std::memcpy(&out->value[t * (ma + mb)], &a->value[t * ma], sizeof(S) * ma);
    std::memcpy(&out->value[t * (ma + mb) + ma], &b->value[t * mb], sizeof(S) * mb);
  }
  if (detail::track(tape, {a, b})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, b, out, n, ma, mb] {
      if (a->requires_grad) {
        a->ensure_grad();
        for (int t = 0; t < n; ++t)
          for (int c = 0; c < ma; ++c) a->grad[t * ma + c] += out->grad[t * (ma + mb) + c];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int t = 0; t < n; ++t)
          for (int c = 0; c < mb; ++c) b->grad[t * mb + c] += out->grad[t * (ma + mb) + ma + c];
      }
    });
  }
  return out;
}

template <class S>
inline Var<S> slice_rows(Tape<S>& tape, const Var<S>& a, int r0, int r1) {
  if (a->shape.size() != 2 || r0 < 0 || r1 > a->shape[0] || r0 >= r1)
    throw ShapeError("slice_rows: bad range");
  int m = a->shape[1], h = r1 - r0;
  auto out = zeros_var<S>({h, m});
  std::memcpy(out->value.data(), &a->value[r0 * m], sizeof(S) * h * m);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, r0, m, h] {
      a->ensure_grad();
      for (int t = 0; t < h; ++t)
        for (int c = 0; c < m; ++c) a->grad[(r0 + t) * m + c] += out->grad[t * m + c];
    });
  }
  return out;
}

template <class S>
inline Var<S> concat_rows(Tape<S>& tape, const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw ShapeError("concat_rows: empty list");
  int m = xs[0]->cols(), n = 0;
  for (const auto& x : xs) {
    if (x->shape.size() != 2 || x->shape[1] != m) throw ShapeError("concat_rows: col mismatch");
    n += x->shape[0];
  }
  auto out = zeros_var<S>({n, m});
  long off = 0;
  for (const auto& x : xs) {
    std::memcpy(&out->value[off], x->value.data(), sizeof(S) * x->size());
    off += x->size();
  }
  bool any = false;
  for (const auto& x : xs) any = any || x->requires_grad;
  if (tape.recording && any) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([xs, out] {
      long off = 0;
      for (const auto& x : xs) {
        if (x->requires_grad) {
          x->ensure_grad();
          for (long i = 0; i < x->size(); ++i) x->grad[i] += out->grad[off + i];
        }
        off += x->size();
      }
    });
  }
  return out;
}

// Average adjacent row pairs: [T, C] -> [T/2, C].
template <class S>
inline Var<S> pair_average_rows(Tape<S>& tape, const Var<S>& a) {
  if (a->shape.size() != 2 || a->shape[0] % 2 != 0)
    throw ShapeError("pair_average_rows: even row count required");
  int n = a->shape[0] / 2, m = a->shape[1];
  auto out = zeros_var<S>({n, m});
  for (int t = 0; t < n; ++t)
    for (int c = 0; c < m; ++c)
      out->value[t * m + c] = (a->value[2 * t * m + c] + a->value[(2 * t + 1) * m + c]) / S(2);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, n, m] {
      a->ensure_grad();
      for (int t = 0; t < n; ++t)
        for (int c = 0; c < m; ++c) {
          S g = out->grad[t * m + c] / S(2);
          a->grad[2 * t * m + c] += g;
          a->grad[(2 * t + 1) * m + c] += g;
        }
    });
  }
  return out;
}

// ---- softmax over a flat vector ----

template <class S>
inline Var<S> softmax(Tape<S>& tape, const Var<S>& a) {
  auto out = make_var<S>(a->shape, a->value);
  S mx = *std::max_element(out->value.begin(), out->value.end());
  S z = 0;
  for (auto& v : out->value) {
    v = std::exp(v - mx);
    z += v;
  }
  for (auto& v : out->value) v /= z;
  if (tape.finite_checks) check_finite("softmax", out->value);
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out] {
      a->ensure_grad();
      S dot = 0;
      for (long i = 0; i < out->size(); ++i) dot += out->grad[i] * out->value[i];
      for (long i = 0; i < out->size(); ++i)
        a->grad[i] += out->value[i] * (out->grad[i] - dot);
    });
  }
  return out;
}

// ---- embedding lookup ----

template <class S>
inline Var<S> gather_rows(Tape<S>& tape, const Var<S>& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) throw ShapeError("gather_rows: table must be rank 2");
  int v = table->shape[0], d = table->shape[1];
  for (int id : ids)
    if (id < 0 || id >= v)
      throw ShapeError("gather_rows: id " + std::to_string(id) + " out of vocab " + std::to_string(v));
  auto out = zeros_var<S>({static_cast<int>(ids.size()), d});
  for (size_t t = 0; t < ids.size(); ++t)
    std::memcpy(&out->value[t * d], &table->value[ids[t] * static_cast<long>(d)], sizeof(S) * d);
  if (detail::track(tape, {table})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([table, out, ids, d] {
      table->ensure_grad();
      for (size_t t = 0; t < ids.size(); ++t)
        for (int c = 0; c < d; ++c)
          table->grad[ids[t] * static_cast<long>(d) + c] += out->grad[t * d + c];
    });
  }
  return out;
}

// ---- conv1d, optional dilation ----
// input [T, C_in], kernel [w, C_in, C_out] (flat as (d*C_in+i)*C_out+o), bias [C_out].
// Same padding requires odd width; Valid mode accepts any width and yields
// T - (w-1)*dilation output rows.

enum class ConvPad { Same, Valid };

template <class S>
inline Var<S> conv1d(Tape<S>& tape, const Var<S>& x, const Var<S>& kernel, const Var<S>& bias,
                     int dilation = 1, ConvPad pad = ConvPad::Same) {
  if (x->shape.size() != 2 || kernel->shape.size() != 3)
    throw ShapeError("conv1d: input rank 2, kernel rank 3 required");
  int T = x->shape[0], cin = x->shape[1];
  int w = kernel->shape[0], kcin = kernel->shape[1], cout = kernel->shape[2];
  if (kcin != cin) throw ShapeError("conv1d: channel mismatch");
  if (pad == ConvPad::Same && w % 2 == 0)
    throw ShapeError("conv1d: even kernel width with same padding");
  if (bias->size() != cout) throw ShapeError("conv1d: bias size mismatch");
  int offset = pad == ConvPad::Same ? -(w / 2) : 0;
  int tout = pad == ConvPad::Same ? T : T - (w - 1) * dilation;
  if (tout <= 0) throw ShapeError("conv1d: input shorter than kernel span");

  // im2col: A [tout, w*cin]; kernel flat is already [w*cin, cout].
  std::vector<S> a(static_cast<long>(tout) * w * cin, S(0));
  for (int t = 0; t < tout; ++t)
    for (int d = 0; d < w; ++d) {
      int src = t + (d + offset) * dilation;
      if (src < 0 || src >= T) continue;
      std::memcpy(&a[(static_cast<long>(t) * w + d) * cin], &x->value[static_cast<long>(src) * cin],
                  sizeof(S) * cin);
    }
  auto out = zeros_var<S>({tout, cout});
  {
    detail::ECMap<S> A(a.data(), tout, w * cin);
    detail::ECMap<S> K(kernel->value.data(), w * cin, cout);
    detail::mut(out->value, tout, cout).noalias() = A * K;
  }
  for (int t = 0; t < tout; ++t)
    for (int o = 0; o < cout; ++o) out->value[static_cast<long>(t) * cout + o] += bias->value[o];
  if (tape.finite_checks) check_finite("conv1d", out->value);

  if (detail::track(tape, {x, kernel, bias})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([x, kernel, bias, out, a = std::move(a), T, tout, cin, w, cout, offset, dilation] {
      detail::ECMap<S> go(out->grad.data(), tout, cout);
      if (kernel->requires_grad) {
        kernel->ensure_grad();
        detail::ECMap<S> A(a.data(), tout, w * cin);
        detail::EMap<S>(kernel->grad.data(), w * cin, cout).noalias() += A.transpose() * go;
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (int t = 0; t < tout; ++t)
          for (int o = 0; o < cout; ++o) bias->grad[o] += out->grad[static_cast<long>(t) * cout + o];
      }
      if (x->requires_grad) {
        x->ensure_grad();
        std::vector<S> da(static_cast<long>(tout) * w * cin);
        detail::ECMap<S> K(kernel->value.data(), w * cin, cout);
        detail::EMap<S>(da.data(), tout, w * cin).noalias() = go * K.transpose();
        for (int t = 0; t < tout; ++t)
          for (int d = 0; d < w; ++d) {
            int src = t + (d + offset) * dilation;
            if (src < 0 || src >= T) continue;
            for (int i = 0; i < cin; ++i)
              x->grad[static_cast<long>(src) * cin + i] += da[(static_cast<long>(t) * w + d) * cin + i];
          }
      }
    });
  }
  return out;
}

// ---- log|det W| with gradient W^{-T} ----

template <class S>
inline Var<S> logdet(Tape<S>& tape, const Var<S>& w, S singular_eps = S(1e-12)) {
  if (w->shape.size() != 2 || w->shape[0] != w->shape[1])
    throw ShapeError("logdet: square matrix required");
  int c = w->shape[0];
  Eigen::PartialPivLU<detail::EMat<S>> lu(detail::mat(*w));
  S det = lu.determinant();
  if (std::abs(det) < singular_eps) throw NumericError("logdet: singular matrix");
  auto out = scalar_var<S>(std::log(std::abs(det)));
  if (detail::track(tape, {w})) {
    out->requires_grad = true;
    out->ensure_grad();
    detail::EMat<S> winv_t = lu.inverse().transpose();
    tape.record([w, out, winv_t = std::move(winv_t), c] {
      w->ensure_grad();
      detail::EMap<S>(w->grad.data(), c, c) += out->grad[0] * winv_t;
    });
  }
  return out;
}

// ---- dropout (seeded by caller) ----

template <class S>
inline Var<S> dropout(Tape<S>& tape, const Var<S>& a, double rate, bool training,
                      std::function<double()> uniform01) {
  if (!training || rate <= 0.0) return a;
  auto out = make_var<S>(a->shape, a->value);
  std::vector<S> mask(a->size());
  S keep = S(1.0 - rate);
  for (long i = 0; i < a->size(); ++i) {
    mask[i] = uniform01() < rate ? S(0) : S(1) / keep;
    out->value[i] *= mask[i];
  }
  if (detail::track(tape, {a})) {
    out->requires_grad = true;
    out->ensure_grad();
    tape.record([a, out, mask = std::move(mask)] {
      a->ensure_grad();
      for (long i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * mask[i];
    });
  }
  return out;
}

}  // namespace waveflow
