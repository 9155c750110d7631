#pragma once

// Dense row-major tensors with reverse-mode autodiff.
//
// A Tensor<T> is a shared handle to a value node. Ops compute eagerly and,
// when a Tape is active and an input is tracked, push a backward closure.
// One training step builds and consumes one tape; parameters live outside
// any tape as leaves, so their gradients survive tape teardown.
//
// Layout is always contiguous row-major and permute materializes its result,
// so a reshape after a permute sees the permuted memory order.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vip/kernels.hpp"
#include "vip/rng.hpp"

namespace vip {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ')';
  return os.str();
}

inline i64 numel_of(const Shape& s) {
  i64 n = 1;
  for (i64 e : s) n *= e;
  return n;
}

inline std::vector<i64> strides_of(const Shape& s) {
  std::vector<i64> str(s.size());
  i64 acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    str[i] = acc;
    acc *= s[i];
  }
  return str;
}

inline void check_extents(const Shape& s, const char* who) {
  for (i64 e : s) {
    if (e <= 0) throw Error(std::string(who) + ": extents must be positive, got " + shape_str(s));
  }
}

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 = leaf / untracked

  i64 numel() const { return static_cast<i64>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> alloc_node(Shape s) {
  check_extents(s, "tensor");
  auto n = std::make_shared<Node<T>>();
  n->value.resize(static_cast<std::size_t>(numel_of(s)));
  n->shape = std::move(s);
  return n;
}

}  // namespace detail

template <typename T>
class Tape {
 public:
  struct Record {
    std::vector<detail::NodePtr<T>> inputs;
    detail::NodePtr<T> output;
    std::function<void()> backward;
  };

  Tape() : id_(next_id().fetch_add(1)) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII activation; ops record onto the innermost active tape.
  class Scope {
   public:
    explicit Scope(Tape& t) : prev_(active_ref()) { active_ref() = &t; }
    ~Scope() { active_ref() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active() { return active_ref(); }

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return records_.size(); }

  void push(Record r) { records_.push_back(std::move(r)); }

  // One reverse sweep: zero intermediate gradients, seed the loss, run every
  // recorded closure once in reverse order. Leaf gradients accumulate across
  // calls until the caller zeroes them.
  void run_backward(const detail::NodePtr<T>& loss) {
    for (auto& r : records_) {
      r.output->grad.assign(r.output->value.size(), T(0));
    }
    loss->ensure_grad();
    loss->grad[0] += T(1);
    for (std::size_t i = records_.size(); i-- > 0;) {
      records_[i].backward();
    }
  }

  void clear() { records_.clear(); }

 private:
  static Tape*& active_ref() {
    static thread_local Tape* p = nullptr;
    return p;
  }
  static std::atomic<std::uint64_t>& next_id() {
    static std::atomic<std::uint64_t> c{1};
    return c;
  }

  std::uint64_t id_;
  std::vector<Record> records_;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr<T> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape s) { return Tensor(detail::alloc_node<T>(std::move(s))); }

  static Tensor full(Shape s, T v) {
    auto n = detail::alloc_node<T>(std::move(s));
    std::fill(n->value.begin(), n->value.end(), v);
    return Tensor(std::move(n));
  }

  static Tensor ones(Shape s) { return full(std::move(s), T(1)); }

  static Tensor scalar(T v) {
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = {};
    n->value = {v};
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape s, std::vector<T> data) {
    check_extents(s, "tensor");
    if (numel_of(s) != static_cast<i64>(data.size())) {
      throw Error("from_data: " + shape_str(s) + " wants " + std::to_string(numel_of(s)) +
                  " elements, got " + std::to_string(data.size()));
    }
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = std::move(s);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node_ref().shape; }
  i64 rank() const { return static_cast<i64>(node_ref().shape.size()); }
  i64 numel() const { return node_ref().numel(); }

  std::span<const T> data() const { return node_ref().value; }
  // In-place access for the optimizer and initializers; tensors are otherwise
  // treated as immutable after construction.
  std::span<T> raw_data() { return node_ref().value; }

  T item() const {
    if (numel() != 1) throw Error("item: tensor has shape " + shape_str(shape()));
    return node_ref().value[0];
  }

  T at(std::initializer_list<i64> idx) const {
    const auto& n = node_ref();
    if (static_cast<i64>(idx.size()) != static_cast<i64>(n.shape.size())) {
      throw Error("at: index rank mismatch");
    }
    auto str = strides_of(n.shape);
    i64 off = 0;
    std::size_t d = 0;
    for (i64 i : idx) off += i * str[d++];
    return n.value[static_cast<std::size_t>(off)];
  }

  bool requires_grad() const { return node_ref().requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_ref().requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !node_ref().grad.empty(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw Error("grad: no gradient recorded for this tensor");
    return node_ref().grad;
  }
  std::span<T> raw_grad() { return node_ref().grad; }

  Tensor grad_tensor() const { return from_data(shape(), {grad().begin(), grad().end()}); }

  void zero_grad() { node_ref().grad.assign(node_ref().value.size(), T(0)); }
  void drop_grad() { node_ref().grad.clear(); }

  detail::NodePtr<T> node() const { return n_; }

 private:
  detail::Node<T>& node_ref() const {
    if (!n_) throw Error("use of empty tensor");
    return *n_;
  }
  detail::NodePtr<T> n_;
};

template <typename T>
Tensor<T> uniform(Shape s, rng::Engine& g, T lo = T(-1), T hi = T(1)) {
  auto t = Tensor<T>::zeros(std::move(s));
  for (auto& v : t.raw_data()) v = lo + (hi - lo) * static_cast<T>(rng::uniform01(g));
  return t;
}

template <typename T>
Tensor<T> randn(Shape s, rng::Engine& g, T stddev = T(1)) {
  auto t = Tensor<T>::zeros(std::move(s));
  for (auto& v : t.raw_data()) v = stddev * static_cast<T>(rng::normal01(g));
  return t;
}

// ---------------------------------------------------------------------------
// Recording helpers
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void record(std::vector<NodePtr<T>> inputs, const NodePtr<T>& out, std::function<void()> bw) {
  auto* tape = Tape<T>::active();
  if (!tape) return;
  bool any = false;
  for (const auto& in : inputs) {
    if (in->requires_grad) {
      any = true;
      break;
    }
  }
  if (!any) return;
  out->requires_grad = true;
  out->tape_id = tape->id();
  tape->push({std::move(inputs), out, std::move(bw)});
}

// Per-axis offset strides of `s` when iterated in the coordinate system of
// `os` (right-aligned, stride 0 on broadcast axes).
inline std::vector<i64> bcast_strides(const Shape& os, const Shape& s) {
  std::vector<i64> str(os.size(), 0);
  auto nat = strides_of(s);
  const std::size_t off = os.size() - s.size();
  for (std::size_t d = 0; d < s.size(); ++d) {
    str[off + d] = (s[d] == 1 && os[off + d] != 1) ? 0 : nat[d];
  }
  return str;
}

// Odometer walk over `os` tracking one offset; fn(i, off).
template <typename T, typename F>
void walk1(const Shape& os, const std::vector<i64>& sa, F&& fn) {
  const i64 total = numel_of(os);
  const std::size_t r = os.size();
  if (r == 0) {
    fn(0, 0);
    return;
  }
  std::vector<i64> idx(r, 0);
  i64 aoff = 0;
  for (i64 i = 0; i < total; ++i) {
    fn(i, aoff);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      aoff += sa[d];
      if (idx[d] < os[d]) break;
      aoff -= sa[d] * os[d];
      idx[d] = 0;
    }
  }
}

// Same, tracking two offsets.
template <typename T, typename F>
void walk2(const Shape& os, const std::vector<i64>& sa, const std::vector<i64>& sb, F&& fn) {
  const i64 total = numel_of(os);
  const std::size_t r = os.size();
  if (r == 0) {
    fn(0, 0, 0);
    return;
  }
  std::vector<i64> idx(r, 0);
  i64 aoff = 0, boff = 0;
  for (i64 i = 0; i < total; ++i) {
    fn(i, aoff, boff);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      aoff += sa[d];
      boff += sb[d];
      if (idx[d] < os[d]) break;
      aoff -= sa[d] * os[d];
      boff -= sb[d] * os[d];
      idx[d] = 0;
    }
  }
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* who) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t d = 0; d < r; ++d) {
    const i64 ea = d < r - a.size() ? 1 : a[d - (r - a.size())];
    const i64 eb = d < r - b.size() ? 1 : b[d - (r - b.size())];
    if (ea == eb || ea == 1 || eb == 1) {
      out[d] = std::max(ea, eb);
    } else {
      throw Error(std::string(who) + ": non-broadcastable shapes " + shape_str(a) + " and " +
                  shape_str(b));
    }
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise suite
// ---------------------------------------------------------------------------

namespace detail {

// Shared skeleton for broadcasting binary ops. FwdF: T(T,T); bwd closures
// accumulate da = GA(g, a, b) and db = GB(g, a, b) reduced to each shape.
template <typename T, typename FwdF, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* who, FwdF fwd, GradA ga,
                    GradB gb) {
  auto an = a.node(), bn = b.node();
  const Shape os = broadcast_shape(an->shape, bn->shape, who);
  auto on = alloc_node<T>(os);
  const T* pa = an->value.data();
  const T* pb = bn->value.data();
  T* po = on->value.data();
  if (an->shape == bn->shape) {
    const i64 n = on->numel();
    for (i64 i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    const auto sa = bcast_strides(os, an->shape);
    const auto sb = bcast_strides(os, bn->shape);
    walk2<T>(os, sa, sb, [&](i64 i, i64 ao, i64 bo) { po[i] = fwd(pa[ao], pb[bo]); });
  }
  record<T>({an, bn}, on, [an, bn, on, os, ga, gb]() {
    const T* g = on->grad.data();
    const T* pa = an->value.data();
    const T* pb = bn->value.data();
    const auto sa = bcast_strides(os, an->shape);
    const auto sb = bcast_strides(os, bn->shape);
    if (an->requires_grad) {
      an->ensure_grad();
      T* da = an->grad.data();
      walk2<T>(os, sa, sb, [&](i64 i, i64 ao, i64 bo) { da[ao] += ga(g[i], pa[ao], pb[bo]); });
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      T* db = bn->grad.data();
      walk2<T>(os, sa, sb, [&](i64 i, i64 ao, i64 bo) { db[bo] += gb(g[i], pa[ao], pb[bo]); });
    }
  });
  return Tensor<T>(on);
}

// Unary skeleton; DerivF: T(x, y) evaluated at forward values.
template <typename T, typename FwdF, typename DerivF>
Tensor<T> unary_op(const Tensor<T>& x, FwdF fwd, DerivF dfn) {
  auto xn = x.node();
  auto on = alloc_node<T>(xn->shape);
  const i64 n = on->numel();
  const T* px = xn->value.data();
  T* po = on->value.data();
  for (i64 i = 0; i < n; ++i) po[i] = fwd(px[i]);
  record<T>({xn}, on, [xn, on, dfn]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const i64 n = on->numel();
    const T* g = on->grad.data();
    const T* px = xn->value.data();
    const T* py = on->value.data();
    T* dx = xn->grad.data();
    for (i64 i = 0; i < n; ++i) dx[i] += g[i] * dfn(px[i], py[i]);
  });
  return Tensor<T>(on);
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "add", [](T x, T y) { return x + y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T g, T, T) { return g; },
      [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
      [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::log(v); }, [](T xv, T) { return T(1) / xv; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(1) / (T(2) * y); });
}

template <typename T>
Tensor<T> reciprocal(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

template <typename T>
Tensor<T> erf(const Tensor<T>& x) {
  constexpr T two_over_sqrt_pi = T(1.1283791670955126L);
  return detail::unary_op(
      x, [](T v) { return std::erf(v); },
      [two_over_sqrt_pi](T xv, T) { return two_over_sqrt_pi * std::exp(-xv * xv); });
}

// Exact GELU: x * Phi(x), with Phi the standard normal CDF via erf.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T inv_sqrt2 = T(0.7071067811865475L);
  constexpr T inv_sqrt_2pi = T(0.3989422804014327L);
  return detail::unary_op(
      x,
      [inv_sqrt2](T v) {
        return v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      },
      [inv_sqrt2, inv_sqrt_2pi](T xv, T) {
        const T phi_cdf = T(0.5) * (T(1) + std::erf(xv * inv_sqrt2));
        const T phi_pdf = inv_sqrt_2pi * std::exp(T(-0.5) * xv * xv);
        return phi_cdf + xv * phi_pdf;
      });
}

// ---------------------------------------------------------------------------
// Data movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  check_extents(new_shape, "reshape");
  auto xn = x.node();
  if (numel_of(new_shape) != xn->numel()) {
    throw Error("reshape: element count mismatch: " + shape_str(xn->shape) + " -> " +
                shape_str(new_shape));
  }
  auto on = std::make_shared<detail::Node<T>>();
  on->shape = std::move(new_shape);
  on->value = xn->value;  // same flat data, new shape
  detail::record<T>({xn}, on, [xn, on]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const i64 n = on->numel();
    const T* g = on->grad.data();
    T* dx = xn->grad.data();
    for (i64 i = 0; i < n; ++i) dx[i] += g[i];
  });
  return Tensor<T>(on);
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& axes) {
  auto xn = x.node();
  const std::size_t r = xn->shape.size();
  std::vector<bool> seen(r, false);
  bool valid = axes.size() == r;
  if (valid) {
    for (int a : axes) {
      if (a < 0 || a >= static_cast<int>(r) || seen[a]) {
        valid = false;
        break;
      }
      seen[a] = true;
    }
  }
  if (!valid) {
    std::ostringstream os;
    os << "permute: axes (";
    for (std::size_t i = 0; i < axes.size(); ++i) os << (i ? "," : "") << axes[i];
    os << ") is not a permutation of 0.." << (r ? r - 1 : 0);
    throw Error(os.str());
  }
  Shape oshape(r);
  for (std::size_t d = 0; d < r; ++d) oshape[d] = xn->shape[axes[d]];
  auto on = detail::alloc_node<T>(oshape);
  const auto xstr = strides_of(xn->shape);
  std::vector<i64> str(r);
  for (std::size_t d = 0; d < r; ++d) str[d] = xstr[axes[d]];
  const T* px = xn->value.data();
  T* po = on->value.data();
  detail::walk1<T>(oshape, str, [&](i64 i, i64 xo) { po[i] = px[xo]; });
  detail::record<T>({xn}, on, [xn, on, oshape, str]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    T* dx = xn->grad.data();
    detail::walk1<T>(oshape, str, [&](i64 i, i64 xo) { dx[xo] += g[i]; });
  });
  return Tensor<T>(on);
}

// Select one index along an axis, dropping that axis.
template <typename T>
Tensor<T> slice_axis(const Tensor<T>& x, int axis, i64 index) {
  auto xn = x.node();
  const i64 r = static_cast<i64>(xn->shape.size());
  if (axis < 0 || axis >= r) throw Error("slice_axis: axis out of range");
  const i64 extent = xn->shape[axis];
  if (index < 0 || index >= extent) throw Error("slice_axis: index out of range");
  Shape oshape;
  for (i64 d = 0; d < r; ++d) {
    if (d != axis) oshape.push_back(xn->shape[d]);
  }
  if (oshape.empty()) oshape = {};
  i64 inner = 1;
  for (i64 d = axis + 1; d < r; ++d) inner *= xn->shape[d];
  i64 outer = 1;
  for (i64 d = 0; d < axis; ++d) outer *= xn->shape[d];
  auto on = std::make_shared<detail::Node<T>>();
  on->shape = std::move(oshape);
  on->value.resize(static_cast<std::size_t>(outer * inner));
  const T* px = xn->value.data();
  T* po = on->value.data();
  for (i64 o = 0; o < outer; ++o) {
    std::copy_n(px + (o * extent + index) * inner, inner, po + o * inner);
  }
  detail::record<T>({xn}, on, [xn, on, outer, inner, extent, index]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    T* dx = xn->grad.data();
    for (i64 o = 0; o < outer; ++o) {
      T* dst = dx + (o * extent + index) * inner;
      const T* src = g + o * inner;
      for (i64 i = 0; i < inner; ++i) dst[i] += src[i];
    }
  });
  return Tensor<T>(on);
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

// a: [..., m, k] x b: [k, n] -> [..., m, n]. Leading axes of a are batched.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto an = a.node(), bn = b.node();
  if (an->shape.size() < 2 || bn->shape.size() != 2) {
    throw Error("matmul: need a [..., m, k] and b [k, n], got " + shape_str(an->shape) + " x " +
                shape_str(bn->shape));
  }
  const i64 k = an->shape.back();
  const i64 n = bn->shape[1];
  if (k != bn->shape[0]) {
    throw Error("matmul: inner extents differ: " + shape_str(an->shape) + " x " +
                shape_str(bn->shape));
  }
  const i64 rows = an->numel() / k;
  Shape oshape = an->shape;
  oshape.back() = n;
  auto on = detail::alloc_node<T>(oshape);
  kernels::gemm(an->value.data(), bn->value.data(), on->value.data(), rows, k, n);
  detail::record<T>({an, bn}, on, [an, bn, on, rows, k, n]() {
    const T* g = on->grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      std::vector<T> bt(static_cast<std::size_t>(n * k));
      kernels::transpose(bn->value.data(), bt.data(), k, n);
      kernels::gemm(g, bt.data(), an->grad.data(), rows, n, k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      std::vector<T> at(static_cast<std::size_t>(k * rows));
      kernels::transpose(an->value.data(), at.data(), rows, k);
      kernels::gemm(at.data(), g, bn->grad.data(), k, rows, n);
    }
  });
  return Tensor<T>(on);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

inline void check_axes(const Shape& shape, const std::vector<int>& axes, const char* who) {
  std::vector<bool> seen(shape.size(), false);
  for (int a : axes) {
    if (a < 0 || a >= static_cast<int>(shape.size())) {
      throw Error(std::string(who) + ": axis " + std::to_string(a) + " out of range for rank " +
                  std::to_string(shape.size()));
    }
    if (seen[a]) throw Error(std::string(who) + ": duplicate axis " + std::to_string(a));
    seen[a] = true;
  }
}

template <typename T>
Tensor<T> reduce_op(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims, bool take_mean,
                    const char* who) {
  auto xn = x.node();
  check_axes(xn->shape, axes, who);
  const std::size_t r = xn->shape.size();
  std::vector<bool> reduced(r, false);
  for (int a : axes) reduced[a] = true;
  Shape keep = xn->shape;
  i64 count = 1;
  for (std::size_t d = 0; d < r; ++d) {
    if (reduced[d]) {
      count *= keep[d];
      keep[d] = 1;
    }
  }
  auto on = alloc_node<T>(keep);
  const auto proj = bcast_strides(xn->shape, keep);
  const T* px = xn->value.data();
  T* po = on->value.data();
  walk1<T>(xn->shape, proj, [&](i64 i, i64 oo) { po[oo] += px[i]; });
  if (take_mean) {
    for (auto& v : on->value) v /= static_cast<T>(count);
  }
  const T gscale = take_mean ? T(1) / static_cast<T>(count) : T(1);
  const Shape xshape = xn->shape;
  record<T>({xn}, on, [xn, on, xshape, proj, gscale]() {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const T* g = on->grad.data();
    T* dx = xn->grad.data();
    walk1<T>(xshape, proj, [&](i64 i, i64 oo) { dx[i] += gscale * g[oo]; });
  });
  if (!keepdims) {
    Shape squeezed;
    for (std::size_t d = 0; d < r; ++d) {
      if (!reduced[d]) squeezed.push_back(keep[d]);
    }
    on->shape = squeezed;  // same flat data; shape bookkeeping only
  }
  return Tensor<T>(on);
}

}  // namespace detail

template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims = false) {
  return detail::reduce_op(x, axes, keepdims, false, "sum");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return detail::reduce_op(x, axes, false, false, "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims = false) {
  return detail::reduce_op(x, axes, keepdims, true, "mean");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return detail::reduce_op(x, axes, false, true, "mean");
}

// ---------------------------------------------------------------------------
// Backward entry point
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  auto* tape = Tape<T>::active();
  if (!tape) throw Error("backward: no active tape");
  auto ln = loss.node();
  if (ln->numel() != 1) {
    throw Error("backward: loss must be scalar, got shape " + shape_str(ln->shape));
  }
  if (!ln->requires_grad || ln->tape_id != tape->id()) {
    throw Error("backward: loss is detached from the active tape");
  }
  tape->run_backward(ln);
}

}  // namespace vip
