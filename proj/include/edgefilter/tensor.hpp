#pragma once

// Dense float32 tensor with reverse-mode automatic differentiation.
//
// Tensors are cheap handles onto shared storage. Every differentiable op
// records a node holding its inputs and a backward closure; backward()
// replays the recorded graph once, in reverse topological order, and then
// marks it consumed. detach() produces a view that shares values but has no
// edge back into the graph, so nothing upstream of it ever receives
// gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "edgefilter/errors.hpp"

namespace edgefilter {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Tensor;

namespace detail {

struct Node;
inline Tensor wrap(std::shared_ptr<struct TensorImpl> impl);

struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<float>> data;
  std::vector<float> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // set when produced by a recorded op

  std::int64_t numel() const { return shape_numel(shape); }

  float* grad_buf() {
    if (grad.empty()) grad.assign(static_cast<std::size_t>(numel()), 0.0f);
    return grad.data();
  }
};

// One recorded operation. `out` is a raw backref: the output impl owns the
// node, and traversal keeps every visited impl alive through shared_ptrs.
struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl&)> backward;
  TensorImpl* out = nullptr;
  bool consumed = false;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->shape = std::move(shape);
    impl_->data = std::make_shared<std::vector<float>>(
        static_cast<std::size_t>(impl_->numel()), 0.0f);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != impl_->numel())
      throw ShapeError("tensor data size " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(impl_->shape));
    impl_->data = std::make_shared<std::vector<float>>(std::move(values));
    impl_->requires_grad = requires_grad;
  }

  static Tensor scalar(float v) {
    return Tensor({1}, std::vector<float>{v});
  }

  static Tensor full(Shape shape, float v) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return impl_->numel(); }

  std::vector<float>& data() { return *impl_->data; }
  const std::vector<float>& data() const { return *impl_->data; }
  float item() const {
    if (numel() != 1)
      throw ContractError("item() requires a 1-element tensor, got " +
                          shape_str(shape()));
    return (*impl_->data)[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<float>& grad() const {
    if (impl_->grad.empty())
      throw ContractError("tensor has no gradient; run backward() first");
    return impl_->grad;
  }
  std::vector<float>& grad_buffer() {
    impl_->grad_buf();
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.clear(); }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  friend Tensor detail::wrap(std::shared_ptr<detail::TensorImpl>);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

inline Tensor wrap(std::shared_ptr<TensorImpl> impl) {
  return Tensor(std::move(impl));
}

inline Tensor make_output(Shape shape,
                          std::vector<std::shared_ptr<TensorImpl>> inputs,
                          std::function<void(TensorImpl&)> backward) {
  bool track = false;
  for (const auto& in : inputs)
    if (in->requires_grad) track = true;
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(impl->numel()), 0.0f);
  impl->requires_grad = track;
  if (track) {
    impl->node = std::make_shared<Node>();
    impl->node->inputs = std::move(inputs);
    impl->node->backward = std::move(backward);
    impl->node->out = impl.get();
  }
  return wrap(impl);
}

inline void accumulate(TensorImpl& t, const float* g) {
  if (!t.requires_grad) return;
  float* dst = t.grad_buf();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

}  // namespace detail

// --- detach -----------------------------------------------------------------

// Shares the value buffer, drops requires_grad, and records no graph edge.
inline Tensor detach(const Tensor& x) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = x.shape();
  impl->data = x.impl()->data;
  impl->requires_grad = false;
  return detail::wrap(std::move(impl));
}

// --- backward ---------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  auto root = loss.impl();
  if (root->requires_grad && !root->node) {
    root->grad_buf()[0] += 1.0f;
    return;
  }
  if (!root->node) return;
  if (root->node->consumed)
    throw ContractError(
        "backward was already run on this graph; rebuild the forward pass "
        "before differentiating again");

  // Iterative post-order DFS over recorded nodes; reverse post-order is a
  // topological order with the loss first.
  std::vector<std::shared_ptr<detail::TensorImpl>> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    std::shared_ptr<detail::TensorImpl> impl;
    std::size_t next_child = 0;
  };
  std::vector<Frame> stack;
  seen.insert(root->node.get());
  stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    auto& node = *f.impl->node;
    if (f.next_child < node.inputs.size()) {
      auto child = node.inputs[f.next_child++];
      if (child->node && !seen.count(child->node.get())) {
        seen.insert(child->node.get());
        stack.push_back({std::move(child), 0});
      }
    } else {
      order.push_back(f.impl);
      stack.pop_back();
    }
  }

  root->grad_buf()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& impl = **it;
    if (impl.grad.empty()) impl.grad_buf();  // no incoming grad: zeros
    impl.node->backward(impl);
    impl.node->consumed = true;
  }
}

// --- elementwise ops ----------------------------------------------------------

enum class BinaryOp { add, sub, mul };

namespace detail {

// b must have the same shape as a, or a shape that is a trailing suffix of
// a's shape (broadcast over the leading dimensions).
inline void check_broadcast(const Shape& a, const Shape& b) {
  if (a == b) return;
  if (b.size() > a.size())
    throw ShapeError("elementwise shapes " + shape_str(a) + " vs " +
                     shape_str(b) + " are incompatible");
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i])
      throw ShapeError("elementwise shapes " + shape_str(a) + " vs " +
                       shape_str(b) + " are incompatible");
  }
}

inline void reduce_to(const float* g, std::int64_t n, TensorImpl& b,
                      const std::function<float(std::int64_t, float)>& f) {
  if (!b.requires_grad) return;
  float* dst = b.grad_buf();
  const std::int64_t bn = b.numel();
  for (std::int64_t i = 0; i < n; ++i) dst[i % bn] += f(i, g[i]);
}

}  // namespace detail

inline Tensor elementwise_binary(const Tensor& a, const Tensor& b,
                                 BinaryOp op) {
  detail::check_broadcast(a.shape(), b.shape());
  auto ai = a.impl();
  auto bi = b.impl();
  const std::int64_t n = a.numel();
  const std::int64_t bn = b.numel();

  Tensor out = detail::make_output(
      a.shape(), {ai, bi},
      [ai, bi, op, n, bn](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        const float* av = ai->data->data();
        const float* bv = bi->data->data();
        if (ai->requires_grad) {
          float* da = ai->grad_buf();
          switch (op) {
            case BinaryOp::add:
            case BinaryOp::sub:
              for (std::int64_t i = 0; i < n; ++i) da[i] += g[i];
              break;
            case BinaryOp::mul:
              for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * bv[i % bn];
              break;
          }
        }
        if (bi->requires_grad) {
          float* db = bi->grad_buf();
          switch (op) {
            case BinaryOp::add:
              for (std::int64_t i = 0; i < n; ++i) db[i % bn] += g[i];
              break;
            case BinaryOp::sub:
              for (std::int64_t i = 0; i < n; ++i) db[i % bn] -= g[i];
              break;
            case BinaryOp::mul:
              for (std::int64_t i = 0; i < n; ++i) db[i % bn] += g[i] * av[i];
              break;
          }
        }
      });

  const float* av = ai->data->data();
  const float* bv = bi->data->data();
  float* ov = out.data().data();
  switch (op) {
    case BinaryOp::add:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i % bn];
      break;
    case BinaryOp::sub:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] - bv[i % bn];
      break;
    case BinaryOp::mul:
      for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i % bn];
      break;
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, BinaryOp::add);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, BinaryOp::sub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, BinaryOp::mul);
}

inline Tensor scale(const Tensor& a, float c) {
  auto ai = a.impl();
  const std::int64_t n = a.numel();
  Tensor out = detail::make_output(
      a.shape(), {ai}, [ai, c, n](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float* g = o.grad.data();
        for (std::int64_t i = 0; i < n; ++i) da[i] += c * g[i];
      });
  const float* av = ai->data->data();
  float* ov = out.data().data();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = c * av[i];
  return out;
}

inline Tensor relu(const Tensor& a) {
  auto ai = a.impl();
  const std::int64_t n = a.numel();
  Tensor out = detail::make_output(
      a.shape(), {ai}, [ai, n](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float* g = o.grad.data();
        const float* av = ai->data->data();
        for (std::int64_t i = 0; i < n; ++i)
          if (av[i] > 0.0f) da[i] += g[i];
      });
  const float* av = ai->data->data();
  float* ov = out.data().data();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = av[i] > 0.0f ? av[i] : 0.0f;
  return out;
}

// --- shape ops ---------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " +
                     shape_str(new_shape));
  auto ai = a.impl();
  const std::int64_t n = a.numel();
  Tensor out = detail::make_output(
      std::move(new_shape), {ai}, [ai, n](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float* g = o.grad.data();
        for (std::int64_t i = 0; i < n; ++i) da[i] += g[i];
      });
  std::copy(ai->data->begin(), ai->data->end(), out.data().begin());
  return out;
}

// --- reductions ---------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  auto ai = a.impl();
  const std::int64_t n = a.numel();
  Tensor out = detail::make_output(
      {1}, {ai}, [ai, n](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float g = o.grad[0];
        for (std::int64_t i = 0; i < n; ++i) da[i] += g;
      });
  const float* av = ai->data->data();
  float acc = 0.0f;
  for (std::int64_t i = 0; i < n; ++i) acc += av[i];
  out.data()[0] = acc;
  return out;
}

// [B,C,H,W] -> [B,C]: mean over the spatial plane.
inline Tensor global_avg_pool(const Tensor& a) {
  if (a.ndim() != 4)
    throw ShapeError("global_avg_pool expects BxCxHxW, got " +
                     shape_str(a.shape()));
  const int b = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  auto ai = a.impl();
  Tensor out = detail::make_output(
      {b, c}, {ai}, [ai, b, c, plane](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float* g = o.grad.data();
        const float inv = 1.0f / static_cast<float>(plane);
        for (std::int64_t bc = 0; bc < static_cast<std::int64_t>(b) * c; ++bc) {
          const float gv = g[bc] * inv;
          float* d = da + bc * plane;
          for (std::int64_t i = 0; i < plane; ++i) d[i] += gv;
        }
      });
  const float* av = ai->data->data();
  float* ov = out.data().data();
  for (std::int64_t bc = 0; bc < static_cast<std::int64_t>(b) * c; ++bc) {
    const float* src = av + bc * plane;
    float acc = 0.0f;
    for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
    ov[bc] = acc / static_cast<float>(plane);
  }
  return out;
}

// [B,N,C] -> [B,C]: mean over the token dimension.
inline Tensor mean_tokens(const Tensor& a) {
  if (a.ndim() != 3)
    throw ShapeError("mean_tokens expects BxNxC, got " + shape_str(a.shape()));
  const int b = a.dim(0), n = a.dim(1), c = a.dim(2);
  auto ai = a.impl();
  Tensor out = detail::make_output(
      {b, c}, {ai}, [ai, b, n, c](detail::TensorImpl& o) {
        if (!ai->requires_grad) return;
        float* da = ai->grad_buf();
        const float* g = o.grad.data();
        const float inv = 1.0f / static_cast<float>(n);
        for (int bi = 0; bi < b; ++bi)
          for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci)
              da[(static_cast<std::int64_t>(bi) * n + ni) * c + ci] +=
                  g[static_cast<std::int64_t>(bi) * c + ci] * inv;
      });
  const float* av = ai->data->data();
  float* ov = out.data().data();
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      float acc = 0.0f;
      for (int ni = 0; ni < n; ++ni)
        acc += av[(static_cast<std::int64_t>(bi) * n + ni) * c + ci];
      ov[static_cast<std::int64_t>(bi) * c + ci] =
          acc / static_cast<float>(n);
    }
  return out;
}

// --- matmul -------------------------------------------------------------------

namespace detail {

// crow[j] += sum_t a[t] * brows[t][j]; the 8-deep unroll amortizes the
// C-row load/store across eight multiply-accumulate lanes.
inline void axpy8(float* crow, int n, const float* av,
                  const float* const* brows) {
  const float a0 = av[0], a1 = av[1], a2 = av[2], a3 = av[3];
  const float a4 = av[4], a5 = av[5], a6 = av[6], a7 = av[7];
  const float *b0 = brows[0], *b1 = brows[1], *b2 = brows[2], *b3 = brows[3];
  const float *b4 = brows[4], *b5 = brows[5], *b6 = brows[6], *b7 = brows[7];
  for (int j = 0; j < n; ++j)
    crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j] +
               a4 * b4[j] + a5 * b5[j] + a6 * b6[j] + a7 * b7[j];
}

// C[MxN] += A[MxK] * B[KxN], row-major. The active B panel is packed into
// a contiguous column tile; wide strides between B rows otherwise alias
// into the same cache sets and evict each other.
inline void gemm_acc(const float* a, const float* b, float* c, int m, int k,
                     int n) {
  constexpr int kColTile = 128;
  std::vector<float> pack(static_cast<std::size_t>(k) *
                          std::min(kColTile, n));
  for (int jb = 0; jb < n; jb += kColTile) {
    const int jn = std::min(kColTile, n - jb);
    for (int p = 0; p < k; ++p)
      std::copy_n(b + static_cast<std::int64_t>(p) * n + jb, jn,
                  pack.begin() + static_cast<std::size_t>(p) * jn);
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<std::int64_t>(i) * n + jb;
      const float* arow = a + static_cast<std::int64_t>(i) * k;
      int p = 0;
      for (; p + 8 <= k; p += 8) {
        const float* brows[8];
        for (int t = 0; t < 8; ++t)
          brows[t] = pack.data() + static_cast<std::size_t>(p + t) * jn;
        axpy8(crow, jn, arow + p, brows);
      }
      for (; p < k; ++p) {
        const float av = arow[p];
        const float* brow = pack.data() + static_cast<std::size_t>(p) * jn;
        for (int j = 0; j < jn; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// C[MxN] = A[MxK] * B[KxN].
inline void gemm(const float* a, const float* b, float* c, int m, int k,
                 int n) {
  std::fill(c, c + static_cast<std::int64_t>(m) * n, 0.0f);
  gemm_acc(a, b, c, m, k, n);
}

// C[MxN] += A[MxK] * B[NxK]^T. Materializes B^T so the inner kernel is the
// same vectorizable axpy loop as gemm; plain row-times-row dot products
// cannot be auto-vectorized (the reduction order is fixed).
inline void gemm_bt_acc(const float* a, const float* b, float* c, int m,
                        int k, int n) {
  std::vector<float> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < k; ++p)
      bt[static_cast<std::size_t>(p) * n + j] =
          b[static_cast<std::int64_t>(j) * k + p];
  gemm_acc(a, bt.data(), c, m, k, n);
}

// C[KxN] += A[MxK]^T * B[MxN].
inline void gemm_at_acc(const float* a, const float* b, float* c, int m,
                        int k, int n) {
  std::vector<float> at(static_cast<std::size_t>(k) * m);
  for (int p = 0; p < m; ++p)
    for (int i = 0; i < k; ++i)
      at[static_cast<std::size_t>(i) * m + p] =
          a[static_cast<std::int64_t>(p) * k + i];
  gemm_acc(at.data(), b, c, k, m, n);
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& w) {
  if (a.ndim() != 2 || w.ndim() != 2)
    throw ShapeError("matmul expects 2-D operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(w.shape()));
  if (a.dim(1) != w.dim(0))
    throw ShapeError("matmul inner dimensions differ: " +
                     shape_str(a.shape()) + " vs " + shape_str(w.shape()));
  const int m = a.dim(0), k = a.dim(1), n = w.dim(1);
  auto ai = a.impl();
  auto wi = w.impl();
  Tensor out = detail::make_output(
      {m, n}, {ai, wi}, [ai, wi, m, k, n](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        if (ai->requires_grad)  // dA = G * W^T
          detail::gemm_bt_acc(g, wi->data->data(), ai->grad_buf(), m, n, k);
        if (wi->requires_grad)  // dW = A^T * G
          detail::gemm_at_acc(ai->data->data(), g, wi->grad_buf(), m, k, n);
      });
  detail::gemm(ai->data->data(), wi->data->data(), out.data().data(), m, k,
               n);
  return out;
}

}  // namespace edgefilter
