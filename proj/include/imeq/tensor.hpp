#pragma once

// Minimal dense tensor library with reverse-mode automatic
// differentiation -- the substrate for the neural model.
//
// Tensors are row-major contiguous buffers. Ops are free functions taking
// the tape first; when the tape is recording and an input is tracked, the
// op allocates a gradient buffer for its output, registers it as an
// intermediate and pushes a backward closure. backward(loss) zeroes the
// intermediate gradients, seeds d loss/d loss = 1 and runs the closures
// in exact reverse order. Parameter (leaf) gradients are never zeroed by
// the tape, so repeated backward calls accumulate additively.
//
// Broadcasting: for elementwise ops one operand may have a shape that is
// a suffix of the other's (broadcast over the leading batch axes); any
// other mismatch throws ShapeMismatch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "imeq/common.hpp"

namespace imeq {

template <class T>
using Buffer = std::shared_ptr<std::vector<T>>;

template <class T>
Buffer<T> make_buffer(std::size_t n, T fill = T(0)) {
  return std::make_shared<std::vector<T>>(n, fill);
}

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const std::vector<int>& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

template <class T>
struct TensorT {
  std::vector<int> shape;
  Buffer<T> data;
  Buffer<T> grad;  // non-null iff this tensor is tracked

  TensorT() = default;
  TensorT(std::vector<int> shp, Buffer<T> d, Buffer<T> g = nullptr)
      : shape(std::move(shp)), data(std::move(d)), grad(std::move(g)) {}

  static TensorT zeros(std::vector<int> shp) {
    auto n = shape_numel(shp);
    return TensorT(std::move(shp), make_buffer<T>(n));
  }
  static TensorT full(std::vector<int> shp, T v) {
    auto n = shape_numel(shp);
    return TensorT(std::move(shp), make_buffer<T>(n, v));
  }
  static TensorT from(std::vector<T> values, std::vector<int> shp) {
    if (values.size() != shape_numel(shp))
      throw ShapeMismatch("from: " + std::to_string(values.size()) +
                          " values for shape " + shape_str(shp));
    return TensorT(std::move(shp),
                   std::make_shared<std::vector<T>>(std::move(values)));
  }
  static TensorT scalar(T v) { return full({1}, v); }

  std::size_t numel() const { return data ? data->size() : 0; }
  int rank() const { return static_cast<int>(shape.size()); }
  bool tracked() const { return grad != nullptr; }

  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T* gptr() { return grad->data(); }
  const T* gptr() const { return grad->data(); }

  // Turns the tensor into a trainable leaf: allocates a zero gradient
  // buffer that the tape never clears.
  TensorT& requires_grad() {
    if (!grad) grad = make_buffer<T>(numel());
    return *this;
  }
  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }
};

template <class T>
class TapeT {
 public:
  bool recording = true;

  void record(std::function<void()> fn) { records_.push_back(std::move(fn)); }
  void register_intermediate(const Buffer<T>& g) { inter_.push_back(g); }
  std::size_t size() const { return records_.size(); }

  // Releases the recorded graph (keeps leaf tensors and their grads).
  void clear() {
    records_.clear();
    inter_.clear();
  }

  void backward(const TensorT<T>& loss) {
    if (loss.numel() != 1)
      throw NonScalarLoss("backward needs a scalar loss, got shape " +
                          shape_str(loss.shape));
    for (auto& g : inter_) std::fill(g->begin(), g->end(), T(0));
    if (!loss.grad) return;  // loss constant w.r.t. every parameter
    (*loss.grad)[0] += T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> records_;
  std::vector<Buffer<T>> inter_;
};

namespace tensor_detail {

// Output buffer setup shared by every op: allocates the value buffer and,
// when tracked inputs are present on a recording tape, the grad buffer.
template <class T>
TensorT<T> make_output(TapeT<T>& tape, std::vector<int> shape, bool tracked) {
  TensorT<T> out = TensorT<T>::zeros(std::move(shape));
  if (tape.recording && tracked) {
    out.grad = make_buffer<T>(out.numel());
    tape.register_intermediate(out.grad);
  }
  return out;
}

template <class T>
bool any_tracked(const TensorT<T>& a) {
  return a.tracked();
}
template <class T, class... R>
bool any_tracked(const TensorT<T>& a, const R&... rest) {
  return a.tracked() || any_tracked(rest...);
}

// Suffix-broadcast layout: the operand with the larger element count sets
// the output shape; the smaller one's shape must be a trailing slice.
inline bool is_suffix(const std::vector<int>& small,
                      const std::vector<int>& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// C[M,N] += or = A[M,K] * B[K,N]
template <class T, bool kAccumulate>
void mm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + std::size_t(i) * n;
    if (!kAccumulate) std::fill(crow, crow + n, T(0));
    for (int p = 0; p < k; ++p) {
      T av = a[std::size_t(i) * k + p];
      const T* brow = b + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,K] += A[M,N] * B[K,N]^T  (dot products of contiguous rows)
template <class T>
void mm_nt_acc(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + std::size_t(i) * n;
    for (int j = 0; j < k; ++j) {
      const T* brow = b + std::size_t(j) * n;
      T acc = T(0);
      for (int p = 0; p < n; ++p) acc += arow[p] * brow[p];
      c[std::size_t(i) * k + j] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
template <class T>
void mm_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* brow = b + std::size_t(i) * n;
    for (int p = 0; p < k; ++p) {
      T av = a[std::size_t(i) * k + p];
      T* crow = c + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace tensor_detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with suffix broadcast.

template <class T, class Fwd, class Bwd>
TensorT<T> elementwise_binary(TapeT<T>& tape, const TensorT<T>& a,
                              const TensorT<T>& b, const char* name, Fwd fwd,
                              Bwd bwd) {
  using namespace tensor_detail;
  const bool a_big = a.numel() >= b.numel();
  const TensorT<T>& big = a_big ? a : b;
  const TensorT<T>& small = a_big ? b : a;
  if (!is_suffix(small.shape, big.shape))
    throw ShapeMismatch(std::string(name) + ": " + shape_str(a.shape) +
                        " vs " + shape_str(b.shape));
  TensorT<T> out = make_output(tape, big.shape, any_tracked(a, b));
  const std::size_t n = big.numel(), m = small.numel();
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  if (a_big) {
    for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i % m]);
  } else {
    for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i % m], pb[i]);
  }
  if (out.tracked()) {
    tape.record([a, b, out, a_big, bwd] {
      const std::size_t nn = out.numel();
      const std::size_t mm = (a_big ? b : a).numel();
      for (std::size_t i = 0; i < nn; ++i) {
        std::size_t ia = a_big ? i : i % mm;
        std::size_t ib = a_big ? i % mm : i;
        T da = T(0), db = T(0);
        bwd((*out.grad)[i], (*a.data)[ia], (*b.data)[ib], (*out.data)[i], da,
            db);
        if (a.grad) (*a.grad)[ia] += da;
        if (b.grad) (*b.grad)[ib] += db;
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise_binary(
      tape, a, b, "add", [](T x, T y) { return x + y; },
      [](T go, T, T, T, T& da, T& db) {
        da = go;
        db = go;
      });
}

template <class T>
TensorT<T> sub(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise_binary(
      tape, a, b, "sub", [](T x, T y) { return x - y; },
      [](T go, T, T, T, T& da, T& db) {
        da = go;
        db = -go;
      });
}

template <class T>
TensorT<T> mul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise_binary(
      tape, a, b, "mul", [](T x, T y) { return x * y; },
      [](T go, T x, T y, T, T& da, T& db) {
        da = go * y;
        db = go * x;
      });
}

template <class T>
TensorT<T> div(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  return elementwise_binary(
      tape, a, b, "div", [](T x, T y) { return x / y; },
      [](T go, T, T y, T o, T& da, T& db) {
        da = go / y;
        db = -go * o / y;
      });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.

template <class T, class Fwd, class Bwd>
TensorT<T> elementwise_unary(TapeT<T>& tape, const TensorT<T>& a, Fwd fwd,
                             Bwd bwd) {
  using namespace tensor_detail;
  TensorT<T> out = make_output(tape, a.shape, a.tracked());
  const std::size_t n = a.numel();
  const T* pa = a.ptr();
  T* po = out.ptr();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  if (out.tracked()) {
    tape.record([a, out, bwd] {
      const std::size_t nn = out.numel();
      for (std::size_t i = 0; i < nn; ++i)
        (*a.grad)[i] += bwd((*out.grad)[i], (*a.data)[i], (*out.data)[i]);
    });
  }
  return out;
}

template <class T>
TensorT<T> exp(TapeT<T>& tape, const TensorT<T>& a) {
  return elementwise_unary(
      tape, a, [](T x) { return std::exp(x); },
      [](T go, T, T o) { return go * o; });
}

template <class T>
TensorT<T> ln(TapeT<T>& tape, const TensorT<T>& a) {
  return elementwise_unary(
      tape, a, [](T x) { return std::log(x); },
      [](T go, T x, T) { return go / x; });
}

template <class T>
TensorT<T> tanh(TapeT<T>& tape, const TensorT<T>& a) {
  return elementwise_unary(
      tape, a, [](T x) { return std::tanh(x); },
      [](T go, T, T o) { return go * (T(1) - o * o); });
}

template <class T>
TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& a) {
  return elementwise_unary(
      tape, a, [](T x) { return x > T(0) ? x : T(0); },
      [](T go, T x, T) { return x > T(0) ? go : T(0); });
}

template <class T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& a, T c) {
  return elementwise_unary(
      tape, a, [c](T x) { return c * x; }, [c](T go, T, T) { return c * go; });
}

// ---------------------------------------------------------------------------
// Matrix multiplication: [*, M, K] x [*, K, N] (equal leading axes) or a
// rank-2 right operand shared across the batch.

template <class T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
  using namespace tensor_detail;
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeMismatch("matmul: " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  const bool b_shared = b.rank() == 2 && a.rank() > 2;
  if (!b_shared) {
    if (a.rank() != b.rank() ||
        !std::equal(a.shape.begin(), a.shape.end() - 2, b.shape.begin()))
      throw ShapeMismatch("matmul: " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
  }
  const int m = a.shape[a.rank() - 2];
  const int k = a.shape[a.rank() - 1];
  const int kb = b.shape[b.rank() - 2];
  const int n = b.shape[b.rank() - 1];
  if (k != kb)
    throw ShapeMismatch("matmul: " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  std::size_t batch = 1;
  for (int i = 0; i < a.rank() - 2; ++i) batch *= std::size_t(a.shape[i]);

  std::vector<int> out_shape(a.shape.begin(), a.shape.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  TensorT<T> out = make_output(tape, std::move(out_shape), any_tracked(a, b));

  const std::size_t sa = std::size_t(m) * k, sb = std::size_t(k) * n,
                    so = std::size_t(m) * n;
  for (std::size_t i = 0; i < batch; ++i)
    mm_nn<T, false>(a.ptr() + i * sa, b.ptr() + (b_shared ? 0 : i * sb),
                    out.ptr() + i * so, m, k, n);

  if (out.tracked()) {
    tape.record([a, b, out, b_shared, batch, m, k, n, sa, sb, so] {
      for (std::size_t i = 0; i < batch; ++i) {
        const T* pa = a.data->data() + i * sa;
        const T* pb = b.data->data() + (b_shared ? 0 : i * sb);
        const T* go = out.grad->data() + i * so;
        if (a.grad) mm_nt_acc(go, pb, a.grad->data() + i * sa, m, n, k);
        if (b.grad)
          mm_tn_acc(pa, go, b.grad->data() + (b_shared ? 0 : i * sb), m, k, n);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation.

// Reshape aliases the underlying buffers; no tape record is needed since
// the flat layout is unchanged.
template <class T>
TensorT<T> reshape(const TensorT<T>& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeMismatch("reshape: " + shape_str(a.shape) + " -> " +
                        shape_str(shape));
  return TensorT<T>(std::move(shape), a.data, a.grad);
}

// Swaps two axes (copying).
template <class T>
TensorT<T> transpose(TapeT<T>& tape, const TensorT<T>& a, int ax0, int ax1) {
  const int r = a.rank();
  if (ax0 < 0 || ax1 < 0 || ax0 >= r || ax1 >= r)
    throw ShapeMismatch("transpose: axes (" + std::to_string(ax0) + ", " +
                        std::to_string(ax1) + ") for " + shape_str(a.shape));
  std::vector<int> out_shape = a.shape;
  std::swap(out_shape[ax0], out_shape[ax1]);
  TensorT<T> out =
      tensor_detail::make_output(tape, std::move(out_shape), a.tracked());

  std::vector<std::size_t> in_strides(r, 1), out_strides(r, 1);
  for (int i = r - 2; i >= 0; --i)
    in_strides[i] = in_strides[i + 1] * std::size_t(a.shape[i + 1]);
  for (int i = r - 2; i >= 0; --i)
    out_strides[i] = out_strides[i + 1] * std::size_t(out.shape[i + 1]);

  // src index for each dst index, reused verbatim by the backward pass
  auto map_index = [r, ax0, ax1, in_strides, out_strides,
                    out_shape = out.shape](std::size_t dst) {
    std::size_t src = 0;
    for (int d = 0; d < r; ++d) {
      std::size_t coord = (dst / out_strides[d]) % std::size_t(out_shape[d]);
      int src_axis = d == ax0 ? ax1 : (d == ax1 ? ax0 : d);
      src += coord * in_strides[src_axis];
    }
    return src;
  };

  const std::size_t n = a.numel();
  T* po = out.ptr();
  const T* pa = a.ptr();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[map_index(i)];

  if (out.tracked()) {
    tape.record([a, out, map_index, n] {
      for (std::size_t i = 0; i < n; ++i)
        (*a.grad)[map_index(i)] += (*out.grad)[i];
    });
  }
  return out;
}

// Concatenates along `axis`; all other extents must agree.
template <class T>
TensorT<T> concat(TapeT<T>& tape, const std::vector<TensorT<T>>& parts,
                  int axis) {
  using namespace tensor_detail;
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0 || axis >= r)
    throw ShapeMismatch("concat: axis " + std::to_string(axis) + " for " +
                        shape_str(parts[0].shape));
  std::vector<int> out_shape = parts[0].shape;
  int total = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.rank() != r)
      throw ShapeMismatch("concat: " + shape_str(parts[0].shape) + " vs " +
                          shape_str(p.shape));
    for (int d = 0; d < r; ++d)
      if (d != axis && p.shape[d] != out_shape[d])
        throw ShapeMismatch("concat: " + shape_str(parts[0].shape) + " vs " +
                            shape_str(p.shape));
    total += p.shape[axis];
    tracked = tracked || p.tracked();
  }
  out_shape[axis] = total;
  TensorT<T> out = make_output(tape, out_shape, tracked);

  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= std::size_t(out_shape[d]);
  for (int d = axis + 1; d < r; ++d) inner *= std::size_t(out_shape[d]);
  const std::size_t out_row = std::size_t(total) * inner;

  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t block = std::size_t(p.shape[axis]) * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.ptr() + o * block, block, out.ptr() + o * out_row + off);
    off += block;
  }

  if (out.tracked()) {
    tape.record([parts, out, offsets, outer, inner, out_row, axis] {
      for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& p = parts[pi];
        if (!p.grad) continue;
        const std::size_t block = std::size_t(p.shape[axis]) * inner;
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = out.grad->data() + o * out_row + offsets[pi];
          T* dst = p.grad->data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

// Row gather: out[i, :] = table[indices[i], :].
template <class T>
TensorT<T> index_select(TapeT<T>& tape, const TensorT<T>& table,
                        const std::vector<int>& indices) {
  using namespace tensor_detail;
  if (table.rank() != 2)
    throw ShapeMismatch("index_select: table " + shape_str(table.shape));
  const int rows = table.shape[0], cols = table.shape[1];
  for (int ix : indices)
    if (ix < 0 || ix >= rows)
      throw ShapeMismatch("index_select: index " + std::to_string(ix) +
                          " out of " + std::to_string(rows) + " rows");
  TensorT<T> out = make_output(
      tape, {static_cast<int>(indices.size()), cols}, table.tracked());
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(table.ptr() + std::size_t(indices[i]) * cols, cols,
                out.ptr() + i * cols);
  if (out.tracked()) {
    tape.record([table, out, indices, cols] {
      for (std::size_t i = 0; i < indices.size(); ++i) {
        const T* src = out.grad->data() + i * cols;
        T* dst = table.grad->data() + std::size_t(indices[i]) * cols;
        for (int c = 0; c < cols; ++c) dst[c] += src[c];
      }
    });
  }
  return out;
}

// Per-row gather along the last axis: out[r] = x[r, indices[r]].
template <class T>
TensorT<T> gather_last(TapeT<T>& tape, const TensorT<T>& x,
                       const std::vector<int>& indices) {
  using namespace tensor_detail;
  if (x.rank() < 1) throw ShapeMismatch("gather_last: " + shape_str(x.shape));
  const int width = x.shape.back();
  const std::size_t rows = x.numel() / std::size_t(width);
  if (indices.size() != rows)
    throw ShapeMismatch("gather_last: " + std::to_string(indices.size()) +
                        " indices for " + std::to_string(rows) + " rows");
  for (int ix : indices)
    if (ix < 0 || ix >= width)
      throw ShapeMismatch("gather_last: index " + std::to_string(ix) +
                          " out of " + std::to_string(width));
  std::vector<int> out_shape(x.shape.begin(), x.shape.end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  TensorT<T> out = make_output(tape, std::move(out_shape), x.tracked());
  for (std::size_t r = 0; r < rows; ++r)
    out.ptr()[r] = x.ptr()[r * width + std::size_t(indices[r])];
  if (out.tracked()) {
    tape.record([x, out, indices, width, rows] {
      for (std::size_t r = 0; r < rows; ++r)
        (*x.grad)[r * width + std::size_t(indices[r])] += (*out.grad)[r];
    });
  }
  return out;
}

// out = mask != 0 ? value : x. The mask is plain data (never tracked) and
// may be a suffix of x's shape.
template <class T>
TensorT<T> mask_fill(TapeT<T>& tape, const TensorT<T>& x,
                     const TensorT<T>& mask, T value) {
  using namespace tensor_detail;
  if (!is_suffix(mask.shape, x.shape))
    throw ShapeMismatch("mask_fill: " + shape_str(x.shape) + " vs mask " +
                        shape_str(mask.shape));
  TensorT<T> out = make_output(tape, x.shape, x.tracked());
  const std::size_t n = x.numel(), m = mask.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.ptr()[i] = mask.ptr()[i % m] != T(0) ? value : x.ptr()[i];
  if (out.tracked()) {
    tape.record([x, mask, out, n, m] {
      for (std::size_t i = 0; i < n; ++i)
        if ((*mask.data)[i % m] == T(0)) (*x.grad)[i] += (*out.grad)[i];
    });
  }
  return out;
}

// Tiles x (shape S) to [copies, S...]; backward sums over the new axis.
template <class T>
TensorT<T> repeat_leading(TapeT<T>& tape, const TensorT<T>& x, int copies) {
  using namespace tensor_detail;
  std::vector<int> out_shape;
  out_shape.push_back(copies);
  out_shape.insert(out_shape.end(), x.shape.begin(), x.shape.end());
  TensorT<T> out = make_output(tape, std::move(out_shape), x.tracked());
  const std::size_t n = x.numel();
  for (int c = 0; c < copies; ++c)
    std::copy_n(x.ptr(), n, out.ptr() + std::size_t(c) * n);
  if (out.tracked()) {
    tape.record([x, out, copies, n] {
      for (int c = 0; c < copies; ++c) {
        const T* src = out.grad->data() + std::size_t(c) * n;
        for (std::size_t i = 0; i < n; ++i) (*x.grad)[i] += src[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalizations over the last axis.

template <class T>
TensorT<T> softmax(TapeT<T>& tape, const TensorT<T>& x) {
  using namespace tensor_detail;
  const int width = x.shape.back();
  const std::size_t rows = x.numel() / std::size_t(width);
  TensorT<T> out = make_output(tape, x.shape, x.tracked());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * width;
    T* or_ = out.ptr() + r * width;
    T mx = *std::max_element(xr, xr + width);
    T sum = T(0);
    for (int j = 0; j < width; ++j) {
      or_[j] = std::exp(xr[j] - mx);
      sum += or_[j];
    }
    for (int j = 0; j < width; ++j) or_[j] /= sum;
  }
  if (out.tracked()) {
    tape.record([x, out, width, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* s = out.data->data() + r * width;
        const T* go = out.grad->data() + r * width;
        T* gx = x.grad->data() + r * width;
        T dot = T(0);
        for (int j = 0; j < width; ++j) dot += go[j] * s[j];
        for (int j = 0; j < width; ++j) gx[j] += s[j] * (go[j] - dot);
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> log_softmax(TapeT<T>& tape, const TensorT<T>& x) {
  using namespace tensor_detail;
  const int width = x.shape.back();
  const std::size_t rows = x.numel() / std::size_t(width);
  TensorT<T> out = make_output(tape, x.shape, x.tracked());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * width;
    T* or_ = out.ptr() + r * width;
    T mx = *std::max_element(xr, xr + width);
    T sum = T(0);
    for (int j = 0; j < width; ++j) sum += std::exp(xr[j] - mx);
    T lse = mx + std::log(sum);
    for (int j = 0; j < width; ++j) or_[j] = xr[j] - lse;
  }
  if (out.tracked()) {
    tape.record([x, out, width, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* o = out.data->data() + r * width;
        const T* go = out.grad->data() + r * width;
        T* gx = x.grad->data() + r * width;
        T gsum = T(0);
        for (int j = 0; j < width; ++j) gsum += go[j];
        for (int j = 0; j < width; ++j)
          gx[j] += go[j] - std::exp(o[j]) * gsum;
      }
    });
  }
  return out;
}

// LayerNorm over the last axis with affine parameters; gamma/beta must
// both have shape [width].
template <class T>
TensorT<T> layer_norm(TapeT<T>& tape, const TensorT<T>& x,
                      const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-5)) {
  using namespace tensor_detail;
  const int width = x.shape.back();
  if (gamma.shape != std::vector<int>{width} ||
      beta.shape != std::vector<int>{width})
    throw ShapeMismatch("layer_norm: x " + shape_str(x.shape) + ", gamma " +
                        shape_str(gamma.shape) + ", beta " +
                        shape_str(beta.shape));
  const std::size_t rows = x.numel() / std::size_t(width);
  TensorT<T> out =
      make_output(tape, x.shape, any_tracked(x, gamma, beta));
  // Saved normalized values for backward.
  auto xhat = make_buffer<T>(x.numel());
  auto inv_sigma = make_buffer<T>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * width;
    T mean = T(0);
    for (int j = 0; j < width; ++j) mean += xr[j];
    mean /= T(width);
    T var = T(0);
    for (int j = 0; j < width; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= T(width);
    T inv = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[r] = inv;
    T* hr = xhat->data() + r * width;
    T* or_ = out.ptr() + r * width;
    for (int j = 0; j < width; ++j) {
      hr[j] = (xr[j] - mean) * inv;
      or_[j] = gamma.ptr()[j] * hr[j] + beta.ptr()[j];
    }
  }
  if (out.tracked()) {
    tape.record([x, gamma, beta, out, xhat, inv_sigma, width, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* go = out.grad->data() + r * width;
        const T* hr = xhat->data() + r * width;
        if (gamma.grad)
          for (int j = 0; j < width; ++j)
            (*gamma.grad)[j] += go[j] * hr[j];
        if (beta.grad)
          for (int j = 0; j < width; ++j) (*beta.grad)[j] += go[j];
        if (x.grad) {
          T mean_dh = T(0), mean_dh_h = T(0);
          for (int j = 0; j < width; ++j) {
            T dh = go[j] * (*gamma.data)[j];
            mean_dh += dh;
            mean_dh_h += dh * hr[j];
          }
          mean_dh /= T(width);
          mean_dh_h /= T(width);
          T* gx = x.grad->data() + r * width;
          T inv = (*inv_sigma)[r];
          for (int j = 0; j < width; ++j) {
            T dh = go[j] * (*gamma.data)[j];
            gx[j] += inv * (dh - mean_dh - hr[j] * mean_dh_h);
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
TensorT<T> sum_all(TapeT<T>& tape, const TensorT<T>& x) {
  using namespace tensor_detail;
  TensorT<T> out = make_output(tape, {1}, x.tracked());
  T acc = T(0);
  const T* px = x.ptr();
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) acc += px[i];
  out.ptr()[0] = acc;
  if (out.tracked()) {
    tape.record([x, out, n] {
      const T g = (*out.grad)[0];
      for (std::size_t i = 0; i < n; ++i) (*x.grad)[i] += g;
    });
  }
  return out;
}

template <class T>
TensorT<T> mean_all(TapeT<T>& tape, const TensorT<T>& x) {
  TensorT<T> s = sum_all(tape, x);
  return scale(tape, s, T(1) / T(x.numel()));
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling). Identity when train is false.

template <class T>
TensorT<T> dropout(TapeT<T>& tape, const TensorT<T>& x, double p, bool train,
                   Rng& rng) {
  using namespace tensor_detail;
  if (!train || p <= 0.0) return x;
  TensorT<T> out = make_output(tape, x.shape, x.tracked());
  auto keep = make_buffer<T>(x.numel());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const T inv = T(1.0 / (1.0 - p));
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) {
    (*keep)[i] = u01(rng) < p ? T(0) : inv;
    out.ptr()[i] = x.ptr()[i] * (*keep)[i];
  }
  if (out.tracked()) {
    tape.record([x, out, keep, n] {
      for (std::size_t i = 0; i < n; ++i)
        (*x.grad)[i] += (*out.grad)[i] * (*keep)[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam with bias correction.

template <class T>
struct AdamStateT {
  std::vector<std::vector<T>> m, v;
  long t = 0;
};

template <class T>
void adam_step(std::vector<TensorT<T>*> params, AdamStateT<T>& state,
               double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->numel(), T(0));
      state.v.emplace_back(p->numel(), T(0));
    }
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adam_step: state holds " +
                        std::to_string(state.m.size()) + " slots for " +
                        std::to_string(params.size()) + " params");
  ++state.t;
  const T bc1 = T(1) - T(std::pow(beta1, double(state.t)));
  const T bc2 = T(1) - T(std::pow(beta2, double(state.t)));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    TensorT<T>& p = *params[pi];
    if (state.m[pi].size() != p.numel())
      throw ShapeMismatch("adam_step: state slot " + std::to_string(pi) +
                          " has " + std::to_string(state.m[pi].size()) +
                          " entries for a " + std::to_string(p.numel()) +
                          "-element parameter");
    const T* g = p.gptr();
    T* dat = p.ptr();
    T* m = state.m[pi].data();
    T* v = state.v[pi].data();
    const std::size_t n = p.numel();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = T(beta1) * m[i] + (T(1) - T(beta1)) * g[i];
      v[i] = T(beta2) * v[i] + (T(1) - T(beta2)) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      dat[i] -= T(lr) * mhat / (std::sqrt(vhat) + T(eps));
    }
  }
}

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;
using Tape32 = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace imeq
