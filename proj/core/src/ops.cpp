#include "xeroalign/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include "xeroalign/errors.hpp"

namespace xeroalign::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

Tensor make_result(Shape shape, std::vector<double> data) { return Tensor(std::move(shape), std::move(data)); }

using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof(v)); }

// R rows of C, 4*NV columns, accumulated in registers over the full k extent.
template <std::size_t R, std::size_t NV>
inline void gemm_tile(const double* __restrict a, std::size_t lda, const double* __restrict b, std::size_t ldb,
                      double* __restrict c, std::size_t ldc, std::size_t k) {
  v4d acc[R][NV];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < NV; ++v) acc[r][v] = load4(c + r * ldc + 4 * v);
  for (std::size_t p = 0; p < k; ++p) {
    v4d bv[NV];
    for (std::size_t v = 0; v < NV; ++v) bv[v] = load4(b + p * ldb + 4 * v);
    for (std::size_t r = 0; r < R; ++r) {
      const double s = a[r * lda + p];
      const v4d av = {s, s, s, s};
      for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < NV; ++v) store4(c + r * ldc + 4 * v, acc[r][v]);
}

template <std::size_t R>
void gemm_rows(const double* a, const double* b, double* c, std::size_t k, std::size_t n) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) gemm_tile<R, 4>(a, k, b + j, n, c + j, n, k);
  for (; j + 4 <= n; j += 4) gemm_tile<R, 1>(a, k, b + j, n, c + j, n, k);
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < R; ++r) {
      double s = c[r * n + j];
      for (std::size_t p = 0; p < k; ++p) s += a[r * k + p] * b[p * n + j];
      c[r * n + j] = s;
    }
  }
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_rows<4>(a + i * k, b, c + i * n, k, n);
  for (; i < m; ++i) gemm_rows<1>(a + i * k, b, c + i * n, k, n);
}

void transpose_into(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  g.check_owned(a);
  g.check_owned(b);
  if (a.rank() < 2 || b.rank() < 2 || a.shape().back() != b.shape()[b.rank() - 2]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) {
    throw DimensionError("matmul: batch dimensions of " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " do not broadcast");
  }
  std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape().back();
  const std::size_t n = b.shape().back();
  const Shape& batch_shape = batch_a.empty() ? batch_b : batch_a;
  std::size_t batch = shape_numel(batch_shape);
  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  if (batch_b.empty()) {
    m *= batch;
    batch = 1;
  }
  const std::size_t a_stride = batch_a.empty() ? 0 : m * k;
  const std::size_t b_stride = batch_b.empty() ? 0 : k * n;

  std::vector<double> out(batch * m * n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t t = 0; t < batch; ++t) gemm_nn(ad + t * a_stride, bd + t * b_stride, out.data() + t * m * n, m, k, n);
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!g.should_record({a, b})) return result;

  return g.record(OpKind::kMatmul, result, {a, b},
                  [a, b, m, k, n, batch, a_stride, b_stride](std::span<const double> gout) mutable {
                    if (a.requires_grad()) {
                      auto ga = a.grad_buffer();
                      std::vector<double> bt(k * n);
                      for (std::size_t t = 0; t < batch; ++t) {
                        if (t == 0 || b_stride != 0) transpose_into(b.data().data() + t * b_stride, bt.data(), k, n);
                        gemm_nn(gout.data() + t * m * n, bt.data(), ga.data() + t * a_stride, m, n, k);
                      }
                    }
                    if (b.requires_grad()) {
                      auto gb = b.grad_buffer();
                      std::vector<double> at(m * k);
                      for (std::size_t t = 0; t < batch; ++t) {
                        if (t == 0 || a_stride != 0) transpose_into(a.data().data() + t * a_stride, at.data(), m, k);
                        gemm_nn(at.data(), gout.data() + t * m * n, gb.data() + t * b_stride, k, m, n);
                      }
                    }
                  });
}

Tensor transpose(Graph& g, const Tensor& a) {
  g.check_owned(a);
  if (a.rank() < 2) throw DimensionError("transpose: rank < 2 for shape " + shape_str(a.shape()));
  const std::size_t rows = a.shape()[a.rank() - 2];
  const std::size_t cols = a.shape().back();
  const std::size_t batch = a.numel() / std::max<std::size_t>(rows * cols, 1);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<double> out(a.numel());
  for (std::size_t t = 0; t < batch; ++t)
    transpose_into(a.data().data() + t * rows * cols, out.data() + t * rows * cols, rows, cols);
  Tensor result = make_result(std::move(shape), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kTranspose, result, {a}, [a, rows, cols, batch](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t t = 0; t < batch; ++t) {
      const double* src = gout.data() + t * rows * cols;  // [cols, rows]
      double* dst = ga.data() + t * rows * cols;
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r) dst[r * cols + c] += src[c * rows + r];
    }
  });
}

Tensor reshape(Graph& g, const Tensor& a, Shape shape) {
  g.check_owned(a);
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor result = make_result(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kReshape, result, {a}, [a](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
  });
}

Tensor permute(Graph& g, const Tensor& a, std::span<const std::size_t> axes) {
  g.check_owned(a);
  const std::size_t rank = a.rank();
  if (axes.size() != rank) throw DimensionError("permute: axis count does not match shape " + shape_str(a.shape()));
  std::vector<bool> seen(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || seen[ax]) throw DimensionError("permute: invalid axis order for shape " + shape_str(a.shape()));
    seen[ax] = true;
  }
  Shape out_shape(rank);
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * a.shape()[d];
  std::vector<std::size_t> strides(rank);  // input stride for each output axis
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = a.shape()[axes[d]];
    strides[d] = in_strides[axes[d]];
  }
  // Precompute the source offset for every output element.
  const std::size_t total = a.numel();
  std::vector<std::size_t> source(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < total; ++i) {
    source[i] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset += strides[d];
      if (idx[d] < out_shape[d]) break;
      offset -= strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(total);
  const auto in = a.data();
  for (std::size_t i = 0; i < total; ++i) out[i] = in[source[i]];
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kPermute, result, {a}, [a, source = std::move(source)](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < source.size(); ++i) ga[source[i]] += gout[i];
  });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  g.check_owned(a);
  g.check_owned(b);
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a, b})) return result;
  return g.record(OpKind::kAdd, result, {a, b}, [a, b](std::span<const double> gout) mutable {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->grad_buffer();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += gout[i];
    }
  });
}

Tensor add(Graph& g, const Tensor& a, double b) {
  g.check_owned(a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += b;
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kAddScalar, result, {a}, [a](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
  });
}

Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
  g.check_owned(a);
  g.check_owned(b);
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a, b})) return result;
  return g.record(OpKind::kSub, result, {a, b}, [a, b](std::span<const double> gout) mutable {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= gout[i];
    }
  });
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  g.check_owned(a);
  g.check_owned(b);
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a, b})) return result;
  return g.record(OpKind::kMul, result, {a, b}, [a, b](std::span<const double> gout) mutable {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      const auto bd = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * bd[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      const auto ad = a.data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * ad[i];
    }
  });
}

Tensor scale(Graph& g, const Tensor& a, double factor) {
  g.check_owned(a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kScale, result, {a}, [a, factor](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * gout[i];
  });
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  g.check_owned(x);
  g.check_owned(bias);
  if (x.rank() < 1 || bias.rank() != 1 || x.shape().back() != bias.numel()) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t h = bias.numel();
  const std::size_t rows = h == 0 ? 0 : x.numel() / h;
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < h; ++j) out[r * h + j] += bd[j];
  Tensor result = make_result(x.shape(), std::move(out));
  if (!g.should_record({x, bias})) return result;
  return g.record(OpKind::kAddBias, result, {x, bias}, [x, bias, rows, h](std::span<const double> gout) mutable {
    if (x.requires_grad()) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < h; ++j) gb[j] += gout[r * h + j];
    }
  });
}

Tensor relu(Graph& g, const Tensor& a) {
  g.check_owned(a);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kRelu, result, {a}, [a](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    const auto ad = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (ad[i] > 0.0) ga[i] += gout[i];
  });
}

Tensor gelu(Graph& g, const Tensor& a) {
  g.check_owned(a);
  constexpr double c = 0.7978845608028654;  // sqrt(2 / pi)
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  std::vector<double> th(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = ad[i];
    th[i] = std::tanh(c * (x + kGeluCubic * x * x * x));
    out[i] = 0.5 * x * (1.0 + th[i]);
  }
  Tensor result = make_result(a.shape(), std::move(out));
  if (!g.should_record({a})) return result;
  return g.record(OpKind::kGelu, result, {a}, [a, th = std::move(th)](std::span<const double> gout) mutable {
    auto ga = a.grad_buffer();
    const auto ad = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      const double x = ad[i];
      const double t = th[i];
      const double dt = (1.0 - t * t) * c * (1.0 + 3.0 * kGeluCubic * x * x);
      ga[i] += gout[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Tensor softmax(Graph& g, const Tensor& x, std::size_t axis) {
  g.check_owned(x);
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  const std::size_t n = s[axis];
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  Tensor result = make_result(s, std::move(out));
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kSoftmax, result, {x}, [x, yv = std::vector<double>(result.data().begin(), result.data().end()), outer, n, inner](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += yv[base + j * inner] * gout[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += yv[idx] * (gout[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  g.check_owned(x);
  g.check_owned(gain);
  g.check_owned(bias);
  if (x.rank() < 1 || gain.rank() != 1 || bias.rank() != 1 || gain.numel() != x.shape().back() ||
      bias.numel() != x.shape().back()) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t h = x.shape().back();
  const std::size_t rows = h == 0 ? 0 : x.numel() / h;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += row[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(h);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < h; ++j) {
      const double v = (row[j] - mu) * is;
      xhat[r * h + j] = v;
      out[r * h + j] = v * gd[j] + bd[j];
    }
  }
  Tensor result = make_result(x.shape(), std::move(out));
  if (!g.should_record({x, gain, bias})) return result;
  return g.record(OpKind::kLayerNorm, result, {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                   h](std::span<const double> gout) mutable {
                    if (gain.requires_grad()) {
                      auto gg = gain.grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < h; ++j) gg[j] += gout[r * h + j] * xhat[r * h + j];
                    }
                    if (bias.requires_grad()) {
                      auto gb = bias.grad_buffer();
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < h; ++j) gb[j] += gout[r * h + j];
                    }
                    if (x.requires_grad()) {
                      auto gx = x.grad_buffer();
                      const auto gd = gain.data();
                      const double inv_h = 1.0 / static_cast<double>(h);
                      std::vector<double> dxhat(h);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double mean_d = 0.0;
                        double mean_dx = 0.0;
                        for (std::size_t j = 0; j < h; ++j) {
                          dxhat[j] = gout[r * h + j] * gd[j];
                          mean_d += dxhat[j];
                          mean_dx += dxhat[j] * xhat[r * h + j];
                        }
                        mean_d *= inv_h;
                        mean_dx *= inv_h;
                        for (std::size_t j = 0; j < h; ++j)
                          gx[r * h + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[r * h + j] * mean_dx);
                      }
                    }
                  });
}

Tensor embedding(Graph& g, const Tensor& table, std::span<const int> ids) {
  g.check_owned(table);
  if (table.rank() != 2) throw DimensionError("embedding: table must be rank 2, got " + shape_str(table.shape()));
  const std::size_t vocab = table.shape()[0];
  const std::size_t h = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(vocab));
    }
  }
  std::vector<double> out(ids.size() * h);
  const auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(td.data() + static_cast<std::size_t>(ids[i]) * h, h, out.data() + i * h);
  Tensor result = make_result({ids.size(), h}, std::move(out));
  if (!g.should_record({table})) return result;
  return g.record(OpKind::kEmbedding, result, {table},
                  [table, ids = std::vector<int>(ids.begin(), ids.end()), h](std::span<const double> gout) mutable {
                    auto gt = table.grad_buffer();
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      double* row = gt.data() + static_cast<std::size_t>(ids[i]) * h;
                      for (std::size_t j = 0; j < h; ++j) row[j] += gout[i * h + j];
                    }
                  });
}

Tensor select(Graph& g, const Tensor& x, std::size_t axis, std::size_t index) {
  g.check_owned(x);
  if (axis >= x.rank() || index >= x.shape()[axis]) {
    throw IndexError("select: index " + std::to_string(index) + " on axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) out_shape.push_back(s[d]);
  std::vector<double> out(outer * inner);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xd.data() + (o * n + index) * inner, inner, out.data() + o * inner);
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kSelect, result, {x}, [x, outer, inner, n, index](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) gx[(o * n + index) * inner + i] += gout[o * inner + i];
  });
}

Tensor slice_rows(Graph& g, const Tensor& x, std::size_t begin, std::size_t end) {
  g.check_owned(x);
  if (x.rank() == 0 || begin >= end || end > x.shape()[0]) {
    throw IndexError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for shape " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.shape()[0];
  Shape out_shape = x.shape();
  out_shape[0] = end - begin;
  const auto xd = x.data();
  std::vector<double> out(xd.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          xd.begin() + static_cast<std::ptrdiff_t>(end * row));
  Tensor result = make_result(std::move(out_shape), std::move(out));
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kSlice, result, {x}, [x, begin, row](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gout.size(); ++i) gx[begin * row + i] += gout[i];
  });
}

Tensor add_key_mask(Graph& g, const Tensor& scores, std::span<const std::uint8_t> key_mask) {
  g.check_owned(scores);
  if (scores.rank() != 4) throw DimensionError("add_key_mask: scores must be [B,heads,Lq,Lk], got " + shape_str(scores.shape()));
  const auto& s = scores.shape();
  const std::size_t b = s[0], heads = s[1], lq = s[2], lk = s[3];
  if (key_mask.size() != b * lk) {
    throw DimensionError("add_key_mask: mask of " + std::to_string(key_mask.size()) + " entries for scores " +
                         shape_str(s));
  }
  std::vector<double> out(scores.data().begin(), scores.data().end());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t k = 0; k < lk; ++k) {
      if (key_mask[bi * lk + k]) continue;
      for (std::size_t hh = 0; hh < heads; ++hh)
        for (std::size_t q = 0; q < lq; ++q) out[((bi * heads + hh) * lq + q) * lk + k] += kMaskedLogit;
    }
  Tensor result = make_result(s, std::move(out));
  if (!g.should_record({scores})) return result;
  return g.record(OpKind::kKeyMask, result, {scores}, [scores](std::span<const double> gout) mutable {
    auto gs = scores.grad_buffer();
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += gout[i];
  });
}

Tensor dropout(Graph& g, const Tensor& x, double p, Rng& rng) {
  g.check_owned(x);
  if (p <= 0.0) return x;
  if (p >= 1.0) throw InputError("dropout: probability must be < 1");
  const double inv = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= p ? inv : 0.0;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  Tensor result = make_result(x.shape(), std::move(out));
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kDropout, result, {x}, [x, mask = std::move(mask)](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gout[i] * mask[i];
  });
}

Tensor sum(Graph& g, const Tensor& x) {
  g.check_owned(x);
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kSum, result, {x}, [x](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (auto& v : gx) v += gout[0];
  });
}

Tensor mean(Graph& g, const Tensor& x) {
  g.check_owned(x);
  if (x.numel() == 0) throw DimensionError("mean of an empty tensor");
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.numel());
  Tensor result = Tensor::scalar(total / n);
  if (!g.should_record({x})) return result;
  return g.record(OpKind::kMean, result, {x}, [x, n](std::span<const double> gout) mutable {
    auto gx = x.grad_buffer();
    for (auto& v : gx) v += gout[0] / n;
  });
}

Tensor mse(Graph& g, const Tensor& a, const Tensor& b) {
  g.check_owned(a);
  g.check_owned(b);
  require_same_shape(a, b, "mse");
  if (a.numel() == 0) throw DimensionError("mse of empty tensors");
  const auto ad = a.data();
  const auto bd = b.data();
  double total = 0.0;
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = ad[i] - bd[i];
    total += d * d;
  }
  const double n = static_cast<double>(ad.size());
  Tensor result = Tensor::scalar(total / n);
  if (!g.should_record({a, b})) return result;
  return g.record(OpKind::kMse, result, {a, b}, [a, b, n](std::span<const double> gout) mutable {
    const auto ad = a.data();
    const auto bd = b.data();
    const double k = 2.0 * gout[0] / n;
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += k * (ad[i] - bd[i]);
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += k * (bd[i] - ad[i]);
    }
  });
}

Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const int> targets, int ignore_index) {
  g.check_owned(logits);
  if (logits.rank() != 2 || logits.shape()[0] != targets.size()) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  const auto ld = logits.data();
  std::vector<double> probs(ld.size(), 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
    const double* row = ld.data() + r * classes;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(row[c] - mx);
      probs[r * classes + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    total += (std::log(z) + mx) - row[static_cast<std::size_t>(t)];
    ++counted;
  }
  if (counted == 0) throw InputError("cross_entropy: every row is ignored, mean is undefined");
  const double n = static_cast<double>(counted);
  Tensor result = Tensor::scalar(total / n);
  if (!g.should_record({logits})) return result;
  return g.record(OpKind::kCrossEntropy, result, {logits},
                  [logits, probs = std::move(probs), t = std::vector<int>(targets.begin(), targets.end()), rows, classes,
                   n, ignore_index](std::span<const double> gout) mutable {
                    auto gl = logits.grad_buffer();
                    const double k = gout[0] / n;
                    for (std::size_t r = 0; r < rows; ++r) {
                      if (t[r] == ignore_index) continue;
                      for (std::size_t c = 0; c < classes; ++c) {
                        double d = probs[r * classes + c];
                        if (static_cast<int>(c) == t[r]) d -= 1.0;
                        gl[r * classes + c] += k * d;
                      }
                    }
                  });
}

}  // namespace xeroalign::ops
