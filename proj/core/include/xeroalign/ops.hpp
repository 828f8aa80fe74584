#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xeroalign/graph.hpp"
#include "xeroalign/rng.hpp"
#include "xeroalign/tensor.hpp"

// Differentiable operations. Each records a node on `g` when any input
// requires a gradient and the graph is recording; otherwise it only
// computes the value.
namespace xeroalign::ops {

inline constexpr int kIgnoreIndex = -100;
inline constexpr double kMaskedLogit = -1e9;
inline constexpr double kGeluCubic = 0.044715;

// [..., m, k] x [..., k, n] -> [..., m, n]. Batch dimensions must match,
// or one operand may be a plain matrix shared across the batch.
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(Graph& g, const Tensor& a);
Tensor reshape(Graph& g, const Tensor& a, Shape shape);
Tensor permute(Graph& g, const Tensor& a, std::span<const std::size_t> axes);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor add(Graph& g, const Tensor& a, double b);
Tensor sub(Graph& g, const Tensor& a, const Tensor& b);
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& a, double factor);
// x[..., H] + bias[H]
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);
Tensor relu(Graph& g, const Tensor& a);
// Tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(Graph& g, const Tensor& a);

// Max-subtracted softmax along `axis`.
Tensor softmax(Graph& g, const Tensor& x, std::size_t axis);
// Normalises the last axis to zero mean / unit variance, then gain and bias.
Tensor layer_norm(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
// Row gather from table[V, H]; gradient scatter-adds back into the table.
Tensor embedding(Graph& g, const Tensor& table, std::span<const int> ids);
// Drops `axis`, keeping slice `index`.
Tensor select(Graph& g, const Tensor& x, std::size_t axis, std::size_t index);
// Rows [begin, end) of axis 0.
Tensor slice_rows(Graph& g, const Tensor& x, std::size_t begin, std::size_t end);

// scores[B, heads, Lq, Lk] + kMaskedLogit wherever key_mask[B, Lk] == 0.
Tensor add_key_mask(Graph& g, const Tensor& scores, std::span<const std::uint8_t> key_mask);
// Inverted dropout. p == 0 returns the input unchanged.
Tensor dropout(Graph& g, const Tensor& x, double p, Rng& rng);

Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);
// Mean over every element of (a - b)^2.
Tensor mse(Graph& g, const Tensor& a, const Tensor& b);
// Mean negative log-softmax over rows whose target != ignore_index.
Tensor cross_entropy(Graph& g, const Tensor& logits, std::span<const int> targets,
                     int ignore_index = kIgnoreIndex);

}  // namespace xeroalign::ops
