#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "xeroalign/graph.hpp"
#include "xeroalign/rng.hpp"
#include "xeroalign/tensor.hpp"

namespace xeroalign {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t d_ff = 128;
  std::size_t max_len = 32;
  int cls_id = 1;
  int pad_id = 0;
  double layer_norm_eps = 1e-5;
  double dropout = 0.0;

  // Throws ConfigError.
  void validate() const;

  // "tiny": 2 layers, d_model 64, d_ff 128. "small": 4 layers, d_model 128, d_ff 256.
  static EncoderConfig preset(std::string_view name, std::size_t vocab_size);
};

// Closed-form number of scalar parameters for `config`.
std::size_t parameter_count(const EncoderConfig& config);

struct EncoderLayer {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, wk, wv, wo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab, d_model]
  Tensor position_embedding;  // [max_len, d_model]
  std::vector<EncoderLayer> layers;
  Tensor final_gain, final_bias;

  // Stable, ordered names ("layers.0.attn.wq", ...). Tensors share storage.
  std::vector<NamedTensor> named() const;
};

// Weights ~ N(0, 0.02^2) truncated at 2 sigma; biases 0; layer-norm gains 1.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Padded id matrix. Every row starts with the CLS id; mask is 1 on real tokens.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
};

struct SequenceEncoding {
  Tensor cls;     // [B, d_model], position 0 of `tokens`
  Tensor tokens;  // [B, L, d_model]
};

struct AttentionResult {
  Tensor output;   // [B, heads, L, d_head]
  Tensor weights;  // [B, heads, L, L]
};

// softmax(q k^T / sqrt(d_head) + mask) v, masking keys where key_mask == 0.
AttentionResult attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                          std::span<const std::uint8_t> key_mask);

// Pre-norm transformer stack with a final layer norm. `dropout_rng` is only
// consulted when config.dropout > 0.
SequenceEncoding encode(Graph& g, const EncoderParams& params, const EncoderConfig& config,
                        const TokenBatch& batch, Rng* dropout_rng = nullptr);

}  // namespace xeroalign
