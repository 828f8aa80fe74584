#include "xeroalign/encoder.hpp"

#include <array>
#include <cmath>
#include <string>

#include "xeroalign/errors.hpp"
#include "xeroalign/ops.hpp"

namespace xeroalign {
namespace {

constexpr double kInitStd = 0.02;

Tensor random_weight(Rng& rng, Shape shape) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.truncated_normal(kInitStd);
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor constant(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

}  // namespace

void EncoderConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || max_len == 0) {
    throw ConfigError("encoder: dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("encoder: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (cls_id == pad_id) throw ConfigError("encoder: cls_id and pad_id must differ");
  if (cls_id < 0 || pad_id < 0 || static_cast<std::size_t>(cls_id) >= vocab_size ||
      static_cast<std::size_t>(pad_id) >= vocab_size) {
    throw ConfigError("encoder: reserved ids must lie inside the vocabulary of " + std::to_string(vocab_size));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must be in [0, 1)");
}

EncoderConfig EncoderConfig::preset(std::string_view name, std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  if (name == "tiny") {
    c.n_layers = 2;
    c.d_model = 64;
    c.d_ff = 128;
  } else if (name == "small") {
    c.n_layers = 4;
    c.d_model = 128;
    c.d_ff = 256;
  } else {
    throw ConfigError("unknown encoder preset '" + std::string(name) + "' (expected tiny or small)");
  }
  c.n_heads = 4;
  c.max_len = 32;
  return c;
}

std::size_t parameter_count(const EncoderConfig& c) {
  const std::size_t h = c.d_model;
  const std::size_t per_layer = 4 * h * h     // attention projections
                                + 2 * h * c.d_ff + c.d_ff + h  // feed-forward
                                + 4 * h;                        // two layer norms
  return c.vocab_size * h + c.max_len * h + c.n_layers * per_layer + 2 * h;
}

std::vector<NamedTensor> EncoderParams::named() const {
  std::vector<NamedTensor> out;
  out.push_back({"embeddings.token", token_embedding});
  out.push_back({"embeddings.position", position_embedding});
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "ln1.gain", l.ln1_gain});
    out.push_back({p + "ln1.bias", l.ln1_bias});
    out.push_back({p + "attn.wq", l.wq});
    out.push_back({p + "attn.wk", l.wk});
    out.push_back({p + "attn.wv", l.wv});
    out.push_back({p + "attn.wo", l.wo});
    out.push_back({p + "ln2.gain", l.ln2_gain});
    out.push_back({p + "ln2.bias", l.ln2_bias});
    out.push_back({p + "ff.w1", l.w1});
    out.push_back({p + "ff.b1", l.b1});
    out.push_back({p + "ff.w2", l.w2});
    out.push_back({p + "ff.b2", l.b2});
  }
  out.push_back({"final_ln.gain", final_gain});
  out.push_back({"final_ln.bias", final_bias});
  return out;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, {0x656e63});  // "enc"
  const std::size_t h = config.d_model;
  EncoderParams p;
  p.token_embedding = random_weight(rng, {config.vocab_size, h});
  p.position_embedding = random_weight(rng, {config.max_len, h});
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    EncoderLayer l;
    l.ln1_gain = constant({h}, 1.0);
    l.ln1_bias = constant({h}, 0.0);
    l.wq = random_weight(rng, {h, h});
    l.wk = random_weight(rng, {h, h});
    l.wv = random_weight(rng, {h, h});
    l.wo = random_weight(rng, {h, h});
    l.ln2_gain = constant({h}, 1.0);
    l.ln2_bias = constant({h}, 0.0);
    l.w1 = random_weight(rng, {h, config.d_ff});
    l.b1 = constant({config.d_ff}, 0.0);
    l.w2 = random_weight(rng, {config.d_ff, h});
    l.b2 = constant({h}, 0.0);
    p.layers.push_back(std::move(l));
  }
  p.final_gain = constant({h}, 1.0);
  p.final_bias = constant({h}, 0.0);
  return p;
}

AttentionResult attention(Graph& g, const Tensor& q, const Tensor& k, const Tensor& v,
                          std::span<const std::uint8_t> key_mask) {
  if (q.rank() != 4 || k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                         shape_str(v.shape()) + " must share shape [B, heads, L, d_head]");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.shape()[3]));
  Tensor scores = ops::scale(g, ops::matmul(g, q, ops::transpose(g, k)), inv_sqrt);
  scores = ops::add_key_mask(g, scores, key_mask);
  Tensor weights = ops::softmax(g, scores, 3);
  return {ops::matmul(g, weights, v), weights};
}

SequenceEncoding encode(Graph& g, const EncoderParams& params, const EncoderConfig& config, const TokenBatch& batch,
                        Rng* dropout_rng) {
  const std::size_t b = batch.batch;
  const std::size_t len = batch.length;
  const std::size_t h = config.d_model;
  const std::size_t heads = config.n_heads;
  const std::size_t dh = h / heads;
  if (len > config.max_len) {
    throw LengthError("encode: sequence length " + std::to_string(len) + " exceeds max_len " +
                      std::to_string(config.max_len));
  }
  if (b == 0 || len == 0 || batch.ids.size() != b * len || batch.mask.size() != b * len) {
    throw InputError("encode: token batch is empty or ids/mask sizes disagree with [" + std::to_string(b) + "," +
                     std::to_string(len) + "]");
  }
  for (std::size_t r = 0; r < b; ++r) {
    if (batch.ids[r * len] != config.cls_id || !batch.mask[r * len]) {
      throw InputError("encode: row " + std::to_string(r) + " does not begin with the CLS token");
    }
    for (std::size_t t = 0; t < len; ++t) {
      if (!batch.mask[r * len + t] && batch.ids[r * len + t] != config.pad_id) {
        throw InputError("encode: masked position " + std::to_string(t) + " in row " + std::to_string(r) +
                         " does not hold the pad id");
      }
    }
  }
  const bool use_dropout = config.dropout > 0.0 && dropout_rng != nullptr;

  std::vector<int> positions(b * len);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t t = 0; t < len; ++t) positions[r * len + t] = static_cast<int>(t);

  Tensor x = ops::add(g, ops::embedding(g, params.token_embedding, batch.ids),
                      ops::embedding(g, params.position_embedding, positions));
  x = ops::reshape(g, x, {b, len, h});

  static constexpr std::array<std::size_t, 4> kSplit{0, 2, 1, 3};
  auto split_heads = [&](const Tensor& t) { return ops::permute(g, ops::reshape(g, t, {b, len, heads, dh}), kSplit); };

  for (const auto& layer : params.layers) {
    Tensor n1 = ops::layer_norm(g, x, layer.ln1_gain, layer.ln1_bias, config.layer_norm_eps);
    Tensor q = split_heads(ops::matmul(g, n1, layer.wq));
    Tensor k = split_heads(ops::matmul(g, n1, layer.wk));
    Tensor v = split_heads(ops::matmul(g, n1, layer.wv));
    Tensor att = attention(g, q, k, v, batch.mask).output;
    Tensor merged = ops::reshape(g, ops::permute(g, att, kSplit), {b, len, h});
    Tensor attn_out = ops::matmul(g, merged, layer.wo);
    if (use_dropout) attn_out = ops::dropout(g, attn_out, config.dropout, *dropout_rng);
    x = ops::add(g, x, attn_out);

    Tensor n2 = ops::layer_norm(g, x, layer.ln2_gain, layer.ln2_bias, config.layer_norm_eps);
    Tensor hidden = ops::gelu(g, ops::add_bias(g, ops::matmul(g, n2, layer.w1), layer.b1));
    Tensor ff_out = ops::add_bias(g, ops::matmul(g, hidden, layer.w2), layer.b2);
    if (use_dropout) ff_out = ops::dropout(g, ff_out, config.dropout, *dropout_rng);
    x = ops::add(g, x, ff_out);
  }
  Tensor tokens = ops::layer_norm(g, x, params.final_gain, params.final_bias, config.layer_norm_eps);
  Tensor cls = ops::select(g, tokens, 1, 0);
  return {cls, tokens};
}

}  // namespace xeroalign
