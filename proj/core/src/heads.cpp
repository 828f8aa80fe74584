#include "xeroalign/heads.hpp"

#include <string>

#include "xeroalign/errors.hpp"
#include "xeroalign/ops.hpp"
#include "xeroalign/rng.hpp"

namespace xeroalign {
namespace {

constexpr double kInitStd = 0.02;

Tensor random_weight(Rng& rng, Shape shape) {
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = rng.truncated_normal(kInitStd);
  return Tensor(std::move(shape), std::move(values), true);
}

void check_width(const Tensor& x, const Tensor& w, const char* op) {
  if (x.rank() == 0 || x.shape().back() != w.shape()[0]) {
    throw DimensionError(std::string(op) + ": input " + shape_str(x.shape()) + " does not match head weight " +
                         shape_str(w.shape()));
  }
}

}  // namespace

std::vector<NamedTensor> HeadParams::named() const {
  return {{"heads.intent.w", intent_w}, {"heads.intent.b", intent_b}, {"heads.slot.w", slot_w}, {"heads.slot.b", slot_b}};
}

HeadParams init_heads(std::size_t d_model, std::size_t n_intents, std::size_t n_slot_tags, std::uint64_t seed) {
  if (d_model == 0 || n_intents == 0 || n_slot_tags == 0) throw ConfigError("init_heads: sizes must be positive");
  Rng rng(seed, {0x68656164});  // "head"
  HeadParams h;
  h.intent_w = random_weight(rng, {d_model, n_intents});
  h.intent_b = Tensor::zeros({n_intents}, true);
  h.slot_w = random_weight(rng, {d_model, n_slot_tags});
  h.slot_b = Tensor::zeros({n_slot_tags}, true);
  return h;
}

Tensor intent_logits(Graph& g, const Tensor& cls, const HeadParams& heads) {
  if (cls.rank() != 2) throw DimensionError("intent_logits: cls must be [B, H], got " + shape_str(cls.shape()));
  check_width(cls, heads.intent_w, "intent_logits");
  return ops::add_bias(g, ops::matmul(g, cls, heads.intent_w), heads.intent_b);
}

Tensor slot_logits(Graph& g, const Tensor& tokens, const HeadParams& heads) {
  if (tokens.rank() != 3) throw DimensionError("slot_logits: tokens must be [B, L, H], got " + shape_str(tokens.shape()));
  check_width(tokens, heads.slot_w, "slot_logits");
  return ops::add_bias(g, ops::matmul(g, tokens, heads.slot_w), heads.slot_b);
}

TaskLoss task_loss(Graph& g, const SequenceEncoding& encoding, const HeadParams& heads, const TaskTargets& targets) {
  const std::size_t b = encoding.cls.shape()[0];
  if (targets.intents.size() != b) {
    throw InputError("task_loss: " + std::to_string(targets.intents.size()) + " intent targets for a batch of " +
                     std::to_string(b));
  }
  TaskLoss out;
  out.intent = ops::cross_entropy(g, intent_logits(g, encoding.cls, heads), targets.intents);
  out.task = out.intent;
  if (targets.slots) {
    const std::size_t len = encoding.tokens.shape()[1];
    if (targets.slots->size() != b * len) {
      throw InputError("task_loss: " + std::to_string(targets.slots->size()) + " slot targets for [" +
                       std::to_string(b) + "," + std::to_string(len) + "]");
    }
    Tensor logits = slot_logits(g, encoding.tokens, heads);
    logits = ops::reshape(g, logits, {b * len, heads.n_slot_tags()});
    out.slot = ops::cross_entropy(g, logits, *targets.slots);
    out.task = ops::add(g, out.intent, out.slot);
  }
  return out;
}

Tensor xero_align_loss(Graph& g, const Tensor& cls_source, const Tensor& cls_target) {
  if (cls_source.rank() != 2 || cls_target.rank() != 2 || cls_source.shape()[0] != cls_target.shape()[0]) {
    throw InputError("xero_align_loss: pairing mismatch between " + shape_str(cls_source.shape()) + " and " +
                     shape_str(cls_target.shape()));
  }
  return ops::mse(g, cls_source, cls_target);
}

Tensor total_loss(Graph& g, const Tensor& task, const Tensor& align, double lambda) {
  if (task.numel() != 1 || align.numel() != 1) throw RankError("total_loss: both terms must be scalars");
  return ops::add(g, task, ops::scale(g, align, lambda));
}

}  // namespace xeroalign
