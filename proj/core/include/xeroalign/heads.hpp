#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xeroalign/encoder.hpp"
#include "xeroalign/graph.hpp"
#include "xeroalign/tensor.hpp"

namespace xeroalign {

// One linear layer per task, no hidden layers.
struct HeadParams {
  Tensor intent_w;  // [d_model, n_intents]
  Tensor intent_b;  // [n_intents]
  Tensor slot_w;    // [d_model, n_slot_tags]
  Tensor slot_b;    // [n_slot_tags]

  std::size_t n_intents() const { return intent_b.numel(); }
  std::size_t n_slot_tags() const { return slot_b.numel(); }
  std::vector<NamedTensor> named() const;
};

HeadParams init_heads(std::size_t d_model, std::size_t n_intents, std::size_t n_slot_tags, std::uint64_t seed);

// cls[B, H] -> [B, n_intents]
Tensor intent_logits(Graph& g, const Tensor& cls, const HeadParams& heads);
// tokens[B, L, H] -> [B, L, n_slot_tags]
Tensor slot_logits(Graph& g, const Tensor& tokens, const HeadParams& heads);

struct TaskTargets {
  std::vector<int> intents;                // [B]
  std::optional<std::vector<int>> slots;   // [B * L], kIgnoreIndex at CLS and pad positions
};

struct TaskLoss {
  Tensor task;    // intent + slot
  Tensor intent;
  Tensor slot;    // undefined when the batch carries no slot targets
};

TaskLoss task_loss(Graph& g, const SequenceEncoding& encoding, const HeadParams& heads, const TaskTargets& targets);

// mse(cls_source, cls_target). Rows are parallel pairs.
Tensor xero_align_loss(Graph& g, const Tensor& cls_source, const Tensor& cls_target);

// task + lambda * align
Tensor total_loss(Graph& g, const Tensor& task, const Tensor& align, double lambda);

struct LossBundle {
  double task_loss = 0.0;
  double align_loss = 0.0;  // 0 when alignment is disabled
  double total_loss = 0.0;
  double intent_loss = 0.0;
  double slot_loss = 0.0;
};

}  // namespace xeroalign
