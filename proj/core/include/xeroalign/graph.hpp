#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "xeroalign/tensor.hpp"

namespace xeroalign {

enum class OpKind {
  kMatmul,
  kTranspose,
  kReshape,
  kPermute,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kAddBias,
  kRelu,
  kGelu,
  kSoftmax,
  kLayerNorm,
  kEmbedding,
  kSelect,
  kSlice,
  kKeyMask,
  kDropout,
  kSum,
  kMean,
  kMse,
  kCrossEntropy,
  kCustom,
};

std::string_view op_name(OpKind kind);

/// Define-by-run tape. Nodes are appended in execution order, so every
/// parent precedes its children and backward is a single reverse sweep.
///
/// A Graph and the tensors it produced must stay on one thread. Parameters
/// (leaves) are not nodes: backward closures accumulate into them directly.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Node {
    OpKind kind;
    std::vector<int> parents;  // node ids; leaves are not listed
    Tensor output;
    BackwardFn backward;
  };

  // A non-recording graph evaluates ops without keeping a tape (inference).
  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  // True when a node must be recorded for an op over `inputs`.
  bool should_record(std::span<const Tensor> inputs) const;
  bool should_record(std::initializer_list<Tensor> inputs) const {
    return should_record(std::span<const Tensor>(inputs.begin(), inputs.size()));
  }

  // Appends a node. `output` becomes a graph result with requires_grad=true.
  // `backward` receives d(loss)/d(output) and must accumulate into the
  // gradient buffers of the inputs that require gradients.
  Tensor record(OpKind kind, Tensor output, std::span<const Tensor> inputs, BackwardFn backward);
  Tensor record(OpKind kind, Tensor output, std::initializer_list<Tensor> inputs,
                BackwardFn backward) {
    return record(kind, std::move(output), std::span<const Tensor>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  // Reverse sweep from a scalar loss. Intermediate gradients are reset at the
  // start of each call; leaf gradients accumulate across calls.
  void backward(const Tensor& loss);

  // Throws if `t` was produced by another graph.
  void check_owned(const Tensor& t) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }

 private:
  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace xeroalign
