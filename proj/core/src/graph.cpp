#include "xeroalign/graph.hpp"

#include <algorithm>

#include "xeroalign/errors.hpp"

namespace xeroalign {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kPermute: return "permute";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kRelu: return "relu";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kEmbedding: return "embedding";
    case OpKind::kSelect: return "select";
    case OpKind::kSlice: return "slice_rows";
    case OpKind::kKeyMask: return "key_mask";
    case OpKind::kDropout: return "dropout";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kMse: return "mse";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

void Graph::check_owned(const Tensor& t) const {
  const Graph* owner = t.graph();
  if (owner != nullptr && owner != this) {
    throw InputError("tensor was produced by a different graph");
  }
}

bool Graph::should_record(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

Tensor Graph::record(OpKind kind, Tensor output, std::span<const Tensor> inputs, BackwardFn backward) {
  Node node{kind, {}, output, std::move(backward)};
  for (const auto& in : inputs) {
    check_owned(in);
    if (in.graph() == this) node.parents.push_back(*in.node_id());
  }
  auto& s = output.storage();
  s.requires_grad = true;
  s.graph = this;
  s.node = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  return output;
}

void Graph::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw RankError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  check_owned(loss);
  if (loss.graph() != this) {
    // A bare leaf: d(loss)/d(loss) = 1.
    Tensor leaf = loss;
    if (leaf.requires_grad()) leaf.grad_buffer()[0] += 1.0;
    return;
  }
  for (auto& n : nodes_) n.output.clear_grad();
  Tensor root = loss;
  root.grad_buffer()[0] = 1.0;
  const auto last = static_cast<std::ptrdiff_t>(*loss.node_id());
  for (std::ptrdiff_t i = last; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.output.has_grad()) continue;
    n.backward(n.output.grad());
  }
}

}  // namespace xeroalign
