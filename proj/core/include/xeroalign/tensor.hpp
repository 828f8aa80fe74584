#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xeroalign {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

namespace detail {

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  const Graph* graph = nullptr;  // set for results recorded on a graph
  int node = -1;
};

}  // namespace detail

/// Dense row-major float64 tensor with an optional gradient buffer.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
/// Leaves created with requires_grad=true accumulate gradients across
/// backward passes until zero_grad()/clear_grad() is called.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  // Zero-initialised on first use. Throws for tensors without requires_grad.
  std::span<double> grad_buffer() const;
  void zero_grad() const;
  void clear_grad() const;

  std::optional<int> node_id() const;
  const Graph* graph() const;

  // Deep copy of the values; the result carries no gradient and no graph link.
  Tensor detach() const;
  // Deep copy of values and requires_grad flag, gradient dropped.
  Tensor clone() const;
  bool shares_storage_with(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Graph;
  detail::TensorStorage& storage() const;
  std::shared_ptr<detail::TensorStorage> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace xeroalign
