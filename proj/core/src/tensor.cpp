#include "xeroalign/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "xeroalign/errors.hpp"

namespace xeroalign {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorStorage>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

detail::TensorStorage& Tensor::storage() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return storage().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return storage().data.size(); }

std::span<const double> Tensor::data() const { return storage().data; }
std::span<double> Tensor::mutable_data() { return storage().data; }

double Tensor::item() const {
  if (numel() != 1) throw RankError("item() on tensor of shape " + shape_str(shape()));
  return storage().data[0];
}

bool Tensor::requires_grad() const { return storage().requires_grad; }
bool Tensor::has_grad() const { return !storage().grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw Error("tensor has no gradient");
  return storage().grad;
}

std::span<double> Tensor::grad_buffer() const {
  auto& s = storage();
  if (!s.requires_grad) throw Error("gradient requested for a tensor without requires_grad");
  if (s.grad.size() != s.data.size()) s.grad.assign(s.data.size(), 0.0);
  return s.grad;
}

void Tensor::zero_grad() const {
  auto g = grad_buffer();
  std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::clear_grad() const {
  auto& s = storage();
  s.grad.clear();
  s.grad.shrink_to_fit();
}

std::optional<int> Tensor::node_id() const {
  if (storage().node < 0) return std::nullopt;
  return storage().node;
}

const Graph* Tensor::graph() const { return storage().graph; }

Tensor Tensor::detach() const { return Tensor(shape(), storage().data, false); }

Tensor Tensor::clone() const { return Tensor(shape(), storage().data, requires_grad()); }

}  // namespace xeroalign
