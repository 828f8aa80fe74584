#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "xeroalign/graph.hpp"
#include "xeroalign/tensor.hpp"

namespace xeroalign {

struct GradCheckFailure {
  std::size_t input;
  std::size_t element;
  double analytic;
  double numeric;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradCheckFailure> failures;
  bool passed() const { return failures.empty(); }
};

// Builds a scalar from `inputs` on a fresh graph.
using ScalarFn = std::function<Tensor(Graph&, std::span<const Tensor>)>;

/// Compares backward() against central differences (step `h`) for every
/// element of every input with requires_grad. An element fails when
/// |analytic - numeric| > abs_tol + rel_tol * max(|analytic|, |numeric|).
/// Inputs are perturbed in place and restored; their gradients are reset.
GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, double rel_tol, double abs_tol,
                           double h = 1e-5);

}  // namespace xeroalign
