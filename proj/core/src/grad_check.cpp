#include "xeroalign/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "xeroalign/errors.hpp"

namespace xeroalign {
namespace {

double evaluate(const ScalarFn& f, std::span<const Tensor> inputs) {
  Graph g(false);
  return f(g, inputs).item();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, double rel_tol, double abs_tol, double h) {
  for (auto& in : inputs)
    if (in.requires_grad()) in.zero_grad();
  {
    Graph g;
    Tensor loss = f(g, inputs);
    if (loss.numel() != 1) throw RankError("grad_check: function must return a scalar");
    g.backward(loss);
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& in = inputs[i];
    if (!in.requires_grad()) continue;
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto values = in.mutable_data();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      values[e] = saved + h;
      const double up = evaluate(f, inputs);
      values[e] = saved - h;
      const double down = evaluate(f, inputs);
      values[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(analytic[e] - numeric);
      const double magnitude = std::max(std::abs(analytic[e]), std::abs(numeric));
      const double rel_err = magnitude > 0.0 ? abs_err / magnitude : 0.0;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel_err);
      ++report.checked;
      if (abs_err > abs_tol + rel_tol * magnitude) report.failures.push_back({i, e, analytic[e], numeric});
    }
    in.zero_grad();
  }
  return report;
}

}  // namespace xeroalign
