#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xeroalign/tensor.hpp"

namespace xeroalign {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

/// Bias-corrected Adam over a fixed, ordered parameter list.
class Adam {
 public:
  explicit Adam(std::vector<NamedTensor> params, AdamConfig config = {});

  // Throws InputError naming the first parameter without a gradient buffer.
  // Gradients are cleared afterwards.
  void step(double lr);

  const AdamConfig& config() const { return config_; }
  const AdamState& state() const { return state_; }
  // Shapes must mirror the parameter list.
  void set_state(AdamState state);
  const std::vector<NamedTensor>& params() const { return params_; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig config_;
  AdamState state_;
};

struct OneCycleSchedule {
  double max_lr = 3e-4;
  std::size_t total_steps = 1;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  double initial_lr() const { return max_lr / div_factor; }
  double final_lr() const { return max_lr / (div_factor * final_div_factor); }
  std::size_t peak_step() const;

  // Cosine ramp initial -> max over [0, peak], cosine anneal max -> final over
  // [peak, total_steps - 1]. Throws for step >= total_steps.
  double lr_at(std::size_t step) const;
  void validate() const;
};

}  // namespace xeroalign
