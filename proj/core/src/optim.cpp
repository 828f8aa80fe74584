#include "xeroalign/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xeroalign/errors.hpp"

namespace xeroalign {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) throw InputError("adam: parameter '" + p.name + "' does not require grad");
    state_.m.emplace_back(p.tensor.numel(), 0.0);
    state_.v.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::set_state(AdamState state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw CheckpointError("adam: state holds " + std::to_string(state.m.size()) + " moments for " +
                          std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (state.m[i].size() != params_[i].tensor.numel() || state.v[i].size() != params_[i].tensor.numel()) {
      throw CheckpointError("adam: moment size mismatch for '" + params_[i].name + "'");
    }
  }
  state_ = std::move(state);
}

void Adam::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw InputError("adam: missing gradient for parameter '" + p.name + "'");
  }
  state_.t += 1;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor t = params_[i].tensor;
    auto theta = t.mutable_data();
    const auto grad = t.grad();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad[j] + config_.weight_decay * theta[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      theta[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
    t.zero_grad();
  }
}

void OneCycleSchedule::validate() const {
  if (!(max_lr > 0.0)) throw ConfigError("schedule: max_lr must be positive");
  if (total_steps == 0) throw ConfigError("schedule: total_steps must be positive");
  if (!(pct_start >= 0.0 && pct_start <= 1.0)) throw ConfigError("schedule: pct_start must be in [0, 1]");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) throw ConfigError("schedule: div factors must be positive");
}

std::size_t OneCycleSchedule::peak_step() const {
  const auto p = static_cast<std::size_t>(std::llround(pct_start * static_cast<double>(total_steps)));
  return std::min(p, total_steps - 1);
}

namespace {

// start at f = 0, end at f = 1; both anchors are reproduced exactly.
double cosine(double start, double end, double f) {
  const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * f));
  return start * w + end * (1.0 - w);
}

}  // namespace

double OneCycleSchedule::lr_at(std::size_t step) const {
  if (step >= total_steps) {
    throw InputError("schedule: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + ")");
  }
  const std::size_t peak = peak_step();
  if (step < peak) return cosine(initial_lr(), max_lr, static_cast<double>(step) / static_cast<double>(peak));
  const std::size_t last = total_steps - 1;
  if (last == peak) return max_lr;
  return cosine(max_lr, final_lr(), static_cast<double>(step - peak) / static_cast<double>(last - peak));
}

}  // namespace xeroalign
