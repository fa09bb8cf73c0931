#include "minikd/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace minikd {

void OptimizerConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("optimizer: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("optimizer: batch_size must be >= 1");
  if (warmup_steps < 0) throw ConfigError("optimizer: warmup_steps must be >= 0");
  if (warmup_proportion < 0.0 || warmup_proportion > 1.0) {
    throw ConfigError("optimizer: warmup_proportion must be in [0, 1]");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || epsilon <= 0.0) {
    throw ConfigError("optimizer: invalid Adam constants");
  }
}

AdamState make_adam_state(const std::vector<Tensor>& params) {
  AdamState state;
  for (const Tensor& p : params) {
    state.m.emplace_back(p.numel(), 0.0);
    state.v.emplace_back(p.numel(), 0.0);
  }
  return state;
}

double lr_at(const OptimizerConfig& config, long long step_index, long long total_steps) {
  if (step_index < 1) throw std::invalid_argument("lr_at: step_index starts at 1");
  if (total_steps < 1) throw std::invalid_argument("lr_at: total_steps must be >= 1");
  long long warmup = config.warmup_steps;
  if (warmup == 0 && config.warmup_proportion > 0.0) {
    warmup = static_cast<long long>(config.warmup_proportion * static_cast<double>(total_steps));
  }
  if (warmup > 0 && step_index <= warmup) {
    return config.learning_rate * static_cast<double>(step_index) / static_cast<double>(warmup);
  }
  if (step_index >= total_steps) return 0.0;
  const long long remaining = total_steps - warmup;
  if (remaining <= 0) return 0.0;
  return config.learning_rate * static_cast<double>(total_steps - step_index) /
         static_cast<double>(remaining);
}

void adam_apply(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& config,
                double lr) {
  config.validate();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam: state does not match parameter list");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& w = params[p];
    if (state.m[p].size() != w.numel()) {
      throw std::invalid_argument("adam: parameter " + std::to_string(p) + " changed size");
    }
    const bool has_grad = w.has_grad();
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    std::vector<double>& values = w.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? w.grad()[i] : 0.0;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = lr * mhat / (std::sqrt(vhat) + config.epsilon);
      if (config.weight_decay > 0.0) update += lr * config.weight_decay * values[i];
      values[i] -= update;
    }
  }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& config,
               long long step_index, long long total_steps) {
  adam_apply(params, state, config, lr_at(config, step_index, total_steps));
}

}  // namespace minikd
