#pragma once

#include <cstdint>
#include <vector>

#include "minikd/tensor.hpp"

namespace minikd {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int warmup_steps = 0;            // takes precedence when > 0
  double warmup_proportion = 0.0;  // of total steps, used when warmup_steps == 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  void validate() const;
};

/// First/second moment buffers parallel to a fixed parameter list.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  long long step = 0;
};

AdamState make_adam_state(const std::vector<Tensor>& params);

/// Linear warmup to learning_rate, then linear decay to zero at total_steps.
double lr_at(const OptimizerConfig& config, long long step_index, long long total_steps);

/// Bias-corrected Adam update at the given step's scheduled learning rate.
/// Gradients are read from each parameter's grad field; parameters whose
/// gradient was never touched are left unchanged.
void adam_step(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& config,
               long long step_index, long long total_steps);

/// Same update at an explicit learning rate (no schedule).
void adam_apply(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& config,
                double lr);

}  // namespace minikd
