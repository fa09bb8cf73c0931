#pragma once

#include <string>
#include <vector>

#include "minikd/distill.hpp"
#include "minikd/optimizer.hpp"

namespace minikd {

struct StageSpec {
  std::string name;
  TeacherKind teacher = TeacherKind::pretrained;
  DataKind data = DataKind::general;
  int alpha = 0;
  int steps = 100;
  OptimizerConfig optimizer;
};

struct Schedule {
  std::vector<StageSpec> stages;
};

/// GD -> GED -> TAD -> TSD with desk-scale step budgets and the paper's
/// per-stage optimizer shape (absolute warmup on corpus stages, warmup
/// proportion on task stages).
Schedule default_schedule(TaskKind task_kind);

struct TransitionViolation {
  int transition_index = -1;  // between stages i and i+1; -1 for a per-stage issue
  std::vector<std::string> changed;
  std::string message;
};

struct ScheduleValidation {
  bool ok = true;
  std::vector<TransitionViolation> violations;
  std::string summary() const;
};

/// ok iff every stage is internally valid (alpha=1 only on task data) and
/// every consecutive pair differs in exactly one of {teacher, data, alpha}.
ScheduleValidation validate_schedule(const Schedule& schedule);

/// Removes the named stages. The result may break the one-change rule, as
/// the ablations themselves do; callers validate in advisory mode.
Schedule ablate(const Schedule& base, const std::vector<std::string>& drop_names);

}  // namespace minikd
