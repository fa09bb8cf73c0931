#include "minikd/schedule.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace minikd {

Schedule default_schedule(TaskKind task_kind) {
  (void)task_kind;  // the four-stage shape is the same for both task kinds
  auto corpus_opt = [](double lr) {
    OptimizerConfig o;
    o.learning_rate = lr;
    o.batch_size = 8;
    o.warmup_steps = 100;
    return o;
  };
  auto task_opt = [](double lr) {
    OptimizerConfig o;
    o.learning_rate = lr;
    o.batch_size = 8;
    o.warmup_proportion = 0.1;
    return o;
  };
  Schedule s;
  s.stages.push_back({"GD", TeacherKind::pretrained, DataKind::general, 0, 2000, corpus_opt(2e-4)});
  s.stages.push_back({"GED", TeacherKind::finetuned, DataKind::general, 0, 2000, corpus_opt(2e-4)});
  s.stages.push_back({"TAD", TeacherKind::finetuned, DataKind::task, 0, 500, task_opt(5e-5)});
  s.stages.push_back({"TSD", TeacherKind::finetuned, DataKind::task, 1, 500, task_opt(3e-5)});
  return s;
}

std::string ScheduleValidation::summary() const {
  if (ok) return "ok";
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].message;
  }
  return os.str();
}

ScheduleValidation validate_schedule(const Schedule& schedule) {
  ScheduleValidation result;
  if (schedule.stages.empty()) {
    result.ok = false;
    result.violations.push_back({-1, {}, "schedule is empty"});
    return result;
  }
  for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
    const StageSpec& st = schedule.stages[i];
    auto stage_issue = [&](const std::string& what) {
      result.ok = false;
      result.violations.push_back(
          {-1, {}, "stage " + std::to_string(i) + " (" + st.name + "): " + what});
    };
    if (st.alpha != 0 && st.alpha != 1) stage_issue("alpha must be 0 or 1");
    if (st.alpha == 1 && st.data != DataKind::task) {
      stage_issue("alpha=1 requires task data (hard labels exist only there)");
    }
    if (st.steps < 1) stage_issue("steps must be >= 1");
    try {
      st.optimizer.validate();
    } catch (const ConfigError& e) {
      stage_issue(e.what());
    }
  }
  for (std::size_t i = 0; i + 1 < schedule.stages.size(); ++i) {
    const StageSpec& a = schedule.stages[i];
    const StageSpec& b = schedule.stages[i + 1];
    std::vector<std::string> changed;
    if (a.teacher != b.teacher) changed.push_back("teacher");
    if (a.data != b.data) changed.push_back("data");
    if (a.alpha != b.alpha) changed.push_back("alpha");
    if (changed.size() == 1) continue;
    result.ok = false;
    std::ostringstream os;
    os << "transition " << a.name << " -> " << b.name << " changes " << changed.size()
       << " components (";
    for (std::size_t c = 0; c < changed.size(); ++c) {
      if (c) os << ", ";
      os << changed[c];
    }
    os << "); exactly one of {teacher, data, alpha} may change between consecutive stages";
    result.violations.push_back({static_cast<int>(i), changed, os.str()});
  }
  return result;
}

Schedule ablate(const Schedule& base, const std::vector<std::string>& drop_names) {
  Schedule out;
  for (const StageSpec& st : base.stages) {
    if (std::find(drop_names.begin(), drop_names.end(), st.name) == drop_names.end()) {
      out.stages.push_back(st);
    }
  }
  if (out.stages.empty()) {
    throw std::invalid_argument("ablate: removing all stages leaves nothing to run");
  }
  return out;
}

}  // namespace minikd
