#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "minikd/schedule.hpp"

using namespace minikd;

TEST_CASE("default schedule is the four-stage curriculum") {
  Schedule s = default_schedule(TaskKind::classification);
  REQUIRE(s.stages.size() == 4);
  CHECK(s.stages[0].name == "GD");
  CHECK(s.stages[0].teacher == TeacherKind::pretrained);
  CHECK(s.stages[0].data == DataKind::general);
  CHECK(s.stages[1].name == "GED");
  CHECK(s.stages[1].teacher == TeacherKind::finetuned);
  CHECK(s.stages[1].data == DataKind::general);
  CHECK(s.stages[2].name == "TAD");
  CHECK(s.stages[2].teacher == TeacherKind::finetuned);
  CHECK(s.stages[2].data == DataKind::task);
  CHECK(s.stages[3].name == "TSD");
  CHECK(s.stages[3].teacher == TeacherKind::finetuned);
  CHECK(s.stages[3].data == DataKind::task);
  const std::vector<int> alphas = {s.stages[0].alpha, s.stages[1].alpha, s.stages[2].alpha,
                                   s.stages[3].alpha};
  CHECK(alphas == std::vector<int>{0, 0, 0, 1});
  CHECK(validate_schedule(s).ok);
}

TEST_CASE("GD directly to TSD changes all three components") {
  Schedule s = default_schedule(TaskKind::classification);
  Schedule bad;
  bad.stages = {s.stages[0], s.stages[3]};
  ScheduleValidation v = validate_schedule(bad);
  CHECK_FALSE(v.ok);
  REQUIRE(v.violations.size() == 1);
  CHECK(v.violations[0].changed == std::vector<std::string>{"teacher", "data", "alpha"});
}

TEST_CASE("single stage schedules have no transitions to violate") {
  Schedule s;
  s.stages = {default_schedule(TaskKind::classification).stages[0]};
  CHECK(validate_schedule(s).ok);
  Schedule empty;
  CHECK_FALSE(validate_schedule(empty).ok);
}

TEST_CASE("exhaustive transition scan over the 2x2x2 stage space") {
  std::vector<StageSpec> space;
  for (TeacherKind t : {TeacherKind::pretrained, TeacherKind::finetuned}) {
    for (DataKind d : {DataKind::general, DataKind::task}) {
      for (int a : {0, 1}) {
        StageSpec st;
        st.name = std::string(to_string(t)) + "/" + to_string(d) + "/" + std::to_string(a);
        st.teacher = t;
        st.data = d;
        st.alpha = a;
        space.push_back(st);
      }
    }
  }
  auto stage_valid = [](const StageSpec& st) {
    return st.alpha == 0 || st.data == DataKind::task;
  };
  int accepted = 0;
  for (const StageSpec& a : space) {
    for (const StageSpec& b : space) {
      Schedule s;
      s.stages = {a, b};
      const int changed = (a.teacher != b.teacher) + (a.data != b.data) + (a.alpha != b.alpha);
      const bool expect = stage_valid(a) && stage_valid(b) && changed == 1;
      CHECK(validate_schedule(s).ok == expect);
      if (expect) ++accepted;
    }
  }
  // 6 internally valid stages; each valid one-component flip is counted once
  // per direction.
  CHECK(accepted == 14);
}

TEST_CASE("alpha on general data is rejected as a per-stage violation") {
  Schedule s = default_schedule(TaskKind::classification);
  s.stages[1].alpha = 1;  // GED carries no labels
  ScheduleValidation v = validate_schedule(s);
  CHECK_FALSE(v.ok);
}

TEST_CASE("ablation drops named stages and keeps the rest in order") {
  Schedule base = default_schedule(TaskKind::classification);
  Schedule no_ged = ablate(base, {"GED"});
  REQUIRE(no_ged.stages.size() == 3);
  CHECK(no_ged.stages[0].name == "GD");
  CHECK(no_ged.stages[1].name == "TAD");
  CHECK(no_ged.stages[2].name == "TSD");

  Schedule no_tad = ablate(base, {"TAD"});
  REQUIRE(no_tad.stages.size() == 3);
  CHECK(no_tad.stages[1].name == "GED");
  CHECK(no_tad.stages[2].name == "TSD");

  CHECK_THROWS_AS(ablate(base, {"GD", "GED", "TAD", "TSD"}), std::invalid_argument);
}

TEST_CASE("ablated schedules may break the one-change rule; validation reports it") {
  Schedule base = default_schedule(TaskKind::classification);
  Schedule dropped = ablate(base, {"GED", "TAD"});  // GD -> TSD
  ScheduleValidation v = validate_schedule(dropped);
  CHECK_FALSE(v.ok);
  CHECK(v.summary().find("3 components") != std::string::npos);
}

TEST_CASE("adam: zero gradient is a fixed point from a fresh state") {
  std::vector<Tensor> params = {Tensor::from_values({2}, {1.0, -2.0}, true)};
  AdamState state = make_adam_state(params);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  for (int i = 1; i <= 5; ++i) {
    params[0].zero_grad();  // all-zero gradient
    adam_step(params, state, opt, i, 10);
  }
  CHECK(params[0].values()[0] == 1.0);
  CHECK(params[0].values()[1] == -2.0);
}

TEST_CASE("adam: moments decay multiplicatively under zero gradient") {
  std::vector<Tensor> params = {Tensor::from_values({1}, {0.5}, true)};
  AdamState state = make_adam_state(params);
  state.m[0][0] = 1.0;
  state.v[0][0] = 1.0;
  OptimizerConfig opt;
  params[0].zero_grad();
  adam_apply(params, state, opt, 0.0);  // lr 0: observe the moment update alone
  CHECK(state.m[0][0] == doctest::Approx(opt.beta1));
  CHECK(state.v[0][0] == doctest::Approx(opt.beta2));
}

TEST_CASE("adam: first step moves by about the learning rate") {
  std::vector<Tensor> params = {Tensor::from_values({1}, {0.0}, true)};
  AdamState state = make_adam_state(params);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  opt.warmup_steps = 1;  // step 1 runs at full learning rate
  params[0].zero_grad();
  params[0].impl()->grad[0] = 1.0;
  adam_step(params, state, opt, 1, 100);
  CHECK(params[0].values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: 1-d quadratic reaches its minimum within 500 steps") {
  std::vector<Tensor> params = {Tensor::from_values({1}, {0.0}, true)};
  AdamState state = make_adam_state(params);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  opt.warmup_proportion = 0.1;
  const long long total = 500;
  for (long long t = 1; t <= total; ++t) {
    const double w = params[0].values()[0];
    params[0].zero_grad();
    params[0].impl()->grad[0] = 2.0 * (w - 3.0);  // d/dw (w-3)^2
    adam_step(params, state, opt, t, total);
  }
  CHECK(params[0].values()[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("learning rate schedule: warmup ramp then linear decay to zero") {
  OptimizerConfig opt;
  opt.learning_rate = 1.0;
  opt.warmup_steps = 10;
  CHECK(lr_at(opt, 1, 100) == doctest::Approx(0.1));
  CHECK(lr_at(opt, 10, 100) == doctest::Approx(1.0));
  CHECK(lr_at(opt, 55, 100) == doctest::Approx(0.5));
  CHECK(lr_at(opt, 100, 100) == doctest::Approx(0.0));

  OptimizerConfig prop;
  prop.learning_rate = 1.0;
  prop.warmup_proportion = 0.1;
  CHECK(lr_at(prop, 5, 100) == doctest::Approx(0.5));
  CHECK(lr_at(prop, 10, 100) == doctest::Approx(1.0));
  CHECK_THROWS_AS(lr_at(prop, 0, 100), std::invalid_argument);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig bad;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = OptimizerConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = OptimizerConfig{};
  bad.warmup_proportion = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
