#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minikd/checkpoint.hpp"
#include "minikd/runconfig.hpp"
#include "minikd/trainer.hpp"

namespace fs = std::filesystem;
using namespace minikd;

namespace {

std::string output_dir_for(const RunConfig& config) {
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv("MINIKD_OUT_DIR")) return env;
  return "runs/default";
}

TransformerWeights load_frozen(const std::string& path, const ModelConfig& expect,
                               const char* role) {
  if (path.empty()) {
    throw ConfigError(std::string("config: no ") + role + " checkpoint path given");
  }
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.config.num_layers != expect.num_layers ||
      ckpt.config.hidden_size != expect.hidden_size ||
      ckpt.config.vocab_size != expect.vocab_size) {
    throw ConfigError(std::string("checkpoint ") + path + " does not match the " + role +
                      " model config");
  }
  ckpt.weights.set_requires_grad(false);
  return std::move(ckpt.weights);
}

int cmd_datagen(const std::string& config_path, std::string out) {
  RunConfig config = parse_run_config(config_path);
  if (!config.data.synthetic) {
    throw ConfigError("datagen: config has no synthetic data block");
  }
  LoadedData data = load_data(config);
  if (out.empty()) out = output_dir_for(config);
  fs::create_directories(out);
  save_corpus(out + "/corpus.txt", data.corpus, data.vocab);
  save_task_split(out + "/train.tsv", data.task.train, data.task.kind, data.vocab);
  save_task_split(out + "/dev.tsv", data.task.dev, data.task.kind, data.vocab);
  save_task_split(out + "/ood.tsv", data.task.ood, data.task.kind, data.vocab);
  std::cout << "wrote corpus (" << data.corpus.documents.size() << " documents, "
            << data.corpus.sentence_count() << " sentences) and task splits ("
            << data.task.train.size() << "/" << data.task.dev.size() << "/"
            << data.task.ood.size() << ") to " << out << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, std::string out) {
  RunConfig config = parse_run_config(config_path);
  LoadedData data = load_data(config);
  TrainReport report;
  TransformerWeights weights =
      pretrain_teacher(config.teacher, data.corpus, data.vocab, config.pretrain.optimizer,
                       config.pretrain.steps, config.seed, &report);
  if (out.empty()) out = output_dir_for(config) + "/teacher_pretrained.ckpt";
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  save_checkpoint(out, config.teacher, weights);
  std::cout << "pretrained teacher: " << config.pretrain.steps
            << " steps, final mlm loss " << std::setprecision(4) << report.loss_total.back()
            << ", saved to " << out << "\n";
  return 0;
}

int cmd_finetune(const std::string& config_path, std::string out) {
  RunConfig config = parse_run_config(config_path);
  LoadedData data = load_data(config);
  TransformerWeights pretrained =
      load_frozen(config.pretrained_ckpt, config.teacher, "pretrained-teacher");
  FinetuneResult result =
      finetune_teacher(config.teacher, pretrained, data.task, data.vocab,
                       config.teacher.max_seq_len, config.finetune.optimizer,
                       config.finetune.steps, config.seed);
  if (out.empty()) out = output_dir_for(config) + "/teacher_finetuned.ckpt";
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path());
  save_checkpoint(out, config.teacher, result.weights);
  std::cout << "finetuned teacher: dev metric " << std::setprecision(4) << result.dev_metric
            << ", saved to " << out << "\n";
  return 0;
}

int run_distill(RunConfig& config, const Schedule& schedule, bool strict) {
  if (strict) {
    ScheduleValidation validation = validate_schedule(schedule);
    if (!validation.ok) {
      std::cerr << "schedule rejected: " << validation.summary() << "\n";
      return 1;
    }
  }
  LoadedData data = load_data(config);
  TransformerWeights teacher_pre =
      load_frozen(config.pretrained_ckpt, config.teacher, "pretrained-teacher");
  TransformerWeights teacher_fin;
  bool have_finetuned = !config.finetuned_ckpt.empty();
  if (have_finetuned) {
    teacher_fin = load_frozen(config.finetuned_ckpt, config.teacher, "finetuned-teacher");
  }

  std::mt19937_64 rng(config.seed);
  TransformerWeights student = init_weights(config.student, rng);
  MappingParams maps = MappingParams::make(config.teacher, config.student, true);

  const std::string out = output_dir_for(config);
  fs::create_directories(out);
  MetricsWriter metrics(out + "/metrics.tsv");

  DistillContext ctx;
  ctx.teacher_config = config.teacher;
  ctx.student_config = config.student;
  ctx.pretrained_teacher = &teacher_pre;
  ctx.finetuned_teacher = have_finetuned ? &teacher_fin : nullptr;
  ctx.student = &student;
  ctx.maps = &maps;
  ctx.vocab = &data.vocab;
  ctx.corpus = &data.corpus;
  ctx.task = &data.task;
  ctx.max_len = config.student.max_seq_len;
  ctx.temperature = config.temperature;
  ctx.eval_interval = config.eval_interval;
  ctx.metrics = &metrics;

  PipelineResult result = run_pipeline(schedule, ctx, config.seed, strict);
  if (!result.validation_summary.empty() && result.validation_summary != "ok") {
    std::cerr << "schedule validation (advisory): " << result.validation_summary << "\n";
  }

  const std::string student_path = out + "/student.ckpt";
  save_checkpoint(student_path, config.student, student);

  std::map<std::string, double> summary;
  summary["final_dev"] = result.final_dev;
  summary["final_ood"] = result.final_ood;
  summary["seed"] = static_cast<double>(config.seed);
  double wall = 0.0;
  for (const TrainReport& rep : result.stage_reports) {
    wall += rep.wall_seconds;
    if (!rep.loss_total.empty()) {
      summary["final_loss_" + rep.stage_name] = rep.loss_total.back();
    }
  }
  summary["wall_seconds"] = wall;
  write_summary(out, summary);

  std::cout << "pipeline done: " << result.stage_reports.size() << " stages, final dev "
            << std::setprecision(4) << result.final_dev << ", final ood " << result.final_ood
            << "\n";
  std::cout << "student checkpoint: " << student_path << "\n";
  return 0;
}

int cmd_distill(const std::string& config_path) {
  RunConfig config = parse_run_config(config_path);
  return run_distill(config, config.schedule, /*strict=*/true);
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& drop) {
  RunConfig config = parse_run_config(config_path);
  Schedule schedule = ablate(config.schedule, drop);
  ScheduleValidation validation = validate_schedule(schedule);
  if (!validation.ok) {
    std::cerr << "ablated schedule breaks the one-change rule (running anyway): "
              << validation.summary() << "\n";
  }
  return run_distill(config, schedule, /*strict=*/false);
}

int cmd_evaluate(const std::string& config_path, const std::string& ckpt,
                 const std::string& split) {
  RunConfig config = parse_run_config(config_path);
  LoadedData data = load_data(config);
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  loaded.weights.set_requires_grad(false);
  const std::vector<TaskExample>* examples = nullptr;
  if (split == "dev") {
    examples = &data.task.dev;
  } else if (split == "ood") {
    examples = &data.task.ood;
  } else if (split == "train") {
    examples = &data.task.train;
  } else {
    throw ConfigError("evaluate: unknown split '" + split + "' (train|dev|ood)");
  }
  if (examples->empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  const double metric = evaluate_split(loaded.config, loaded.weights, *examples, data.vocab,
                                       loaded.config.max_seq_len);
  std::cout << split << " metric: " << std::setprecision(6) << metric << "\n";
  return 0;
}

int cmd_paramcount(const std::string& config_path) {
  RunConfig config = parse_run_config(config_path);
  if (config.teacher.vocab_size == 0 || config.student.vocab_size == 0) {
    LoadedData data = load_data(config);  // fills vocab sizes
    (void)data;
  }
  for (auto& [label, model] :
       {std::pair<const char*, ModelConfig&>{"teacher", config.teacher},
        std::pair<const char*, ModelConfig&>{"student", config.student}}) {
    const long long params = param_count(model);
    const long long flops = flop_estimate(model, model.max_seq_len);
    std::cout << label << ": params " << params << " (" << std::setprecision(4)
              << static_cast<double>(params) / 1e6 << "M), forward MACs at s="
              << model.max_seq_len << ": " << flops << "\n";
  }
  const double ratio = static_cast<double>(flop_estimate(config.teacher,
                                                         config.teacher.max_seq_len)) /
                       static_cast<double>(flop_estimate(config.student,
                                                         config.student.max_seq_len));
  std::cout << "teacher/student forward MAC ratio: " << std::setprecision(3) << ratio << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& runs) {
  auto table = aggregate_runs(runs);
  std::cout << std::left << std::setw(24) << "metric" << std::setw(14) << "mean"
            << std::setw(14) << "std" << "n\n";
  for (const auto& [key, agg] : table) {
    std::cout << std::left << std::setw(24) << key << std::setw(14) << std::setprecision(6)
              << agg.mean << std::setw(14) << agg.std_dev << agg.count << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale progressive distillation for transformer encoders"};
  app.require_subcommand(1);

  std::string config_path, out, ckpt, split = "dev";
  std::vector<std::string> drop, runs;

  CLI::App* datagen = app.add_subcommand("datagen", "generate the synthetic corpus and task");
  datagen->add_option("--config", config_path, "run config (json)")->required();
  datagen->add_option("--out", out, "output directory");

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the pretrained teacher (masked-token objective)");
  pretrain->add_option("--config", config_path, "run config (json)")->required();
  pretrain->add_option("--out", out, "checkpoint path");

  CLI::App* finetune =
      app.add_subcommand("finetune-teacher", "finetune the pretrained teacher on task data");
  finetune->add_option("--config", config_path, "run config (json)")->required();
  finetune->add_option("--out", out, "checkpoint path");

  CLI::App* distill = app.add_subcommand("distill", "run the distillation curriculum");
  distill->add_option("--config", config_path, "run config (json)")->required();

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the curriculum with stages removed");
  ablate_cmd->add_option("--config", config_path, "run config (json)")->required();
  ablate_cmd->add_option("--drop", drop, "stage names to remove")->required()->delimiter(',');

  CLI::App* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a task split");
  evaluate->add_option("--config", config_path, "run config (json)")->required();
  evaluate->add_option("--ckpt", ckpt, "checkpoint path")->required();
  evaluate->add_option("--split", split, "train|dev|ood");

  CLI::App* paramcount = app.add_subcommand("paramcount", "analytic parameter and MAC counts");
  paramcount->add_option("--config", config_path, "run config (json)")->required();

  CLI::App* report = app.add_subcommand("report", "aggregate run summaries into mean/std rows");
  report->add_option("--runs", runs, "run directories")->required()->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (datagen->parsed()) return cmd_datagen(config_path, out);
    if (pretrain->parsed()) return cmd_pretrain(config_path, out);
    if (finetune->parsed()) return cmd_finetune(config_path, out);
    if (distill->parsed()) return cmd_distill(config_path);
    if (ablate_cmd->parsed()) return cmd_ablate(config_path, drop);
    if (evaluate->parsed()) return cmd_evaluate(config_path, ckpt, split);
    if (paramcount->parsed()) return cmd_paramcount(config_path);
    if (report->parsed()) return cmd_report(runs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
