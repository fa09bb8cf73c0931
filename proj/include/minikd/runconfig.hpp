#pragma once

#include <string>

#include "minikd/data.hpp"
#include "minikd/schedule.hpp"

namespace minikd {

struct DataConfig {
  bool synthetic = true;
  SyntheticTaskSpec synthetic_spec;
  // File mode: corpus + task splits on disk, symbol vocabulary of `letters`.
  std::string corpus_path;
  std::string task_dir;
  int letters = 20;
  TaskKind task_kind = TaskKind::classification;
  int num_labels = 2;
};

struct TrainBlock {
  int steps = 200;
  OptimizerConfig optimizer;
};

/// One experiment: models, data, teacher checkpoints, curriculum.
/// Serialized as versioned JSON (see configs/ for the documented schema).
struct RunConfig {
  int config_version = 1;
  std::uint64_t seed = 1;
  std::string output_dir;
  int eval_interval = 0;
  double temperature = 1.0;
  ModelConfig teacher;
  ModelConfig student;
  DataConfig data;
  std::string pretrained_ckpt;
  std::string finetuned_ckpt;
  TrainBlock pretrain;
  TrainBlock finetune;
  Schedule schedule;  // default four-stage curriculum when absent
};

RunConfig parse_run_config(const std::string& path);

struct LoadedData {
  Vocab vocab;
  GeneralCorpus corpus;
  TaskDataset task;
};

/// Materializes the dataset (generating or loading) and reconciles the
/// model vocab sizes (0 means "infer from data").
LoadedData load_data(RunConfig& config);

}  // namespace minikd
