#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "minikd/data.hpp"
#include "minikd/distill.hpp"
#include "minikd/report.hpp"
#include "minikd/schedule.hpp"

namespace minikd {

struct TrainReport {
  std::string stage_name;
  std::vector<double> loss_total;
  std::vector<double> loss_latent;
  std::vector<double> loss_soft;  // empty for alpha = 0 stages
  std::vector<double> loss_hard;  // empty for alpha = 0 stages
  std::vector<std::pair<long long, double>> dev_metrics;
  std::string checkpoint_ref;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

/// Class predictions (argmax) for a classification model.
std::vector<int> predict_classes(const ModelConfig& config, const TransformerWeights& weights,
                                 const std::vector<TaskExample>& examples, const Vocab& vocab,
                                 int max_len);

/// Accuracy for classification, Pearson correlation for regression.
double evaluate_split(const ModelConfig& config, const TransformerWeights& weights,
                      const std::vector<TaskExample>& examples, const Vocab& vocab, int max_len);

/// Masked-token pretraining over the general corpus; the produced weights
/// are the pretrained teacher T_g (caller freezes them for distillation).
TransformerWeights pretrain_teacher(const ModelConfig& config, const GeneralCorpus& corpus,
                                    const Vocab& vocab, const OptimizerConfig& opt, int steps,
                                    std::uint64_t seed, TrainReport* report = nullptr);

struct FinetuneResult {
  TransformerWeights weights;
  double dev_metric = 0.0;
  TrainReport report;
};

/// Hard-label training from a pretrained checkpoint; the input weights are
/// left untouched and the result is a fresh copy (T_f).
FinetuneResult finetune_teacher(const ModelConfig& config, const TransformerWeights& pretrained,
                                const TaskDataset& task, const Vocab& vocab, int max_len,
                                const OptimizerConfig& opt, int steps, std::uint64_t seed);

/// Everything a distillation stage needs. Teachers are read-only; student
/// and mapping parameters are updated in place.
struct DistillContext {
  ModelConfig teacher_config;
  ModelConfig student_config;
  const TransformerWeights* pretrained_teacher = nullptr;
  const TransformerWeights* finetuned_teacher = nullptr;
  TransformerWeights* student = nullptr;
  MappingParams* maps = nullptr;
  const Vocab* vocab = nullptr;
  const GeneralCorpus* corpus = nullptr;
  const TaskDataset* task = nullptr;
  int max_len = 32;
  double temperature = 1.0;
  int eval_interval = 0;            // steps between dev evaluations; 0 disables
  MetricsWriter* metrics = nullptr;  // optional streaming TSV output
};

TrainReport train_stage(const StageSpec& stage, DistillContext& ctx, std::uint64_t seed);

struct PipelineResult {
  std::vector<TrainReport> stage_reports;
  std::string validation_summary;
  double final_dev = 0.0;
  double final_ood = 0.0;
};

/// Runs the stages in order, threading the student through. Strict mode
/// refuses schedules that break the one-change rule; advisory mode (for
/// ablations) runs them and carries the violation report along.
PipelineResult run_pipeline(const Schedule& schedule, DistillContext& ctx, std::uint64_t seed,
                            bool strict_validation = true);

}  // namespace minikd
