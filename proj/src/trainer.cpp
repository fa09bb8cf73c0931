#include "minikd/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <optional>
#include <stdexcept>

#include "minikd/checkpoint.hpp"

namespace minikd {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

BatchItem item_from_example(const TaskExample& ex) {
  BatchItem item;
  item.text_a = ex.text_a;
  item.text_b = ex.text_b;
  item.has_label = true;
  item.label_class = ex.label_class;
  item.label_value = ex.label_value;
  return item;
}

bool pair_shaped(const TaskDataset* task) {
  return task && !task->train.empty() && !task->train.front().text_b.empty();
}

// Uniform sentence positions over the whole corpus.
const std::vector<int>& pick_sentence(const GeneralCorpus& corpus, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> doc_pick(0, corpus.documents.size() - 1);
  for (;;) {
    const auto& doc = corpus.documents[doc_pick(rng)];
    if (doc.empty()) continue;
    std::uniform_int_distribution<std::size_t> sent_pick(0, doc.size() - 1);
    return doc[sent_pick(rng)];
  }
}

Batch sample_general_batch(const GeneralCorpus& corpus, const Vocab& vocab, int batch_size,
                           int max_len, bool pair_inputs, std::mt19937_64& rng) {
  std::vector<BatchItem> items;
  if (pair_inputs) {
    for (auto& [a, b] : sample_consecutive_pairs(corpus, batch_size, rng)) {
      BatchItem item;
      item.text_a = std::move(a);
      item.text_b = std::move(b);
      items.push_back(std::move(item));
    }
  } else {
    for (int i = 0; i < batch_size; ++i) {
      BatchItem item;
      item.text_a = pick_sentence(corpus, rng);
      items.push_back(std::move(item));
    }
  }
  return build_batch(items, vocab, max_len, pair_inputs);
}

Batch sample_task_batch(const TaskDataset& task, const Vocab& vocab, int batch_size, int max_len,
                        std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, task.train.size() - 1);
  std::vector<BatchItem> items;
  bool pair = false;
  for (int i = 0; i < batch_size; ++i) {
    const TaskExample& ex = task.train[pick(rng)];
    pair = pair || !ex.text_b.empty();
    items.push_back(item_from_example(ex));
  }
  return build_batch(items, vocab, max_len, pair);
}

}  // namespace

std::vector<int> predict_classes(const ModelConfig& config, const TransformerWeights& weights,
                                 const std::vector<TaskExample>& examples, const Vocab& vocab,
                                 int max_len) {
  Tape::Pause frozen;
  std::vector<int> preds;
  preds.reserve(examples.size());
  for (const TaskExample& ex : examples) {
    Batch batch = build_batch({item_from_example(ex)}, vocab, max_len, !ex.text_b.empty());
    const EncodedInput& e = batch.items[0];
    ForwardTrace trace =
        encoder_forward(config, weights, e.token_ids, e.segment_ids, e.attention_valid);
    const std::vector<double>& z = trace.logits.values();
    int best = 0;
    for (std::size_t c = 1; c < z.size(); ++c) {
      if (z[c] > z[best]) best = static_cast<int>(c);
    }
    preds.push_back(best);
  }
  return preds;
}

double evaluate_split(const ModelConfig& config, const TransformerWeights& weights,
                      const std::vector<TaskExample>& examples, const Vocab& vocab, int max_len) {
  if (examples.empty()) throw std::invalid_argument("evaluate_split: empty split");
  if (config.task_kind == TaskKind::classification) {
    std::vector<int> labels;
    labels.reserve(examples.size());
    for (const TaskExample& ex : examples) labels.push_back(ex.label_class);
    std::vector<int> correct_preds = predict_classes(config, weights, examples, vocab, max_len);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (correct_preds[i] == labels[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(labels.size());
  }
  Tape::Pause frozen;
  std::vector<double> preds, targets;
  for (const TaskExample& ex : examples) {
    Batch batch = build_batch({item_from_example(ex)}, vocab, max_len, !ex.text_b.empty());
    const EncodedInput& e = batch.items[0];
    ForwardTrace trace =
        encoder_forward(config, weights, e.token_ids, e.segment_ids, e.attention_valid);
    preds.push_back(trace.logits.values()[0]);
    targets.push_back(ex.label_value);
  }
  double sxy = 0, sxx = 0, syy = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mx += preds[i];
    my += targets[i];
  }
  mx /= static_cast<double>(preds.size());
  my /= static_cast<double>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    sxy += (preds[i] - mx) * (targets[i] - my);
    sxx += (preds[i] - mx) * (preds[i] - mx);
    syy += (targets[i] - my) * (targets[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

TransformerWeights pretrain_teacher(const ModelConfig& config, const GeneralCorpus& corpus,
                                    const Vocab& vocab, const OptimizerConfig& opt, int steps,
                                    std::uint64_t seed, TrainReport* report) {
  if (corpus.documents.empty() || corpus.sentence_count() == 0) {
    throw std::invalid_argument("pretrain_teacher: empty corpus");
  }
  opt.validate();
  const double t0 = now_seconds();
  std::mt19937_64 rng(seed);
  std::mt19937_64 dropout_rng(mix_seed(seed, 0xD0));
  TransformerWeights weights = init_weights(config, rng);
  std::vector<Tensor> params = weights.parameters();
  AdamState state = make_adam_state(params);
  const double mask_rate = 0.15;

  if (report) {
    report->stage_name = "pretrain";
    report->seed = seed;
  }
  for (int step = 1; step <= steps; ++step) {
    std::vector<MaskedSequence> batch;
    for (int i = 0; i < opt.batch_size; ++i) {
      std::vector<int> framed;
      framed.push_back(Vocab::kCls);
      const std::vector<int>& sentence = pick_sentence(corpus, rng);
      const std::size_t keep =
          std::min(sentence.size(), static_cast<std::size_t>(config.max_seq_len - 2));
      framed.insert(framed.end(), sentence.begin(), sentence.begin() + static_cast<long>(keep));
      framed.push_back(Vocab::kSep);
      MaskedSequence masked = mask_tokens(framed, vocab, mask_rate, rng);
      if (masked.positions.empty()) {
        // Keep every example contributing: mask one interior token.
        std::uniform_int_distribution<int> pos(1, static_cast<int>(keep));
        const int p = pos(rng);
        masked.positions.push_back(p);
        masked.originals.push_back(masked.tokens[static_cast<std::size_t>(p)]);
        masked.tokens[static_cast<std::size_t>(p)] = Vocab::kMask;
      }
      batch.push_back(std::move(masked));
    }

    Tape tape;
    double loss_value = 0.0;
    {
      Tape::Scope scope(tape);
      Tensor total = Tensor::scalar(0.0);
      std::size_t masked_count = 0;
      std::mt19937_64* drop = config.dropout_rate > 0.0 ? &dropout_rng : nullptr;
      for (const MaskedSequence& ex : batch) {
        Tensor logits = mlm_forward(config, weights, ex.tokens, ex.positions, {}, drop);
        Tensor ce = cross_entropy(logits, ex.originals);
        total = add(total, scale(ce, static_cast<double>(ex.positions.size())));
        masked_count += ex.positions.size();
      }
      Tensor loss = scale(total, 1.0 / static_cast<double>(masked_count));
      loss_value = loss.item();
      tape.backward(loss);
    }
    adam_step(params, state, opt, step, steps);
    for (Tensor& p : params) p.zero_grad();
    if (report) report->loss_total.push_back(loss_value);
  }
  if (report) report->wall_seconds = now_seconds() - t0;
  return weights;
}

FinetuneResult finetune_teacher(const ModelConfig& config, const TransformerWeights& pretrained,
                                const TaskDataset& task, const Vocab& vocab, int max_len,
                                const OptimizerConfig& opt, int steps, std::uint64_t seed) {
  if (task.train.empty()) throw std::invalid_argument("finetune_teacher: no labeled train data");
  opt.validate();
  const double t0 = now_seconds();
  std::mt19937_64 rng(seed);
  std::mt19937_64 dropout_rng(mix_seed(seed, 0xD0));
  FinetuneResult result;
  result.weights = clone_weights(pretrained);
  result.weights.set_requires_grad(true);
  result.report.stage_name = "finetune";
  result.report.seed = seed;

  std::vector<Tensor> params = result.weights.parameters();
  AdamState state = make_adam_state(params);
  for (int step = 1; step <= steps; ++step) {
    Batch batch = sample_task_batch(task, vocab, opt.batch_size, max_len, rng);
    Tape tape;
    double loss_value = 0.0;
    {
      Tape::Scope scope(tape);
      Tensor total = Tensor::scalar(0.0);
      std::mt19937_64* drop = config.dropout_rate > 0.0 ? &dropout_rng : nullptr;
      for (const EncodedInput& e : batch.items) {
        ForwardTrace trace = encoder_forward(config, result.weights, e.token_ids, e.segment_ids,
                                             e.attention_valid, drop);
        HardLabel label{e.label_class, e.label_value};
        total = add(total, hard_label_loss(trace.logits, label, config.task_kind));
      }
      Tensor loss = scale(total, 1.0 / static_cast<double>(batch.items.size()));
      loss_value = loss.item();
      tape.backward(loss);
    }
    adam_step(params, state, opt, step, steps);
    for (Tensor& p : params) p.zero_grad();
    result.report.loss_total.push_back(loss_value);
    result.report.loss_hard.push_back(loss_value);
  }
  result.dev_metric = evaluate_split(config, result.weights, task.dev, vocab, max_len);
  result.report.dev_metrics.emplace_back(steps, result.dev_metric);
  result.report.wall_seconds = now_seconds() - t0;
  return result;
}

TrainReport train_stage(const StageSpec& stage, DistillContext& ctx, std::uint64_t seed) {
  stage.optimizer.validate();
  if (!ctx.student || !ctx.maps || !ctx.vocab) {
    throw std::invalid_argument("train_stage: context is missing student/maps/vocab");
  }
  if (stage.teacher == TeacherKind::pretrained && !ctx.pretrained_teacher) {
    throw std::invalid_argument("train_stage: stage " + stage.name +
                                " needs the pretrained teacher");
  }
  if (stage.teacher == TeacherKind::finetuned && !ctx.finetuned_teacher) {
    throw std::invalid_argument("train_stage: stage " + stage.name +
                                " needs the finetuned teacher");
  }
  if (stage.data == DataKind::general && (!ctx.corpus || ctx.corpus->documents.empty())) {
    throw std::invalid_argument("train_stage: stage " + stage.name + " needs a general corpus");
  }
  if (stage.data == DataKind::task && (!ctx.task || ctx.task->train.empty())) {
    throw std::invalid_argument("train_stage: stage " + stage.name + " needs labeled task data");
  }
  if (stage.alpha == 1 && stage.data != DataKind::task) {
    throw std::invalid_argument("train_stage: alpha=1 stage must run on task data");
  }

  const double t0 = now_seconds();
  std::mt19937_64 rng(seed);
  TrainReport report;
  report.stage_name = stage.name;
  report.seed = seed;

  LayerMap lm = make_layer_map(ctx.teacher_config.num_layers, ctx.student_config.num_layers);
  StageModels models;
  models.teacher_config = &ctx.teacher_config;
  models.pretrained_teacher = ctx.pretrained_teacher;
  models.finetuned_teacher = ctx.finetuned_teacher;
  models.student_config = &ctx.student_config;
  models.student = ctx.student;

  std::vector<Tensor> params = ctx.student->parameters();
  if (ctx.maps->trainable) {
    for (Tensor& p : ctx.maps->parameters()) params.push_back(p);
  }
  AdamState state = make_adam_state(params);
  const bool pair_inputs = pair_shaped(ctx.task);
  std::mt19937_64 dropout_rng(mix_seed(seed, 0xD0));

  for (int step = 1; step <= stage.steps; ++step) {
    Batch batch = stage.data == DataKind::general
                      ? sample_general_batch(*ctx.corpus, *ctx.vocab, stage.optimizer.batch_size,
                                             ctx.max_len, pair_inputs, rng)
                      : sample_task_batch(*ctx.task, *ctx.vocab, stage.optimizer.batch_size,
                                          ctx.max_len, rng);
    Tape tape;
    StageLossValue loss;
    {
      Tape::Scope scope(tape);
      loss = stage_loss(batch, stage.teacher, stage.data, stage.alpha, models, *ctx.maps, lm,
                        ctx.temperature,
                        ctx.student_config.dropout_rate > 0.0 ? &dropout_rng : nullptr);
      tape.backward(loss.total);
    }
    adam_step(params, state, stage.optimizer, step, stage.steps);
    for (Tensor& p : params) p.zero_grad();

    report.loss_total.push_back(loss.total.item());
    report.loss_latent.push_back(loss.latent);
    if (stage.alpha == 1) {
      report.loss_soft.push_back(loss.soft);
      report.loss_hard.push_back(loss.hard);
    }

    const bool eval_now = ctx.eval_interval > 0 && ctx.task && !ctx.task->dev.empty() &&
                          (step % ctx.eval_interval == 0 || step == stage.steps);
    std::optional<double> dev;
    if (eval_now) {
      dev = evaluate_split(ctx.student_config, *ctx.student, ctx.task->dev, *ctx.vocab,
                           ctx.max_len);
      report.dev_metrics.emplace_back(step, *dev);
    }
    if (ctx.metrics) {
      MetricsRow row;
      row.step = step;
      row.stage = stage.name;
      row.loss_total = loss.total.item();
      row.loss_latent = loss.latent;
      row.loss_soft = loss.soft;
      row.loss_hard = loss.hard;
      row.dev_metric = dev;
      row.timestamp = static_cast<std::int64_t>(std::time(nullptr));
      ctx.metrics->append(row);
    }
  }
  report.wall_seconds = now_seconds() - t0;
  return report;
}

PipelineResult run_pipeline(const Schedule& schedule, DistillContext& ctx, std::uint64_t seed,
                            bool strict_validation) {
  ScheduleValidation validation = validate_schedule(schedule);
  PipelineResult result;
  result.validation_summary = validation.summary();
  if (!validation.ok && strict_validation) {
    throw ConfigError("run_pipeline: schedule rejected: " + validation.summary());
  }
  for (std::size_t i = 0; i < schedule.stages.size(); ++i) {
    result.stage_reports.push_back(
        train_stage(schedule.stages[i], ctx, mix_seed(seed, i)));
  }
  if (ctx.task && !ctx.task->dev.empty()) {
    result.final_dev =
        evaluate_split(ctx.student_config, *ctx.student, ctx.task->dev, *ctx.vocab, ctx.max_len);
  }
  if (ctx.task && !ctx.task->ood.empty()) {
    result.final_ood =
        evaluate_split(ctx.student_config, *ctx.student, ctx.task->ood, *ctx.vocab, ctx.max_len);
  }
  return result;
}

}  // namespace minikd
