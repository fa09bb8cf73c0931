#include "minikd/runconfig.hpp"

#include <fstream>

#include <json.hpp>

namespace minikd {

namespace {

using nlohmann::json;

TaskKind parse_task_kind(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw ConfigError("config: unknown task_kind '" + s + "'");
}

TeacherKind parse_teacher_kind(const std::string& s) {
  if (s == "pretrained") return TeacherKind::pretrained;
  if (s == "finetuned") return TeacherKind::finetuned;
  throw ConfigError("config: unknown teacher kind '" + s + "'");
}

DataKind parse_data_kind(const std::string& s) {
  if (s == "general") return DataKind::general;
  if (s == "task") return DataKind::task;
  throw ConfigError("config: unknown data kind '" + s + "'");
}

ModelConfig parse_model(const json& j) {
  ModelConfig c;
  c.num_layers = j.value("num_layers", c.num_layers);
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.ffn_size = j.value("ffn_size", c.ffn_size);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.vocab_size = j.value("vocab_size", 0);  // 0: infer from data
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.type_vocab_size = j.value("type_vocab_size", c.type_vocab_size);
  c.num_labels = j.value("num_labels", c.num_labels);
  c.task_kind = parse_task_kind(j.value("task_kind", std::string("classification")));
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
  return c;
}

OptimizerConfig parse_optimizer(const json& j) {
  OptimizerConfig o;
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.batch_size = j.value("batch_size", o.batch_size);
  o.warmup_steps = j.value("warmup_steps", o.warmup_steps);
  o.warmup_proportion = j.value("warmup_proportion", o.warmup_proportion);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.epsilon = j.value("epsilon", o.epsilon);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.seed = j.value("seed", o.seed);
  o.validate();
  return o;
}

SyntheticTaskSpec parse_synthetic(const json& j) {
  SyntheticTaskSpec s;
  s.letter_count = j.value("letter_count", s.letter_count);
  s.designated_count = j.value("designated_count", s.designated_count);
  s.general_documents = j.value("general_documents", s.general_documents);
  s.sentences_per_document = j.value("sentences_per_document", s.sentences_per_document);
  s.general_len_min = j.value("general_len_min", s.general_len_min);
  s.general_len_max = j.value("general_len_max", s.general_len_max);
  s.train_examples = j.value("train_examples", s.train_examples);
  s.dev_examples = j.value("dev_examples", s.dev_examples);
  s.ood_examples = j.value("ood_examples", s.ood_examples);
  s.task_len_min = j.value("task_len_min", s.task_len_min);
  s.task_len_max = j.value("task_len_max", s.task_len_max);
  s.ood_len_min = j.value("ood_len_min", s.ood_len_min);
  s.ood_len_max = j.value("ood_len_max", s.ood_len_max);
  s.majority_margin = j.value("majority_margin", s.majority_margin);
  s.majority_band = j.value("majority_band", s.majority_band);
  s.ood_symbol_skew = j.value("ood_symbol_skew", s.ood_symbol_skew);
  s.pair_task = j.value("pair_task", s.pair_task);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

TrainBlock parse_train_block(const json& j, int default_steps, double default_lr) {
  TrainBlock block;
  block.steps = default_steps;
  block.optimizer.learning_rate = default_lr;
  if (j.is_null()) return block;
  block.steps = j.value("steps", block.steps);
  if (j.contains("optimizer")) {
    block.optimizer = parse_optimizer(j["optimizer"]);
  }
  return block;
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot read " + path);
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }

  RunConfig c;
  c.config_version = j.value("config_version", 1);
  if (c.config_version != 1) {
    throw ConfigError("config: unsupported config_version " +
                      std::to_string(c.config_version));
  }
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", std::string());
  c.eval_interval = j.value("eval_interval", 0);
  c.temperature = j.value("temperature", 1.0);
  if (j.contains("teacher")) c.teacher = parse_model(j["teacher"]);
  if (j.contains("student")) c.student = parse_model(j["student"]);

  if (j.contains("data")) {
    const json& d = j["data"];
    if (d.contains("synthetic")) {
      c.data.synthetic = true;
      c.data.synthetic_spec = parse_synthetic(d["synthetic"]);
      c.data.letters = c.data.synthetic_spec.letter_count;
    } else {
      c.data.synthetic = false;
      c.data.corpus_path = d.value("corpus_path", std::string());
      c.data.task_dir = d.value("task_dir", std::string());
      c.data.letters = d.value("letters", c.data.letters);
      c.data.task_kind = parse_task_kind(d.value("task_kind", std::string("classification")));
      c.data.num_labels = d.value("num_labels", 2);
      if (c.data.corpus_path.empty() || c.data.task_dir.empty()) {
        throw ConfigError("config: file-mode data needs corpus_path and task_dir");
      }
    }
  }

  c.pretrained_ckpt = j.value("pretrained_ckpt", std::string());
  c.finetuned_ckpt = j.value("finetuned_ckpt", std::string());
  c.pretrain = parse_train_block(j.contains("pretrain") ? j["pretrain"] : json(), 300, 1e-3);
  c.finetune = parse_train_block(j.contains("finetune") ? j["finetune"] : json(), 400, 5e-4);

  if (j.contains("schedule")) {
    c.schedule.stages.clear();
    for (const json& js : j["schedule"]) {
      StageSpec st;
      st.name = js.value("name", std::string("stage"));
      st.teacher = parse_teacher_kind(js.value("teacher", std::string("pretrained")));
      st.data = parse_data_kind(js.value("data", std::string("general")));
      st.alpha = js.value("alpha", 0);
      st.steps = js.value("steps", 100);
      st.optimizer = js.contains("optimizer") ? parse_optimizer(js["optimizer"])
                                              : OptimizerConfig{};
      c.schedule.stages.push_back(std::move(st));
    }
  } else {
    c.schedule = default_schedule(c.student.task_kind);
  }
  return c;
}

LoadedData load_data(RunConfig& config) {
  LoadedData data;
  if (config.data.synthetic) {
    SyntheticData gen = generate_synthetic(config.data.synthetic_spec);
    data.vocab = std::move(gen.vocab);
    data.corpus = std::move(gen.corpus);
    data.task = std::move(gen.task);
  } else {
    data.vocab = Vocab::symbols(config.data.letters);
    data.corpus = load_corpus(config.data.corpus_path, data.vocab);
    data.task.kind = config.data.task_kind;
    data.task.num_labels = config.data.num_labels;
    data.task.train = load_task_split(config.data.task_dir + "/train.tsv", data.task.kind,
                                      data.vocab);
    data.task.dev = load_task_split(config.data.task_dir + "/dev.tsv", data.task.kind,
                                    data.vocab);
    const std::string ood_path = config.data.task_dir + "/ood.tsv";
    if (std::ifstream(ood_path).good()) {
      data.task.ood = load_task_split(ood_path, data.task.kind, data.vocab);
    }
  }
  for (ModelConfig* m : {&config.teacher, &config.student}) {
    if (m->vocab_size == 0) {
      m->vocab_size = data.vocab.size();
    } else if (m->vocab_size != data.vocab.size()) {
      throw ConfigError("config: model vocab_size " + std::to_string(m->vocab_size) +
                        " does not match data vocabulary of " +
                        std::to_string(data.vocab.size()));
    }
    m->validate();
  }
  return data;
}

}  // namespace minikd
