#include "minikd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace minikd {

Vocab Vocab::symbols(int letter_count) {
  if (letter_count < 1) throw ConfigError("vocab needs at least one symbol");
  Vocab v;
  v.tokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (int i = 0; i < letter_count; ++i) {
    if (i < 26) {
      v.tokens.push_back(std::string(1, static_cast<char>('a' + i)));
    } else {
      v.tokens.push_back("s" + std::to_string(i));
    }
  }
  for (int i = 0; i < v.size(); ++i) v.ids[v.tokens[i]] = i;
  return v;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string piece;
  while (is >> piece) {
    auto it = vocab.ids.find(piece);
    out.push_back(it == vocab.ids.end() ? Vocab::kUnk : it->second);
  }
  return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab.size()) {
      throw std::out_of_range("detokenize: id " + std::to_string(ids[i]) + " outside vocab");
    }
    if (i) out += ' ';
    out += vocab.tokens[ids[i]];
  }
  return out;
}

std::size_t GeneralCorpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& doc : documents) n += doc.size();
  return n;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> sample_consecutive_pairs(
    const GeneralCorpus& corpus, int n, std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    const auto& doc = corpus.documents[d];
    for (std::size_t s = 0; s + 1 < doc.size(); ++s) eligible.emplace_back(d, s);
  }
  if (eligible.empty()) {
    throw std::invalid_argument("sample_consecutive_pairs: no document has two sentences");
  }
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto [d, s] = eligible[pick(rng)];
    out.emplace_back(corpus.documents[d][s], corpus.documents[d][s + 1]);
  }
  return out;
}

MaskedSequence mask_tokens(const std::vector<int>& sequence, const Vocab& vocab, double rate,
                           std::mt19937_64& rng) {
  if (rate <= 0.0 || rate >= 1.0) {
    throw std::invalid_argument("mask_tokens: rate must be in (0, 1)");
  }
  if (vocab.symbol_count() < 1) throw ConfigError("mask_tokens: vocab has no symbols");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_symbol(Vocab::kFirstSymbol, vocab.size() - 1);
  MaskedSequence out;
  out.tokens = sequence;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (vocab.is_special(sequence[i])) continue;
    if (unit(rng) >= rate) continue;
    out.positions.push_back(static_cast<int>(i));
    out.originals.push_back(sequence[i]);
    const double roll = unit(rng);
    if (roll < 0.8) {
      out.tokens[i] = Vocab::kMask;
    } else if (roll < 0.9) {
      out.tokens[i] = random_symbol(rng);
    }  // else unchanged
  }
  return out;
}

namespace {

EncodedInput frame_item(const BatchItem& item, int max_len, bool pair_mode) {
  const bool pair = pair_mode && !item.text_b.empty();
  std::vector<int> a = item.text_a;
  std::vector<int> b = pair ? item.text_b : std::vector<int>{};
  const int frame = pair ? 3 : 2;  // [CLS] .. [SEP] (.. [SEP])
  // Overlong inputs lose B from the back first, then A.
  while (static_cast<int>(a.size() + b.size()) + frame > max_len) {
    if (!b.empty()) {
      b.pop_back();
    } else if (!a.empty()) {
      a.pop_back();
    } else {
      throw std::invalid_argument("build_batch: max_len too small for framing");
    }
  }
  EncodedInput e;
  e.token_ids.push_back(Vocab::kCls);
  e.segment_ids.push_back(0);
  for (int t : a) {
    e.token_ids.push_back(t);
    e.segment_ids.push_back(0);
  }
  e.token_ids.push_back(Vocab::kSep);
  e.segment_ids.push_back(0);
  if (pair) {
    for (int t : b) {
      e.token_ids.push_back(t);
      e.segment_ids.push_back(1);
    }
    e.token_ids.push_back(Vocab::kSep);
    e.segment_ids.push_back(1);
  }
  e.attention_valid.assign(e.token_ids.size(), 1);
  e.has_label = item.has_label;
  e.label_class = item.label_class;
  e.label_value = item.label_value;
  return e;
}

}  // namespace

Batch build_batch(const std::vector<BatchItem>& items, const Vocab& vocab, int max_len,
                  bool pair_mode) {
  (void)vocab;  // special ids are fixed; kept in the signature for symmetry with loaders
  if (items.empty()) throw std::invalid_argument("build_batch: empty item list");
  Batch batch;
  std::size_t width = 0;
  for (const BatchItem& item : items) {
    batch.items.push_back(frame_item(item, max_len, pair_mode));
    width = std::max(width, batch.items.back().token_ids.size());
  }
  for (EncodedInput& e : batch.items) {
    while (e.token_ids.size() < width) {
      e.token_ids.push_back(Vocab::kPad);
      e.segment_ids.push_back(0);
      e.attention_valid.push_back(0);
    }
  }
  batch.seq_len = width;
  return batch;
}

std::pair<std::vector<int>, std::vector<int>> strip_framing(const EncodedInput& input,
                                                            const Vocab& vocab) {
  (void)vocab;
  std::vector<int> a, b;
  std::vector<int>* cur = &a;
  for (std::size_t i = 0; i < input.token_ids.size(); ++i) {
    const int t = input.token_ids[i];
    if (!input.attention_valid.empty() && !input.attention_valid[i]) break;
    if (t == Vocab::kPad) break;
    if (t == Vocab::kCls) continue;
    if (t == Vocab::kSep) {
      cur = &b;
      continue;
    }
    cur->push_back(t);
  }
  return {a, b};
}

void SyntheticTaskSpec::validate() const {
  if (letter_count < 2 || designated_count < 1 || designated_count >= letter_count) {
    throw ConfigError("synthetic spec: designated class must be a proper non-empty subset");
  }
  if (general_len_min < 1 || task_len_min < 1 || ood_len_min < 1 ||
      general_len_max < general_len_min || task_len_max < task_len_min ||
      ood_len_max < ood_len_min) {
    throw ConfigError("synthetic spec: degenerate length ranges");
  }
  if (general_documents < 1 || sentences_per_document < 2) {
    throw ConfigError("synthetic spec: corpus needs documents with at least two sentences");
  }
  if (train_examples < 2 || dev_examples < 1 || ood_examples < 1) {
    throw ConfigError("synthetic spec: splits must be non-empty");
  }
  if (majority_margin < 0.0 || majority_margin >= 0.5) {
    throw ConfigError("synthetic spec: majority_margin must be in [0, 0.5)");
  }
  if (majority_band <= 0.0) {
    throw ConfigError("synthetic spec: majority_band must be positive");
  }
}

int majority_label(const std::vector<int>& tokens, const Vocab& vocab, int designated_count) {
  int watched = 0, other = 0;
  for (int t : tokens) {
    if (vocab.is_special(t)) continue;
    if (t < Vocab::kFirstSymbol + designated_count) {
      ++watched;
    } else {
      ++other;
    }
  }
  return watched > other ? 1 : 0;
}

namespace {

// One sequence with a designated-class fraction near p; symbol identity
// within each class is drawn from `weights` (uniform when empty).
std::vector<int> draw_sequence(int len, double p, const Vocab& vocab, int designated_count,
                               const std::vector<double>& watched_w,
                               const std::vector<double>& other_w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&rng](int base, int count, const std::vector<double>& w) {
    if (w.empty()) {
      std::uniform_int_distribution<int> u(0, count - 1);
      return base + u(rng);
    }
    std::discrete_distribution<int> d(w.begin(), w.end());
    return base + d(rng);
  };
  const int other_count = vocab.symbol_count() - designated_count;
  std::vector<int> seq(static_cast<std::size_t>(len));
  for (int i = 0; i < len; ++i) {
    if (unit(rng) < p) {
      seq[i] = pick(Vocab::kFirstSymbol, designated_count, watched_w);
    } else {
      seq[i] = pick(Vocab::kFirstSymbol + designated_count, other_count, other_w);
    }
  }
  return seq;
}

std::vector<double> geometric_weights(int count, double skew) {
  std::vector<double> w(static_cast<std::size_t>(count));
  double cur = 1.0;
  for (int i = 0; i < count; ++i) {
    w[static_cast<std::size_t>(i)] = cur;
    cur *= skew;
  }
  return w;
}

TaskExample draw_labeled(const SyntheticTaskSpec& spec, const Vocab& vocab, int len_min,
                         int len_max, const std::vector<double>& watched_w,
                         const std::vector<double>& other_w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_dist(len_min, len_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw_with_label = [&](int want) {
    const double near = 0.5 + spec.majority_margin;
    const double far = std::min(0.88, near + spec.majority_band);
    const double lo = want ? near : 1.0 - far;
    const double hi = want ? far : 1.0 - near;
    std::uniform_real_distribution<double> pd(lo, hi);
    for (;;) {
      std::vector<int> seq = draw_sequence(len_dist(rng), pd(rng), vocab, spec.designated_count,
                                           watched_w, other_w, rng);
      if (majority_label(seq, vocab, spec.designated_count) == want) return seq;
    }
  };
  TaskExample ex;
  if (spec.pair_task) {
    const int same = unit(rng) < 0.5 ? 1 : 0;
    const int cls_a = unit(rng) < 0.5 ? 1 : 0;
    const int cls_b = same ? cls_a : 1 - cls_a;
    ex.text_a = draw_with_label(cls_a);
    ex.text_b = draw_with_label(cls_b);
    ex.label_class = same;
  } else {
    const int want = unit(rng) < 0.5 ? 1 : 0;
    ex.text_a = draw_with_label(want);
    ex.label_class = want;
  }
  ex.label_value = static_cast<double>(ex.label_class);
  return ex;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.vocab = Vocab::symbols(spec.letter_count);
  std::mt19937_64 rng(spec.seed);

  // General corpus: broad lengths, broad class mix, no margin filter.
  std::uniform_int_distribution<int> glen(spec.general_len_min, spec.general_len_max);
  std::uniform_real_distribution<double> gp(0.2, 0.8);
  for (int d = 0; d < spec.general_documents; ++d) {
    std::vector<std::vector<int>> doc;
    for (int s = 0; s < spec.sentences_per_document; ++s) {
      doc.push_back(draw_sequence(glen(rng), gp(rng), out.vocab, spec.designated_count, {}, {},
                                  rng));
    }
    out.corpus.documents.push_back(std::move(doc));
  }

  out.task.kind = TaskKind::classification;
  out.task.num_labels = 2;
  for (int i = 0; i < spec.train_examples; ++i) {
    out.task.train.push_back(
        draw_labeled(spec, out.vocab, spec.task_len_min, spec.task_len_max, {}, {}, rng));
  }
  for (int i = 0; i < spec.dev_examples; ++i) {
    out.task.dev.push_back(
        draw_labeled(spec, out.vocab, spec.task_len_min, spec.task_len_max, {}, {}, rng));
  }
  const std::vector<double> skew_w = geometric_weights(spec.designated_count, spec.ood_symbol_skew);
  const std::vector<double> skew_o =
      geometric_weights(spec.letter_count - spec.designated_count, spec.ood_symbol_skew);
  for (int i = 0; i < spec.ood_examples; ++i) {
    out.task.ood.push_back(
        draw_labeled(spec, out.vocab, spec.ood_len_min, spec.ood_len_max, skew_w, skew_o, rng));
  }
  return out;
}

TaskDataset subsample_task(const TaskDataset& dataset, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) {
    throw std::invalid_argument("subsample_task: fraction must be in (0, 1]");
  }
  TaskDataset out;
  out.kind = dataset.kind;
  out.num_labels = dataset.num_labels;
  out.dev = dataset.dev;
  out.ood = dataset.ood;
  if (fraction == 1.0) {
    out.train = dataset.train;
    return out;
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.num_labels));
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    const int c = dataset.train[i].label_class;
    if (c < 0 || c >= dataset.num_labels) {
      throw std::invalid_argument("subsample_task: label outside [0, num_labels)");
    }
    by_class[static_cast<std::size_t>(c)].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    const auto want = static_cast<std::size_t>(
        std::llround(static_cast<double>(members.size()) * fraction));
    if (want == 0) {
      throw std::invalid_argument(
          "subsample_task: fraction leaves a class with no examples; use a larger fraction");
    }
    std::shuffle(members.begin(), members.end(), rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<long>(want));
  }
  std::sort(chosen.begin(), chosen.end());  // keep original order for determinism
  for (std::size_t i : chosen) out.train.push_back(dataset.train[i]);
  return out;
}

void save_corpus(const std::string& path, const GeneralCorpus& corpus, const Vocab& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_corpus: cannot write " + path);
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d) os << "\n";
    for (const auto& sentence : corpus.documents[d]) {
      os << detokenize(sentence, vocab) << "\n";
    }
  }
}

GeneralCorpus load_corpus(const std::string& path, const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_corpus: cannot read " + path);
  GeneralCorpus corpus;
  std::vector<std::vector<int>> doc;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) {
      if (!doc.empty()) corpus.documents.push_back(std::move(doc));
      doc = {};
      continue;
    }
    std::vector<int> sentence = tokenize(line, vocab);
    if (!sentence.empty()) doc.push_back(std::move(sentence));
  }
  if (!doc.empty()) corpus.documents.push_back(std::move(doc));
  return corpus;
}

void save_task_split(const std::string& path, const std::vector<TaskExample>& split,
                     TaskKind kind, const Vocab& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_task_split: cannot write " + path);
  for (const TaskExample& ex : split) {
    os << detokenize(ex.text_a, vocab);
    if (!ex.text_b.empty()) os << "\t" << detokenize(ex.text_b, vocab);
    if (kind == TaskKind::regression) {
      os << "\t" << ex.label_value << "\n";
    } else {
      os << "\t" << ex.label_class << "\n";
    }
  }
}

std::vector<TaskExample> load_task_split(const std::string& path, TaskKind kind,
                                         const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_task_split: cannot read " + path);
  std::vector<TaskExample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw std::runtime_error("load_task_split: malformed line in " + path);
    }
    TaskExample ex;
    ex.text_a = tokenize(fields[0], vocab);
    if (fields.size() == 3) ex.text_b = tokenize(fields[1], vocab);
    const std::string& label = fields.back();
    if (kind == TaskKind::regression) {
      ex.label_value = std::stod(label);
    } else {
      ex.label_class = std::stoi(label);
      ex.label_value = static_cast<double>(ex.label_class);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace minikd
