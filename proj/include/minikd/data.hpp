#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "minikd/transformer.hpp"

namespace minikd {

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kFirstSymbol = 5;

  std::vector<std::string> tokens;            // id -> surface form
  std::unordered_map<std::string, int> ids;   // surface form -> id

  int size() const { return static_cast<int>(tokens.size()); }
  bool is_special(int id) const { return id < kFirstSymbol; }
  int symbol_count() const { return size() - kFirstSymbol; }

  /// Specials plus `letter_count` single-letter symbols.
  static Vocab symbols(int letter_count);
};

std::vector<int> tokenize(const std::string& text, const Vocab& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

/// Documents of sentences; order within a document is meaningful.
struct GeneralCorpus {
  std::vector<std::vector<std::vector<int>>> documents;
  std::size_t sentence_count() const;
};

/// Uniform draws (with replacement) of adjacent sentence pairs; never
/// crosses a document boundary.
std::vector<std::pair<std::vector<int>, std::vector<int>>> sample_consecutive_pairs(
    const GeneralCorpus& corpus, int n, std::mt19937_64& rng);

struct MaskedSequence {
  std::vector<int> tokens;
  std::vector<int> positions;   // which positions were selected
  std::vector<int> originals;   // original ids at those positions
};

/// BERT-style corruption: each non-special position is selected with
/// probability `rate`; a selected position becomes [MASK] 80% of the time,
/// a random symbol 10%, and stays unchanged 10%.
MaskedSequence mask_tokens(const std::vector<int>& sequence, const Vocab& vocab, double rate,
                           std::mt19937_64& rng);

struct BatchItem {
  std::vector<int> text_a;
  std::vector<int> text_b;  // empty when absent
  bool has_label = false;
  int label_class = 0;
  double label_value = 0.0;
};

struct EncodedInput {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<std::uint8_t> attention_valid;
  bool has_label = false;
  int label_class = 0;
  double label_value = 0.0;
};

struct Batch {
  std::vector<EncodedInput> items;
  std::size_t seq_len = 0;
};

/// [CLS] A [SEP] (B [SEP] in pair mode) with segment ids 0/1, right-padded
/// to a common length; overlong items lose B tokens first, then A.
Batch build_batch(const std::vector<BatchItem>& items, const Vocab& vocab, int max_len,
                  bool pair_mode);

/// Recovers (text_a, text_b) from an encoded input; inverse of the framing
/// for items that fit max_len.
std::pair<std::vector<int>, std::vector<int>> strip_framing(const EncodedInput& input,
                                                            const Vocab& vocab);

struct TaskExample {
  std::vector<int> text_a;
  std::vector<int> text_b;
  int label_class = 0;
  double label_value = 0.0;
};

struct TaskDataset {
  TaskKind kind = TaskKind::classification;
  int num_labels = 2;
  std::vector<TaskExample> train, dev, ood;
};

struct SyntheticTaskSpec {
  int letter_count = 20;
  int designated_count = 10;  // first designated_count letters form the watched class
  int general_documents = 150;
  int sentences_per_document = 8;
  int general_len_min = 4;
  int general_len_max = 24;
  int train_examples = 2000;
  int dev_examples = 400;
  int ood_examples = 400;
  int task_len_min = 6;
  int task_len_max = 12;
  int ood_len_min = 14;
  int ood_len_max = 24;
  double majority_margin = 0.15;  // keeps near-tie sequences out
  double majority_band = 0.35;    // width of the class-fraction interval above the margin
  double ood_symbol_skew = 2.0;   // geometric within-class weighting on the ood split
  bool pair_task = false;
  std::uint64_t seed = 1;
  void validate() const;
};

struct SyntheticData {
  Vocab vocab;
  GeneralCorpus corpus;
  TaskDataset task;
};

/// Label 1 iff watched-class symbols outnumber the rest.
int majority_label(const std::vector<int>& tokens, const Vocab& vocab, int designated_count);

/// General corpus plus a labeled task whose train/dev come from one
/// sub-distribution and whose ood split shifts lengths and symbol
/// frequencies under the same labeling rule.
SyntheticData generate_synthetic(const SyntheticTaskSpec& spec);

/// Stratified-by-label subsample of the train split; dev/ood untouched.
TaskDataset subsample_task(const TaskDataset& dataset, double fraction, std::uint64_t seed);

// Plain-text corpus: one sentence per line, blank line between documents.
void save_corpus(const std::string& path, const GeneralCorpus& corpus, const Vocab& vocab);
GeneralCorpus load_corpus(const std::string& path, const Vocab& vocab);

// Task split: one example per line, tab-separated text_a[, text_b], label.
void save_task_split(const std::string& path, const std::vector<TaskExample>& split,
                     TaskKind kind, const Vocab& vocab);
std::vector<TaskExample> load_task_split(const std::string& path, TaskKind kind,
                                         const Vocab& vocab);

}  // namespace minikd
