#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "minikd/ops.hpp"
#include "minikd/tensor.hpp"

namespace minikd {

enum class TaskKind { classification, regression };

struct ModelConfig {
  int num_layers = 2;
  int hidden_size = 32;
  int ffn_size = 64;
  int num_heads = 2;
  int vocab_size = 32;
  int max_seq_len = 32;
  int type_vocab_size = 2;
  int num_labels = 2;
  TaskKind task_kind = TaskKind::classification;
  double dropout_rate = 0.0;
  double layer_norm_eps = 1e-12;

  int head_size() const { return hidden_size / num_heads; }
  int logit_size() const { return task_kind == TaskKind::regression ? 1 : num_labels; }
  void validate() const;
};

struct LayerWeights {
  Tensor wq, bq, wk, bk, wv, bv;  // fused d x d projections, split per head
  Tensor wo, bo;
  Tensor attn_ln_gain, attn_ln_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ffn_ln_gain, ffn_ln_bias;
};

struct TransformerWeights {
  Tensor token_emb, pos_emb, seg_emb;
  Tensor emb_ln_gain, emb_ln_bias;
  std::vector<LayerWeights> layers;
  Tensor pooler_w, pooler_b;
  Tensor task_w, task_b;  // d x num_labels head on the pooled vector
  Tensor mlm_bias;        // vocab bias; MLM logits reuse the token table

  std::vector<Tensor> parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_requires_grad(bool v);
};

/// Truncated normal (std 0.02) matrices, zero biases, unit layer-norm gains.
TransformerWeights init_weights(const ModelConfig& config, std::mt19937_64& rng);

struct ForwardTrace {
  Tensor embedding_output;         // s x d, stored but not distilled
  std::vector<Tensor> attentions;  // per layer, h x s x s
  std::vector<Tensor> hiddens;     // per layer, s x d
  Tensor pooled;                   // 1 x d
  Tensor logits;                   // 1 x logit_size
};

/// Token + position + segment embeddings, layer-normed.
Tensor embed(const ModelConfig& config, const TransformerWeights& weights,
             const std::vector<int>& token_ids, const std::vector<int>& segment_ids);

/// One attention sub-layer: returns the stacked head distributions and the
/// post-layer-norm residual output.
std::pair<Tensor, Tensor> mha_layer(const ModelConfig& config, const LayerWeights& layer,
                                    const Tensor& h_prev,
                                    const std::vector<std::uint8_t>& attention_valid = {},
                                    std::mt19937_64* dropout_rng = nullptr);

Tensor ffn_layer(const ModelConfig& config, const LayerWeights& layer, const Tensor& h_attn,
                 std::mt19937_64* dropout_rng = nullptr);

ForwardTrace encoder_forward(const ModelConfig& config, const TransformerWeights& weights,
                             const std::vector<int>& token_ids,
                             const std::vector<int>& segment_ids,
                             const std::vector<std::uint8_t>& attention_valid = {},
                             std::mt19937_64* dropout_rng = nullptr);

/// Vocabulary logits at the masked positions (|masked| x vocab). Empty
/// tensor when no positions are given.
Tensor mlm_forward(const ModelConfig& config, const TransformerWeights& weights,
                   const std::vector<int>& token_ids, const std::vector<int>& masked_positions,
                   const std::vector<std::uint8_t>& attention_valid = {},
                   std::mt19937_64* dropout_rng = nullptr);

/// Embeddings + encoder layers + pooler; task and MLM heads excluded.
long long param_count(const ModelConfig& config);

/// Multiply-accumulate count of one forward pass at the given length.
long long flop_estimate(const ModelConfig& config, int seq_len);

}  // namespace minikd
