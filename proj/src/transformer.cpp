#include "minikd/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace minikd {

void ModelConfig::validate() const {
  if (num_layers < 0) throw ConfigError("num_layers must be >= 0");
  if (hidden_size < 1 || ffn_size < 1 || num_heads < 1 || vocab_size < 1 || max_seq_len < 1 ||
      num_labels < 1 || type_vocab_size < 1) {
    throw ConfigError("all model sizes must be >= 1");
  }
  if (hidden_size % num_heads != 0) {
    throw ConfigError("hidden_size " + std::to_string(hidden_size) +
                      " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
  if (layer_norm_eps <= 0.0) throw ConfigError("layer_norm_eps must be positive");
}

std::vector<Tensor> TransformerWeights::parameters() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> TransformerWeights::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("token_emb", token_emb);
  out.emplace_back("pos_emb", pos_emb);
  out.emplace_back("seg_emb", seg_emb);
  out.emplace_back("emb_ln_gain", emb_ln_gain);
  out.emplace_back("emb_ln_bias", emb_ln_bias);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const LayerWeights& lw = layers[l];
    out.emplace_back(p + "wq", lw.wq);
    out.emplace_back(p + "bq", lw.bq);
    out.emplace_back(p + "wk", lw.wk);
    out.emplace_back(p + "bk", lw.bk);
    out.emplace_back(p + "wv", lw.wv);
    out.emplace_back(p + "bv", lw.bv);
    out.emplace_back(p + "wo", lw.wo);
    out.emplace_back(p + "bo", lw.bo);
    out.emplace_back(p + "attn_ln_gain", lw.attn_ln_gain);
    out.emplace_back(p + "attn_ln_bias", lw.attn_ln_bias);
    out.emplace_back(p + "ffn_w1", lw.ffn_w1);
    out.emplace_back(p + "ffn_b1", lw.ffn_b1);
    out.emplace_back(p + "ffn_w2", lw.ffn_w2);
    out.emplace_back(p + "ffn_b2", lw.ffn_b2);
    out.emplace_back(p + "ffn_ln_gain", lw.ffn_ln_gain);
    out.emplace_back(p + "ffn_ln_bias", lw.ffn_ln_bias);
  }
  out.emplace_back("pooler_w", pooler_w);
  out.emplace_back("pooler_b", pooler_b);
  out.emplace_back("task_w", task_w);
  out.emplace_back("task_b", task_b);
  out.emplace_back("mlm_bias", mlm_bias);
  return out;
}

void TransformerWeights::set_requires_grad(bool v) {
  for (auto&& [name, t] : named_parameters()) {
    t.set_requires_grad(v);
  }
}

TransformerWeights init_weights(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = static_cast<std::size_t>(config.hidden_size);
  const std::size_t dff = static_cast<std::size_t>(config.ffn_size);
  const std::size_t v = static_cast<std::size_t>(config.vocab_size);

  auto normal = [&rng](Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    fill_trunc_normal(t, 0.02, rng);
    return t;
  };
  auto zeros = [](Shape shape) { return Tensor::zeros(std::move(shape), true); };
  auto ones = [](Shape shape) { return Tensor::full(std::move(shape), 1.0, true); };

  TransformerWeights w;
  w.token_emb = normal({v, d});
  w.pos_emb = normal({static_cast<std::size_t>(config.max_seq_len), d});
  w.seg_emb = normal({static_cast<std::size_t>(config.type_vocab_size), d});
  w.emb_ln_gain = ones({d});
  w.emb_ln_bias = zeros({d});
  for (int l = 0; l < config.num_layers; ++l) {
    LayerWeights lw;
    lw.wq = normal({d, d});
    lw.bq = zeros({d});
    lw.wk = normal({d, d});
    lw.bk = zeros({d});
    lw.wv = normal({d, d});
    lw.bv = zeros({d});
    lw.wo = normal({d, d});
    lw.bo = zeros({d});
    lw.attn_ln_gain = ones({d});
    lw.attn_ln_bias = zeros({d});
    lw.ffn_w1 = normal({d, dff});
    lw.ffn_b1 = zeros({dff});
    lw.ffn_w2 = normal({dff, d});
    lw.ffn_b2 = zeros({d});
    lw.ffn_ln_gain = ones({d});
    lw.ffn_ln_bias = zeros({d});
    w.layers.push_back(std::move(lw));
  }
  w.pooler_w = normal({d, d});
  w.pooler_b = zeros({d});
  w.task_w = normal({d, static_cast<std::size_t>(config.logit_size())});
  w.task_b = zeros({static_cast<std::size_t>(config.logit_size())});
  w.mlm_bias = zeros({v});
  return w;
}

Tensor embed(const ModelConfig& config, const TransformerWeights& weights,
             const std::vector<int>& token_ids, const std::vector<int>& segment_ids) {
  if (token_ids.empty()) throw std::invalid_argument("embed: empty sequence");
  if (token_ids.size() != segment_ids.size()) {
    throw std::invalid_argument("embed: token/segment length mismatch");
  }
  if (static_cast<int>(token_ids.size()) > config.max_seq_len) {
    throw std::out_of_range("embed: sequence of length " + std::to_string(token_ids.size()) +
                            " exceeds max_seq_len " + std::to_string(config.max_seq_len));
  }
  for (int id : token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::out_of_range("embed: token id " + std::to_string(id) + " outside vocab");
    }
  }
  for (int id : segment_ids) {
    if (id < 0 || id >= config.type_vocab_size) {
      throw std::out_of_range("embed: segment id " + std::to_string(id) + " outside range");
    }
  }
  std::vector<int> positions(token_ids.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);

  Tensor sum = add(add(embedding_rows(weights.token_emb, token_ids),
                       embedding_rows(weights.pos_emb, positions)),
                   embedding_rows(weights.seg_emb, segment_ids));
  return layer_norm(sum, weights.emb_ln_gain, weights.emb_ln_bias, config.layer_norm_eps);
}

std::pair<Tensor, Tensor> mha_layer(const ModelConfig& config, const LayerWeights& layer,
                                    const Tensor& h_prev,
                                    const std::vector<std::uint8_t>& attention_valid,
                                    std::mt19937_64* dropout_rng) {
  const std::size_t dh = static_cast<std::size_t>(config.head_size());
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = add_rowvec(matmul(h_prev, layer.wq), layer.bq);
  Tensor k = add_rowvec(matmul(h_prev, layer.wk), layer.bk);
  Tensor v = add_rowvec(matmul(h_prev, layer.wv), layer.bv);

  std::vector<Tensor> head_attn, head_ctx;
  for (int a = 0; a < config.num_heads; ++a) {
    const std::size_t off = static_cast<std::size_t>(a) * dh;
    Tensor qa = slice_cols(q, off, dh);
    Tensor ka = slice_cols(k, off, dh);
    Tensor va = slice_cols(v, off, dh);
    Tensor scores = scale(matmul(qa, transpose(ka)), inv_sqrt_dh);
    Tensor attn = attention_valid.empty() ? softmax_rows(scores)
                                          : softmax_rows_masked(scores, attention_valid);
    Tensor probs = attn;
    if (config.dropout_rate > 0.0) {
      if (!dropout_rng) throw std::invalid_argument("mha_layer: dropout needs an rng");
      probs = dropout(attn, config.dropout_rate, *dropout_rng);
    }
    head_attn.push_back(attn);
    head_ctx.push_back(matmul(probs, va));
  }
  Tensor ctx = concat_cols(head_ctx);
  Tensor attn_out = add_rowvec(matmul(ctx, layer.wo), layer.bo);
  if (config.dropout_rate > 0.0) attn_out = dropout(attn_out, config.dropout_rate, *dropout_rng);
  Tensor h = layer_norm(add(h_prev, attn_out), layer.attn_ln_gain, layer.attn_ln_bias,
                        config.layer_norm_eps);
  return {stack(head_attn), h};
}

Tensor ffn_layer(const ModelConfig& config, const LayerWeights& layer, const Tensor& h_attn,
                 std::mt19937_64* dropout_rng) {
  Tensor inner = gelu(add_rowvec(matmul(h_attn, layer.ffn_w1), layer.ffn_b1));
  Tensor out = add_rowvec(matmul(inner, layer.ffn_w2), layer.ffn_b2);
  if (config.dropout_rate > 0.0) {
    if (!dropout_rng) throw std::invalid_argument("ffn_layer: dropout needs an rng");
    out = dropout(out, config.dropout_rate, *dropout_rng);
  }
  return layer_norm(add(h_attn, out), layer.ffn_ln_gain, layer.ffn_ln_bias,
                    config.layer_norm_eps);
}

ForwardTrace encoder_forward(const ModelConfig& config, const TransformerWeights& weights,
                             const std::vector<int>& token_ids,
                             const std::vector<int>& segment_ids,
                             const std::vector<std::uint8_t>& attention_valid,
                             std::mt19937_64* dropout_rng) {
  if (!attention_valid.empty() && attention_valid.size() != token_ids.size()) {
    throw std::invalid_argument("encoder_forward: attention mask length mismatch");
  }
  ForwardTrace trace;
  Tensor h = embed(config, weights, token_ids, segment_ids);
  trace.embedding_output = h;
  for (int l = 0; l < config.num_layers; ++l) {
    auto [attn, h_mid] = mha_layer(config, weights.layers[l], h, attention_valid, dropout_rng);
    h = ffn_layer(config, weights.layers[l], h_mid, dropout_rng);
    trace.attentions.push_back(attn);
    trace.hiddens.push_back(h);
  }
  Tensor first = slice_rows(h, 0, 1);
  trace.pooled = tanh_op(add_rowvec(matmul(first, weights.pooler_w), weights.pooler_b));
  trace.logits = add_rowvec(matmul(trace.pooled, weights.task_w), weights.task_b);
  return trace;
}

Tensor mlm_forward(const ModelConfig& config, const TransformerWeights& weights,
                   const std::vector<int>& token_ids, const std::vector<int>& masked_positions,
                   const std::vector<std::uint8_t>& attention_valid,
                   std::mt19937_64* dropout_rng) {
  if (masked_positions.empty()) return Tensor();
  for (int p : masked_positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= token_ids.size()) {
      throw std::out_of_range("mlm_forward: masked position " + std::to_string(p) +
                              " outside sequence of length " + std::to_string(token_ids.size()));
    }
  }
  std::vector<int> segments(token_ids.size(), 0);
  ForwardTrace trace =
      encoder_forward(config, weights, token_ids, segments, attention_valid, dropout_rng);
  Tensor rows = embedding_rows(  // gather the masked hidden rows via position indices
      trace.hiddens.empty() ? trace.embedding_output : trace.hiddens.back(), masked_positions);
  return add_rowvec(matmul(rows, transpose(weights.token_emb)), weights.mlm_bias);
}

long long param_count(const ModelConfig& config) {
  config.validate();
  const long long d = config.hidden_size;
  const long long dff = config.ffn_size;
  const long long emb =
      (static_cast<long long>(config.vocab_size) + config.max_seq_len + config.type_vocab_size) *
          d +
      2 * d;  // tables + embedding layer norm
  const long long per_layer = 4 * (d * d + d)      // QKV + output projection
                              + 2 * (2 * d)        // two layer norms
                              + d * dff + dff      // FFN in
                              + dff * d + d;       // FFN out
  const long long pooler = d * d + d;
  return emb + config.num_layers * per_layer + pooler;
}

long long flop_estimate(const ModelConfig& config, int seq_len) {
  config.validate();
  if (seq_len < 1 || seq_len > config.max_seq_len) {
    throw std::out_of_range("flop_estimate: seq_len outside [1, max_seq_len]");
  }
  const long long s = seq_len;
  const long long d = config.hidden_size;
  const long long dff = config.ffn_size;
  const long long proj = 4 * s * d * d;       // QKV + output projection
  const long long attn = 2 * s * s * d;       // scores and weighted values, all heads
  const long long ffn = 2 * s * d * dff;
  const long long per_layer = proj + attn + ffn;
  const long long head = d * d + d * config.logit_size();  // pooler + task head
  return config.num_layers * per_layer + head;
}

}  // namespace minikd
