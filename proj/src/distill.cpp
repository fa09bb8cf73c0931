#include "minikd/distill.hpp"

#include <stdexcept>
#include <string>

namespace minikd {

const char* to_string(TeacherKind k) {
  return k == TeacherKind::pretrained ? "pretrained" : "finetuned";
}

const char* to_string(DataKind k) { return k == DataKind::general ? "general" : "task"; }

int LayerMap::map(int student_layer) const {
  if (student_layer < 1 || student_layer > student_layers) {
    throw std::out_of_range("layer_map: student layer " + std::to_string(student_layer) +
                            " outside [1, " + std::to_string(student_layers) + "]");
  }
  return student_layer * stride();
}

LayerMap make_layer_map(int teacher_layers, int student_layers) {
  if (teacher_layers < 1 || student_layers < 1) {
    throw ConfigError("layer map: depths must be >= 1");
  }
  if (teacher_layers % student_layers != 0) {
    throw ConfigError("layer map: teacher depth " + std::to_string(teacher_layers) +
                      " is not a multiple of student depth " + std::to_string(student_layers) +
                      "; pick depths with an integer ratio");
  }
  return LayerMap{teacher_layers, student_layers};
}

int layer_map(int student_layer, int teacher_layers, int student_layers) {
  return make_layer_map(teacher_layers, student_layers).map(student_layer);
}

namespace {

// Identity on the leading min(r, c) diagonal, zero elsewhere.
Tensor padded_identity(std::size_t r, std::size_t c, bool requires_grad) {
  Tensor t = Tensor::zeros({r, c}, requires_grad);
  for (std::size_t i = 0; i < std::min(r, c); ++i) t.at_mut(i, i) = 1.0;
  return t;
}

}  // namespace

MappingParams MappingParams::make(const ModelConfig& teacher, const ModelConfig& student,
                                  bool trainable) {
  make_layer_map(teacher.num_layers, student.num_layers);  // depth compatibility gate
  MappingParams maps;
  maps.trainable = trainable;
  for (int l = 0; l < student.num_layers; ++l) {
    maps.head_maps.push_back(padded_identity(static_cast<std::size_t>(teacher.num_heads),
                                             static_cast<std::size_t>(student.num_heads),
                                             trainable));
    maps.hidden_maps.push_back(padded_identity(static_cast<std::size_t>(student.hidden_size),
                                               static_cast<std::size_t>(teacher.hidden_size),
                                               trainable));
  }
  return maps;
}

std::vector<Tensor> MappingParams::parameters() const {
  std::vector<Tensor> out;
  for (const Tensor& m : head_maps) out.push_back(m);
  for (const Tensor& n : hidden_maps) out.push_back(n);
  return out;
}

LatentParts latent_loss_parts(const ForwardTrace& teacher_trace,
                              const ForwardTrace& student_trace, const MappingParams& maps,
                              const LayerMap& lm) {
  const std::size_t teacher_depth = teacher_trace.attentions.size();
  const std::size_t student_depth = student_trace.attentions.size();
  if (teacher_depth != static_cast<std::size_t>(lm.teacher_layers) ||
      student_depth != static_cast<std::size_t>(lm.student_layers)) {
    throw ShapeError("latent_loss: trace depths do not match the layer map");
  }
  if (maps.head_maps.size() != student_depth || maps.hidden_maps.size() != student_depth) {
    throw ShapeError("latent_loss: mapping parameter count does not match student depth");
  }
  if (teacher_trace.hiddens[0].rows() != student_trace.hiddens[0].rows()) {
    throw ShapeError("latent_loss: traces come from different sequence lengths: " +
                     shape_str(teacher_trace.hiddens[0].shape()) + " vs " +
                     shape_str(student_trace.hiddens[0].shape()));
  }

  Tensor attn_total = Tensor::scalar(0.0);
  Tensor hidden_total = Tensor::scalar(0.0);
  for (int l = 1; l <= lm.student_layers; ++l) {
    const int k = lm.map(l);
    const Tensor& attn_t = teacher_trace.attentions[static_cast<std::size_t>(k - 1)];
    const Tensor& attn_s = student_trace.attentions[static_cast<std::size_t>(l - 1)];
    const Tensor& m = maps.head_maps[static_cast<std::size_t>(l - 1)];
    const std::size_t h_t = attn_t.shape()[0];
    const std::size_t h_s = attn_s.shape()[0];
    const std::size_t s = attn_t.shape()[1];
    if (attn_s.shape()[1] != s || m.rows() != h_t || m.cols() != h_s) {
      throw ShapeError("latent_loss: head map " + shape_str(m.shape()) +
                       " inconsistent with attention shapes");
    }
    // Per-head MSE summed over teacher heads == h_T * MSE over the stacked
    // (h_T x s*s) block.
    Tensor mixed = matmul(m, reshape(attn_s, {h_s, s * s}));
    Tensor block = reshape(attn_t, {h_t, s * s});
    attn_total = add(attn_total, scale(mse(block, mixed), static_cast<double>(h_t)));

    const Tensor& hid_t = teacher_trace.hiddens[static_cast<std::size_t>(k - 1)];
    const Tensor& hid_s = student_trace.hiddens[static_cast<std::size_t>(l - 1)];
    const Tensor& n = maps.hidden_maps[static_cast<std::size_t>(l - 1)];
    hidden_total = add(hidden_total, mse(hid_t, matmul(hid_s, n)));
  }
  return {attn_total, hidden_total};
}

Tensor latent_loss(const ForwardTrace& teacher_trace, const ForwardTrace& student_trace,
                   const MappingParams& maps, const LayerMap& lm) {
  LatentParts parts = latent_loss_parts(teacher_trace, student_trace, maps, lm);
  return add(parts.attention_term, parts.hidden_term);
}

Tensor soft_label_loss(const Tensor& teacher_logits, const Tensor& student_logits, TaskKind kind,
                       double temperature) {
  if (teacher_logits.shape() != student_logits.shape()) {
    throw ShapeError("soft_label_loss: logit shapes differ: " +
                     shape_str(teacher_logits.shape()) + " vs " +
                     shape_str(student_logits.shape()));
  }
  if (temperature <= 0.0) throw std::invalid_argument("soft_label_loss: temperature must be > 0");
  Tensor frozen = teacher_logits.detach();
  if (kind == TaskKind::regression) {
    return mse(frozen, student_logits);
  }
  if (temperature != 1.0) {
    return kl_div(scale(frozen, 1.0 / temperature), scale(student_logits, 1.0 / temperature));
  }
  return kl_div(frozen, student_logits);
}

Tensor hard_label_loss(const Tensor& student_logits, const HardLabel& label, TaskKind kind) {
  if (kind == TaskKind::regression) {
    return mse(student_logits, Tensor::full(student_logits.shape(), label.value));
  }
  return cross_entropy(student_logits, {label.cls});
}

StageLossValue stage_loss(const Batch& batch, TeacherKind teacher_kind, DataKind data_kind,
                          int alpha, const StageModels& models, const MappingParams& maps,
                          const LayerMap& lm, double temperature,
                          std::mt19937_64* dropout_rng) {
  if (alpha != 0 && alpha != 1) throw std::invalid_argument("stage_loss: alpha must be 0 or 1");
  if (batch.items.empty()) throw std::invalid_argument("stage_loss: empty batch");
  if (alpha == 1) {
    if (data_kind != DataKind::task) {
      throw std::invalid_argument("stage_loss: alpha=1 requires task data (labels)");
    }
    for (const EncodedInput& item : batch.items) {
      if (!item.has_label) {
        throw std::invalid_argument("stage_loss: alpha=1 but batch item carries no label");
      }
    }
  }
  const TransformerWeights* teacher = teacher_kind == TeacherKind::pretrained
                                          ? models.pretrained_teacher
                                          : models.finetuned_teacher;
  if (!teacher) {
    throw std::invalid_argument(std::string("stage_loss: missing ") + to_string(teacher_kind) +
                                " teacher");
  }

  StageLossValue out;
  Tensor total = Tensor::scalar(0.0);
  for (const EncodedInput& item : batch.items) {
    ForwardTrace teacher_trace;
    {
      Tape::Pause frozen;  // teacher guidance never joins the gradient graph
      teacher_trace = encoder_forward(*models.teacher_config, *teacher, item.token_ids,
                                      item.segment_ids, item.attention_valid);
    }
    ForwardTrace student_trace = encoder_forward(*models.student_config, *models.student,
                                                 item.token_ids, item.segment_ids,
                                                 item.attention_valid, dropout_rng);
    Tensor item_loss = latent_loss(teacher_trace, student_trace, maps, lm);
    out.latent += item_loss.item();
    if (alpha == 1) {
      Tensor soft = soft_label_loss(teacher_trace.logits, student_trace.logits,
                                    models.student_config->task_kind, temperature);
      HardLabel label{item.label_class, item.label_value};
      Tensor hard = hard_label_loss(student_trace.logits, label,
                                    models.student_config->task_kind);
      out.soft += soft.item();
      out.hard += hard.item();
      item_loss = add(item_loss, add(soft, hard));
    }
    total = add(total, item_loss);
  }
  const double inv = 1.0 / static_cast<double>(batch.items.size());
  out.total = scale(total, inv);
  out.latent *= inv;
  out.soft *= inv;
  out.hard *= inv;
  return out;
}

}  // namespace minikd
