#pragma once

#include <vector>

#include "minikd/data.hpp"
#include "minikd/transformer.hpp"

namespace minikd {

enum class TeacherKind { pretrained, finetuned };
enum class DataKind { general, task };

const char* to_string(TeacherKind k);
const char* to_string(DataKind k);

/// Student layer l mimics teacher layer k = l * (L_T / L_S); depths must
/// divide exactly.
struct LayerMap {
  int teacher_layers = 0;
  int student_layers = 0;
  int stride() const { return teacher_layers / student_layers; }
  int map(int student_layer) const;  // 1-based on both sides
};

LayerMap make_layer_map(int teacher_layers, int student_layers);
int layer_map(int student_layer, int teacher_layers, int student_layers);

/// Per-student-layer alignment: head-mixing matrices M_l (h_T x h_S) whose
/// row a mixes student heads into the match for teacher head a, and hidden
/// projections N_l (d_S x d_T) applied on the right of the student hidden
/// state. Owned and trained by the student side; identity-like at init.
struct MappingParams {
  std::vector<Tensor> head_maps;
  std::vector<Tensor> hidden_maps;
  bool trainable = true;

  static MappingParams make(const ModelConfig& teacher, const ModelConfig& student,
                            bool trainable);
  std::vector<Tensor> parameters() const;
};

struct LatentParts {
  Tensor attention_term;
  Tensor hidden_term;
};

/// Sum over student layers of per-head attention MSE (teacher head vs
/// M_l-mixed student heads) plus hidden-state MSE against H_S N_l, with
/// the teacher side frozen.
LatentParts latent_loss_parts(const ForwardTrace& teacher_trace,
                              const ForwardTrace& student_trace, const MappingParams& maps,
                              const LayerMap& lm);
Tensor latent_loss(const ForwardTrace& teacher_trace, const ForwardTrace& student_trace,
                   const MappingParams& maps, const LayerMap& lm);

/// KL(teacher || student) on softmaxed logits for classification, MSE for
/// regression; the teacher side never receives gradient.
Tensor soft_label_loss(const Tensor& teacher_logits, const Tensor& student_logits, TaskKind kind,
                       double temperature = 1.0);

struct HardLabel {
  int cls = 0;
  double value = 0.0;
};

Tensor hard_label_loss(const Tensor& student_logits, const HardLabel& label, TaskKind kind);

struct StageModels {
  const ModelConfig* teacher_config = nullptr;
  const TransformerWeights* pretrained_teacher = nullptr;
  const TransformerWeights* finetuned_teacher = nullptr;
  const ModelConfig* student_config = nullptr;
  const TransformerWeights* student = nullptr;
};

struct StageLossValue {
  Tensor total;     // batch mean of latent + alpha * (soft + hard)
  double latent = 0.0;
  double soft = 0.0;
  double hard = 0.0;
};

/// Batch mean of the unified loss L_{T,D,alpha}. alpha must be 0 or 1 and,
/// when 1, every item must carry a label. dropout_rng feeds the student's
/// dropout when the student config enables it; the frozen teacher always
/// runs without dropout.
StageLossValue stage_loss(const Batch& batch, TeacherKind teacher_kind, DataKind data_kind,
                          int alpha, const StageModels& models, const MappingParams& maps,
                          const LayerMap& lm, double temperature = 1.0,
                          std::mt19937_64* dropout_rng = nullptr);

}  // namespace minikd
