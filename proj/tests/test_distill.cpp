#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "minikd/distill.hpp"
#include "minikd/gradcheck.hpp"

using namespace minikd;

namespace {

ModelConfig teacher_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 8;
  c.ffn_size = 16;
  c.num_heads = 2;
  c.vocab_size = 12;
  c.max_seq_len = 8;
  return c;
}

ModelConfig student_config() {
  ModelConfig c = teacher_config();
  c.num_layers = 1;
  c.hidden_size = 4;
  c.ffn_size = 8;
  c.num_heads = 2;
  return c;
}

Batch two_item_batch(const Vocab& vocab) {
  BatchItem x0, x1;
  x0.text_a = {5, 6, 7};
  x0.has_label = true;
  x0.label_class = 1;
  x0.label_value = 1.0;
  x1.text_a = {8, 9};
  x1.has_label = true;
  x1.label_class = 0;
  x1.label_value = 0.0;
  return build_batch({x0, x1}, vocab, 8, false);
}

}  // namespace

TEST_CASE("layer_map values and divisibility error") {
  CHECK(layer_map(1, 12, 4) == 3);
  CHECK(layer_map(4, 12, 4) == 12);
  CHECK(layer_map(2, 2, 2) == 2);
  CHECK_THROWS_WITH_AS(make_layer_map(12, 5), doctest::Contains("integer ratio"), ConfigError);
  LayerMap lm = make_layer_map(12, 4);
  CHECK_THROWS_AS(lm.map(0), std::out_of_range);
  CHECK_THROWS_AS(lm.map(5), std::out_of_range);
}

TEST_CASE("mapping params start as (padded) identities") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  s.num_layers = 2;  // c = 1
  MappingParams maps = MappingParams::make(t, s, false);
  REQUIRE(maps.head_maps.size() == 2);
  // h_T == h_S: exact identity.
  for (const Tensor& m : maps.head_maps) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) {
        CHECK(m.at(i, j) == (i == j ? 1.0 : 0.0));
      }
    }
  }
  // d_S=4 x d_T=8: ones on the leading diagonal only.
  for (const Tensor& n : maps.hidden_maps) {
    CHECK(n.shape() == Shape{4, 8});
    for (std::size_t i = 0; i < n.rows(); ++i) {
      for (std::size_t j = 0; j < n.cols(); ++j) {
        CHECK(n.at(i, j) == (i == j ? 1.0 : 0.0));
      }
    }
  }
  CHECK_FALSE(maps.head_maps[0].requires_grad());
  MappingParams trainable = MappingParams::make(t, s, true);
  CHECK(trainable.head_maps[0].requires_grad());
}

TEST_CASE("latent loss is exactly zero under identity self-distillation") {
  ModelConfig c = teacher_config();
  std::mt19937_64 rng(21);
  TransformerWeights w = init_weights(c, rng);
  ForwardTrace trace = encoder_forward(c, w, {5, 6, 7}, {0, 0, 0});
  MappingParams maps = MappingParams::make(c, c, false);
  LayerMap lm = make_layer_map(c.num_layers, c.num_layers);
  CHECK(latent_loss(trace, trace, maps, lm).item() == 0.0);
}

TEST_CASE("latent loss is positive under any single perturbed entry") {
  ModelConfig c = teacher_config();
  std::mt19937_64 rng(22);
  TransformerWeights w = init_weights(c, rng);
  MappingParams maps = MappingParams::make(c, c, false);
  LayerMap lm = make_layer_map(c.num_layers, c.num_layers);

  ForwardTrace teacher = encoder_forward(c, w, {5, 6, 7}, {0, 0, 0});
  ForwardTrace student = encoder_forward(c, w, {5, 6, 7}, {0, 0, 0});
  student.attentions[1].values_mut()[4] += 1e-3;
  CHECK(latent_loss(teacher, student, maps, lm).item() > 0.0);

  ForwardTrace student2 = encoder_forward(c, w, {5, 6, 7}, {0, 0, 0});
  student2.hiddens[0].values_mut()[0] += 1e-3;
  CHECK(latent_loss(teacher, student2, maps, lm).item() > 0.0);
}

TEST_CASE("one-layer toy latent loss matches the hand computation") {
  // Fabricated traces: s=2, one head each, hidden size 2 on both sides.
  ForwardTrace teacher, student;
  teacher.attentions = {Tensor::from_values({1, 2, 2}, {1, 0, 0, 1})};
  student.attentions = {Tensor::from_values({1, 2, 2}, {0.5, 0.5, 0.5, 0.5})};
  teacher.hiddens = {Tensor::from_values({2, 2}, {1.0, 2.0, 3.0, 4.0})};
  student.hiddens = {Tensor::from_values({2, 2}, {1.5, 1.0, 2.0, 5.0})};

  MappingParams maps;
  maps.trainable = false;
  maps.head_maps = {Tensor::from_values({1, 1}, {1.0})};
  maps.hidden_maps = {Tensor::from_values({2, 2}, {1, 0, 0, 1})};
  LayerMap lm = make_layer_map(1, 1);

  const double attn_by_hand = (0.25 + 0.25 + 0.25 + 0.25) / 4.0;
  const double hidden_by_hand = (0.25 + 1.0 + 1.0 + 1.0) / 4.0;
  LatentParts parts = latent_loss_parts(teacher, student, maps, lm);
  CHECK(parts.attention_term.item() == doctest::Approx(attn_by_hand).epsilon(1e-10));
  CHECK(parts.hidden_term.item() == doctest::Approx(hidden_by_hand).epsilon(1e-10));
  CHECK(latent_loss(teacher, student, maps, lm).item() ==
        doctest::Approx(attn_by_hand + hidden_by_hand).epsilon(1e-10));
}

TEST_CASE("scaling N changes only the hidden term") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(23);
  TransformerWeights wt = init_weights(t, rng);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, false);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  ForwardTrace teacher = encoder_forward(t, wt, {5, 6, 7}, {0, 0, 0});
  ForwardTrace student = encoder_forward(s, ws, {5, 6, 7}, {0, 0, 0});

  LatentParts before = latent_loss_parts(teacher, student, maps, lm);
  for (Tensor& n : maps.hidden_maps) {
    for (double& v : n.values_mut()) v *= 2.0;
  }
  LatentParts after = latent_loss_parts(teacher, student, maps, lm);
  CHECK(after.attention_term.item() == before.attention_term.item());
  CHECK(after.hidden_term.item() != before.hidden_term.item());
}

TEST_CASE("latent loss decomposes into attention and hidden terms") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(24);
  TransformerWeights wt = init_weights(t, rng);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  ForwardTrace teacher = encoder_forward(t, wt, {5, 6}, {0, 0});
  ForwardTrace student = encoder_forward(s, ws, {5, 6}, {0, 0});
  LatentParts parts = latent_loss_parts(teacher, student, maps, lm);
  const double total = latent_loss(teacher, student, maps, lm).item();
  CHECK(total == parts.attention_term.item() + parts.hidden_term.item());
}

TEST_CASE("soft label loss cases") {
  Tensor z = Tensor::from_values({1, 2}, {0.7, -0.1});
  CHECK(soft_label_loss(z, z, TaskKind::classification).item() ==
        doctest::Approx(0.0).epsilon(1e-12));

  const double ln2 = std::log(2.0);
  Tensor zt = Tensor::from_values({1, 2}, {ln2, 0.0});
  Tensor zs = Tensor::from_values({1, 2}, {0.0, ln2});
  CHECK(soft_label_loss(zt, zs, TaskKind::classification).item() ==
        doctest::Approx(ln2 / 3.0).epsilon(1e-4));

  Tensor rt = Tensor::from_values({1, 1}, {3.0});
  Tensor rs = Tensor::from_values({1, 1}, {1.0});
  CHECK(soft_label_loss(rt, rs, TaskKind::regression).item() == doctest::Approx(4.0));
  CHECK_THROWS_AS(soft_label_loss(zt, rt, TaskKind::classification), ShapeError);
}

TEST_CASE("soft label loss never sends gradient to the teacher side") {
  Tensor zt = Tensor::from_values({1, 2}, {0.4, -0.2}, true);
  Tensor zs = Tensor::from_values({1, 2}, {0.1, 0.3}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(soft_label_loss(zt, zs, TaskKind::classification));
  }
  CHECK_FALSE(zt.has_grad());
  CHECK(zs.has_grad());
}

TEST_CASE("hard label loss cases") {
  Tensor confident = Tensor::from_values({1, 2}, {30.0, -30.0});
  CHECK(hard_label_loss(confident, {0, 0.0}, TaskKind::classification).item() ==
        doctest::Approx(0.0));
  Tensor uniform = Tensor::zeros({1, 2});
  CHECK(hard_label_loss(uniform, {1, 0.0}, TaskKind::classification).item() ==
        doctest::Approx(std::log(2.0)));
  Tensor z = Tensor::from_values({1, 1}, {1.0});
  CHECK(hard_label_loss(z, {0, 1.5}, TaskKind::regression).item() == doctest::Approx(0.25));
}

TEST_CASE("stage_loss with alpha=0 is bit-identical to the batch latent mean") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(25);
  TransformerWeights wt = init_weights(t, rng);
  wt.set_requires_grad(false);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  Vocab vocab = Vocab::symbols(7);
  Batch batch = two_item_batch(vocab);

  StageModels models{&t, &wt, nullptr, &s, &ws};
  StageLossValue loss = stage_loss(batch, TeacherKind::pretrained, DataKind::general, 0, models,
                                   maps, lm);
  Tensor total = Tensor::scalar(0.0);
  for (const EncodedInput& item : batch.items) {
    ForwardTrace teacher = encoder_forward(t, wt, item.token_ids, item.segment_ids,
                                           item.attention_valid);
    ForwardTrace student = encoder_forward(s, ws, item.token_ids, item.segment_ids,
                                           item.attention_valid);
    total = add(total, latent_loss(teacher, student, maps, lm));
  }
  Tensor mean = scale(total, 1.0 / static_cast<double>(batch.items.size()));
  CHECK(loss.total.item() == mean.item());
  CHECK(loss.soft == 0.0);
  CHECK(loss.hard == 0.0);
}

TEST_CASE("stage_loss equals the independently composed latent+soft+hard sum") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(26);
  TransformerWeights wt = init_weights(t, rng);
  wt.set_requires_grad(false);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  Vocab vocab = Vocab::symbols(7);
  Batch batch = two_item_batch(vocab);

  StageModels models{&t, &wt, &wt, &s, &ws};
  StageLossValue loss =
      stage_loss(batch, TeacherKind::finetuned, DataKind::task, 1, models, maps, lm);

  double expect = 0.0;
  for (const EncodedInput& item : batch.items) {
    ForwardTrace teacher = encoder_forward(t, wt, item.token_ids, item.segment_ids,
                                           item.attention_valid);
    ForwardTrace student = encoder_forward(s, ws, item.token_ids, item.segment_ids,
                                           item.attention_valid);
    expect += latent_loss(teacher, student, maps, lm).item();
    expect += soft_label_loss(teacher.logits, student.logits, s.task_kind).item();
    expect += hard_label_loss(student.logits, {item.label_class, item.label_value}, s.task_kind)
                  .item();
  }
  expect /= static_cast<double>(batch.items.size());
  CHECK(loss.total.item() == doctest::Approx(expect).epsilon(1e-10));
  CHECK(loss.soft > 0.0);
  CHECK(loss.hard > 0.0);
}

TEST_CASE("stage_loss isolates soft+hard when the latent term is zero") {
  // Self-distillation: same config and weights, identity maps, c=1.
  ModelConfig c = teacher_config();
  std::mt19937_64 rng(27);
  TransformerWeights w = init_weights(c, rng);
  TransformerWeights frozen = w;  // same tensors; teacher side is paused anyway
  MappingParams maps = MappingParams::make(c, c, false);
  LayerMap lm = make_layer_map(c.num_layers, c.num_layers);
  Vocab vocab = Vocab::symbols(7);
  Batch batch = two_item_batch(vocab);

  StageModels models{&c, nullptr, &frozen, &c, &w};
  StageLossValue loss =
      stage_loss(batch, TeacherKind::finetuned, DataKind::task, 1, models, maps, lm);
  CHECK(loss.latent == 0.0);
  // Soft term vanishes too (identical logits); hard term is the CE of the
  // student's own logits.
  CHECK(loss.soft == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(loss.total.item() == doctest::Approx(loss.hard).epsilon(1e-12));
}

TEST_CASE("stage_loss validation errors") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(28);
  TransformerWeights wt = init_weights(t, rng);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  Vocab vocab = Vocab::symbols(7);

  BatchItem unlabeled;
  unlabeled.text_a = {5, 6};
  Batch batch = build_batch({unlabeled}, vocab, 8, false);
  StageModels models{&t, &wt, nullptr, &s, &ws};
  CHECK_THROWS_AS(
      stage_loss(batch, TeacherKind::pretrained, DataKind::task, 1, models, maps, lm),
      std::invalid_argument);
  CHECK_THROWS_AS(
      stage_loss(batch, TeacherKind::pretrained, DataKind::general, 1, models, maps, lm),
      std::invalid_argument);
  CHECK_THROWS_AS(
      stage_loss(batch, TeacherKind::finetuned, DataKind::general, 0, models, maps, lm),
      std::invalid_argument);  // finetuned teacher missing
}

TEST_CASE("no gradient reaches teacher weights through stage_loss") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(29);
  TransformerWeights wt = init_weights(t, rng);  // requires_grad deliberately left on
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  Vocab vocab = Vocab::symbols(7);
  Batch batch = two_item_batch(vocab);

  StageModels models{&t, &wt, &wt, &s, &ws};
  Tape tape;
  {
    Tape::Scope scope(tape);
    StageLossValue loss =
        stage_loss(batch, TeacherKind::finetuned, DataKind::task, 1, models, maps, lm);
    tape.backward(loss.total);
  }
  for (const auto& [name, p] : wt.named_parameters()) CHECK_FALSE(p.has_grad());
  CHECK(ws.token_emb.has_grad());
  CHECK(maps.head_maps[0].has_grad());
}

TEST_CASE("stage_loss gradient matches finite differences") {
  ModelConfig t = teacher_config();
  ModelConfig s = student_config();
  std::mt19937_64 rng(30);
  TransformerWeights wt = init_weights(t, rng);
  wt.set_requires_grad(false);
  TransformerWeights ws = init_weights(s, rng);
  MappingParams maps = MappingParams::make(t, s, true);
  LayerMap lm = make_layer_map(t.num_layers, s.num_layers);
  Vocab vocab = Vocab::symbols(7);
  Batch batch = two_item_batch(vocab);
  StageModels models{&t, &wt, &wt, &s, &ws};

  std::vector<Tensor> params = ws.parameters();
  for (Tensor& p : maps.parameters()) params.push_back(p);
  auto f = [&] {
    return stage_loss(batch, TeacherKind::finetuned, DataKind::task, 1, models, maps, lm).total;
  };
  CHECK(finite_diff_check_params(f, params, 1e-5) < 1e-4);
}
