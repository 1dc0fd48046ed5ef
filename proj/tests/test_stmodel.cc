// test_stmodel.cc

// Copyright 2026  The phonest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "phonest/stmodel.h"

#include <cmath>

#include "doctest.h"
#include "gradcheck.h"
#include "phonest/optimizer.h"
#include "phonest/textpipe.h"

namespace phonest {
namespace {

ArchConfig tiny_arch() {
  ArchConfig cfg;
  cfg.hidden = 3;
  cfg.enc_layers = 3;
  cfg.downsample_after = {1, 2};
  cfg.attn_units = 2;
  cfg.dec_layers = 1;
  cfg.embed_dim = 2;
  cfg.dropout = 0.0;
  cfg.embed_dropout = 0.0;
  cfg.label_smoothing = 0.1;
  return cfg;
}

SourceInput frame_input(int t, int dim, Rng* rng) {
  SourceInput s;
  s.feats = Matrix(t, dim);
  for (int i = 0; i < t; ++i) {
    for (int d = 0; d < dim; ++d) s.feats(i, d) = rng->normal() * 0.5;
  }
  return s;
}

TEST_CASE("encoded length law") {
  Rng rng(101);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 6;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  auto law = [](int t) { return ((t + 1) / 2 + 1) / 2; };
  CHECK(model.encoded_steps(16) == 4);
  CHECK(model.encoded_steps(1) == 1);
  CHECK(model.encoded_steps(7) == 2);
  Rng data(5);
  for (int t = 1; t <= 40; ++t) {
    SourceInput s = frame_input(t, 4, &data);
    EncodedBatch enc = model.encode({&s}, Mode::kEval, &data);
    CHECK(enc.steps == law(t));
    CHECK(enc.valid == std::vector<int>{law(t)});
    CHECK(enc.states.rows() == enc.steps);
    CHECK(enc.states.cols() == 6);
  }
}

TEST_CASE("encode masks padded positions to zero") {
  Rng rng(103);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 6;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  Rng data(7);
  SourceInput a = frame_input(19, 4, &data);
  SourceInput b = frame_input(6, 4, &data);
  EncodedBatch enc = model.encode({&a, &b}, Mode::kEval, &data);
  REQUIRE(enc.batch == 2);
  CHECK(enc.valid[0] == 5);
  CHECK(enc.valid[1] == 2);
  CHECK(enc.steps == 5);
  for (int t = 0; t < enc.steps; ++t) {
    double norm = enc.states.value().row(t * 2 + 1).cwiseAbs().maxCoeff();
    if (t < enc.valid[1]) {
      CHECK(norm > 0.0);
    } else {
      CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("encode in eval mode is batching invariant") {
  Rng rng(107);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 6;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  Rng data(9);
  SourceInput a = frame_input(11, 4, &data);
  SourceInput b = frame_input(17, 4, &data);
  EncodedBatch single = model.encode({&a}, Mode::kEval, &data);
  EncodedBatch pair = model.encode({&a, &b}, Mode::kEval, &data);
  REQUIRE(pair.valid[0] == single.valid[0]);
  for (int t = 0; t < single.steps; ++t) {
    for (int d = 0; d < 6; ++d) {
      CHECK(pair.states.value()(t * 2 + 0, d) ==
            doctest::Approx(single.states.value()(t, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encode contract errors") {
  Rng rng(109);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 6;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  CHECK_THROWS_AS(model.encode({}, Mode::kEval, &rng), ContractError);
  SourceInput empty;
  empty.feats = Matrix(0, 4);
  CHECK_THROWS_AS(model.encode({&empty}, Mode::kEval, &rng), ContractError);
}

TEST_CASE("attend matches the hand example and its contracts") {
  Matrix states(2, 1);
  states << 1, -1;
  EncodedBatch enc;
  enc.states = Tensor::constant(states);
  enc.valid = {2};
  enc.steps = 2;
  enc.batch = 1;
  Tensor w_enc = Tensor::constant(Matrix::Ones(1, 1));
  Tensor w_dec = Tensor::constant(Matrix::Ones(1, 1));
  Tensor v = Tensor::constant(Matrix::Ones(1, 1));
  Tensor s = Tensor::constant(Matrix::Zero(1, 1));
  auto [ctx, weights] = attend(s, enc, w_enc, w_dec, v);

  double e1 = std::exp(std::tanh(1.0)), e2 = std::exp(std::tanh(-1.0));
  double w0 = e1 / (e1 + e2);
  CHECK(weights.value()(0, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(weights.value()(1, 0) == doctest::Approx(1.0 - w0).epsilon(1e-12));
  // Two-decimal corroboration of the published figure for this example.
  CHECK(std::abs(weights.value()(0, 0) - 0.8176) < 0.01);
  CHECK(weights.value()(0, 0) + weights.value()(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ctx.value()(0, 0) == doctest::Approx(w0 * 1.0 + (1.0 - w0) * -1.0));

  EncodedBatch one = enc;
  one.valid = {1};
  auto [ctx1, w1] = attend(s, one, w_enc, w_dec, v);
  CHECK(w1.value()(0, 0) == 1.0);
  CHECK(w1.value()(1, 0) == 0.0);
  CHECK(ctx1.value()(0, 0) == doctest::Approx(1.0));

  EncodedBatch zero = enc;
  zero.valid = {0};
  CHECK_THROWS_AS(attend(s, zero, w_enc, w_dec, v), ContractError);
}

TEST_CASE("decode_step shapes, determinism, and errors") {
  Rng rng(113);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 9;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  Rng data(11);
  SourceInput a = frame_input(10, 4, &data);
  EncodedBatch enc = model.encode({&a}, Mode::kEval, &data);
  DecoderState st = model.initial_state(1);
  auto [logits, next] = model.decode_step({BpeModel::kBosId}, st, enc, Mode::kEval, &data);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 9);
  auto [logits2, next2] =
      model.decode_step({BpeModel::kBosId}, st, enc, Mode::kEval, &data);
  CHECK(logits.value() == logits2.value());

  CHECK_THROWS_AS(model.decode_step({9}, st, enc, Mode::kEval, &data), IndexError);
  CHECK_THROWS_AS(model.decode_step({-1}, st, enc, Mode::kEval, &data), IndexError);
  CHECK_THROWS_AS(model.decode_step({1, 2}, st, enc, Mode::kEval, &data), ShapeError);
}

std::vector<std::vector<int>> toy_targets() { return {{4, 5, 2}, {6, 4, 5, 2}}; }

TEST_CASE("forward_loss with zeroed output layer equals ln V") {
  Rng rng(127);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 7;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  for (auto& [name, t] : model.named_parameters()) {
    if (name == "out.w" || name == "out.b") t.mutable_value().setZero();
  }
  Rng data(13);
  SourceInput a = frame_input(9, 4, &data);
  SourceInput b = frame_input(5, 4, &data);
  std::vector<const SourceInput*> batch = {&a, &b};
  Tensor loss = model.forward_loss(batch, toy_targets(), Mode::kEval, &data);
  CHECK(loss.value()(0, 0) == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("forward_loss is invariant to pad extension") {
  Rng rng(131);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 7;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), tiny_arch(), dims, &rng);
  Rng data(17);
  SourceInput a = frame_input(9, 4, &data);
  SourceInput b = frame_input(5, 4, &data);
  std::vector<const SourceInput*> batch = {&a, &b};

  Tensor plain = model.forward_loss(batch, toy_targets(), Mode::kEval, &data);
  std::vector<std::vector<int>> padded = toy_targets();
  padded[0].insert(padded[0].end(), 3, BpeModel::kPadId);
  padded[1].push_back(BpeModel::kPadId);
  Tensor extended = model.forward_loss(batch, padded, Mode::kEval, &data);
  CHECK(plain.value()(0, 0) == doctest::Approx(extended.value()(0, 0)).epsilon(1e-14));

  std::vector<std::vector<int>> all_pad = {{0, 0}, {0}};
  CHECK_THROWS_AS(model.forward_loss(batch, all_pad, Mode::kEval, &data),
                  ContractError);
  CHECK_THROWS_AS(model.forward_loss(batch, {{1, 2}}, Mode::kEval, &data), ShapeError);
}

void check_full_gradient(const std::string& tag) {
  Rng rng(137);
  ModelDims dims;
  dims.feat_dim = 3;
  dims.tgt_vocab = 7;
  ModelVariant variant = variant_by_tag(tag);
  if (variant.source == SourceKind::kTokens) dims.src_vocab = 8;
  if (variant.source == SourceKind::kFramesPlusFactor) dims.n_phones = 4;

  Seq2SeqModel model(variant, tiny_arch(), dims, &rng);
  Rng data(19);
  SourceInput a, b;
  if (variant.source == SourceKind::kTokens) {
    a.tokens = {4, 6, 5, 7, 4};
    b.tokens = {5, 4, 6};
  } else {
    a = frame_input(7, 3, &data);
    b = frame_input(5, 3, &data);
    a.phone_labels = {1, 1, 2, 3, 0, 2, 1};
    b.phone_labels = {2, 0, 3, 3, 1};
  }
  std::vector<const SourceInput*> batch = {&a, &b};
  std::vector<std::vector<int>> targets = toy_targets();

  Rng dummy(1);
  auto make_loss = [&] {
    return model.forward_loss(batch, targets, Mode::kTrain, &dummy);
  };
  std::string err = testing::gradcheck(make_loss, model.parameters(), 1e-5, 2e-4);
  INFO(tag << ": " << err);
  CHECK(err.empty());
}

TEST_CASE("forward_loss gradients match finite differences") {
  check_full_gradient("baseline_e2e");
  check_full_gradient("phone_e2e");
  check_full_gradient("mt_over_text");
}

TEST_CASE("every variant assembles and runs") {
  for (const auto& tag : all_variant_tags()) {
    Rng rng(139);
    ModelDims dims;
    dims.feat_dim = 3;
    dims.tgt_vocab = 7;
    ModelVariant variant = variant_by_tag(tag);
    if (variant.source == SourceKind::kTokens) dims.src_vocab = 8;
    if (variant.source == SourceKind::kFramesPlusFactor) dims.n_phones = 4;
    Seq2SeqModel model(variant, tiny_arch(), dims, &rng);

    Rng data(23);
    SourceInput s;
    if (variant.source == SourceKind::kTokens) {
      s.tokens = {4, 5};
    } else {
      s = frame_input(6, 3, &data);
      s.phone_labels = {1, 2, 2, 0, 3, 1};
    }
    std::vector<const SourceInput*> batch = {&s};
    Tensor loss = model.forward_loss(batch, {{4, 2}}, Mode::kEval, &data);
    CHECK(std::isfinite(loss.value()(0, 0)));
    CHECK(model.variant().tag == tag);
  }
  CHECK_THROWS_AS(variant_by_tag("transformer"), LookupError);
}

TEST_CASE("zero phone table reduces phone_e2e to a padded baseline") {
  ArchConfig arch = tiny_arch();
  ModelDims pdims;
  pdims.feat_dim = 4;
  pdims.n_phones = 3;
  pdims.tgt_vocab = 7;
  Rng rng(149);
  Seq2SeqModel phone(variant_by_tag("phone_e2e"), arch, pdims, &rng);
  for (auto& [name, t] : phone.named_parameters()) {
    if (name == "phone_table") t.mutable_value().setZero();
  }

  ModelDims bdims;
  bdims.feat_dim = 4 + arch.embed_dim;
  bdims.tgt_vocab = 7;
  Rng rng2(151);
  Seq2SeqModel baseline(variant_by_tag("baseline_e2e"), arch, bdims, &rng2);
  baseline.load_checkpoint(phone.to_checkpoint());

  Rng data(29);
  SourceInput ps = frame_input(9, 4, &data);
  ps.phone_labels = {0, 1, 1, 2, 0, 1, 2, 2, 0};
  SourceInput bs;
  bs.feats = Matrix::Zero(9, 4 + arch.embed_dim);
  bs.feats.leftCols(4) = ps.feats;

  std::vector<const SourceInput*> pbatch = {&ps};
  std::vector<const SourceInput*> bbatch = {&bs};
  std::vector<std::vector<int>> targets = {{4, 5, 2}};
  Rng d1(3), d2(3);
  Tensor pl = phone.forward_loss(pbatch, targets, Mode::kEval, &d1);
  Tensor bl = baseline.forward_loss(bbatch, targets, Mode::kEval, &d2);
  CHECK(pl.value()(0, 0) == doctest::Approx(bl.value()(0, 0)).epsilon(1e-14));
}

TEST_CASE("fix-norm keeps target embedding rows on the unit sphere") {
  Rng rng(157);
  ModelDims dims;
  dims.feat_dim = 3;
  dims.tgt_vocab = 9;
  ArchConfig arch = tiny_arch();
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), arch, dims, &rng);
  Tensor emb;
  for (auto& [name, t] : model.named_parameters()) {
    if (name == "tgt_embed") emb = t;
  }
  REQUIRE(emb.defined());
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    CHECK(std::abs(emb.value().row(r).norm() - 1.0) < 1e-8);
  }
  emb.mutable_value() *= 3.7;
  model.project_target_norm();
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    CHECK(std::abs(emb.value().row(r).norm() - 1.0) < 1e-8);
  }

  ArchConfig off = arch;
  off.fix_target_norm = false;
  Rng rng2(157);
  Seq2SeqModel loose(variant_by_tag("baseline_e2e"), off, dims, &rng2);
  bool any_off_sphere = false;
  for (auto& [name, t] : loose.named_parameters()) {
    if (name != "tgt_embed") continue;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      if (std::abs(t.value().row(r).norm() - 1.0) > 1e-3) any_off_sphere = true;
    }
  }
  CHECK(any_off_sphere);
}

TEST_CASE("model checkpoint round trip preserves the forward pass") {
  Rng rng(163);
  ModelDims dims;
  dims.feat_dim = 4;
  dims.n_phones = 5;
  dims.tgt_vocab = 7;
  Seq2SeqModel model(variant_by_tag("phone_e2e"), tiny_arch(), dims, &rng);
  Rng data(31);
  SourceInput s = frame_input(8, 4, &data);
  s.phone_labels = {1, 2, 3, 4, 0, 1, 2, 3};
  std::vector<const SourceInput*> batch = {&s};
  std::vector<std::vector<int>> targets = {{4, 5, 2}};
  Rng d1(1);
  double want = model.forward_loss(batch, targets, Mode::kEval, &d1).value()(0, 0);

  Rng rng2(999);
  Seq2SeqModel other(variant_by_tag("phone_e2e"), tiny_arch(), dims, &rng2);
  other.load_checkpoint(model.to_checkpoint());
  Rng d2(1);
  double got = other.forward_loss(batch, targets, Mode::kEval, &d2).value()(0, 0);
  CHECK(got == want);

  Seq2SeqModel third(variant_by_tag("phone_e2e"), tiny_arch(), dims, &rng2);
  Checkpoint broken = model.to_checkpoint();
  broken.params.erase("attn.v");
  CHECK_THROWS_AS(third.load_checkpoint(broken), ConsistencyError);
}

TEST_CASE("a single training pair overfits in 300 steps") {
  Rng rng(167);
  ArchConfig arch = tiny_arch();
  arch.hidden = 8;
  arch.attn_units = 4;
  arch.embed_dim = 4;
  arch.label_smoothing = 0.0;
  ModelDims dims;
  dims.feat_dim = 4;
  dims.tgt_vocab = 7;
  Seq2SeqModel model(variant_by_tag("baseline_e2e"), arch, dims, &rng);

  Rng data(37);
  SourceInput s = frame_input(12, 4, &data);
  std::vector<const SourceInput*> batch = {&s};
  std::vector<std::vector<int>> targets = {{4, 6, 5, 2}};

  AdamConfig acfg;
  acfg.lr = 0.01;
  Adam opt(model.parameters(), acfg);
  Rng d(1);
  double last = 0.0;
  for (int step = 0; step < 300; ++step) {
    opt.zero_grad();
    Tensor loss = model.forward_loss(batch, targets, Mode::kTrain, &d);
    backward(loss);
    opt.step();
    model.project_target_norm();
    last = loss.value()(0, 0);
  }
  CHECK(last < 0.1);
}

TEST_CASE("arch config validation and serialization") {
  ArchConfig cfg = tiny_arch();
  CHECK(ArchConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  cfg.downsample_after = {3};
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_arch();
  cfg.hidden = 0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = tiny_arch();
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ParamError);

  ArchConfig defaults;
  CHECK(defaults.hidden == 512);
  CHECK(defaults.enc_layers == 3);
  CHECK(defaults.downsample_after == std::vector<int>({1, 2}));
  CHECK(defaults.attn_units == 128);
  CHECK(defaults.dec_layers == 1);
  CHECK(defaults.embed_dim == 64);
  CHECK(defaults.dropout == 0.2);
  CHECK(defaults.embed_dropout == 0.1);
  CHECK(defaults.label_smoothing == 0.1);
  CHECK(defaults.fix_target_norm);
}

}  // namespace
}  // namespace phonest
