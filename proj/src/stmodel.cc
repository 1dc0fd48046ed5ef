// stmodel.cc

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

#include <algorithm>

#include "phonest/textpipe.h"

namespace phonest {

void ArchConfig::validate() const {
  if (hidden < 1 || enc_layers < 1 || attn_units < 1 || dec_layers < 1 ||
      embed_dim < 1) {
    throw ParamError("arch: all dims must be positive");
  }
  for (int p : downsample_after) {
    if (p < 1 || p >= enc_layers) {
      throw ParamError("arch: downsample position " + std::to_string(p) +
                       " outside {1.." + std::to_string(enc_layers - 1) + "}");
    }
  }
  if (dropout < 0 || dropout >= 1 || embed_dropout < 0 || embed_dropout >= 1) {
    throw ParamError("arch: dropout must be in [0, 1)");
  }
  if (label_smoothing < 0 || label_smoothing >= 1) {
    throw ParamError("arch: label smoothing must be in [0, 1)");
  }
}

nlohmann::json ArchConfig::to_json() const {
  return nlohmann::json{{"hidden", hidden},
                        {"enc_layers", enc_layers},
                        {"downsample_after", downsample_after},
                        {"attn_units", attn_units},
                        {"dec_layers", dec_layers},
                        {"embed_dim", embed_dim},
                        {"dropout", dropout},
                        {"embed_dropout", embed_dropout},
                        {"label_smoothing", label_smoothing},
                        {"fix_target_norm", fix_target_norm}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.enc_layers = j.value("enc_layers", c.enc_layers);
  c.downsample_after = j.value("downsample_after", c.downsample_after);
  c.attn_units = j.value("attn_units", c.attn_units);
  c.dec_layers = j.value("dec_layers", c.dec_layers);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.embed_dropout = j.value("embed_dropout", c.embed_dropout);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.fix_target_norm = j.value("fix_target_norm", c.fix_target_norm);
  return c;
}

const std::vector<std::string>& all_variant_tags() {
  static const std::vector<std::string> kTags = {
      "baseline_e2e", "phone_e2e",     "phone_avg_e2e", "mt_over_text",
      "mt_over_phones", "asr_bpe",     "asr_phone_avg"};
  return kTags;
}

ModelVariant variant_by_tag(const std::string& tag) {
  if (tag == "baseline_e2e") return {tag, SourceKind::kFrames, false};
  if (tag == "phone_e2e") return {tag, SourceKind::kFramesPlusFactor, false};
  if (tag == "phone_avg_e2e") return {tag, SourceKind::kAveragedFrames, false};
  if (tag == "mt_over_text") return {tag, SourceKind::kTokens, false};
  if (tag == "mt_over_phones") return {tag, SourceKind::kTokens, false};
  if (tag == "asr_bpe") return {tag, SourceKind::kFrames, true};
  if (tag == "asr_phone_avg") return {tag, SourceKind::kAveragedFrames, true};
  throw LookupError("unknown model variant " + tag);
}

std::pair<Tensor, Tensor> attend(const Tensor& dec_state, const EncodedBatch& enc,
                                 const Tensor& w_enc, const Tensor& w_dec,
                                 const Tensor& v) {
  if (enc.batch < 1 || enc.steps < 1) {
    throw ContractError("attend: empty encoder output");
  }
  for (int len : enc.valid) {
    if (len < 1) throw ContractError("attend: zero valid length");
  }
  Tensor proj = enc.proj.defined() ? enc.proj : matmul(enc.states, w_enc);
  Tensor dec_proj = matmul(dec_state, w_dec);  // batch x attn
  std::vector<int> tile(static_cast<size_t>(enc.steps) * enc.batch);
  for (int t = 0; t < enc.steps; ++t) {
    for (int b = 0; b < enc.batch; ++b) tile[t * enc.batch + b] = b;
  }
  Tensor scores = matmul(tanh_of(add(proj, rows(dec_proj, tile))), v);
  Tensor weights = masked_time_softmax(scores, enc.batch, enc.steps, enc.valid);
  Tensor ctx = attention_context(enc.states, weights, enc.batch, enc.steps);
  return {ctx, weights};
}

Seq2SeqModel::Seq2SeqModel(const ModelVariant& variant, const ArchConfig& cfg,
                           const ModelDims& dims, Rng* init_rng)
    : variant_(variant), cfg_(cfg), dims_(dims) {
  cfg_.validate();
  if (dims_.tgt_vocab < 1) throw ParamError("model: target vocabulary is empty");
  rng_ = init_rng;

  if (variant_.source == SourceKind::kTokens) {
    if (dims_.src_vocab < 1) {
      throw ParamError("model: token variant needs a source vocabulary");
    }
    src_embed_ = make_param("src_embed", dims_.src_vocab, cfg_.embed_dim);
  }
  if (variant_.source == SourceKind::kFramesPlusFactor) {
    if (dims_.n_phones < 1) {
      throw ParamError("model: factor variant needs a phone inventory");
    }
    phone_table_ = make_param("phone_table", dims_.n_phones, cfg_.embed_dim);
  }

  int h = cfg_.hidden;
  int in = source_width();
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    std::string base = "enc.l" + std::to_string(l);
    enc_fwd_.push_back(make_lstm(base + ".fwd", in));
    enc_bwd_.push_back(make_lstm(base + ".bwd", in));
    in = 2 * h;
    if (std::find(cfg_.downsample_after.begin(), cfg_.downsample_after.end(),
                  l + 1) != cfg_.downsample_after.end()) {
      NinLayer nin;
      nin.after = l + 1;
      std::string name = "enc.nin" + std::to_string(l + 1);
      nin.w = make_param(name + ".w", 4 * h, 2 * h);
      nin.gamma = Tensor::leaf(Matrix::Ones(1, 2 * h));
      nin.beta = Tensor::leaf(Matrix::Zero(1, 2 * h));
      params_.emplace_back(name + ".gamma", nin.gamma);
      params_.emplace_back(name + ".beta", nin.beta);
      nin.stats.init(2 * h);
      nin_.push_back(std::move(nin));
    }
  }

  for (int k = 0; k < cfg_.dec_layers; ++k) {
    int dec_in = k == 0 ? cfg_.embed_dim + 2 * h : h;
    dec_.push_back(make_lstm("dec.l" + std::to_string(k), dec_in));
  }
  attn_enc_ = make_param("attn.w_enc", 2 * h, cfg_.attn_units);
  attn_dec_ = make_param("attn.w_dec", h, cfg_.attn_units);
  attn_v_ = make_param("attn.v", cfg_.attn_units, 1);
  out_w_ = make_param("out.w", h + 2 * h, dims_.tgt_vocab);
  out_b_ = make_param("out.b", 1, dims_.tgt_vocab, /*zero=*/true);
  tgt_embed_ = make_param("tgt_embed", dims_.tgt_vocab, cfg_.embed_dim);
  rng_ = nullptr;
  if (cfg_.fix_target_norm) project_target_norm();
}

Tensor Seq2SeqModel::make_param(const std::string& name, int rows, int cols,
                                bool zero) {
  Matrix m(rows, cols);
  if (zero) {
    m.setZero();
  } else {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = rng_->uniform(-0.1, 0.1);
    }
  }
  Tensor t = Tensor::leaf(m);
  params_.emplace_back(name, t);
  return t;
}

Seq2SeqModel::LstmParams Seq2SeqModel::make_lstm(const std::string& name, int in_dim) {
  LstmParams p;
  int h = cfg_.hidden;
  p.wx = make_param(name + ".wx", in_dim, 4 * h);
  p.wh = make_param(name + ".wh", h, 4 * h);
  Matrix b = Matrix::Zero(1, 4 * h);
  b.middleCols(h, h).setOnes();  // forget-gate bias +1
  p.b = Tensor::leaf(b);
  params_.emplace_back(name + ".b", p.b);
  return p;
}

int Seq2SeqModel::source_width() const {
  switch (variant_.source) {
    case SourceKind::kFrames:
    case SourceKind::kAveragedFrames:
      return dims_.feat_dim;
    case SourceKind::kFramesPlusFactor:
      return dims_.feat_dim + cfg_.embed_dim;
    case SourceKind::kTokens:
      return cfg_.embed_dim;
  }
  throw ContractError("model: bad source kind");
}

int Seq2SeqModel::encoded_steps(int t) const {
  int out = t;
  for (size_t i = 0; i < cfg_.downsample_after.size(); ++i) out = (out + 1) / 2;
  return out;
}

Tensor Seq2SeqModel::lstm_step(const Tensor& x, Tensor* h, Tensor* c,
                               const LstmParams& p) {
  Eigen::Index hid = p.wh.rows();
  Tensor gates = add_rowvec(add(matmul(x, p.wx), matmul(*h, p.wh)), p.b);
  Tensor i = sigmoid(slice_cols(gates, 0, hid));
  Tensor f = sigmoid(slice_cols(gates, hid, hid));
  Tensor g = tanh_of(slice_cols(gates, 2 * hid, hid));
  Tensor o = sigmoid(slice_cols(gates, 3 * hid, hid));
  *c = add(mul(f, *c), mul(i, g));
  *h = mul(o, tanh_of(*c));
  return *h;
}

Tensor Seq2SeqModel::lstm_sequence(const Tensor& x, int steps, int batch,
                                   const LstmParams& p) {
  Tensor xw = matmul(x, p.wx);  // one GEMM for every step
  Tensor h = Tensor::constant(Matrix::Zero(batch, cfg_.hidden));
  Tensor c = h;
  std::vector<Tensor> outs;
  outs.reserve(steps);
  for (int t = 0; t < steps; ++t) {
    Tensor gates =
        add_rowvec(add(slice_rows(xw, static_cast<Eigen::Index>(t) * batch, batch),
                       matmul(h, p.wh)),
                   p.b);
    Eigen::Index hid = cfg_.hidden;
    Tensor i = sigmoid(slice_cols(gates, 0, hid));
    Tensor f = sigmoid(slice_cols(gates, hid, hid));
    Tensor g = tanh_of(slice_cols(gates, 2 * hid, hid));
    Tensor o = sigmoid(slice_cols(gates, 3 * hid, hid));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh_of(c));
    outs.push_back(h);
  }
  return vconcat(outs);
}

Tensor Seq2SeqModel::assemble_input(const std::vector<const SourceInput*>& batch,
                                    int steps, std::vector<int>* lens) const {
  int b_n = static_cast<int>(batch.size());
  if (variant_.source == SourceKind::kTokens) {
    std::vector<int> flat(static_cast<size_t>(steps) * b_n, 0);
    for (int b = 0; b < b_n; ++b) {
      const auto& toks = batch[b]->tokens;
      for (size_t t = 0; t < toks.size(); ++t) {
        if (toks[t] < 0 || toks[t] >= dims_.src_vocab) {
          throw IndexError("encode: source token " + std::to_string(toks[t]) +
                           " outside the vocabulary");
        }
        flat[t * b_n + b] = toks[t];
      }
    }
    return rows(src_embed_, flat);
  }

  Matrix feats = Matrix::Zero(static_cast<Eigen::Index>(steps) * b_n, dims_.feat_dim);
  for (int b = 0; b < b_n; ++b) {
    const Matrix& f = batch[b]->feats;
    if (f.cols() != dims_.feat_dim) {
      throw ShapeError("encode: utterance has " + std::to_string(f.cols()) +
                       " feature dims, model expects " +
                       std::to_string(dims_.feat_dim));
    }
    for (Eigen::Index t = 0; t < f.rows(); ++t) {
      feats.row(t * b_n + b) = f.row(t);
    }
  }
  if (variant_.source != SourceKind::kFramesPlusFactor) {
    return Tensor::constant(std::move(feats));
  }

  std::vector<int> flat(static_cast<size_t>(steps) * b_n, 0);
  for (int b = 0; b < b_n; ++b) {
    const auto& labels = batch[b]->phone_labels;
    if (labels.size() != static_cast<size_t>((*lens)[b])) {
      throw ShapeError("encode: phone labels and frames disagree in length");
    }
    for (size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] < 0 || labels[t] >= dims_.n_phones) {
        throw IndexError("encode: phone label " + std::to_string(labels[t]) +
                         " outside the inventory");
      }
      flat[t * b_n + b] = labels[t];
    }
  }
  return hconcat({Tensor::constant(std::move(feats)), rows(phone_table_, flat)});
}

namespace {

// Zeroes rows at t >= valid[b]; keeps padded positions out of later layers.
Tensor mask_invalid(const Tensor& x, const std::vector<int>& valid, int steps,
                    int batch) {
  Matrix mask = Matrix::Ones(x.rows(), x.cols());
  bool any = false;
  for (int b = 0; b < batch; ++b) {
    for (int t = valid[b]; t < steps; ++t) {
      mask.row(static_cast<Eigen::Index>(t) * batch + b).setZero();
      any = true;
    }
  }
  if (!any) return x;
  return mul(x, Tensor::constant(std::move(mask)));
}

std::vector<int> reverse_index(const std::vector<int>& valid, int steps, int batch) {
  std::vector<int> idx(static_cast<size_t>(steps) * batch);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch; ++b) {
      int src = t < valid[b] ? valid[b] - 1 - t : t;
      idx[t * batch + b] = src * batch + b;
    }
  }
  return idx;
}

}  // namespace

EncodedBatch Seq2SeqModel::encode(const std::vector<const SourceInput*>& batch,
                                  Mode mode, Rng* rng) {
  if (batch.empty()) throw ContractError("encode: empty batch");
  int b_n = static_cast<int>(batch.size());
  std::vector<int> lens(b_n);
  for (int b = 0; b < b_n; ++b) {
    lens[b] = variant_.source == SourceKind::kTokens
                  ? static_cast<int>(batch[b]->tokens.size())
                  : static_cast<int>(batch[b]->feats.rows());
    if (lens[b] < 1) throw ContractError("encode: empty source sequence");
  }
  int steps = *std::max_element(lens.begin(), lens.end());

  Tensor x = assemble_input(batch, steps, &lens);
  for (int l = 0; l < cfg_.enc_layers; ++l) {
    if (l > 0) x = dropout(x, cfg_.dropout, mode, rng);
    Tensor fwd = lstm_sequence(x, steps, b_n, enc_fwd_[l]);
    std::vector<int> ridx = reverse_index(lens, steps, b_n);
    Tensor bwd = rows(lstm_sequence(rows(x, ridx), steps, b_n, enc_bwd_[l]), ridx);
    x = mask_invalid(hconcat({fwd, bwd}), lens, steps, b_n);

    for (auto& nin : nin_) {
      if (nin.after != l + 1) continue;
      int h2 = 2 * cfg_.hidden;
      int half = (steps + 1) / 2;
      Tensor padded = vconcat({x, Tensor::constant(Matrix::Zero(1, h2))});
      std::vector<int> even(static_cast<size_t>(half) * b_n);
      std::vector<int> odd(static_cast<size_t>(half) * b_n);
      for (int t = 0; t < half; ++t) {
        for (int b = 0; b < b_n; ++b) {
          even[t * b_n + b] = (2 * t) * b_n + b;
          odd[t * b_n + b] =
              2 * t + 1 < steps ? (2 * t + 1) * b_n + b : steps * b_n;
        }
      }
      Tensor pairs = hconcat({rows(padded, even), rows(padded, odd)});
      Tensor lin = matmul(pairs, nin.w);
      for (int b = 0; b < b_n; ++b) lens[b] = (lens[b] + 1) / 2;
      steps = half;
      std::vector<double> weights(static_cast<size_t>(steps) * b_n, 0.0);
      for (int t = 0; t < steps; ++t) {
        for (int b = 0; b < b_n; ++b) {
          if (t < lens[b]) weights[t * b_n + b] = 1.0;
        }
      }
      x = mask_invalid(batch_norm(lin, nin.gamma, nin.beta, &nin.stats, mode, &weights),
                       lens, steps, b_n);
    }
  }

  EncodedBatch out;
  out.states = x;
  out.valid = lens;
  out.steps = steps;
  out.batch = b_n;
  return out;
}

void Seq2SeqModel::cache_attention_proj(EncodedBatch* enc) {
  enc->proj = matmul(enc->states, attn_enc_);
}

DecoderState Seq2SeqModel::initial_state(int batch) const {
  DecoderState st;
  for (int k = 0; k < cfg_.dec_layers; ++k) {
    st.h.push_back(Tensor::constant(Matrix::Zero(batch, cfg_.hidden)));
    st.c.push_back(Tensor::constant(Matrix::Zero(batch, cfg_.hidden)));
  }
  st.ctx = Tensor::constant(Matrix::Zero(batch, 2 * cfg_.hidden));
  return st;
}

std::pair<Tensor, DecoderState> Seq2SeqModel::decode_step(
    const std::vector<int>& prev_tokens, const DecoderState& state,
    const EncodedBatch& enc, Mode mode, Rng* rng) {
  if (static_cast<int>(prev_tokens.size()) != enc.batch) {
    throw ShapeError("decode_step: " + std::to_string(prev_tokens.size()) +
                     " tokens for a batch of " + std::to_string(enc.batch));
  }
  for (int t : prev_tokens) {
    if (t < 0 || t >= dims_.tgt_vocab) {
      throw IndexError("decode_step: token " + std::to_string(t) +
                       " outside the target vocabulary");
    }
  }
  Tensor emb = dropout(rows(tgt_embed_, prev_tokens), cfg_.embed_dropout, mode, rng);
  DecoderState next;
  next.h = state.h;
  next.c = state.c;
  Tensor x = hconcat({emb, state.ctx});
  for (int k = 0; k < cfg_.dec_layers; ++k) {
    x = lstm_step(x, &next.h[k], &next.c[k], dec_[k]);
  }
  auto [ctx, weights] = attend(next.h.back(), enc, attn_enc_, attn_dec_, attn_v_);
  (void)weights;
  next.ctx = ctx;
  Tensor out_in = dropout(hconcat({next.h.back(), ctx}), cfg_.dropout, mode, rng);
  Tensor logits = add_rowvec(matmul(out_in, out_w_), out_b_);
  return {logits, next};
}

Tensor Seq2SeqModel::forward_loss(const std::vector<const SourceInput*>& sources,
                                  const std::vector<std::vector<int>>& targets,
                                  Mode mode, Rng* rng) {
  if (sources.size() != targets.size()) {
    throw ShapeError("forward_loss: " + std::to_string(sources.size()) +
                     " sources vs " + std::to_string(targets.size()) + " targets");
  }
  EncodedBatch enc = encode(sources, mode, rng);
  cache_attention_proj(&enc);

  size_t max_len = 0;
  std::int64_t n_positions = 0;
  for (const auto& t : targets) {
    max_len = std::max(max_len, t.size());
    for (int v : t) n_positions += v != BpeModel::kPadId ? 1 : 0;
  }
  if (max_len == 0 || n_positions == 0) {
    throw ContractError("forward_loss: batch has no target positions");
  }

  DecoderState st = initial_state(enc.batch);
  std::vector<int> prev(enc.batch, BpeModel::kBosId);
  Tensor total;
  for (size_t step = 0; step < max_len; ++step) {
    auto [logits, next] = decode_step(prev, st, enc, mode, rng);
    st = std::move(next);
    std::vector<int> tgt(enc.batch, BpeModel::kPadId);
    std::vector<double> mask(enc.batch, 0.0);
    for (int b = 0; b < enc.batch; ++b) {
      if (step < targets[b].size()) {
        tgt[b] = targets[b][step];
        if (tgt[b] != BpeModel::kPadId) mask[b] = 1.0;
      }
    }
    Tensor step_loss = smoothed_ce_sum(logits, tgt, cfg_.label_smoothing, mask);
    total = total.defined() ? add(total, step_loss) : step_loss;
    prev = tgt;  // teacher forcing; exhausted rows feed pad
  }
  return scale(total, 1.0 / static_cast<double>(n_positions));
}

std::vector<std::pair<std::string, Tensor>> Seq2SeqModel::named_parameters() const {
  return params_;
}

std::vector<Tensor> Seq2SeqModel::parameters() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

void Seq2SeqModel::project_target_norm() {
  Matrix& e = tgt_embed_.mutable_value();
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    double norm = e.row(r).norm();
    if (norm > 0) e.row(r) /= norm;
  }
}

Checkpoint Seq2SeqModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta["variant"] = variant_.tag;
  ckpt.meta["arch"] = cfg_.to_json();
  ckpt.meta["dims"] = {{"feat_dim", dims_.feat_dim},
                       {"n_phones", dims_.n_phones},
                       {"src_vocab", dims_.src_vocab},
                       {"tgt_vocab", dims_.tgt_vocab}};
  for (const auto& [name, t] : params_) ckpt.params[name] = t.value();
  for (const auto& nin : nin_) {
    ckpt.bn_stats["enc.nin" + std::to_string(nin.after)] = nin.stats;
  }
  return ckpt;
}

void Seq2SeqModel::load_checkpoint(const Checkpoint& ckpt) {
  for (auto& [name, t] : params_) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) {
      throw ConsistencyError("checkpoint is missing parameter " + name);
    }
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      throw ConsistencyError("checkpoint parameter " + name + " has shape " +
                             std::to_string(it->second.rows()) + "x" +
                             std::to_string(it->second.cols()) + ", model needs " +
                             std::to_string(t.rows()) + "x" +
                             std::to_string(t.cols()));
    }
    t.mutable_value() = it->second;
  }
  for (auto& nin : nin_) {
    auto it = ckpt.bn_stats.find("enc.nin" + std::to_string(nin.after));
    if (it == ckpt.bn_stats.end()) {
      throw ConsistencyError("checkpoint is missing batch-norm stats for layer " +
                             std::to_string(nin.after));
    }
    nin.stats = it->second;
  }
}

}  // namespace phonest
