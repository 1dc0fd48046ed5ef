// phonest/stmodel.h

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

// Pyramidal BiLSTM encoder with NiN downsampling, MLP attention, and an
// input-feeding LSTM decoder; one class assembles every model variant.

#ifndef PHONEST_STMODEL_H_
#define PHONEST_STMODEL_H_

#include <string>
#include <utility>
#include <vector>

#include "phonest/checkpoint.h"
#include "phonest/common.h"
#include "phonest/rng.h"
#include "phonest/tensor.h"

namespace phonest {

struct ArchConfig {
  int hidden = 512;  // per direction
  int enc_layers = 3;
  std::vector<int> downsample_after = {1, 2};  // NiN positions, 1-based
  int attn_units = 128;
  int dec_layers = 1;
  int embed_dim = 64;
  double dropout = 0.2;
  double embed_dropout = 0.1;
  double label_smoothing = 0.1;
  bool fix_target_norm = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
};

enum class SourceKind {
  kFrames,           // continuous feature frames
  kFramesPlusFactor, // frames with a trainable phone-embedding factor
  kAveragedFrames,   // segment-averaged frames (same encoder)
  kTokens,           // discrete tokens through a source embedding
};

struct ModelVariant {
  std::string tag;
  SourceKind source = SourceKind::kFrames;
  bool transcript_target = false;  // target is the transcript, not the translation
};

// baseline_e2e, phone_e2e, phone_avg_e2e, mt_over_text, mt_over_phones,
// asr_bpe, asr_phone_avg. Unknown tag is a LookupError.
ModelVariant variant_by_tag(const std::string& tag);
const std::vector<std::string>& all_variant_tags();

struct ModelDims {
  int feat_dim = 40;  // continuous-input width
  int n_phones = 0;   // phone factor table rows (phone_e2e only)
  int src_vocab = 0;  // token-input vocabulary (token variants only)
  int tgt_vocab = 0;
};

// One utterance's model-ready source. Continuous variants fill feats (and
// phone_labels for the factor variant); token variants fill tokens.
struct SourceInput {
  Matrix feats;
  std::vector<int> phone_labels;
  std::vector<int> tokens;
};

struct EncodedBatch {
  Tensor states;  // (steps*batch) x 2h, time-major
  Tensor proj;    // optional cached states * W_enc for attention
  std::vector<int> valid;
  int steps = 0;
  int batch = 0;
};

struct DecoderState {
  std::vector<Tensor> h, c;  // batch x hidden, one per decoder layer
  Tensor ctx;                // batch x 2h input-feeding context
};

// score_t = v . tanh(W_enc h_t + W_dec s), softmax over t < valid[b] only.
// Returns (context batch x 2h, weights (steps*batch) x 1). A zero valid
// length is a ContractError. `proj` may pass a precomputed states * W_enc.
std::pair<Tensor, Tensor> attend(const Tensor& dec_state, const EncodedBatch& enc,
                                 const Tensor& w_enc, const Tensor& w_dec,
                                 const Tensor& v);

class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelVariant& variant, const ArchConfig& cfg,
               const ModelDims& dims, Rng* init_rng);

  const ModelVariant& variant() const { return variant_; }
  const ArchConfig& config() const { return cfg_; }
  const ModelDims& dims() const { return dims_; }
  int source_width() const;

  // Encoder output steps for an input of length t: ceil(ceil(t/2)/2) under
  // the default two downsampling positions.
  int encoded_steps(int t) const;

  EncodedBatch encode(const std::vector<const SourceInput*>& batch, Mode mode,
                      Rng* rng);
  // Caches states * W_enc on the batch so repeated attention reuses it.
  void cache_attention_proj(EncodedBatch* enc);

  DecoderState initial_state(int batch) const;
  std::pair<Tensor, DecoderState> decode_step(const std::vector<int>& prev_tokens,
                                              const DecoderState& state,
                                              const EncodedBatch& enc, Mode mode,
                                              Rng* rng);

  // Mean label-smoothed cross entropy over non-pad target positions.
  // Targets include eos and are not bos-prefixed; all-pad is a ContractError.
  Tensor forward_loss(const std::vector<const SourceInput*>& sources,
                      const std::vector<std::vector<int>>& targets, Mode mode,
                      Rng* rng);

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Re-projects target-embedding rows to unit L2 norm (fix-norm); the
  // trainer calls this after every optimizer step.
  void project_target_norm();

  Checkpoint to_checkpoint() const;
  void load_checkpoint(const Checkpoint& ckpt);

 private:
  struct LstmParams {
    Tensor wx, wh, b;
  };

  LstmParams make_lstm(const std::string& name, int in_dim);
  Tensor make_param(const std::string& name, int rows, int cols, bool zero = false);
  Tensor lstm_sequence(const Tensor& x, int steps, int batch, const LstmParams& p);
  static Tensor lstm_step(const Tensor& x, Tensor* h, Tensor* c, const LstmParams& p);
  Tensor assemble_input(const std::vector<const SourceInput*>& batch, int steps,
                        std::vector<int>* lens) const;

  ModelVariant variant_;
  ArchConfig cfg_;
  ModelDims dims_;
  Rng* rng_ = nullptr;  // only set during construction

  std::vector<std::pair<std::string, Tensor>> params_;  // construction order
  Tensor src_embed_, phone_table_;
  std::vector<LstmParams> enc_fwd_, enc_bwd_;
  struct NinLayer {
    int after = 0;
    Tensor w, gamma, beta;
    BatchNormStats stats;
  };
  std::vector<NinLayer> nin_;
  std::vector<LstmParams> dec_;
  Tensor attn_enc_, attn_dec_, attn_v_;
  Tensor out_w_, out_b_;
  Tensor tgt_embed_;
};

}  // namespace phonest

#endif  // PHONEST_STMODEL_H_
