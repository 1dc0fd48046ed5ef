// phonest/frontend.h

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

// Waveform to log-Mel filterbank features with per-speaker CMVN. Synthetic
// corpora may bypass the DSP path and supply FeatureMatrix records directly;
// downstream code treats both sources identically.

#ifndef PHONEST_FRONTEND_H_
#define PHONEST_FRONTEND_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonest/tensor.h"

namespace phonest {

struct FrontendConfig {
  int sample_rate = 8000;  // telephone speech
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 40;
  double log_floor = 1e-10;
};

struct FeatureMatrix {
  std::string id;
  std::string speaker;
  Matrix frames;  // T x n_mels
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = 8000;
};

struct SpeakerStats {
  std::string speaker;
  RowVector mean;
  RowVector var;  // population variance, floored at 1e-8 before division
  std::int64_t frame_count = 0;
};

struct FramedSignal {
  Matrix frames;  // one Hamming-windowed frame per row
  bool too_short = false;  // signal shorter than one window
};

// Frame count is 1 + floor((N - W) / H) for N >= W samples.
FramedSignal frame_signal(const std::vector<double>& samples, int sample_rate,
                          double window_ms = 25.0, double hop_ms = 10.0);

// Log of the Mel-filtered power spectrum of one windowed frame; the floor is
// applied before the log, so the output is always finite.
RowVector log_mel(const RowVector& frame, int sample_rate, int n_mels = 40,
                  double log_floor = 1e-10);

// Full pipeline over one waveform.
Matrix log_mel_features(const std::vector<double>& samples,
                        const FrontendConfig& cfg = {});

// Statistics over every frame of each speaker, then normalization to zero
// mean and (floored) unit variance per dimension.
std::map<std::string, SpeakerStats> cmvn_stats(
    const std::vector<FeatureMatrix>& utts);
void cmvn_apply(const std::map<std::string, SpeakerStats>& stats,
                std::vector<FeatureMatrix>* utts);

nlohmann::json speaker_stats_to_json(
    const std::map<std::string, SpeakerStats>& stats);
std::map<std::string, SpeakerStats> speaker_stats_from_json(
    const nlohmann::json& j);

// Feature file: JSON-lines, one {"id", "speaker", "frames": [[...], ...]}
// record per utterance.
void write_features_jsonl(const std::string& path,
                          const std::vector<FeatureMatrix>& utts);
std::vector<FeatureMatrix> read_features_jsonl(const std::string& path);

// 16-bit mono PCM WAV. Samples are scaled to [-1, 1).
std::vector<double> read_wav(const std::string& path, int* sample_rate);

}  // namespace phonest

#endif  // PHONEST_FRONTEND_H_
