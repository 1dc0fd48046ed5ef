// frontend.cc

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

#include "phonest/frontend.h"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "phonest/checkpoint.h"
#include "phonest/common.h"

namespace phonest {

namespace {

constexpr double kCmvnVarFloor = 1e-8;

int window_samples(int sample_rate, double ms) {
  int n = static_cast<int>(std::lround(ms * sample_rate / 1000.0));
  if (n <= 0) {
    throw ParamError("frontend: window/hop of " + std::to_string(ms) +
                     " ms is empty at " + std::to_string(sample_rate) + " Hz");
  }
  return n;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

int next_pow2(int n) {
  int p = 1;
  while (p < n) p *= 2;
  return p;
}

// Triangular filters with centers equally spaced on the Mel scale between
// 0 Hz and Nyquist, evaluated at the FFT bin frequencies.
Matrix mel_filterbank(int n_mels, int nfft, int sample_rate) {
  int n_bins = nfft / 2 + 1;
  double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> hz_points(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    hz_points[i] = mel_to_hz(mel_hi * i / (n_mels + 1));
  }
  Matrix fb = Matrix::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    double lo = hz_points[m], center = hz_points[m + 1], hi = hz_points[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      double f = static_cast<double>(k) * sample_rate / nfft;
      if (f <= lo || f >= hi) continue;
      fb(m, k) = f <= center ? (f - lo) / (center - lo) : (hi - f) / (hi - center);
    }
  }
  return fb;
}

}  // namespace

FramedSignal frame_signal(const std::vector<double>& samples, int sample_rate,
                          double window_ms, double hop_ms) {
  if (sample_rate <= 0) throw ParamError("frontend: sample rate must be positive");
  int w = window_samples(sample_rate, window_ms);
  int h = window_samples(sample_rate, hop_ms);
  FramedSignal out;
  std::int64_t n = static_cast<std::int64_t>(samples.size());
  if (n < w) {
    out.frames = Matrix(0, w);
    out.too_short = true;
    return out;
  }
  std::int64_t t = 1 + (n - w) / h;
  out.frames = Matrix(t, w);
  RowVector window(w);
  for (int i = 0; i < w; ++i) {
    window(i) = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (w - 1));
  }
  for (std::int64_t f = 0; f < t; ++f) {
    for (int i = 0; i < w; ++i) {
      out.frames(f, i) = samples[f * h + i] * window(i);
    }
  }
  return out;
}

RowVector log_mel(const RowVector& frame, int sample_rate, int n_mels,
                  double log_floor) {
  if (n_mels <= 0) throw ParamError("frontend: n_mels must be positive");
  int w = static_cast<int>(frame.size());
  if (w <= 0) throw ParamError("frontend: empty analysis frame");
  int nfft = next_pow2(w);
  std::vector<double> padded(nfft, 0.0);
  for (int i = 0; i < w; ++i) padded[i] = frame(i);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  int n_bins = nfft / 2 + 1;
  RowVector power(n_bins);
  for (int k = 0; k < n_bins; ++k) power(k) = std::norm(spec[k]);
  Matrix fb = mel_filterbank(n_mels, nfft, sample_rate);
  RowVector energies = power * fb.transpose();
  RowVector out(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    out(m) = std::log(std::max(energies(m), log_floor));
  }
  return out;
}

Matrix log_mel_features(const std::vector<double>& samples,
                        const FrontendConfig& cfg) {
  FramedSignal framed =
      frame_signal(samples, cfg.sample_rate, cfg.window_ms, cfg.hop_ms);
  Matrix feats(framed.frames.rows(), cfg.n_mels);
  for (Eigen::Index t = 0; t < framed.frames.rows(); ++t) {
    feats.row(t) =
        log_mel(framed.frames.row(t), cfg.sample_rate, cfg.n_mels, cfg.log_floor);
  }
  return feats;
}

std::map<std::string, SpeakerStats> cmvn_stats(
    const std::vector<FeatureMatrix>& utts) {
  std::map<std::string, SpeakerStats> stats;
  Eigen::Index dim = -1;
  for (const auto& u : utts) {
    if (u.frames.rows() == 0) continue;
    if (dim < 0) dim = u.frames.cols();
    if (u.frames.cols() != dim) {
      throw ShapeError("cmvn: utterance " + u.id + " has " +
                       std::to_string(u.frames.cols()) +
                       " feature dims, expected " + std::to_string(dim));
    }
    auto& s = stats[u.speaker];
    if (s.frame_count == 0) {
      s.speaker = u.speaker;
      s.mean = RowVector::Zero(dim);
      s.var = RowVector::Zero(dim);
    }
    s.mean += u.frames.colwise().sum();
    s.var += u.frames.array().square().colwise().sum().matrix();
    s.frame_count += u.frames.rows();
  }
  for (auto& [name, s] : stats) {
    s.mean /= static_cast<double>(s.frame_count);
    s.var = s.var / static_cast<double>(s.frame_count) -
            s.mean.array().square().matrix();
    s.var = s.var.cwiseMax(0.0);
  }
  return stats;
}

void cmvn_apply(const std::map<std::string, SpeakerStats>& stats,
                std::vector<FeatureMatrix>* utts) {
  for (auto& u : *utts) {
    auto it = stats.find(u.speaker);
    if (it == stats.end()) {
      throw LookupError("cmvn: no statistics for speaker " + u.speaker +
                        " (utterance " + u.id + ")");
    }
    const SpeakerStats& s = it->second;
    if (u.frames.rows() == 0) continue;
    if (u.frames.cols() != s.mean.size()) {
      throw ShapeError("cmvn: utterance " + u.id + " has " +
                       std::to_string(u.frames.cols()) +
                       " feature dims, stats have " +
                       std::to_string(s.mean.size()));
    }
    RowVector scale =
        s.var.cwiseMax(kCmvnVarFloor).array().sqrt().inverse().matrix();
    u.frames = ((u.frames.rowwise() - s.mean).array().rowwise() * scale.array())
                   .matrix();
  }
}

nlohmann::json speaker_stats_to_json(
    const std::map<std::string, SpeakerStats>& stats) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, s] : stats) {
    nlohmann::json rec;
    rec["mean"] = std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size());
    rec["var"] = std::vector<double>(s.var.data(), s.var.data() + s.var.size());
    rec["frame_count"] = s.frame_count;
    j[name] = std::move(rec);
  }
  return j;
}

std::map<std::string, SpeakerStats> speaker_stats_from_json(
    const nlohmann::json& j) {
  std::map<std::string, SpeakerStats> stats;
  for (auto it = j.begin(); it != j.end(); ++it) {
    SpeakerStats s;
    s.speaker = it.key();
    auto mean = it.value().at("mean").get<std::vector<double>>();
    auto var = it.value().at("var").get<std::vector<double>>();
    s.mean = Eigen::Map<const RowVector>(mean.data(), mean.size());
    s.var = Eigen::Map<const RowVector>(var.data(), var.size());
    s.frame_count = it.value().at("frame_count").get<std::int64_t>();
    stats[it.key()] = std::move(s);
  }
  return stats;
}

void write_features_jsonl(const std::string& path,
                          const std::vector<FeatureMatrix>& utts) {
  std::ostringstream out;
  for (const auto& u : utts) {
    nlohmann::json rec;
    rec["id"] = u.id;
    rec["speaker"] = u.speaker;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index t = 0; t < u.frames.rows(); ++t) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index d = 0; d < u.frames.cols(); ++d) row.push_back(u.frames(t, d));
      rows.push_back(std::move(row));
    }
    rec["frames"] = std::move(rows);
    out << rec.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<FeatureMatrix> read_features_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature file " + path);
  std::vector<FeatureMatrix> utts;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    FeatureMatrix u;
    u.id = rec.at("id").get<std::string>();
    u.speaker = rec.at("speaker").get<std::string>();
    const auto& rows = rec.at("frames");
    Eigen::Index t = static_cast<Eigen::Index>(rows.size());
    Eigen::Index dim = t > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    u.frames = Matrix(t, dim);
    for (Eigen::Index i = 0; i < t; ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != dim) {
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": ragged frame rows in utterance " + u.id);
      }
      for (Eigen::Index d = 0; d < dim; ++d) u.frames(i, d) = rows[i][d].get<double>();
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

std::vector<double> read_wav(const std::string& path, int* sample_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open wav file " + path);
  auto read_bytes = [&](char* dst, std::streamsize n, const char* what) {
    if (!in.read(dst, n)) {
      throw ParseError(path + ": truncated wav (" + what + ")");
    }
  };
  auto read_u32 = [&](const char* what) {
    unsigned char b[4];
    read_bytes(reinterpret_cast<char*>(b), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  auto read_u16 = [&](const char* what) {
    unsigned char b[2];
    read_bytes(reinterpret_cast<char*>(b), 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  };
  char tag[4];
  read_bytes(tag, 4, "RIFF tag");
  if (std::memcmp(tag, "RIFF", 4) != 0) throw ParseError(path + ": not a RIFF file");
  read_u32("riff size");
  read_bytes(tag, 4, "WAVE tag");
  if (std::memcmp(tag, "WAVE", 4) != 0) throw ParseError(path + ": not a WAVE file");

  int rate = 0, channels = 0, bits = 0;
  bool have_fmt = false;
  std::vector<double> samples;
  bool have_data = false;
  while (in.read(tag, 4)) {
    std::uint32_t size = read_u32("chunk size");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint16_t format = read_u16("audio format");
      channels = read_u16("channels");
      rate = static_cast<int>(read_u32("sample rate"));
      read_u32("byte rate");
      read_u16("block align");
      bits = read_u16("bits per sample");
      if (size > 16) in.ignore(size - 16);
      if (format != 1) throw ParseError(path + ": only PCM wav is supported");
      if (channels != 1) throw ParseError(path + ": only mono wav is supported");
      if (bits != 16) throw ParseError(path + ": only 16-bit wav is supported");
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw ParseError(path + ": data chunk before fmt chunk");
      std::uint32_t n = size / 2;
      samples.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        unsigned char b[2];
        read_bytes(reinterpret_cast<char*>(b), 2, "sample data");
        auto v = static_cast<std::int16_t>(b[0] | (b[1] << 8));
        samples[i] = static_cast<double>(v) / 32768.0;
      }
      if (size % 2) in.ignore(1);
      have_data = true;
    } else {
      in.ignore(size + (size % 2));
    }
  }
  if (!have_fmt || !have_data) throw ParseError(path + ": missing fmt or data chunk");
  if (sample_rate != nullptr) *sample_rate = rate;
  return samples;
}

}  // namespace phonest
