// test_frontend.cc

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

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "phonest/common.h"
#include "phonest/rng.h"

namespace phonest {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "phonest_frontend_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Independent spectral path: direct O(n^2) DFT of the zero-padded frame plus
// a from-scratch Mel triangle evaluation.
RowVector oracle_log_mel(const RowVector& frame, int rate, int n_mels,
                         double floor_val) {
  int w = static_cast<int>(frame.size());
  int nfft = 1;
  while (nfft < w) nfft *= 2;
  int n_bins = nfft / 2 + 1;
  std::vector<double> power(n_bins, 0.0);
  for (int k = 0; k < n_bins; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int n = 0; n < w; ++n) {
      double ang = -2.0 * M_PI * k * n / nfft;
      acc += frame(n) * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    power[k] = std::norm(acc);
  }
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto imel = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  double top = mel(rate / 2.0);
  RowVector out(n_mels);
  for (int m = 0; m < n_mels; ++m) {
    double lo = imel(top * m / (n_mels + 1));
    double c = imel(top * (m + 1) / (n_mels + 1));
    double hi = imel(top * (m + 2) / (n_mels + 1));
    double acc = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      double f = static_cast<double>(k) * rate / nfft;
      if (f <= lo || f >= hi) continue;
      double wgt = f <= c ? (f - lo) / (c - lo) : (hi - f) / (hi - c);
      acc += wgt * power[k];
    }
    out(m) = std::log(std::max(acc, floor_val));
  }
  return out;
}

double mel_center_hz(int filter, int n_mels, int rate) {
  double top = 2595.0 * std::log10(1.0 + (rate / 2.0) / 700.0);
  double m = top * (filter + 1) / (n_mels + 1);
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

std::vector<double> sinusoid(double hz, double amp, int rate, int n) {
  std::vector<double> s(n);
  for (int i = 0; i < n; ++i) s[i] = amp * std::sin(2.0 * M_PI * hz * i / rate);
  return s;
}

void write_wav(const std::filesystem::path& path, const std::vector<std::int16_t>& pcm,
               int rate, int channels = 1, int bits = 16) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                 static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  auto u16 = [&](std::uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * channels * bits / 8));
  u16(static_cast<std::uint16_t>(channels * bits / 8));
  u16(static_cast<std::uint16_t>(bits));
  out.write("data", 4);
  u32(data_bytes);
  for (std::int16_t v : pcm) u16(static_cast<std::uint16_t>(v));
}

TEST_CASE("frame_signal counts and window") {
  std::vector<double> ones(200, 1.0);
  FramedSignal one = frame_signal(ones, 8000);
  CHECK(one.frames.rows() == 1);
  CHECK_FALSE(one.too_short);
  for (int i = 0; i < 200; ++i) {
    double expect = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / 199.0);
    CHECK(one.frames(0, i) == doctest::Approx(expect).epsilon(1e-12));
  }

  FramedSignal two = frame_signal(std::vector<double>(280, 0.5), 8000);
  CHECK(two.frames.rows() == 2);

  FramedSignal none = frame_signal(std::vector<double>(199, 1.0), 8000);
  CHECK(none.frames.rows() == 0);
  CHECK(none.too_short);

  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    int n = rng.uniform_int(200, 4000);
    FramedSignal f = frame_signal(std::vector<double>(n, 0.1), 8000);
    CHECK(f.frames.rows() == 1 + (n - 200) / 80);
  }
  CHECK_THROWS_AS(frame_signal(ones, 0), ParamError);
}

TEST_CASE("log_mel zero signal hits the floor everywhere") {
  RowVector frame = RowVector::Zero(200);
  RowVector out = log_mel(frame, 8000);
  for (int m = 0; m < 40; ++m) CHECK(out(m) == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("log_mel agrees with a direct DFT oracle") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    RowVector frame(200);
    for (int i = 0; i < 200; ++i) frame(i) = rng.normal();
    RowVector got = log_mel(frame, 8000);
    RowVector want = oracle_log_mel(frame, 8000, 40, 1e-10);
    for (int m = 0; m < 40; ++m) {
      CHECK(got(m) == doctest::Approx(want(m)).epsilon(1e-8));
    }
  }
}

TEST_CASE("sinusoid at a filter center peaks at that filter") {
  for (int j : {5, 12, 20, 28, 35}) {
    double hz = mel_center_hz(j, 40, 8000);
    std::vector<double> s = sinusoid(hz, 0.8, 8000, 400);
    FramedSignal framed = frame_signal(s, 8000);
    REQUIRE(framed.frames.rows() >= 1);
    RowVector out = log_mel(framed.frames.row(0), 8000);
    int argmax = 0;
    out.maxCoeff(&argmax);
    CHECK(std::abs(argmax - j) <= 1);
  }
}

TEST_CASE("doubling amplitude adds ln 4 to above-floor bins") {
  double hz = mel_center_hz(17, 40, 8000);
  std::vector<double> lo = sinusoid(hz, 0.25, 8000, 200);
  std::vector<double> hi = sinusoid(hz, 0.5, 8000, 200);
  RowVector a = log_mel(frame_signal(lo, 8000).frames.row(0), 8000);
  RowVector b = log_mel(frame_signal(hi, 8000).frames.row(0), 8000);
  double floor_log = std::log(1e-10);
  int checked = 0;
  for (int m = 0; m < 40; ++m) {
    if (a(m) < floor_log + 1.0 || b(m) < floor_log + 1.0) continue;
    CHECK(b(m) - a(m) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked > 10);
}

std::vector<FeatureMatrix> random_utts(Rng* rng) {
  std::vector<FeatureMatrix> utts;
  for (int i = 0; i < 6; ++i) {
    FeatureMatrix u;
    u.id = "u" + std::to_string(i);
    u.speaker = i < 3 ? "alice" : "bob";
    u.frames = Matrix(10 + i, 5);
    for (Eigen::Index t = 0; t < u.frames.rows(); ++t) {
      for (int d = 0; d < 5; ++d) u.frames(t, d) = rng->normal() * (d + 1) + d;
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

TEST_CASE("cmvn normalizes per speaker") {
  Rng rng(31);
  std::vector<FeatureMatrix> utts = random_utts(&rng);
  auto stats = cmvn_stats(utts);
  REQUIRE(stats.size() == 2);
  CHECK(stats.at("alice").frame_count == 10 + 11 + 12);
  cmvn_apply(stats, &utts);

  for (const std::string& spk : {"alice", "bob"}) {
    Matrix all(0, 5);
    for (const auto& u : utts) {
      if (u.speaker != spk) continue;
      Matrix merged(all.rows() + u.frames.rows(), 5);
      merged << all, u.frames;
      all = std::move(merged);
    }
    RowVector mean = all.colwise().mean();
    RowVector var = (all.rowwise() - mean).array().square().colwise().mean();
    for (int d = 0; d < 5; ++d) {
      CHECK(std::abs(mean(d)) < 1e-6);
      CHECK(std::abs(var(d) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("cmvn constant dimension maps to zeros") {
  std::vector<FeatureMatrix> utts(1);
  utts[0].id = "u0";
  utts[0].speaker = "s";
  utts[0].frames = Matrix(8, 3);
  Rng rng(5);
  for (int t = 0; t < 8; ++t) {
    utts[0].frames(t, 0) = 7.25;
    utts[0].frames(t, 1) = rng.normal();
    utts[0].frames(t, 2) = rng.uniform(-2, 2);
  }
  cmvn_apply(cmvn_stats(utts), &utts);
  for (int t = 0; t < 8; ++t) CHECK(utts[0].frames(t, 0) == doctest::Approx(0.0));
}

TEST_CASE("cmvn single-utterance speaker equals per-utterance normalization") {
  Rng rng(37);
  std::vector<FeatureMatrix> group = random_utts(&rng);
  FeatureMatrix solo;
  solo.id = "solo";
  solo.speaker = "carol";
  solo.frames = Matrix(9, 5);
  for (int t = 0; t < 9; ++t) {
    for (int d = 0; d < 5; ++d) solo.frames(t, d) = rng.normal() * 2 + 1;
  }
  group.push_back(solo);

  std::vector<FeatureMatrix> alone = {solo};
  cmvn_apply(cmvn_stats(alone), &alone);
  cmvn_apply(cmvn_stats(group), &group);
  CHECK((group.back().frames - alone[0].frames).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cmvn is idempotent and rejects unknown speakers") {
  Rng rng(41);
  std::vector<FeatureMatrix> utts = random_utts(&rng);
  cmvn_apply(cmvn_stats(utts), &utts);
  std::vector<FeatureMatrix> again = utts;
  cmvn_apply(cmvn_stats(again), &again);
  for (size_t i = 0; i < utts.size(); ++i) {
    CHECK((again[i].frames - utts[i].frames).cwiseAbs().maxCoeff() < 1e-6);
  }

  std::vector<FeatureMatrix> stranger(1);
  stranger[0].id = "x";
  stranger[0].speaker = "nobody";
  stranger[0].frames = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(cmvn_apply(cmvn_stats(utts), &stranger), LookupError);
}

TEST_CASE("speaker stats survive a json round trip") {
  Rng rng(43);
  std::vector<FeatureMatrix> utts = random_utts(&rng);
  auto stats = cmvn_stats(utts);
  auto back = speaker_stats_from_json(speaker_stats_to_json(stats));
  REQUIRE(back.size() == stats.size());
  for (const auto& [name, s] : stats) {
    const auto& b = back.at(name);
    CHECK(b.frame_count == s.frame_count);
    CHECK((b.mean - s.mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b.var - s.var).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("feature jsonl round trip is bit exact") {
  Rng rng(47);
  std::vector<FeatureMatrix> utts = random_utts(&rng);
  utts[0].frames(0, 0) = 1.0 / 3.0;
  utts[0].frames(0, 1) = -0.0;
  utts[0].frames(0, 2) = 5e-324;
  auto path = temp_file("feats.jsonl");
  write_features_jsonl(path.string(), utts);
  auto back = read_features_jsonl(path.string());
  REQUIRE(back.size() == utts.size());
  for (size_t i = 0; i < utts.size(); ++i) {
    CHECK(back[i].id == utts[i].id);
    CHECK(back[i].speaker == utts[i].speaker);
    REQUIRE(back[i].frames.rows() == utts[i].frames.rows());
    for (Eigen::Index t = 0; t < utts[i].frames.rows(); ++t) {
      for (Eigen::Index d = 0; d < utts[i].frames.cols(); ++d) {
        CHECK(std::memcmp(&back[i].frames(t, d), &utts[i].frames(t, d),
                          sizeof(double)) == 0);
      }
    }
  }

  CHECK_THROWS_AS(read_features_jsonl("/nonexistent/feats.jsonl"), ParseError);
  auto bad = temp_file("bad.jsonl");
  std::ofstream(bad) << "{\"id\": \"u\", \"speaker\": \"s\", \"frames\": [[1, 2], [3]]}\n";
  CHECK_THROWS_AS(read_features_jsonl(bad.string()), ParseError);
  auto garbled = temp_file("garbled.jsonl");
  std::ofstream(garbled) << "not json\n";
  CHECK_THROWS_AS(read_features_jsonl(garbled.string()), ParseError);
}

TEST_CASE("wav reader handles pcm and rejects other formats") {
  std::vector<std::int16_t> pcm = {0, 16384, -16384, 32767, -32768, 123};
  auto path = temp_file("tone.wav");
  write_wav(path, pcm, 8000);
  int rate = 0;
  std::vector<double> got = read_wav(path.string(), &rate);
  CHECK(rate == 8000);
  REQUIRE(got.size() == pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) {
    CHECK(got[i] == doctest::Approx(pcm[i] / 32768.0).epsilon(1e-12));
  }

  auto stereo = temp_file("stereo.wav");
  write_wav(stereo, pcm, 8000, 2);
  CHECK_THROWS_AS(read_wav(stereo.string(), nullptr), ParseError);

  auto eight = temp_file("eight.wav");
  write_wav(eight, pcm, 8000, 1, 8);
  CHECK_THROWS_AS(read_wav(eight.string(), nullptr), ParseError);

  auto trunc = temp_file("trunc.wav");
  {
    std::ofstream out(trunc, std::ios::binary);
    out.write("RIFF\x10\x00\x00\x00WAV", 11);
  }
  CHECK_THROWS_AS(read_wav(trunc.string(), nullptr), ParseError);

  auto notriff = temp_file("notriff.wav");
  std::ofstream(notriff, std::ios::binary) << "OGGSxxxxxxxxxxxxxxxx";
  CHECK_THROWS_AS(read_wav(notriff.string(), nullptr), ParseError);
  CHECK_THROWS_AS(read_wav("/nonexistent/x.wav", nullptr), ParseError);
}

TEST_CASE("log_mel_features runs the full pipeline deterministically") {
  std::vector<double> s = sinusoid(700.0, 0.5, 8000, 1000);
  Matrix a = log_mel_features(s);
  Matrix b = log_mel_features(s);
  CHECK(a.rows() == 11);
  CHECK(a.cols() == 40);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.allFinite());
}

}  // namespace
}  // namespace phonest
