/*
 * Copyright 2026 The moemba Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "moemba/errors.hpp"
#include "moemba/sigproc.hpp"
#include "test_util.hpp"

namespace moemba::sigproc {
namespace {

// RMS from the DFT magnitude spectrum (Parseval); independent of the time
// domain path used by the filter.
double spectral_rms(const std::vector<double>& x) {
  const std::size_t n = x.size();
  double energy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) /
                                        static_cast<double>(n));
    }
    energy += std::norm(acc);
  }
  return std::sqrt(energy / static_cast<double>(n * n));
}

std::vector<double> sinusoid(double hz, std::size_t n, double phase = 0.3) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 1000.0 + phase);
  }
  return x;
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

TEST(Bandstop, ConstantSignalPasses) {
  const BandstopFilter f(45, 55, 4);
  const std::vector<double> x(500, 3.25);
  const auto y = f.filtfilt(x);
  for (double v : y) EXPECT_NEAR(v, 3.25, 1e-6);
}

TEST(Bandstop, FiftyHertzAttenuatedFortyDecibels) {
  const BandstopFilter f(45, 55, 4);
  for (double phase : {0.0, 0.3, 1.7, 4.0}) {
    const auto x = sinusoid(50.0, 1000, phase);
    const auto y = f.filtfilt(x);
    const double change = db(spectral_rms(y) / spectral_rms(x));
    EXPECT_LE(change, -40.0) << "phase " << phase << ": " << change << " dB";
  }
}

TEST(Bandstop, TenHertzPassesWithinOneDecibel) {
  const BandstopFilter f(45, 55, 4);
  const auto x = sinusoid(10.0, 1000);
  const auto y = f.filtfilt(x);
  EXPECT_LE(std::abs(db(spectral_rms(y) / spectral_rms(x))), 1.0);
}

TEST(Bandstop, FrequencyResponseShape) {
  const BandstopFilter f(45, 55, 4);
  EXPECT_EQ(f.sections().size(), 4u);
  EXPECT_NEAR(f.magnitude(0.0), 1.0, 1e-12);
  EXPECT_NEAR(f.magnitude(499.9), 1.0, 1e-3);
  EXPECT_LT(f.magnitude(50.0), 1e-4);
  // Butterworth edges sit at -3 dB.
  EXPECT_NEAR(f.magnitude(45.0), std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(f.magnitude(55.0), std::sqrt(0.5), 1e-6);
}

TEST(Bandstop, PolesInsideUnitCircleAndImpulseEnergyFinite) {
  for (int order : {1, 2, 3, 4, 6}) {
    const BandstopFilter f(45, 55, order);
    for (const auto& q : f.sections()) {
      // Roots of z^2 + a1 z + a2.
      const std::complex<double> disc = q.a1 * q.a1 - 4.0 * q.a2;
      const auto r = std::sqrt(disc);
      EXPECT_LT(std::abs((-q.a1 + r) / 2.0), 1.0);
      EXPECT_LT(std::abs((-q.a1 - r) / 2.0), 1.0);
    }
    std::vector<double> impulse(20000, 0.0);
    impulse[0] = 1.0;
    const auto h = f.filter(impulse);
    double head = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) (i < 10000 ? head : tail) += h[i] * h[i];
    EXPECT_TRUE(std::isfinite(head));
    EXPECT_LT(tail, 1e-12 * head);
  }
}

TEST(Bandstop, BoundedInputBoundedOutput) {
  const BandstopFilter f(45, 55, 4);
  const auto x = testing::random_values(5000, 9, -1, 1);
  for (double v : f.filtfilt(x)) EXPECT_LT(std::abs(v), 10.0);
}

TEST(Bandstop, NyquistIsConfigError) {
  EXPECT_THROW(BandstopFilter(45, 500, 4), ConfigError);
  EXPECT_THROW(BandstopFilter(480, 600, 4), ConfigError);
  EXPECT_THROW(BandstopFilter(55, 45, 4), ConfigError);
}

TEST(Bandstop, TooShortSignalIsRejected) {
  const BandstopFilter f(45, 55, 4);
  EXPECT_THROW(f.filtfilt(std::vector<double>(12, 1.0)), DataError);
  EXPECT_NO_THROW(f.filtfilt(std::vector<double>(13, 1.0)));
}

TEST(Segment, Counts) {
  EXPECT_EQ(segment(Tensor::zeros({64, 3})).size(), 1u);
  EXPECT_EQ(segment(Tensor::zeros({1000, 2}), 64, 8).size(), 118u);
  std::vector<double> ramp(72);
  for (std::size_t i = 0; i < 72; ++i) ramp[i] = static_cast<double>(i);
  const auto w = segment(Tensor::from({72, 1}, ramp), 64, 8);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[1].at({0, 0}), 8.0);
  EXPECT_EQ(w[1].at({63, 0}), 71.0);
}

TEST(Segment, ShortInputIsError) {
  EXPECT_THROW(segment(Tensor::zeros({63, 4})), DataError);
}

TEST(Normalize, Examples) {
  const auto y = normalize(Tensor::from({2, 2}, {-2, 2, 1, 0}));
  EXPECT_NEAR(y.at({0, 0}), -1.0, 0);
  EXPECT_NEAR(y.at({0, 1}), 1.0, 0);
  EXPECT_NEAR(y.at({1, 0}), 0.5, 1e-15);
  EXPECT_NEAR(y.at({1, 1}), 0.0, 1e-15);
  const auto c = normalize(Tensor::full({4, 3}, 7.0));
  for (double v : c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, ExactEndpoints) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto y = normalize(testing::random_tensor({64, 16}, seed, -5, 3));
    const auto [lo, hi] = std::minmax_element(y.data().begin(), y.data().end());
    EXPECT_EQ(*lo, -1.0);
    EXPECT_EQ(*hi, 1.0);
  }
}

SynthConfig small_synth(std::uint64_t seed = 3) {
  SynthConfig c;
  c.seed = seed;
  c.subjects = 2;
  c.classes = 3;
  c.samples = 200;
  c.channels = 6;
  return c;
}

TEST(Preprocess, Idempotent) {
  const auto recs = synth_dataset(small_synth());
  const auto a = preprocess(recs[0], 0);
  const auto b = preprocess(recs[0], 0);
  ASSERT_EQ(a.patches.size(), patch_count(200, 64, 8));
  for (std::size_t i = 0; i < a.patches.size(); ++i) {
    EXPECT_EQ(testing::max_abs_diff(a.patches[i].data(), b.patches[i].data()), 0.0);
    for (double v : a.patches[i].data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_dataset(small_synth(5));
  const auto b = synth_dataset(small_synth(5));
  EXPECT_EQ(encode_container(a), encode_container(b));
  const auto c = synth_dataset(small_synth(6));
  EXPECT_NE(encode_container(a), encode_container(c));
}

TEST(Synth, DefaultsShapeAndOrdering) {
  SynthConfig c;
  c.samples = 100;
  const auto recs = synth_dataset(c);
  EXPECT_EQ(recs.size(), 9u * 2u * 8u);
  EXPECT_EQ(recs.front().channels(), 16u);
  EXPECT_EQ(recs.front().subject_id, 1);
  EXPECT_EQ(recs.back().subject_id, 9);
  EXPECT_EQ(recs.back().session_id, 2);
  EXPECT_EQ(recs.back().label, 7);
}

TEST(Synth, TemplatesPairwiseDistinct) {
  SynthConfig c;
  const auto t = class_templates(c);
  double min_dist = 1e9;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < t[i].size(); ++k) d += (t[i][k] - t[j][k]) * (t[i][k] - t[j][k]);
      min_dist = std::min(min_dist, std::sqrt(d));
    }
  EXPECT_GT(min_dist, 0.0);
}

TEST(Synth, Validation) {
  SynthConfig c;
  c.channels = 3;
  EXPECT_THROW(synth_dataset(c), ConfigError);
  c.channels = 16;
  c.classes = 1;
  EXPECT_THROW(synth_dataset(c), ConfigError);
}

TEST(Split, InterSessionInvariant) {
  const auto recs = synth_dataset(small_synth());
  const auto split = make_split(recs, {});
  EXPECT_EQ(split.train.size(), 6u);
  EXPECT_EQ(split.test.size(), 6u);
  for (const auto& s : split.train) EXPECT_EQ(s.session_id, 1);
  for (const auto& s : split.test) EXPECT_EQ(s.session_id, 2);
  EXPECT_NO_THROW(check_inter_session(split));
}

TEST(Split, LeakageIsNamed) {
  const auto recs = synth_dataset(small_synth());
  auto split = make_split(recs, {});
  split.test.push_back(split.train.front());
  try {
    check_inter_session(split);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("subject 1, session 1"), std::string::npos);
  }
}

TEST(Split, IntraSession) {
  auto c = small_synth();
  c.trials_per_class = 2;
  c.sessions = 1;
  const auto split = make_split(synth_dataset(c), {Protocol::kIntraSession, 1});
  EXPECT_EQ(split.train.size(), split.test.size());
  c.trials_per_class = 1;
  EXPECT_THROW(make_split(synth_dataset(c), {Protocol::kIntraSession, 1}), DataError);
}

TEST(Container, RoundTripIsBitIdentical) {
  const auto recs = synth_dataset(small_synth());
  const auto path = std::filesystem::temp_directory_path() / "moemba_roundtrip.memb";
  save_container(path, recs);
  const auto back = load_container(path);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].label, recs[i].label);
    EXPECT_EQ(back[i].subject_id, recs[i].subject_id);
    EXPECT_EQ(back[i].session_id, recs[i].session_id);
    EXPECT_EQ(back[i].samples.shape(), recs[i].samples.shape());
    EXPECT_TRUE(std::equal(back[i].samples.data().begin(), back[i].samples.data().end(),
                           recs[i].samples.data().begin()));
  }
  std::filesystem::remove(path);
}

TEST(Container, HeaderLayout) {
  RecordingSession r;
  r.samples = Tensor::from({1, 1}, {1.0});
  r.label = 3;
  r.subject_id = 0x0102;
  r.session_id = 2;
  const auto b = encode_container({r});
  const std::vector<std::uint8_t> expect{'M', 'E', 'M', 'B', 1, 0, 0, 0, 1, 0, 0, 0,
                                         1,   0,   0,   0,   1, 0, 0, 0, 3, 2, 1, 2,
                                         0,   0,   0,   0x80, 0x3f};
  EXPECT_EQ(b, expect);
}

TEST(Container, CorruptionIsFormatError) {
  auto bytes = encode_container(synth_dataset(small_synth()));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_container(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_container(bad_version), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_container(truncated), FormatError);
  EXPECT_THROW(decode_container(std::vector<std::uint8_t>{'M', 'E'}), FormatError);
  // Absurd length field must not allocate or crash.
  auto huge = bytes;
  huge[12] = 0xff;
  huge[13] = 0xff;
  huge[14] = 0xff;
  huge[15] = 0x7f;
  EXPECT_THROW(decode_container(huge), FormatError);
}

TEST(Container, EmptyDataset) {
  const auto bytes = encode_container({});
  EXPECT_EQ(bytes.size(), 12u);
  EXPECT_TRUE(decode_container(bytes).empty());
}

TEST(Csv, LoadsWithSidecar) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto csv = dir / "moemba_rec.csv";
  {
    std::ofstream(csv) << "1,2,3\n4,5,6\n";
    std::ofstream(dir / "moemba_rec.csv.meta") << "label=2 subject=4 session=1\n";
  }
  const auto r = load_csv_recording(csv);
  EXPECT_EQ(r.samples.shape(), (Shape{2, 3}));
  EXPECT_EQ(r.samples.at({1, 2}), 6.0);
  EXPECT_EQ(r.label, 2);
  EXPECT_EQ(r.subject_id, 4);
  std::ofstream(csv) << "1,2,3\n4,5\n";
  EXPECT_THROW(load_csv_recording(csv), FormatError);
  std::filesystem::remove(csv);
  std::filesystem::remove(dir / "moemba_rec.csv.meta");
}

}  // namespace
}  // namespace moemba::sigproc
