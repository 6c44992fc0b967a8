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

// Recordings, the filter -> segment -> normalize chain, train/test splits,
// a synthetic multichannel gesture generator and the MEMB container.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moemba/tensor.hpp"

namespace moemba::sigproc {

inline constexpr double kSampleRateHz = 1000.0;

struct RecordingSession {
  Tensor samples;  // [T x V], row-major, 1000 Hz
  std::uint8_t label = 0;
  std::uint16_t subject_id = 0;
  std::uint16_t session_id = 0;

  std::size_t length() const { return samples.dim(0); }
  std::size_t channels() const { return samples.dim(1); }
};

// Windows cut from one recording.
struct PatchSet {
  std::vector<Tensor> patches;  // each [window x V], values in [-1, 1]
  std::size_t window = 64;
  std::size_t step = 8;
  std::vector<std::size_t> source_ids;  // index of the originating recording
  std::vector<std::size_t> labels;
  std::uint16_t subject_id = 0;
  std::uint16_t session_id = 0;
};

enum class Protocol { kInterSession, kIntraSession };

std::string protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

struct DatasetSplit {
  std::vector<PatchSet> train;
  std::vector<PatchSet> test;
  Protocol protocol = Protocol::kInterSession;
};

// --- filtering --------------------------------------------------------------

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 == 1
};

// Digital Butterworth band-stop as cascaded second-order sections, designed
// through the bilinear transform with pre-warped band edges. A prototype of
// order N gives N sections (an order-2N filter). Each section has unit DC
// gain.
class BandstopFilter {
 public:
  BandstopFilter(double low_hz, double high_hz, int order,
                 double sample_rate = kSampleRateHz);

  const std::vector<Biquad>& sections() const { return sections_; }
  int order() const { return order_; }

  // Single forward pass; zero initial state.
  std::vector<double> filter(std::span<const double> x) const;
  // Zero-phase forward-backward pass. Initial states are fitted so that
  // stationary inputs show no edge transients.
  std::vector<double> filtfilt(std::span<const double> x) const;
  // |H(e^{jw})| at frequency `hz`.
  double magnitude(double hz) const;

 private:
  std::vector<double> run(std::span<const double> x, std::span<const double> state) const;

  int order_;
  double sample_rate_;
  std::vector<Biquad> sections_;
};

struct FilterConfig {
  double low_hz = 45.0;
  double high_hz = 55.0;
  int order = 4;
  double sample_rate = kSampleRateHz;
  bool enabled = true;
};

// Zero-phase band-stop applied to every channel of x = [T x V].
Tensor bandstop_filter(const Tensor& x, const FilterConfig& config = {});

// --- segmentation -----------------------------------------------------------

// floor((T - window) / step) + 1 windows of [window x V].
std::vector<Tensor> segment(const Tensor& x, std::size_t window = 64,
                            std::size_t step = 8);
std::size_t patch_count(std::size_t length, std::size_t window, std::size_t step);

// Per-patch affine map of [min, max] onto [-1, 1]; constant patches map to 0.
Tensor normalize(const Tensor& patch);

struct PreprocessConfig {
  FilterConfig filter;
  std::size_t window = 64;
  std::size_t step = 8;
};

// filter -> segment -> normalize.
PatchSet preprocess(const RecordingSession& recording, std::size_t source_id,
                    const PreprocessConfig& config = {});

// --- splits -----------------------------------------------------------------

struct SplitConfig {
  Protocol protocol = Protocol::kInterSession;
  // Inter-session: this session trains, every other session tests.
  std::uint16_t train_session = 1;
};

DatasetSplit make_split(const std::vector<RecordingSession>& recordings,
                        const SplitConfig& split,
                        const PreprocessConfig& preprocess_config = {});

// Inter-session: throws DataError naming the first (subject, session) that
// appears on both sides, or a subject missing from either side.
void check_inter_session(const DatasetSplit& split);

// --- synthetic data ---------------------------------------------------------

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t subjects = 9;
  std::size_t sessions = 2;
  std::size_t classes = 8;
  std::size_t trials_per_class = 1;
  std::size_t samples = 1000;  // T
  std::size_t channels = 16;   // V
  double interference = 2.0;   // mean 50 Hz amplitude relative to the signal
  double session_shift = 0.5;  // electrode rotation, in channels
};

// Class activation templates over channels ([classes x V]) for a seed.
std::vector<std::vector<double>> class_templates(const SynthConfig& config);

// Recordings ordered by (subject, session, class, trial). Samples are
// rounded to f32 so a container round-trip is exact.
std::vector<RecordingSession> synth_dataset(const SynthConfig& config);

// --- container --------------------------------------------------------------

// "MEMB", u32 version = 1, u32 count, then per recording: u32 T, u32 V,
// u8 label, u16 subject, u16 session, T*V f32; all little-endian.
inline constexpr std::uint32_t kContainerVersion = 1;

void save_container(const std::filesystem::path& path,
                    const std::vector<RecordingSession>& recordings);
std::vector<RecordingSession> load_container(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_container(const std::vector<RecordingSession>& recordings);
std::vector<RecordingSession> decode_container(std::span<const std::uint8_t> bytes);
// FNV-1a 64 of the encoded container.
std::uint64_t dataset_hash(const std::vector<RecordingSession>& recordings);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// CSV with T rows of V comma-separated values, plus a sidecar file
// `<csv>.meta` holding one line "label=<g> subject=<s> session=<k>".
RecordingSession load_csv_recording(const std::filesystem::path& csv_path);

}  // namespace moemba::sigproc
