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

#include "moemba/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "moemba/bytes.hpp"
#include "moemba/errors.hpp"
#include "moemba/rng.hpp"

namespace moemba::sigproc {

constexpr std::size_t kExtensionOrder = 16;

using cplx = std::complex<double>;

std::string protocol_name(Protocol p) {
  return p == Protocol::kInterSession ? "inter-session" : "intra-session";
}

Protocol parse_protocol(const std::string& name) {
  if (name == "inter-session") return Protocol::kInterSession;
  if (name == "intra-session") return Protocol::kIntraSession;
  throw ConfigError("unknown protocol '" + name + "'");
}

// --- filtering --------------------------------------------------------------

BandstopFilter::BandstopFilter(double low_hz, double high_hz, int order,
                               double sample_rate)
    : order_(order), sample_rate_(sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (order < 1) throw ConfigError("filter order must be >= 1");
  if (!(low_hz > 0.0) || !(high_hz > low_hz)) {
    throw ConfigError("band-stop needs 0 < low < high");
  }
  if (high_hz >= nyquist) {
    throw ConfigError("cutoff " + std::to_string(high_hz) + " Hz is not below Nyquist " +
                      std::to_string(nyquist) + " Hz");
  }
  const double fs2 = 2.0 * sample_rate;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // Digital notch zeros sit at e^{+-j theta}.
  const double theta = 2.0 * std::atan(std::sqrt(w0sq) / fs2);
  const double zb1 = -2.0 * std::cos(theta);

  auto add_section = [&](cplx s_pole) {
    const cplx z = (fs2 + s_pole) / (fs2 - s_pole);
    Biquad q{1.0, zb1, 1.0, -2.0 * z.real(), std::norm(z)};
    const double g = (1.0 + q.a1 + q.a2) / (q.b0 + q.b1 + q.b2);
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
    sections_.push_back(q);
  };

  // Low-pass prototype poles in the upper half plane (plus the real pole
  // for odd orders); each maps to two band-stop poles.
  for (int k = 0; k < order; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order));
    if (p.imag() < -1e-12) continue;
    const cplx half = bw / (2.0 * p);
    const cplx root = std::sqrt(half * half - w0sq);
    const cplx s1 = half + root;
    const cplx s2 = half - root;
    if (std::abs(p.imag()) <= 1e-12) {
      // Real prototype pole: s1 and s2 are a conjugate pair.
      add_section(s1.imag() >= 0 ? s1 : s2);
    } else {
      add_section(s1);
      add_section(s2);
    }
  }
}

std::vector<double> BandstopFilter::run(std::span<const double> x,
                                        std::span<const double> state) const {
  std::vector<double> y(x.begin(), x.end());
  for (std::size_t s = 0; s < sections_.size(); ++s) {
    const auto& q = sections_[s];
    // Transposed direct form II.
    double z1 = state.empty() ? 0.0 : state[2 * s];
    double z2 = state.empty() ? 0.0 : state[2 * s + 1];
    for (auto& v : y) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> BandstopFilter::filter(std::span<const double> x) const {
  return run(x, {});
}

namespace {

// Burg estimate of an order-p linear predictor. Returns a with a[0] = 1 and
// x[t] ~ -sum_{i>=1} a[i] x[t-i]; every reflection coefficient has |k| <= 1.
std::vector<double> burg(std::span<const double> x, std::size_t p) {
  const std::size_t n = x.size();
  std::vector<double> a{1.0};
  std::vector<double> f(x.begin(), x.end()), b(x.begin(), x.end());
  double energy = 0.0;
  for (double v : x) energy += v * v;
  for (std::size_t m = 1; m <= p && m < n; ++m) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = m; t < n; ++t) {
      num += f[t] * b[t - 1];
      den += f[t] * f[t] + b[t - 1] * b[t - 1];
    }
    if (den <= 1e-14 * energy || den == 0.0) break;
    const double k = -2.0 * num / den;
    std::vector<double> next(a.size() + 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) next[i] += a[i];
    for (std::size_t i = 0; i < a.size(); ++i) next[a.size() - i] += k * a[i];
    a = std::move(next);
    for (std::size_t t = n - 1; t >= m; --t) {
      const double ft = f[t];
      f[t] = ft + k * b[t - 1];
      b[t] = b[t - 1] + k * ft;
    }
  }
  return a;
}

// Appends `count` predicted samples to the end of `y`.
void extrapolate(std::vector<double>& y, const std::vector<double>& a, std::size_t count) {
  for (std::size_t c = 0; c < count; ++c) {
    double v = 0.0;
    for (std::size_t i = 1; i < a.size() && i <= y.size(); ++i) v -= a[i] * y[y.size() - i];
    y.push_back(v);
  }
}

}  // namespace

std::vector<double> BandstopFilter::filtfilt(std::span<const double> x) const {
  const std::size_t n = x.size();
  if (n <= static_cast<std::size_t>(3 * order_)) {
    throw DataError("signal of " + std::to_string(n) +
                    " samples is too short for zero-phase filtering (need > " +
                    std::to_string(3 * order_) + ")");
  }
  // Both ends are extended with an autoregressive continuation of the
  // (mean-removed) signal, long enough for the slowest pole to ring down
  // by 1e-5 before the real samples start. Tones and constants continue
  // exactly, so neither shows an edge transient.
  double r_max = 0.0;
  for (const auto& q : sections_) r_max = std::max(r_max, std::sqrt(q.a2));
  const auto pad = static_cast<std::size_t>(std::ceil(std::log(1e-5) / std::log(r_max)));

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> centered(n);
  for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - mean;
  const auto a = burg(centered, std::min<std::size_t>(kExtensionOrder, n / 4));

  std::vector<double> head(centered.rbegin(), centered.rend());
  extrapolate(head, a, pad);
  std::vector<double> ext(head.rbegin(), head.rend());
  extrapolate(ext, a, pad);
  for (double& v : ext) v += mean;

  auto steady_state = [&](double c) {
    std::vector<double> s(2 * sections_.size());
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      const auto& q = sections_[i];
      s[2 * i + 1] = (q.b2 - q.a2) * c;
      s[2 * i] = (q.b1 - q.a1) * c + s[2 * i + 1];
    }
    return s;
  };
  auto fwd = run(ext, steady_state(ext.front()));
  std::reverse(fwd.begin(), fwd.end());
  auto bwd = run(fwd, steady_state(fwd.front()));
  std::reverse(bwd.begin(), bwd.end());
  return {bwd.begin() + static_cast<std::ptrdiff_t>(pad),
          bwd.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

double BandstopFilter::magnitude(double hz) const {
  const cplx z = std::polar(1.0, 2.0 * std::numbers::pi * hz / sample_rate_);
  const cplx zi = 1.0 / z;
  cplx h = 1.0;
  for (const auto& q : sections_) {
    h *= (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
  }
  return std::abs(h);
}

Tensor bandstop_filter(const Tensor& x, const FilterConfig& config) {
  if (x.rank() != 2) throw DimensionError("bandstop_filter expects [T x V]");
  if (!config.enabled) return x.detach();
  const BandstopFilter f(config.low_hz, config.high_hz, config.order, config.sample_rate);
  const std::size_t t = x.dim(0), v = x.dim(1);
  std::vector<double> out(t * v);
  std::vector<double> channel(t);
  const auto xd = x.data();
  for (std::size_t c = 0; c < v; ++c) {
    for (std::size_t i = 0; i < t; ++i) channel[i] = xd[i * v + c];
    const auto y = f.filtfilt(channel);
    for (std::size_t i = 0; i < t; ++i) out[i * v + c] = y[i];
  }
  return Tensor::from({t, v}, std::move(out));
}

// --- segmentation -----------------------------------------------------------

std::size_t patch_count(std::size_t length, std::size_t window, std::size_t step) {
  if (window == 0 || step == 0) throw ConfigError("window and step must be positive");
  if (length < window) return 0;
  return (length - window) / step + 1;
}

std::vector<Tensor> segment(const Tensor& x, std::size_t window, std::size_t step) {
  if (x.rank() != 2) throw DimensionError("segment expects [T x V]");
  const std::size_t t = x.dim(0), v = x.dim(1);
  if (t < window) {
    throw DataError("recording of " + std::to_string(t) +
                    " samples is shorter than the window (" + std::to_string(window) + ")");
  }
  const std::size_t count = patch_count(t, window, step);
  std::vector<Tensor> out;
  out.reserve(count);
  const auto xd = x.data();
  for (std::size_t k = 0; k < count; ++k) {
    const auto first = xd.begin() + static_cast<std::ptrdiff_t>(k * step * v);
    out.push_back(Tensor::from({window, v}, std::vector<double>(first, first + window * v)));
  }
  return out;
}

Tensor normalize(const Tensor& patch) {
  const auto d = patch.data();
  if (d.empty()) return patch.detach();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double mn = *lo, range = *hi - *lo;
  std::vector<double> out(d.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = 2.0 * (d[i] - mn) / range - 1.0;
  }
  return Tensor::from(patch.shape(), std::move(out));
}

PatchSet preprocess(const RecordingSession& recording, std::size_t source_id,
                    const PreprocessConfig& config) {
  const Tensor filtered = bandstop_filter(recording.samples, config.filter);
  PatchSet set;
  set.window = config.window;
  set.step = config.step;
  set.subject_id = recording.subject_id;
  set.session_id = recording.session_id;
  for (const auto& w : segment(filtered, config.window, config.step)) {
    set.patches.push_back(normalize(w));
    set.source_ids.push_back(source_id);
    set.labels.push_back(recording.label);
  }
  return set;
}

// --- splits -----------------------------------------------------------------

DatasetSplit make_split(const std::vector<RecordingSession>& recordings,
                        const SplitConfig& split,
                        const PreprocessConfig& preprocess_config) {
  DatasetSplit out;
  out.protocol = split.protocol;
  if (split.protocol == Protocol::kInterSession) {
    for (std::size_t i = 0; i < recordings.size(); ++i) {
      auto set = preprocess(recordings[i], i, preprocess_config);
      (recordings[i].session_id == split.train_session ? out.train : out.test)
          .push_back(std::move(set));
    }
    check_inter_session(out);
  } else {
    // Alternate repetitions of each (subject, session, label) group.
    std::map<std::tuple<int, int, int>, std::size_t> seen;
    for (std::size_t i = 0; i < recordings.size(); ++i) {
      const auto& r = recordings[i];
      const auto n = seen[{r.subject_id, r.session_id, r.label}]++;
      (n % 2 == 0 ? out.train : out.test).push_back(preprocess(r, i, preprocess_config));
    }
    if (out.test.empty()) {
      throw DataError("intra-session protocol needs at least two recordings per "
                      "(subject, session, gesture)");
    }
  }
  if (out.train.empty() || out.test.empty()) {
    throw DataError("split has an empty side (train " + std::to_string(out.train.size()) +
                    ", test " + std::to_string(out.test.size()) + " recordings)");
  }
  return out;
}

void check_inter_session(const DatasetSplit& split) {
  using Key = std::pair<int, int>;
  std::set<Key> train_pairs;
  std::set<int> train_subjects, test_subjects;
  for (const auto& s : split.train) {
    train_pairs.insert({s.subject_id, s.session_id});
    train_subjects.insert(s.subject_id);
  }
  for (const auto& s : split.test) {
    if (train_pairs.count({s.subject_id, s.session_id})) {
      throw DataError("session leakage: (subject " + std::to_string(s.subject_id) +
                      ", session " + std::to_string(s.session_id) +
                      ") appears in both train and test");
    }
    test_subjects.insert(s.subject_id);
  }
  if (train_subjects != test_subjects) {
    throw DataError("inter-session split must hold the same subjects on both sides");
  }
}

// --- synthetic data ---------------------------------------------------------

namespace {

double circular_bump(double pos, double center, double width, double period) {
  double d = std::fmod(std::abs(pos - center), period);
  d = std::min(d, period - d);
  return std::exp(-0.5 * d * d / (width * width));
}

// Template value at a fractional channel position (circular interpolation).
double sample_circular(const std::vector<double>& t, double pos) {
  const double n = static_cast<double>(t.size());
  pos = std::fmod(std::fmod(pos, n) + n, n);
  const auto i0 = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - std::floor(pos);
  return (1.0 - f) * t[i0 % t.size()] + f * t[(i0 + 1) % t.size()];
}

}  // namespace

std::vector<std::vector<double>> class_templates(const SynthConfig& config) {
  Rng rng(splitmix64(stream_seed(config.seed, Stream::kData) + 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double v = static_cast<double>(config.channels);
  const double width = std::max(1.0, v / 12.0);
  std::vector<std::vector<double>> templates(config.classes,
                                             std::vector<double>(config.channels));
  for (std::size_t g = 0; g < config.classes; ++g) {
    const double c1 = (static_cast<double>(g) + 0.5) * v / static_cast<double>(config.classes);
    const double c2 = c1 + v * (0.25 + 0.5 * unit(rng));
    const double a2 = 0.3 + 0.5 * unit(rng);
    for (std::size_t c = 0; c < config.channels; ++c) {
      const double pos = static_cast<double>(c);
      templates[g][c] = 0.15 + circular_bump(pos, c1, width, v) + a2 * circular_bump(pos, c2, width, v);
    }
  }
  return templates;
}

std::vector<RecordingSession> synth_dataset(const SynthConfig& config) {
  if (config.channels < 4) throw ConfigError("synthetic data needs V >= 4 channels");
  if (config.classes < 2) throw ConfigError("need at least 2 classes (G >= 2)");
  if (config.classes > 255) throw ConfigError("at most 255 classes fit the container");
  if (config.subjects == 0 || config.sessions == 0 || config.trials_per_class == 0) {
    throw ConfigError("subjects, sessions and trials must be positive");
  }
  if (config.samples < 64) throw ConfigError("need at least 64 samples per recording");

  const auto templates = class_templates(config);
  Rng rng = make_rng(config.seed, Stream::kData);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t t_len = config.samples, v = config.channels;
  const double fs = kSampleRateHz;
  const double two_pi = 2.0 * std::numbers::pi;
  // One-pole band limits (20 Hz high-pass, 450 Hz low-pass).
  const double hp = std::exp(-two_pi * 20.0 / fs);
  const double lp = std::exp(-two_pi * 450.0 / fs);

  std::vector<RecordingSession> out;
  for (std::size_t s = 0; s < config.subjects; ++s) {
    // Subject-specific anatomy: per-channel gain pattern and offset.
    std::vector<double> subject_gain(v);
    for (auto& g : subject_gain) g = std::max(0.4, 1.0 + 0.15 * gauss(rng));
    const double subject_offset = 0.3 * (2.0 * unit(rng) - 1.0);

    for (std::size_t k = 0; k < config.sessions; ++k) {
      // Later sessions: electrode rotation plus gain drift.
      double shift = subject_offset;
      double global_gain = 1.0;
      std::vector<double> drift(v, 1.0);
      if (k > 0) {
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        shift += sign * config.session_shift * (0.6 + 0.8 * unit(rng));
        global_gain = 0.7 + 0.6 * unit(rng);
        for (auto& d : drift) d = std::max(0.5, 1.0 + 0.1 * gauss(rng));
      }
      for (std::size_t g = 0; g < config.classes; ++g) {
        std::vector<double> amp(v);
        for (std::size_t c = 0; c < v; ++c) {
          amp[c] = global_gain * drift[c] * subject_gain[c] *
                   sample_circular(templates[g], static_cast<double>(c) - shift);
        }
        const double env_hz = 0.5 + 0.35 * static_cast<double>(g);
        for (std::size_t trial = 0; trial < config.trials_per_class; ++trial) {
          const double env_phase = two_pi * unit(rng);
          const double pl_level = config.interference * (0.5 + unit(rng));
          std::vector<double> pl_amp(v), pl_phase(v);
          for (std::size_t c = 0; c < v; ++c) {
            pl_amp[c] = pl_level * (0.5 + unit(rng));
            pl_phase[c] = two_pi * unit(rng);
          }
          std::vector<double> data(t_len * v);
          for (std::size_t c = 0; c < v; ++c) {
            double hp_state = 0.0, prev_in = 0.0, lp_state = 0.0;
            for (std::size_t i = 0; i < t_len; ++i) {
              const double white = gauss(rng);
              hp_state = hp * (hp_state + white - prev_in);
              prev_in = white;
              lp_state = lp * lp_state + (1.0 - lp) * hp_state;
              const double time = static_cast<double>(i) / fs;
              const double env = 1.0 + 0.5 * std::sin(two_pi * env_hz * time + env_phase);
              const double emg = amp[c] * env * lp_state;
              const double mains = pl_amp[c] * std::sin(two_pi * 50.0 * time + pl_phase[c]);
              const double value = emg + mains + 0.01 * gauss(rng);
              data[i * v + c] = static_cast<double>(static_cast<float>(value));
            }
          }
          RecordingSession r;
          r.samples = Tensor::from({t_len, v}, std::move(data));
          r.label = static_cast<std::uint8_t>(g);
          r.subject_id = static_cast<std::uint16_t>(s + 1);
          r.session_id = static_cast<std::uint16_t>(k + 1);
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

// --- container --------------------------------------------------------------

using io::Reader;
using io::Writer;

std::vector<std::uint8_t> encode_container(const std::vector<RecordingSession>& recordings) {
  Writer w;
  w.raw("MEMB", 4);
  w.u32(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(recordings.size()));
  for (const auto& r : recordings) {
    w.u32(static_cast<std::uint32_t>(r.length()));
    w.u32(static_cast<std::uint32_t>(r.channels()));
    w.u8(r.label);
    w.u16(r.subject_id);
    w.u16(r.session_id);
    for (double x : r.samples.data()) w.f32(static_cast<float>(x));
  }
  return w.take();
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) h = (h ^ b) * 0x100000001b3ULL;
  return h;
}

std::uint64_t dataset_hash(const std::vector<RecordingSession>& recordings) {
  return fnv1a64(encode_container(recordings));
}

std::vector<RecordingSession> decode_container(std::span<const std::uint8_t> bytes) {
  Reader rd(bytes, "container");
  if (rd.remaining() < 4 || rd.raw(4) != "MEMB") throw FormatError("bad magic: not a MEMB container");
  const auto version = rd.u32();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }
  const auto count = rd.u32();
  std::vector<RecordingSession> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::size_t t = rd.u32(), v = rd.u32();
    RecordingSession r;
    r.label = rd.u8();
    r.subject_id = rd.u16();
    r.session_id = rd.u16();
    if (v != 0 && t > rd.remaining() / (4 * v)) throw FormatError("container truncated");
    std::vector<double> data(t * v);
    for (auto& x : data) x = rd.f32();
    r.samples = Tensor::from({t, v}, std::move(data));
    out.push_back(std::move(r));
  }
  if (rd.remaining() != 0) throw FormatError("trailing bytes after last recording");
  return out;
}

void save_container(const std::filesystem::path& path,
                    const std::vector<RecordingSession>& recordings) {
  const auto bytes = encode_container(recordings);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed: " + path.string());
}

std::vector<RecordingSession> load_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

RecordingSession load_csv_recording(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw Error("cannot open " + csv_path.string());
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(csv_path.string() + ": bad number '" + cell + "' on row " +
                          std::to_string(rows + 1));
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw FormatError(csv_path.string() + ": ragged row " + std::to_string(rows + 1));
    ++rows;
  }
  if (rows == 0) throw FormatError(csv_path.string() + ": no samples");

  auto meta_path = csv_path;
  meta_path += ".meta";
  std::ifstream ms(meta_path);
  if (!ms) throw FormatError("missing sidecar " + meta_path.string());
  std::getline(ms, line);
  std::map<std::string, long> meta;
  std::stringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw FormatError("bad metadata token '" + tok + "'");
    try {
      meta[tok.substr(0, eq)] = std::stol(tok.substr(eq + 1));
    } catch (const std::exception&) {
      throw FormatError("bad metadata value in '" + tok + "'");
    }
  }
  for (const char* key : {"label", "subject", "session"}) {
    if (!meta.count(key)) throw FormatError(meta_path.string() + ": missing '" + key + "'");
  }
  if (meta["label"] < 0 || meta["label"] > 255 || meta["subject"] < 0 ||
      meta["subject"] > 65535 || meta["session"] < 0 || meta["session"] > 65535) {
    throw FormatError(meta_path.string() + ": metadata out of range");
  }
  RecordingSession r;
  r.samples = Tensor::from({rows, cols}, std::move(data));
  r.label = static_cast<std::uint8_t>(meta["label"]);
  r.subject_id = static_cast<std::uint16_t>(meta["subject"]);
  r.session_id = static_cast<std::uint16_t>(meta["session"]);
  return r;
}

}  // namespace moemba::sigproc
