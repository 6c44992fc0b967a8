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

#include "moemba/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "moemba/bytes.hpp"
#include "moemba/errors.hpp"
#include "moemba/ops.hpp"

namespace moemba::trainer {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
  if (lr_min < 0.0 || lr_min > lr0) throw ConfigError("train.lr_min must lie in [0, lr0]");
  if (schedule != "cosine" && schedule != "constant") {
    throw ConfigError("train.schedule must be cosine or constant, got '" + schedule + "'");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train.eps must be > 0");
  if (weight_decay < 0.0 || clip_norm < 0.0) {
    throw ConfigError("weight_decay and clip_norm must be non-negative");
  }
}

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min) {
  if (total == 0) return lr0;
  const double frac = static_cast<double>(std::min(t, total)) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

Tensor total_loss(const Tensor& probs, const std::vector<std::size_t>& labels, const Tensor& aux) {
  const Tensor ce = ops::nll(probs, labels);
  return aux.defined() ? ops::add(ce, aux) : ce;
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad_view()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      auto g = detail::grad_of(p);
      for (double& x : g) x *= s;
    }
  }
  return norm;
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps,
           double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto w = params_[i].mutable_data();
    const auto g = params_[i].grad_view();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_) + weight_decay_ * w[j];
      w[j] -= lr * update;
    }
  }
}

PatchIndex flatten(const std::vector<sigproc::PatchSet>& sets) {
  PatchIndex out;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& set = sets[s];
    if (set.patches.empty()) throw DataError("signal " + std::to_string(s) + " has no patches");
    for (std::size_t p = 0; p < set.patches.size(); ++p) {
      out.patches.push_back(set.patches[p]);
      out.labels.push_back(set.labels[p]);
      out.signal.push_back(s);
    }
    out.signal_labels.push_back(set.labels.front());
  }
  return out;
}

Tensor stack(const PatchIndex& data, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw DimensionError("stack: no rows");
  const Shape one = data.patches[rows.front()].shape();
  std::vector<double> v;
  v.reserve(rows.size() * shape_numel(one));
  for (std::size_t r : rows) {
    const auto& p = data.patches[r];
    if (p.shape() != one) throw DimensionError("stack: patches differ in shape");
    v.insert(v.end(), p.data().begin(), p.data().end());
  }
  Shape shape{rows.size()};
  shape.insert(shape.end(), one.begin(), one.end());
  return Tensor::from(std::move(shape), std::move(v));
}

TrainState start_training(const ModelConfig& model, const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.model = init_model(model, config.seed);
  s.optimizer = Adam(s.model.tensors(), config.beta1, config.beta2, config.eps, config.weight_decay);
  s.shuffle_rng = make_rng(config.seed, Stream::kShuffle);
  s.noise_rng = make_rng(config.seed, Stream::kGateNoise);
  return s;
}

namespace {

// Every patch, or a fresh per-recording draw.
std::vector<std::size_t> epoch_rows(const PatchIndex& data, std::size_t per_recording, Rng& rng) {
  std::vector<std::size_t> rows;
  if (per_recording == 0) {
    rows.resize(data.size());
    std::iota(rows.begin(), rows.end(), 0);
  } else {
    std::map<std::size_t, std::vector<std::size_t>> by_signal;
    for (std::size_t i = 0; i < data.size(); ++i) by_signal[data.signal[i]].push_back(i);
    for (auto& [s, idx] : by_signal) {
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t take = std::min(per_recording, idx.size());
      rows.insert(rows.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    }
  }
  std::shuffle(rows.begin(), rows.end(), rng);
  return rows;
}

std::size_t rows_per_epoch(const PatchIndex& data, std::size_t per_recording) {
  if (per_recording == 0) return data.size();
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t s : data.signal) ++counts[s];
  std::size_t n = 0;
  for (auto& [s, c] : counts) n += std::min(c, per_recording);
  return n;
}

std::vector<std::size_t> validation_rows(const PatchIndex& val, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> rows(val.size());
  std::iota(rows.begin(), rows.end(), 0);
  if (n < rows.size()) {
    Rng rng = make_rng(seed, Stream::kValidation);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(n);
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

std::string norm_report(const MoembaModel& model) {
  std::ostringstream os;
  os.precision(4);
  for (const auto& [name, t] : model.named_tensors()) {
    double sq = 0.0;
    for (double x : t.data()) sq += x * x;
    os << "\n  " << name << " |w|=" << std::sqrt(sq);
  }
  return os.str();
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  const std::size_t nb = probs.dim(0), g = probs.dim(1);
  std::vector<std::size_t> out(nb);
  const auto d = probs.data();
  for (std::size_t b = 0; b < nb; ++b) {
    out[b] = static_cast<std::size_t>(
        std::max_element(d.begin() + static_cast<std::ptrdiff_t>(b * g),
                         d.begin() + static_cast<std::ptrdiff_t>((b + 1) * g)) -
        (d.begin() + static_cast<std::ptrdiff_t>(b * g)));
  }
  return out;
}

}  // namespace

void run_epochs(TrainState& state, const TrainConfig& config, const PatchIndex& train,
                const PatchIndex* val, std::size_t until_epoch, const EpochCallback& on_epoch) {
  config.validate();
  if (train.size() == 0) throw DataError("training set is empty");
  const auto& mcfg = state.model.config;
  for (std::size_t l : train.labels) {
    if (l >= mcfg.classes) {
      throw ConfigError("label " + std::to_string(l) + " out of range for a " +
                        std::to_string(mcfg.classes) + "-class model");
    }
  }
  const std::size_t per_epoch = rows_per_epoch(train, config.patches_per_recording);
  const std::size_t steps_per_epoch = (per_epoch + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const auto params = state.model.tensors();
  std::vector<std::size_t> val_rows;
  if (val != nullptr && config.val_patches > 0) {
    val_rows = validation_rows(*val, config.val_patches, config.seed);
  }
  PatchIndex val_subset;
  if (!val_rows.empty()) {
    for (std::size_t r : val_rows) {
      val_subset.patches.push_back(val->patches[r]);
      val_subset.labels.push_back(val->labels[r]);
      val_subset.signal.push_back(val->signal[r]);
    }
  }

  const std::size_t last = std::min(until_epoch, config.epochs);
  while (state.epoch < last) {
    EpochRecord rec;
    rec.epoch = state.epoch + 1;
    const auto rows = epoch_rows(train, config.patches_per_recording, state.shuffle_rng);
    std::vector<double> load(mcfg.moe.experts, 0.0);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0, batch = 0; b0 < rows.size(); b0 += config.batch_size, ++batch) {
      const std::vector<std::size_t> idx(
          rows.begin() + static_cast<std::ptrdiff_t>(b0),
          rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), b0 + config.batch_size)));
      std::vector<std::size_t> labels;
      for (std::size_t r : idx) labels.push_back(train.labels[r]);
      const double lr = config.schedule == "cosine"
                            ? cosine_lr(state.step, total_steps, config.lr0, config.lr_min)
                            : config.lr0;
      if (batch == 0) rec.lr = lr;

      for (Tensor p : params) p.zero_grad();
      double loss_value = 0.0;
      try {
        Tape tape;
        TapeScope scope(tape);
        const ForwardResult fr = forward(state.model, stack(train, idx), true, &state.noise_rng);
        const Tensor loss = total_loss(fr.probs, labels, fr.aux);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw NumericalError("loss is not finite");
        tape.backward(loss);
        const auto pred = argmax_rows(fr.probs);
        for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == labels[i];
        for (const auto& g : fr.gates)
          for (std::size_t i = 0; i < g.mask.size(); ++i)
            if (g.mask[i]) load[i % mcfg.moe.experts] += 1.0;
        const double gnorm = clip_gradients(params, config.clip_norm);
        if (!std::isfinite(gnorm)) throw NumericalError("gradient norm is not finite");
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(rec.epoch) +
                             ", batch " + std::to_string(batch) + ": " + e.what() +
                             "\nparameter norms:" + norm_report(state.model));
      }
      state.optimizer.step(lr);
      ++state.step;
      loss_sum += loss_value * static_cast<double>(idx.size());
      rec.step_losses.push_back(loss_value);
    }
    rec.train_loss = loss_sum / static_cast<double>(rows.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(rows.size());
    const double total_load = std::accumulate(load.begin(), load.end(), 0.0);
    for (double x : load) rec.load_share.push_back(total_load > 0 ? x / total_load : 0.0);
    if (val_subset.size() > 0) rec.val_acc = patch_accuracy(state.model, val_subset, config.batch_size);
    ++state.epoch;
    state.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
}

TrainState train(const ModelConfig& model, const TrainConfig& config, const PatchIndex& train_set,
                 const PatchIndex* val, const EpochCallback& on_epoch) {
  TrainState state = start_training(model, config);
  run_epochs(state, config, train_set, val, config.epochs, on_epoch);
  return state;
}

std::vector<head::Probabilities> predict(const MoembaModel& model, const PatchIndex& data,
                                         std::size_t batch_size) {
  std::vector<head::Probabilities> out;
  out.reserve(data.size());
  const std::size_t g = model.config.classes;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b0; i < std::min(data.size(), b0 + batch_size); ++i) idx.push_back(i);
    const Tensor probs = forward(model, stack(data, idx), false, nullptr).probs;
    const auto d = probs.data();
    for (std::size_t i = 0; i < idx.size(); ++i) out.emplace_back(d.begin() + i * g, d.begin() + (i + 1) * g);
  }
  return out;
}

double patch_accuracy(const MoembaModel& model, const PatchIndex& data, std::size_t batch_size) {
  if (data.size() == 0) return 0.0;
  const auto probs = predict(model, data, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += head::argmax(probs[i]) == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(probs.size());
}

head::EvalReport evaluate_model(const MoembaModel& model, const PatchIndex& data,
                                std::size_t batch_size) {
  for (std::size_t l : data.signal_labels) {
    if (l >= model.config.classes) {
      throw ConfigError("data has class " + std::to_string(l) + " but the model has " +
                        std::to_string(model.config.classes) + " classes");
    }
  }
  head::EvalReport r =
      head::evaluate(predict(model, data, batch_size), data.signal, data.signal_labels,
                     model.config.classes);
  r.param_count = count_params(model);
  r.flop_count = count_flops(model.config).total();
  return r;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f.precision(17);
  const std::size_t experts = history.empty() ? 0 : history.front().load_share.size();
  f << "epoch,lr,train_loss,train_acc,val_acc";
  for (std::size_t e = 0; e < experts; ++e) f << ",load_share_" << e;
  f << '\n';
  for (const auto& r : history) {
    f << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ',';
    if (r.val_acc >= 0.0) f << r.val_acc;
    for (double s : r.load_share) f << ',' << s;
    f << '\n';
  }
}

// --- checkpoints ------------------------------------------------------------

namespace {

std::string rng_text(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_restore(Rng& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw FormatError("checkpoint rng state is corrupt");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot read checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void expect_magic(io::Reader& rd) {
  if (rd.remaining() < 4 || rd.raw(4) != "MEMC") throw FormatError("bad magic: not a MEMC checkpoint");
  const auto version = rd.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const std::string& config_text) {
  io::Writer w;
  w.raw("MEMC", 4);
  w.u32(kCheckpointVersion);
  w.str(config_text);
  w.u64(state.epoch);
  w.u64(state.step);
  w.u64(state.optimizer.steps());
  w.str(rng_text(state.shuffle_rng));
  w.str(rng_text(state.noise_rng));
  const auto named = state.model.named_tensors();
  const Adam& opt = state.optimizer;
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double x : t.data()) w.f64(x);
    for (double x : opt.first_moments()[i]) w.f64(x);
    for (double x : opt.second_moments()[i]) w.f64(x);
  }
  w.u32(static_cast<std::uint32_t>(state.history.size()));
  for (const auto& r : state.history) {
    w.u64(r.epoch);
    w.f64(r.lr);
    w.f64(r.train_loss);
    w.f64(r.train_acc);
    w.f64(r.val_acc);
    w.u32(static_cast<std::uint32_t>(r.load_share.size()));
    for (double s : r.load_share) w.f64(s);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!f) throw FormatError("failed writing checkpoint " + path.string());
}

std::string checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  io::Reader rd(bytes, "checkpoint");
  expect_magic(rd);
  return rd.str();
}

void load_checkpoint(const std::filesystem::path& path, TrainState& state) {
  const auto bytes = read_file(path);
  io::Reader rd(bytes, "checkpoint");
  expect_magic(rd);
  rd.str();  // config text
  const std::size_t epoch = rd.u64(), step = rd.u64(), adam_steps = rd.u64();
  const std::string shuffle = rd.str(), noise = rd.str();
  const auto named = state.model.named_tensors();
  const std::size_t count = rd.u32();
  if (count != named.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                      std::to_string(named.size()));
  }
  std::vector<std::vector<double>> values(count), m(count), v(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = rd.str();
    const auto& [want, t] = named[i];
    if (name != want) throw ConfigError("checkpoint tensor '" + name + "' where '" + want + "' expected");
    const std::size_t rank = rd.u32();
    if (rank > 8) throw FormatError("checkpoint tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(rd.u64());
    if (shape != t.shape()) {
      throw ConfigError("checkpoint tensor '" + name + "' is " + shape_str(shape) + ", model has " +
                        shape_str(t.shape()));
    }
    rd.need(3 * 8 * t.numel());
    for (auto* dst : {&values[i], &m[i], &v[i]}) {
      dst->resize(t.numel());
      for (double& x : *dst) x = rd.f64();
    }
  }
  const std::size_t records = rd.u32();
  rd.need(records * 44);
  std::vector<EpochRecord> history(records);
  for (auto& r : history) {
    r.epoch = rd.u64();
    r.lr = rd.f64();
    r.train_loss = rd.f64();
    r.train_acc = rd.f64();
    r.val_acc = rd.f64();
    const std::size_t n = rd.u32();
    rd.need(8 * n);
    for (std::size_t e = 0; e < n; ++e) r.load_share.push_back(rd.f64());
  }
  if (rd.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
  Rng shuffle_rng, noise_rng;
  rng_restore(shuffle_rng, shuffle);
  rng_restore(noise_rng, noise);

  for (std::size_t i = 0; i < count; ++i) {
    Tensor handle = named[i].second;
    auto data = handle.mutable_data();
    std::copy(values[i].begin(), values[i].end(), data.begin());
  }
  state.optimizer.first_moments() = std::move(m);
  state.optimizer.second_moments() = std::move(v);
  state.shuffle_rng = shuffle_rng;
  state.noise_rng = noise_rng;
  state.epoch = epoch;
  state.step = step;
  state.optimizer.set_steps(adam_steps);
  state.history = std::move(history);
}

}  // namespace moemba::trainer
