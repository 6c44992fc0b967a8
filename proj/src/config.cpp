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

#include "moemba/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "moemba/errors.hpp"

namespace moemba::trainer {

using nlohmann::json;

namespace {

struct Entry {
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

std::string type_error(const std::string& key, const char* want, const json& v) {
  return "config key '" + key + "' expects " + want + ", got " + v.dump();
}

template <typename T>
Entry unsigned_entry(const std::string& key, T RunConfig::*group, std::size_t T::*field) {
  return {[=](const RunConfig& c) { return json((c.*group).*field); },
          [=](RunConfig& c, const json& v) {
            if (!v.is_number_unsigned()) throw ConfigError(type_error(key, "a non-negative integer", v));
            (c.*group).*field = v.get<std::size_t>();
          }};
}

template <typename T, typename F>
Entry integer_entry(const std::string& key, T RunConfig::*group, F T::*field) {
  return {[=](const RunConfig& c) { return json((c.*group).*field); },
          [=](RunConfig& c, const json& v) {
            if (!v.is_number_integer()) throw ConfigError(type_error(key, "an integer", v));
            const auto x = v.get<long long>();
            if (x < static_cast<long long>(std::numeric_limits<F>::min()) ||
                static_cast<unsigned long long>(x) >
                    static_cast<unsigned long long>(std::numeric_limits<F>::max())) {
              throw ConfigError(type_error(key, "an integer in range", v));
            }
            (c.*group).*field = static_cast<F>(x);
          }};
}

template <typename T>
Entry real_entry(const std::string& key, T RunConfig::*group, double T::*field) {
  return {[=](const RunConfig& c) { return json((c.*group).*field); },
          [=](RunConfig& c, const json& v) {
            if (!v.is_number()) throw ConfigError(type_error(key, "a number", v));
            (c.*group).*field = v.get<double>();
          }};
}

template <typename T>
Entry bool_entry(const std::string& key, T RunConfig::*group, bool T::*field) {
  return {[=](const RunConfig& c) { return json((c.*group).*field); },
          [=](RunConfig& c, const json& v) {
            if (!v.is_boolean()) throw ConfigError(type_error(key, "true or false", v));
            (c.*group).*field = v.get<bool>();
          }};
}

template <typename T>
Entry string_entry(const std::string& key, T RunConfig::*group, std::string T::*field) {
  return {[=](const RunConfig& c) { return json((c.*group).*field); },
          [=](RunConfig& c, const json& v) {
            if (!v.is_string()) throw ConfigError(type_error(key, "a string", v));
            (c.*group).*field = v.get<std::string>();
          }};
}

// Nested members (model.wtfm.*, model.mamba.*, model.moe.*, preprocess.filter.*).
template <typename Outer, typename Inner, typename V>
Entry nested(const std::string& key, Outer RunConfig::*group, Inner Outer::*sub, V Inner::*field,
             std::function<V(const std::string&, const json&)> convert) {
  return {[=](const RunConfig& c) { return json(((c.*group).*sub).*field); },
          [=](RunConfig& c, const json& v) { ((c.*group).*sub).*field = convert(key, v); }};
}

std::size_t as_size(const std::string& key, const json& v) {
  if (!v.is_number_unsigned()) throw ConfigError(type_error(key, "a non-negative integer", v));
  return v.get<std::size_t>();
}
double as_real(const std::string& key, const json& v) {
  if (!v.is_number()) throw ConfigError(type_error(key, "a number", v));
  return v.get<double>();
}
bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) throw ConfigError(type_error(key, "true or false", v));
  return v.get<bool>();
}
std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) throw ConfigError(type_error(key, "a string", v));
  return v.get<std::string>();
}
int as_int(const std::string& key, const json& v) {
  if (!v.is_number_integer()) throw ConfigError(type_error(key, "an integer", v));
  return v.get<int>();
}

const std::map<std::string, Entry>& registry() {
  static const std::map<std::string, Entry> table = [] {
    using R = RunConfig;
    using sigproc::SynthConfig;
    using sigproc::PreprocessConfig;
    using sigproc::FilterConfig;
    using sigproc::SplitConfig;
    using wtfm::WtfmConfig;
    using ssm::MambaConfig;
    using moe::MoeConfig;
    std::map<std::string, Entry> t;
    auto add = [&](const std::string& k, Entry e) { t.emplace(k, std::move(e)); };

    add("synth.seed", integer_entry<SynthConfig, std::uint64_t>("synth.seed", &R::synth, &SynthConfig::seed));
    add("synth.subjects", unsigned_entry("synth.subjects", &R::synth, &SynthConfig::subjects));
    add("synth.sessions", unsigned_entry("synth.sessions", &R::synth, &SynthConfig::sessions));
    add("synth.classes", unsigned_entry("synth.classes", &R::synth, &SynthConfig::classes));
    add("synth.trials_per_class", unsigned_entry("synth.trials_per_class", &R::synth, &SynthConfig::trials_per_class));
    add("synth.samples", unsigned_entry("synth.samples", &R::synth, &SynthConfig::samples));
    add("synth.channels", unsigned_entry("synth.channels", &R::synth, &SynthConfig::channels));
    add("synth.interference", real_entry("synth.interference", &R::synth, &SynthConfig::interference));
    add("synth.session_shift", real_entry("synth.session_shift", &R::synth, &SynthConfig::session_shift));

    add("preprocess.window", unsigned_entry("preprocess.window", &R::preprocess, &PreprocessConfig::window));
    add("preprocess.step", unsigned_entry("preprocess.step", &R::preprocess, &PreprocessConfig::step));
    add("preprocess.filter.enabled", nested<PreprocessConfig, FilterConfig, bool>(
        "preprocess.filter.enabled", &R::preprocess, &PreprocessConfig::filter, &FilterConfig::enabled, as_bool));
    add("preprocess.filter.low_hz", nested<PreprocessConfig, FilterConfig, double>(
        "preprocess.filter.low_hz", &R::preprocess, &PreprocessConfig::filter, &FilterConfig::low_hz, as_real));
    add("preprocess.filter.high_hz", nested<PreprocessConfig, FilterConfig, double>(
        "preprocess.filter.high_hz", &R::preprocess, &PreprocessConfig::filter, &FilterConfig::high_hz, as_real));
    add("preprocess.filter.order", nested<PreprocessConfig, FilterConfig, int>(
        "preprocess.filter.order", &R::preprocess, &PreprocessConfig::filter, &FilterConfig::order, as_int));
    add("preprocess.filter.sample_rate", nested<PreprocessConfig, FilterConfig, double>(
        "preprocess.filter.sample_rate", &R::preprocess, &PreprocessConfig::filter,
        &FilterConfig::sample_rate, as_real));

    add("split.protocol", {[](const R& c) { return json(sigproc::protocol_name(c.split.protocol)); },
                           [](R& c, const json& v) {
                             c.split.protocol = sigproc::parse_protocol(as_string("split.protocol", v));
                           }});
    add("split.train_session", integer_entry<SplitConfig, std::uint16_t>(
        "split.train_session", &R::split, &SplitConfig::train_session));

    add("model.channels", unsigned_entry("model.channels", &R::model, &ModelConfig::channels));
    add("model.classes", unsigned_entry("model.classes", &R::model, &ModelConfig::classes));
    add("model.mix_channels", unsigned_entry("model.mix_channels", &R::model, &ModelConfig::mix_channels));
    auto wt = [&](const std::string& name, auto field, auto conv) {
      using V = std::remove_reference_t<decltype(std::declval<WtfmConfig>().*field)>;
      add("model.wtfm." + name, nested<ModelConfig, WtfmConfig, V>("model.wtfm." + name, &R::model,
                                                                 &ModelConfig::wtfm, field, conv));
    };
    wt("embed", &WtfmConfig::embed, as_size);
    wt("chan_embed", &WtfmConfig::chan_embed, as_size);
    wt("small_kernel", &WtfmConfig::small_kernel, as_size);
    wt("large_kernel", &WtfmConfig::large_kernel, as_size);
    wt("reduction", &WtfmConfig::reduction, as_size);
    wt("value_embed_width", &WtfmConfig::value_embed_width, as_size);
    wt("shared_attention", &WtfmConfig::shared_attention, as_bool);
    wt("wavelet", &WtfmConfig::wavelet, as_string);
    wt("unit_attention", &WtfmConfig::unit_attention, as_bool);
    wt("approximation_only", &WtfmConfig::approximation_only, as_bool);
    auto mb = [&](const std::string& name, std::size_t MambaConfig::*field) {
      add("model." + name, nested<ModelConfig, MambaConfig, std::size_t>("model." + name, &R::model,
                                                                       &ModelConfig::mamba, field, as_size));
    };
    mb("d_model", &MambaConfig::d_model);
    mb("expand", &MambaConfig::expand);
    mb("d_state", &MambaConfig::d_state);
    mb("conv_width", &MambaConfig::conv_width);
    auto me = [&](const std::string& name, auto field, auto conv) {
      using V = std::remove_reference_t<decltype(std::declval<MoeConfig>().*field)>;
      add("model.moe." + name, nested<ModelConfig, MoeConfig, V>("model.moe." + name, &R::model,
                                                               &ModelConfig::moe, field, conv));
    };
    me("experts", &MoeConfig::experts, as_size);
    me("top_k", &MoeConfig::top_k, as_size);
    me("lambda_b", &MoeConfig::lambda_b, as_real);
    me("lambda_z", &MoeConfig::lambda_z, as_real);
    me("layers", &MoeConfig::layers, as_size);
    me("sparse_dispatch", &MoeConfig::sparse_dispatch, as_bool);

    add("train.epochs", unsigned_entry("train.epochs", &R::train, &TrainConfig::epochs));
    add("train.batch_size", unsigned_entry("train.batch_size", &R::train, &TrainConfig::batch_size));
    add("train.lr0", real_entry("train.lr0", &R::train, &TrainConfig::lr0));
    add("train.lr_min", real_entry("train.lr_min", &R::train, &TrainConfig::lr_min));
    add("train.schedule", string_entry("train.schedule", &R::train, &TrainConfig::schedule));
    add("train.seed", integer_entry<TrainConfig, std::uint64_t>("train.seed", &R::train, &TrainConfig::seed));
    add("train.beta1", real_entry("train.beta1", &R::train, &TrainConfig::beta1));
    add("train.beta2", real_entry("train.beta2", &R::train, &TrainConfig::beta2));
    add("train.eps", real_entry("train.eps", &R::train, &TrainConfig::eps));
    add("train.weight_decay", real_entry("train.weight_decay", &R::train, &TrainConfig::weight_decay));
    add("train.clip_norm", real_entry("train.clip_norm", &R::train, &TrainConfig::clip_norm));
    add("train.patches_per_recording",
        unsigned_entry("train.patches_per_recording", &R::train, &TrainConfig::patches_per_recording));
    add("train.val_patches", unsigned_entry("train.val_patches", &R::train, &TrainConfig::val_patches));
    return t;
  }();
  return table;
}

const Entry& lookup(const std::string& key) {
  const auto& t = registry();
  const auto it = t.find(key);
  if (it == t.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.window = preprocess.window;
  return m;
}

void RunConfig::validate() const {
  resolved_model().validate();
  train.validate();
  if (preprocess.step < 1) throw ConfigError("preprocess.step must be >= 1");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, e] : registry()) keys.push_back(k);
  return keys;
}

std::string config_to_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& [k, e] : registry()) j[k] = e.get(config);
  return j.dump(2);
}

void apply_config_json(RunConfig& config, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  RunConfig next = config;
  for (const auto& [k, v] : j.items()) {
    if (v.is_object()) throw ConfigError("config key '" + k + "' is nested; use dotted keys");
    lookup(k).set(next, v);
  }
  config = next;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig c;
  apply_config_json(c, ss.str());
  return c;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Entry& e = lookup(key);
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded()) v = value;
  e.set(config, v);
}

}  // namespace moemba::trainer
