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

// Run configuration as a flat JSON object with dotted keys, e.g.
//   {"model.d_model": 16, "train.lr0": 0.003}
// Unknown keys and mistyped values are rejected with ConfigError.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moemba/model.hpp"
#include "moemba/sigproc.hpp"
#include "moemba/trainer.hpp"

namespace moemba::trainer {

struct RunConfig {
  sigproc::SynthConfig synth;
  sigproc::PreprocessConfig preprocess;
  sigproc::SplitConfig split;
  ModelConfig model;  // model.window follows preprocess.window
  TrainConfig train;

  // Model config with the window taken from preprocessing.
  ModelConfig resolved_model() const;
  void validate() const;
};

std::vector<std::string> config_keys();

// Every key, sorted, as an indented flat JSON object.
std::string config_to_json(const RunConfig& config);

// Applies the keys present in a flat JSON object; others keep their values.
void apply_config_json(RunConfig& config, const std::string& text);
RunConfig load_config_file(const std::filesystem::path& path);

// `value` is read as JSON when it parses (numbers, true/false), otherwise as
// a bare string.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

}  // namespace moemba::trainer
