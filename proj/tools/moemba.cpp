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

// moemba: synth | preprocess | train | eval | count | report
//
// Exit codes: 0 success, 1 usage or config error, 2 data or format error,
// 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "moemba/config.hpp"
#include "moemba/errors.hpp"
#include "moemba/head.hpp"
#include "moemba/model.hpp"
#include "moemba/sigproc.hpp"
#include "moemba/trainer.hpp"
#include "moemba/wtfm.hpp"

namespace fs = std::filesystem;
using namespace moemba;
using trainer::RunConfig;

namespace {

constexpr double kReferenceParams = 455003.0;
constexpr double kReferenceFlops = 27312144.0;

std::string read_text_or_config_error(const fs::path& path);

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;  // key=value
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.file, "flat JSON config with dotted keys");
  cmd->add_option("--set", args.sets, "override one key, e.g. --set train.lr0=0.003")
      ->take_all();
}

// Layers the config file and then --set overrides onto `c`.
RunConfig resolve_config(const ConfigArgs& args, RunConfig c = {}) {
  if (!args.file.empty()) {
    const std::string text = read_text_or_config_error(args.file);
    trainer::apply_config_json(c, text);
  }
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    trainer::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return c;
}

std::string read_text_or_config_error(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text << '\n';
  if (!f) throw FormatError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void make_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError("cannot create output directory " + dir.string());
}

void refuse_overwrite_input(const fs::path& out, const std::vector<fs::path>& inputs) {
  for (const auto& in : inputs) {
    std::error_code ec;
    if (fs::exists(out) && fs::equivalent(out, in, ec)) {
      throw UsageError("output " + out.string() + " would overwrite input " + in.string());
    }
  }
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::size_t class_count(const std::vector<sigproc::RecordingSession>& recs) {
  std::size_t g = 0;
  for (const auto& r : recs) g = std::max<std::size_t>(g, r.label + 1u);
  return g;
}

// Model shape must agree with the data it sees.
void check_data_matches(const trainer::ModelConfig& model,
                        const std::vector<sigproc::RecordingSession>& recs) {
  if (recs.empty()) throw DataError("dataset holds no recordings");
  const std::size_t v = recs.front().channels();
  if (v != model.channels) {
    throw ConfigError("data has " + std::to_string(v) + " channels but model.channels = " +
                      std::to_string(model.channels));
  }
  const std::size_t g = class_count(recs);
  if (g != model.classes) {
    throw ConfigError("data has " + std::to_string(g) + " classes but model.classes = " +
                      std::to_string(model.classes));
  }
}

std::vector<sigproc::RecordingSession> load_inputs(const std::string& data,
                                                   const std::vector<std::string>& csv) {
  std::vector<sigproc::RecordingSession> recs;
  if (!data.empty()) recs = sigproc::load_container(data);
  for (const auto& path : csv) recs.push_back(sigproc::load_csv_recording(path));
  if (recs.empty()) throw UsageError("no input: give --data and/or --csv");
  return recs;
}

// --- commands ---------------------------------------------------------------

struct SynthArgs {
  ConfigArgs config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> subjects, sessions, classes, trials, samples, channels;
};

int cmd_synth(const SynthArgs& a) {
  RunConfig c = resolve_config(a.config);
  if (a.seed) c.synth.seed = *a.seed;
  if (a.subjects) c.synth.subjects = *a.subjects;
  if (a.sessions) c.synth.sessions = *a.sessions;
  if (a.classes) c.synth.classes = *a.classes;
  if (a.trials) c.synth.trials_per_class = *a.trials;
  if (a.samples) c.synth.samples = *a.samples;
  if (a.channels) c.synth.channels = *a.channels;
  const auto recs = sigproc::synth_dataset(c.synth);
  const auto bytes = sigproc::encode_container(recs);
  std::ofstream f(a.out, std::ios::binary);
  if (!f) throw FormatError("cannot write " + a.out);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("failed writing " + a.out);
  std::cout << "recordings=" << recs.size() << " classes=" << c.synth.classes
            << " bytes=" << bytes.size() << " hash=" << hex(sigproc::fnv1a64(bytes)) << '\n';
  return 0;
}

struct PreprocessArgs {
  ConfigArgs config;
  std::string data;
  std::vector<std::string> csv;
  std::string out;
  std::string protocol;
  bool apply_filter = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  RunConfig c = resolve_config(a.config);
  if (!a.protocol.empty()) c.split.protocol = sigproc::parse_protocol(a.protocol);
  auto recs = load_inputs(a.data, a.csv);
  std::vector<fs::path> inputs;
  if (!a.data.empty()) inputs.emplace_back(a.data);
  for (const auto& p : a.csv) inputs.emplace_back(p);
  const auto split = sigproc::make_split(recs, c.split, c.preprocess);
  std::size_t train_patches = 0, test_patches = 0;
  for (const auto& s : split.train) train_patches += s.patches.size();
  for (const auto& s : split.test) test_patches += s.patches.size();
  if (!a.out.empty()) {
    refuse_overwrite_input(a.out, inputs);
    if (a.apply_filter) {
      for (auto& r : recs) r.samples = sigproc::bandstop_filter(r.samples, c.preprocess.filter);
    }
    sigproc::save_container(a.out, recs);
  }
  std::cout << "recordings=" << recs.size() << " classes=" << class_count(recs)
            << " protocol=" << sigproc::protocol_name(c.split.protocol)
            << " train_signals=" << split.train.size() << " train_patches=" << train_patches
            << " test_signals=" << split.test.size() << " test_patches=" << test_patches
            << " hash=" << hex(sigproc::dataset_hash(recs)) << '\n';
  return 0;
}

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string out;
  std::string protocol;
  std::string resume;
  std::size_t stop_after = 0;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  // On resume the checkpoint's config is the base and flags layer on top.
  RunConfig base;
  if (!a.resume.empty()) trainer::apply_config_json(base, trainer::checkpoint_config(a.resume));
  RunConfig c = resolve_config(a.config, base);
  if (!a.protocol.empty()) c.split.protocol = sigproc::parse_protocol(a.protocol);
  c.validate();
  if (a.stop_after > c.train.epochs) {
    throw UsageError("--stop-after exceeds train.epochs");
  }
  const std::size_t until = a.stop_after == 0 ? c.train.epochs : a.stop_after;
  const auto recs = sigproc::load_container(a.data);
  const auto model_cfg = c.resolved_model();
  check_data_matches(model_cfg, recs);
  const auto split = sigproc::make_split(recs, c.split, c.preprocess);
  const auto train_set = trainer::flatten(split.train);
  const auto test_set = trainer::flatten(split.test);

  make_out_dir(a.out);
  const std::string echo = trainer::config_to_json(c);
  write_text(fs::path(a.out) / "config.json", echo);

  trainer::TrainState state = trainer::start_training(model_cfg, c.train);
  if (!a.resume.empty()) trainer::load_checkpoint(a.resume, state);
  trainer::run_epochs(state, c.train, train_set, &test_set, until,
                      [&](const trainer::EpochRecord& r) {
                        if (a.quiet) return;
                        std::cout << "epoch=" << r.epoch << " lr=" << r.lr
                                  << " train_loss=" << r.train_loss << " train_acc=" << r.train_acc;
                        if (r.val_acc >= 0) std::cout << " val_acc=" << r.val_acc;
                        for (std::size_t e = 0; e < r.load_share.size(); ++e) {
                          std::cout << " load_" << e << '=' << r.load_share[e];
                        }
                        std::cout << std::endl;
                      });
  trainer::save_checkpoint(fs::path(a.out) / "model.memc", state, echo);
  trainer::write_history_csv(state.history, fs::path(a.out) / "history.csv");
  std::cout << "checkpoint=" << (fs::path(a.out) / "model.memc").string()
            << " params=" << trainer::count_params(state.model)
            << " checksum=" << hex(trainer::parameter_checksum(state.model))
            << " data_hash=" << hex(sigproc::dataset_hash(recs)) << '\n';
  return 0;
}

void dump_wavelet(const trainer::MoembaModel& model, const trainer::PatchIndex& data,
                  const fs::path& path) {
  const auto comps = wtfm::wtfm_components(data.patches.front(), model.wtfm);
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path.string());
  f.precision(17);
  f << "component,channel,row,col,value\n";
  const char* names[] = {"cA", "cH", "cV", "cD"};
  for (std::size_t k = 0; k < 4; ++k) {
    const Tensor& t = comps[k];
    const std::size_t e = t.dim(0), h = t.dim(1), w = t.dim(2);
    for (std::size_t ch = 0; ch < e; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          f << names[k] << ',' << ch << ',' << i << ',' << j << ',' << t.data()[(ch * h + i) * w + j] << '\n';
        }
  }
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string protocol;
  bool dump_wavelet = false;
};

int cmd_eval(const EvalArgs& a) {
  RunConfig c;
  trainer::apply_config_json(c, trainer::checkpoint_config(a.model));
  if (!a.protocol.empty()) c.split.protocol = sigproc::parse_protocol(a.protocol);
  const auto recs = sigproc::load_container(a.data);
  const auto model_cfg = c.resolved_model();
  check_data_matches(model_cfg, recs);
  trainer::TrainState state = trainer::start_training(model_cfg, c.train);
  trainer::load_checkpoint(a.model, state);
  const auto split = sigproc::make_split(recs, c.split, c.preprocess);
  const auto test_set = trainer::flatten(split.test);
  const head::EvalReport report = trainer::evaluate_model(state.model, test_set);

  make_out_dir(a.out);
  const fs::path out(a.out);
  write_text(out / "config.json", trainer::config_to_json(c));
  nlohmann::json extra = {{"protocol", sigproc::protocol_name(c.split.protocol)},
                          {"data_hash", hex(sigproc::dataset_hash(recs))},
                          {"model_checksum", hex(trainer::parameter_checksum(state.model))}};
  write_text(out / "report.json", head::report_json(report, extra.dump()));
  head::write_confusion_csv(report, out / "confusion.csv");
  head::write_roc_csv(report, out / "roc.csv");
  if (a.dump_wavelet) dump_wavelet(state.model, test_set, out / "wavelet.csv");
  std::cout << "signals=" << report.signals << " balanced_accuracy=" << report.confusion.balanced_accuracy
            << " total_accuracy=" << report.confusion.total_accuracy
            << " patch_accuracy=" << report.patch_accuracy << '\n';
  return 0;
}

struct CountArgs {
  ConfigArgs config;
  bool compare_paper = false;
};

int cmd_count(const CountArgs& a) {
  const RunConfig c = resolve_config(a.config);
  c.validate();
  const auto model_cfg = c.resolved_model();
  const std::size_t params = trainer::count_params(trainer::init_model(model_cfg, 0));
  const auto flops = trainer::count_flops(model_cfg);
  std::cout << "params=" << params << '\n'
            << "flops=" << flops.total() << '\n'
            << "flops.wtfm=" << flops.wtfm << '\n'
            << "flops.embed=" << flops.embed << '\n'
            << "flops.gate=" << flops.gate << '\n'
            << "flops.experts=" << flops.experts << '\n'
            << "flops.head=" << flops.head << '\n';
  if (a.compare_paper) {
    const auto pct = [](double ours, double ref) { return 100.0 * (ours - ref) / ref; };
    std::cout << std::fixed << std::setprecision(2)
              << "reference_params=" << static_cast<std::uint64_t>(kReferenceParams) << '\n'
              << "params_deviation_pct=" << pct(static_cast<double>(params), kReferenceParams) << '\n'
              << "reference_flops=" << static_cast<std::uint64_t>(kReferenceFlops) << '\n'
              << "flops_deviation_pct=" << pct(static_cast<double>(flops.total()), kReferenceFlops) << '\n';
  }
  return 0;
}

struct ReportArgs {
  std::string run;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  const fs::path dir(a.run);
  std::ostringstream os;
  os << "# Run " << dir.filename().string() << "\n\n";
  if (fs::exists(dir / "history.csv")) {
    std::ifstream f(dir / "history.csv");
    std::string header, line, last;
    std::getline(f, header);
    std::size_t epochs = 0;
    while (std::getline(f, line))
      if (!line.empty()) {
        last = line;
        ++epochs;
      }
    os << "epochs: " << epochs << "\n" << "last epoch (" << header << "): " << last << "\n\n";
  }
  if (fs::exists(dir / "report.json")) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(dir / "report.json"));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("report.json is not valid JSON: ") + e.what());
    }
    os << std::fixed << std::setprecision(4);
    os << "signals: " << j.value("signals", 0) << ", patches: " << j.value("patches", 0) << "\n";
    os << "balanced accuracy: " << j.value("balanced_accuracy", 0.0) << "\n";
    os << "total accuracy: " << j.value("total_accuracy", 0.0) << "\n";
    os << "patch accuracy: " << j.value("patch_accuracy", 0.0) << "\n";
    os << "params: " << j.value("param_count", 0) << ", flops per patch: " << j.value("flop_count", 0)
       << "\n\nconfusion (rows = true class):\n";
    for (const auto& row : j["confusion"]) {
      for (const auto& v : row) os << std::setw(5) << v.get<std::size_t>();
      os << "\n";
    }
    os << "\nAUC per class:";
    for (const auto& v : j["auc"]) {
      if (v.is_null()) {
        os << "  n/a";
      } else {
        os << "  " << v.get<double>();
      }
    }
    os << "\n";
  }
  if (!fs::exists(dir / "history.csv") && !fs::exists(dir / "report.json")) {
    throw DataError("no history.csv or report.json in " + dir.string());
  }
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    write_text(a.out, os.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoE of selective state-space experts for sEMG gesture classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "moemba 0.1.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "write a synthetic multi-session dataset container");
  add_config_options(s, synth.config);
  s->add_option("--out", synth.out, "container path")->required();
  s->add_option("--seed", synth.seed, "data seed (default 0)");
  s->add_option("--subjects", synth.subjects, "default 9");
  s->add_option("--sessions", synth.sessions, "default 2");
  s->add_option("--classes", synth.classes, "default 8");
  s->add_option("--trials", synth.trials, "trials per class and session, default 1");
  s->add_option("--samples", synth.samples, "samples per recording, default 1000");
  s->add_option("--channels", synth.channels, "electrodes, default 16");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "ingest, filter, and summarize the patch split");
  add_config_options(p, pre.config);
  p->add_option("--data", pre.data, "input container");
  p->add_option("--csv", pre.csv, "CSV recordings with .meta sidecars");
  p->add_option("--out", pre.out, "write the (optionally filtered) recordings as a container");
  p->add_option("--protocol", pre.protocol, "inter-session or intra-session");
  p->add_flag("--apply-filter", pre.apply_filter, "store band-stop filtered samples in --out");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train on one session and checkpoint");
  add_config_options(t, tr.config);
  t->add_option("--data", tr.data, "container")->required();
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_option("--protocol", tr.protocol, "inter-session or intra-session");
  t->add_option("--resume", tr.resume, "continue from a checkpoint");
  t->add_option("--stop-after", tr.stop_after,
                 "checkpoint after this epoch of the configured schedule");
  t->add_flag("--quiet", tr.quiet, "no per-epoch lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the held-out side of the split");
  e->add_option("--model", ev.model, "checkpoint")->required();
  e->add_option("--data", ev.data, "container")->required();
  e->add_option("--out", ev.out, "report directory")->required();
  e->add_option("--protocol", ev.protocol, "inter-session or intra-session");
  e->add_flag("--dump-wavelet", ev.dump_wavelet, "write wavelet.csv for the first held-out patch");

  CountArgs cnt;
  auto* c = app.add_subcommand("count", "print parameter and FLOP counts as key=value lines");
  add_config_options(c, cnt.config);
  c->add_flag("--compare-paper", cnt.compare_paper, "also print the published reference counts");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "summarize a run or eval directory");
  r->add_option("--run", rep.run, "directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--out", rep.out, "write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 1;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (p->parsed()) return cmd_preprocess(pre);
    if (t->parsed()) return cmd_train(tr);
    if (e->parsed()) return cmd_eval(ev);
    if (c->parsed()) return cmd_count(cnt);
    if (r->parsed()) return cmd_report(rep);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 1;
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << '\n';
    return 1;
  } catch (const NumericalError& ex) {
    std::cerr << "numerical failure: " << ex.what() << '\n';
    return 3;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 2;
  }
  return 1;
}
