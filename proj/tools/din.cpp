// Copyright 2026 The dinet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// din: generate synthetic data, train, evaluate, analyse and export graphs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "din/complexity.hpp"
#include "din/config_io.hpp"
#include "din/graphs.hpp"
#include "din/kernels.hpp"
#include "din/synth.hpp"
#include "din/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

// Raised for bad flag or config values; reported as kind=config.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  din::DinConfig model;
  din::TrainConfig train;
  din::SyntheticTaskSpec task;
  std::size_t train_count = 4000;
  std::size_t test_count = 1000;
  std::string isa = "scalar";
};

json to_json(const RunConfig& r) {
  return {{"model", din::to_json(r.model)},
          {"train", din::to_json(r.train)},
          {"task", din::to_json(r.task)},
          {"data", {{"train_count", r.train_count}, {"test_count", r.test_count}}},
          {"isa", r.isa}};
}

void update_from_json(RunConfig& r, json j) {
  // A manifest carries the effective config under "config".
  if (j.contains("config") && j.contains("tool")) j = j.at("config");
  for (const auto& [key, value] : j.items()) {
    if (key == "model") {
      din::update_from_json(r.model, value);
    } else if (key == "train") {
      din::update_from_json(r.train, value);
    } else if (key == "task") {
      din::update_from_json(r.task, value);
    } else if (key == "data") {
      r.train_count = value.value("train_count", r.train_count);
      r.test_count = value.value("test_count", r.test_count);
    } else if (key == "isa") {
      r.isa = value.get<std::string>();
    } else {
      throw std::invalid_argument("config: unknown section '" + key + "'");
    }
  }
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> variant, field, precision, isa;
  std::optional<std::size_t> T, N, D, Dl, epochs;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool model_flags) {
  cmd->add_option("--config", f.config_path, "JSON config file (or a manifest from an earlier run)");
  cmd->add_option("--seed", f.seed, "seed for data generation, initialisation and shuffling");
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--T", f.T, "frames");
  cmd->add_option("--N", f.N, "persons per frame");
  cmd->add_option("--isa", f.isa, "kernel ISA: scalar or avx2");
  if (model_flags) {
    cmd->add_option("--variant", f.variant, "base, edp, arg, dr, dw, dr+dw, dr+dw*, st, optionally lite-*");
    cmd->add_option("--field", f.field, "interaction field kTxkN, e.g. 3x3");
    cmd->add_option("--D", f.D, "feature width");
    cmd->add_option("--Dl", f.Dl, "lite width");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--precision", f.precision, "f32 or f64");
  }
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig r;
  try {
    if (!f.config_path.empty()) {
      std::ifstream in(f.config_path);
      if (!in) throw din::IoError("cannot open config", f.config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed config ") + f.config_path + ": " + ex.what());
      }
      update_from_json(r, j);
    }
    if (f.seed) {
      r.train.seed = *f.seed;
      r.task.seed = *f.seed;
    }
    if (f.variant) din::parse_variant(*f.variant, r.model);
    if (f.field) r.model.field = din::FieldSpec::parse(*f.field);
    if (f.T) r.task.T = *f.T;
    if (f.N) r.task.N = *f.N;
    if (f.D) r.model.D = *f.D;
    if (f.Dl) r.model.D_l = *f.Dl;
    if (f.epochs) r.train.epochs = *f.epochs;
    if (f.precision) r.train.precision = din::parse_precision(*f.precision);
    if (f.isa) r.isa = *f.isa;
    if (r.isa != "scalar" && r.isa != "avx2") throw ConfigError("isa must be scalar or avx2, got " + r.isa);
    r.model.C = r.task.C;
    r.model.D_in = r.task.feature_width();
    r.model.validate();
    r.train.validate();
    r.task.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  din::kernels::set_isa(r.isa == "avx2" ? din::kernels::Isa::Avx2 : din::kernels::Isa::Scalar);
  return r;
}

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw din::IoError("cannot create output directory", p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw din::IoError("cannot open for writing", path);
  out << text;
  if (!out) throw din::IoError("write failed", path);
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& r, const json& extra = {}) {
  const json config = to_json(r);
  json m = {{"tool", "din"},
            {"version", kVersion},
            {"command", command},
            {"seed", r.train.seed},
            {"config_hash", din::fnv1a_hex(config.dump())},
            {"config", config}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string confusion_csv(const din::EvalReport& r) {
  std::ostringstream os;
  os << "true";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) os << ",pred_" << c;
  os << "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    os << t;
    for (std::uint64_t v : r.confusion[t]) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string eval_csv(const din::EvalReport& r) { return "mca,mpca\n" + num(r.mca) + "," + num(r.mpca) + "\n"; }

din::Dataset load_or_generate(const std::string& path, const RunConfig& r, bool test) {
  if (!path.empty()) return din::load_dataset(path);
  din::DatasetSplit split = din::generate_split(r.task, test ? 1 : r.train_count, r.test_count);
  return test ? std::move(split.test) : std::move(split.train);
}

void check_width(const din::Dataset& data, const din::DinConfig& model, const std::string& what) {
  if (data.size() == 0) throw ConfigError(what + " is empty");
  const std::size_t width = data.grids.front().dim(2);
  const std::size_t expected = model.D_in > 0 ? model.D_in : model.D;
  if (width != expected) {
    throw ConfigError(what + " has feature width " + std::to_string(width) + ", model expects " +
                      std::to_string(expected));
  }
}

int cmd_gen(const CommonFlags& f, std::size_t train_count, std::size_t test_count, const std::string& reach,
            std::optional<double> sigma, std::optional<std::size_t> decoys) {
  RunConfig r = resolve(f);
  try {
    if (train_count) r.train_count = train_count;
    if (test_count) r.test_count = test_count;
    if (!reach.empty()) r.task.reach = din::parse_reach(reach);
    if (sigma) r.task.sigma = *sigma;
    if (decoys) r.task.decoys = *decoys;
    r.task.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  const fs::path out = prepare_out(f.out);
  const din::DatasetSplit split = din::generate_split(r.task, r.train_count, r.test_count);
  din::save_dataset(out / "train.dinc", split.train);
  din::save_dataset(out / "test.dinc", split.test);
  write_manifest(out, "gen", r);
  return 0;
}

template <typename S>
int run_train(const RunConfig& r, const din::Dataset& train_set, const din::Dataset& test_set, const fs::path& out) {
  std::ostringstream metrics;
  metrics << "epoch,lr,train_loss,train_mca,test_mca,test_mpca\n";
  const din::TrainResult<S> result =
      din::train<S>(r.model, r.train, train_set, &test_set, [&](const din::EpochStats& s) {
        metrics << s.epoch << "," << num(s.lr) << "," << num(s.train_loss) << "," << num(s.train_mca) << ","
                << (s.evaluated ? num(s.test_mca) : "") << "," << (s.evaluated ? num(s.test_mpca) : "") << "\n";
        std::fprintf(stderr, "epoch %zu loss %.4f train %.2f%%%s\n", s.epoch, s.train_loss, s.train_mca,
                     s.evaluated ? (" test " + num(s.test_mca) + "%").c_str() : "");
      });
  din::save_checkpoint(out / "checkpoint.dinc", r.model, result.params);
  write_text(out / "metrics.csv", metrics.str());
  write_text(out / "confusion.csv", confusion_csv(result.final_eval));
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& train_path, const std::string& test_path) {
  RunConfig r = resolve(f);
  const din::Dataset train_set = load_or_generate(train_path, r, false);
  const din::Dataset test_set = load_or_generate(test_path, r, true);
  check_width(train_set, r.model, "training set");
  check_width(test_set, r.model, "test set");
  const fs::path out = prepare_out(f.out);
  const int rc = r.train.precision == din::Precision::F32 ? run_train<float>(r, train_set, test_set, out)
                                                           : run_train<double>(r, train_set, test_set, out);
  write_manifest(out, "train", r,
                 {{"train_data", train_path.empty() ? "generated" : train_path},
                  {"test_data", test_path.empty() ? "generated" : test_path}});
  return rc;
}

int cmd_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& data_path) {
  RunConfig r = resolve(f);
  const din::Checkpoint ck = din::load_checkpoint(checkpoint);
  r.model = ck.config;
  const din::Dataset data = load_or_generate(data_path, r, true);
  check_width(data, ck.config, "dataset");
  const din::EvalReport report = ck.dtype == din::Dtype::F32
                                     ? din::evaluate(ck.config, ck.params.cast<float>(), data)
                                     : din::evaluate(ck.config, ck.params, data);
  const fs::path out = prepare_out(f.out);
  write_text(out / "metrics.csv", eval_csv(report));
  write_text(out / "confusion.csv", confusion_csv(report));
  write_manifest(out, "eval", r, {{"checkpoint", checkpoint}, {"data", data_path.empty() ? "generated" : data_path}});
  return 0;
}

int cmd_analyze(const CommonFlags& f) {
  RunConfig r = resolve(f);
  std::vector<din::DinConfig> configs;
  if (f.variant) {
    configs.push_back(r.model);
  } else {
    for (const char* v : {"edp", "dr", "dw", "dr+dw", "lite-dr+dw"}) {
      din::DinConfig c = r.model;
      din::parse_variant(v, c);
      configs.push_back(c);
    }
  }
  std::vector<din::ComplexityReport> reports;
  for (const din::DinConfig& c : configs) reports.push_back(din::count_flops(c, r.task.T, r.task.N));
  const std::string table = din::render_table(reports);
  const fs::path out = prepare_out(f.out);
  write_text(out / "complexity.txt", table);
  write_manifest(out, "analyze", r);
  std::cout << table;
  return 0;
}

int cmd_export(const CommonFlags& f, const std::string& checkpoint, const std::string& data_path, std::size_t index,
               std::size_t layer) {
  RunConfig r = resolve(f);
  const din::Checkpoint ck = din::load_checkpoint(checkpoint);
  r.model = ck.config;
  const din::Dataset data = load_or_generate(data_path, r, true);
  check_width(data, ck.config, "dataset");
  if (index >= data.size()) {
    throw ConfigError("sample index " + std::to_string(index) + " out of range (" + std::to_string(data.size()) +
                      " samples)");
  }
  din::InteractionGraphExport g;
  try {
    g = din::export_interaction_graphs(ck.params, ck.config, data.grids[index], layer);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  const fs::path out = prepare_out(f.out);
  write_text(out / "graphs.csv", din::graphs_csv(g));
  std::ostringstream group;
  group << "t,n,weight\n";
  for (std::size_t t = 0; t < g.T; ++t) {
    for (std::size_t n = 0; n < g.N; ++n) group << t << "," << n << "," << num(g.group.at(t, n)) << "\n";
  }
  write_text(out / "group.csv", group.str());
  json extra = {{"checkpoint", checkpoint}, {"sample", index}, {"layer", layer}, {"key_person", g.key_person}};
  if (index < data.info.size()) {
    const din::SampleInfo& s = data.info[index];
    extra["trigger"] = {s.trigger_t, s.trigger_n};
    extra["responder"] = {s.responder_t, s.responder_n};
  }
  write_manifest(out, "export-graphs", r, extra);
  return 0;
}

void report_error(const char* kind, const std::string& path, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  json line = {{"error", kind}, {"message", flat}};
  if (!path.empty()) line["path"] = path;
  std::cerr << "din: " << line.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic interaction-graph reasoning: data, training, analysis"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, analyze_f, export_f;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic train/test split");
  add_common(gen, gen_f, false);
  std::size_t train_count = 0, test_count = 0;
  std::string reach;
  std::optional<double> sigma;
  std::optional<std::size_t> decoys;
  gen->add_option("--train-count", train_count, "training samples");
  gen->add_option("--test-count", test_count, "test samples");
  gen->add_option("--reach", reach, "long or short");
  gen->add_option("--sigma", sigma, "feature noise");
  gen->add_option("--decoys", decoys, "decoy responders per sample");

  CLI::App* train = app.add_subcommand("train", "train a model; data generated from the config unless given");
  add_common(train, train_f, true);
  std::string train_data, test_data;
  train->add_option("--train-data", train_data, "training dataset file");
  train->add_option("--test-data", test_data, "test dataset file");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_f, false);
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset file; default: the config's generated test split");

  CLI::App* analyze = app.add_subcommand("analyze", "parameter and FLOP counts");
  add_common(analyze, analyze_f, true);

  CLI::App* exp = app.add_subcommand("export-graphs", "export interaction graphs of one sample");
  add_common(exp, export_f, false);
  std::string exp_ckpt, exp_data;
  std::size_t exp_index = 0, exp_layer = 0;
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--data", exp_data, "dataset file; default: the config's generated test split");
  exp->add_option("--index", exp_index, "sample index");
  exp->add_option("--layer", exp_layer, "reasoning layer");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_f, train_count, test_count, reach, sigma, decoys);
    if (*train) return cmd_train(train_f, train_data, test_data);
    if (*eval) return cmd_eval(eval_f, eval_ckpt, eval_data);
    if (*analyze) return cmd_analyze(analyze_f);
    if (*exp) return cmd_export(export_f, exp_ckpt, exp_data, exp_index, exp_layer);
  } catch (const din::IoError& ex) {
    report_error("io", ex.path().string(), ex.what());
    return 3;
  } catch (const ConfigError& ex) {
    report_error("config", "", ex.what());
    return 2;
  } catch (const din::DivergenceError& ex) {
    report_error("divergence", "", ex.what());
    return 4;
  } catch (const std::exception& ex) {
    report_error("internal", "", ex.what());
    return 1;
  }
  return 0;
}
