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

#include "din/config_io.hpp"

#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace din {

namespace {

using Setter = std::function<void(const nlohmann::json&)>;

void apply(const nlohmann::json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw std::invalid_argument(section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument(section + ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& ex) {
      throw std::invalid_argument(section + "." + key + ": " + ex.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const nlohmann::json& v) { field = v.get<T>(); };
}

}  // namespace

std::string to_string(ReachKind r) { return r == ReachKind::Long ? "long" : "short"; }

ReachKind parse_reach(const std::string& s) {
  if (s == "long") return ReachKind::Long;
  if (s == "short") return ReachKind::Short;
  throw std::invalid_argument("unknown reach '" + s + "' (expected long or short)");
}

nlohmann::json to_json(const DinConfig& c) {
  return {{"variant", c.name()}, {"D", c.D},   {"D_l", c.D_l},
          {"field", c.field.to_string()}, {"C", c.C}, {"D_in", c.D_in}};
}

void update_from_json(DinConfig& c, const nlohmann::json& j) {
  apply(j, "model",
        {{"variant", [&](const nlohmann::json& v) { parse_variant(v.get<std::string>(), c); }},
         {"D", set(c.D)},
         {"D_l", set(c.D_l)},
         {"field", [&](const nlohmann::json& v) { c.field = FieldSpec::parse(v.get<std::string>()); }},
         {"C", set(c.C)},
         {"D_in", set(c.D_in)}});
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr0", c.lr0},
          {"decay", c.decay},
          {"decay_every", c.decay_every},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"seed", c.seed},
          {"precision", to_string(c.precision)},
          {"eval_every", c.eval_every}};
}

void update_from_json(TrainConfig& c, const nlohmann::json& j) {
  apply(j, "train",
        {{"lr0", set(c.lr0)},
         {"decay", set(c.decay)},
         {"decay_every", set(c.decay_every)},
         {"epochs", set(c.epochs)},
         {"batch_size", set(c.batch_size)},
         {"beta1", set(c.beta1)},
         {"beta2", set(c.beta2)},
         {"eps", set(c.eps)},
         {"seed", set(c.seed)},
         {"precision", [&](const nlohmann::json& v) { c.precision = parse_precision(v.get<std::string>()); }},
         {"eval_every", set(c.eval_every)}});
}

nlohmann::json to_json(const SyntheticTaskSpec& s) {
  return {{"T", s.T},
          {"N", s.N},
          {"V", s.V},
          {"C", s.C},
          {"sigma", s.sigma},
          {"reach", to_string(s.reach)},
          {"decoys", s.decoys},
          {"distractors", s.distractors},
          {"seed", s.seed}};
}

void update_from_json(SyntheticTaskSpec& s, const nlohmann::json& j) {
  apply(j, "task",
        {{"T", set(s.T)},
         {"N", set(s.N)},
         {"V", set(s.V)},
         {"C", set(s.C)},
         {"sigma", set(s.sigma)},
         {"reach", [&](const nlohmann::json& v) { s.reach = parse_reach(v.get<std::string>()); }},
         {"decoys", set(s.decoys)},
         {"distractors", set(s.distractors)},
         {"seed", set(s.seed)}});
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const DinConfig& config, const ModelParams<S>& params,
                     const nlohmann::json& extra) {
  check_params(config, params);
  Container c;
  c.meta = extra;
  c.meta["kind"] = "checkpoint";
  c.meta["model"] = to_json(config);
  const Dtype dtype = std::is_same_v<S, float> ? Dtype::F32 : Dtype::F64;
  for (const auto& [name, t] : params.tensors()) c.add(name, t.template cast<double>(), dtype);
  c.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.meta.value("kind", "") != "checkpoint") throw IoError("not a checkpoint", path);
  Checkpoint ck;
  ck.meta = c.meta;
  update_from_json(ck.config, c.meta.at("model"));
  ck.config.validate();
  for (const auto& e : c.entries()) {
    ck.params.set(e.name, e.tensor);
    ck.dtype = e.dtype;
  }
  check_params(ck.config, ck.params);
  return ck;
}

template void save_checkpoint(const std::filesystem::path&, const DinConfig&, const ModelParams<float>&,
                              const nlohmann::json&);
template void save_checkpoint(const std::filesystem::path&, const DinConfig&, const ModelParams<double>&,
                              const nlohmann::json&);

}  // namespace din
