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

#pragma once

// JSON forms of the configuration structs and the checkpoint file.

#include <filesystem>

#include <json.hpp>

#include "din/container.hpp"
#include "din/reasoning.hpp"
#include "din/synth.hpp"
#include "din/train.hpp"

namespace din {

// Readers start from the struct's current values, so missing keys keep their
// defaults; unknown keys and ill-typed values throw std::invalid_argument.
nlohmann::json to_json(const DinConfig& c);
void update_from_json(DinConfig& c, const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& c);
void update_from_json(TrainConfig& c, const nlohmann::json& j);

nlohmann::json to_json(const SyntheticTaskSpec& s);
void update_from_json(SyntheticTaskSpec& s, const nlohmann::json& j);

std::string to_string(ReachKind r);
ReachKind parse_reach(const std::string& s);

// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

struct Checkpoint {
  DinConfig config;
  Dtype dtype = Dtype::F64;
  ModelParams<double> params;
  nlohmann::json meta;  // whatever else the writer stored
};

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const DinConfig& config, const ModelParams<S>& params,
                     const nlohmann::json& extra = nlohmann::json::object());

// Validates the parameters against the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace din
