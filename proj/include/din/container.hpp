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

// Binary container shared by checkpoints and datasets.
//
//   line 1: "DINC 1"
//   line 2: JSON header {"meta": {...}, "tensors": [{"name", "shape", "dtype",
//           "offset", "count"}, ...]} on a single line
//   rest:   raw little-endian IEEE-754 values, tensors in header order,
//           "offset" counted in bytes from the start of the payload
//
// Values are held as double in memory; f32 entries round-trip bit-exactly
// because float -> double -> float is lossless.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "din/tensor.hpp"

namespace din {

enum class Dtype { F32, F64 };

std::string to_string(Dtype d);
Dtype parse_dtype(const std::string& s);

// File-system failures; carries the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::filesystem::path path)
      : std::runtime_error(what + ": " + path.string()), path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

class Container {
 public:
  struct Entry {
    std::string name;
    Dtype dtype = Dtype::F64;
    Tensor<double> tensor;
  };

  nlohmann::json meta = nlohmann::json::object();

  void add(std::string name, Tensor<double> tensor, Dtype dtype = Dtype::F64);
  bool contains(const std::string& name) const;
  // Throws std::invalid_argument for an unknown name.
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace din
