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

#include "din/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace din {

namespace {

constexpr const char* kMagic = "DINC 1";

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    for (std::size_t i = 0; i < sizeof(U) / 2; ++i) std::swap(b[i], b[sizeof(U) - 1 - i]);
    std::memcpy(&v, b, sizeof(U));
  }
  return v;
}

std::size_t width(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

}  // namespace

std::string to_string(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::F32;
  if (s == "f64") return Dtype::F64;
  throw std::invalid_argument("unknown dtype '" + s + "'");
}

void Container::add(std::string name, Tensor<double> tensor, Dtype dtype) {
  for (Entry& e : entries_) {
    if (e.name == name) {
      e = Entry{std::move(name), dtype, std::move(tensor)};
      return;
    }
  }
  entries_.push_back(Entry{std::move(name), dtype, std::move(tensor)});
}

bool Container::contains(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Container::Entry& Container::entry(const std::string& name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) return e;
  }
  throw std::invalid_argument("container has no tensor named '" + name + "'");
}

void Container::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const Entry& e : entries_) {
    header["tensors"].push_back({{"name", e.name},
                                 {"shape", e.tensor.shape()},
                                 {"dtype", to_string(e.dtype)},
                                 {"offset", offset},
                                 {"count", e.tensor.size()}});
    offset += e.tensor.size() * width(e.dtype);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path);
  out << kMagic << '\n' << header.dump() << '\n';
  for (const Entry& e : entries_) {
    for (double v : e.tensor.values()) {
      if (e.dtype == Dtype::F32) {
        const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
      } else {
        const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
      }
    }
  }
  if (!out) throw IoError("write failed", path);
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open", path);
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic) throw IoError("not a DINC container", path);
  if (!std::getline(in, header_line)) throw IoError("truncated container header", path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("malformed container header (") + ex.what() + ")", path);
  }
  Container c;
  c.meta = header.value("meta", nlohmann::json::object());
  const std::streamoff payload = in.tellg();
  for (const auto& t : header.at("tensors")) {
    const Dtype dtype = parse_dtype(t.at("dtype").get<std::string>());
    const Shape shape = t.at("shape").get<Shape>();
    const std::size_t count = t.at("count").get<std::size_t>();
    if (count != numel(shape)) throw IoError("tensor count disagrees with shape", path);
    in.seekg(payload + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    std::vector<double> values(count);
    for (double& v : values) {
      if (dtype == Dtype::F32) {
        std::uint32_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), sizeof bits);
        v = static_cast<double>(std::bit_cast<float>(to_little(bits)));
      } else {
        std::uint64_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), sizeof bits);
        v = std::bit_cast<double>(to_little(bits));
      }
    }
    if (!in) throw IoError("truncated container payload", path);
    c.add(t.at("name").get<std::string>(), Tensor<double>(shape, std::move(values)), dtype);
  }
  return c;
}

}  // namespace din
