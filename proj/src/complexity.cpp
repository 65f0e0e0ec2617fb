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

#include "din/complexity.hpp"

#include <cstdio>
#include <sstream>

namespace din {

namespace {

struct LayerCost {
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
};

LayerCost layer_cost(Variant v, std::uint64_t K, std::uint64_t W) {
  switch (v) {
    case Variant::Base:
      return {};
    case Variant::EDP:
    case Variant::ARG:
      return {3 * W * W, 0};
    case Variant::DR:
      return {K * K * W + W * W, K};
    case Variant::DW:
      return {2 * K * K * W + W * W, 2 * K};
    case Variant::DRDW:
    case Variant::DRDWStar:
    case Variant::STFactorised:
      return {3 * K * K * W + W * W, 3 * K};
  }
  return {};
}

std::string params_formula(const DinConfig& c) {
  const std::string W = c.lite ? "D_l" : "D";
  std::string inner;
  switch (c.variant) {
    case Variant::Base:
      return "0";
    case Variant::EDP:
    case Variant::ARG:
      inner = "3" + W + "^2";
      break;
    case Variant::DR:
      inner = W + "(K^2+" + W + ")";
      break;
    case Variant::DW:
      inner = W + "(2K^2+" + W + ")";
      break;
    case Variant::DRDW:
    case Variant::DRDWStar:
      inner = W + "(3K^2+" + W + (c.lite ? "+D" : "") + ")";
      break;
    case Variant::STFactorised:
      inner = "2" + W + "(3K+" + W + (c.lite ? "+D" : "") + ")";
      break;
  }
  return "Theta(" + inner + ")";
}

std::string flops_formula(const DinConfig& c) {
  std::string p = params_formula(c);
  if (p == "0") return "0";
  std::string body = p.substr(6);
  std::string lead;
  while (!body.empty() && body.front() >= '0' && body.front() <= '9') {
    lead += body.front();
    body.erase(body.begin());
  }
  return "Theta(" + lead + "TN" + body;
}

}  // namespace

ComplexityReport count_params(const DinConfig& config) {
  config.validate();
  ComplexityReport r;
  r.variant = config.name();
  r.field = config.field.to_string();
  r.D = config.D;
  r.D_l = config.lite ? config.D_l : 0;
  r.K = config.field.size();
  const std::uint64_t W = config.width();
  if (config.lite && config.variant != Variant::Base) {
    r.params += static_cast<std::uint64_t>(config.D) * config.D_l;
    r.biases += config.D_l;
  }
  for (const FieldSpec& f : config.layer_fields()) {
    const LayerCost lc = layer_cost(config.variant, f.size(), W);
    r.params += lc.weights;
    r.biases += lc.biases;
  }
  r.params_formula = params_formula(config);
  r.flops_formula = flops_formula(config);
  return r;
}

ComplexityReport count_flops(const DinConfig& config, std::size_t T, std::size_t N) {
  ComplexityReport r = count_params(config);
  r.T = T;
  r.N = N;
  // Every weight of a per-position linear map is used once per grid position.
  r.macs = static_cast<std::uint64_t>(T) * N * r.params;
  r.flops = 2 * r.macs;
  return r;
}

MacTally instrumented_count(const DinConfig& config, const Tensor<double>& grid) {
  const ModelParams<double> params = init_params<double>(config, 0);
  Tape<double> tape;
  ParamVars<double> vars = bind(tape, params, false);
  forward(config, vars, tape.constant(grid));
  return tape.macs();
}

std::string format_scaled(double value, double unit, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f%s", value / unit, suffix);
  return buf;
}

std::string render_table(const std::vector<ComplexityReport>& reports) {
  std::ostringstream os;
  char line[512];
  std::snprintf(line, sizeof line, "%-12s %-6s %4s %4s %6s %5s %4s %12s %9s %8s %14s %9s  %-26s %s\n", "variant",
                "field", "T", "N", "D", "D_l", "K", "params", "params_M", "biases", "flops", "flops_G",
                "params_complexity", "flops_complexity");
  os << line;
  for (const ComplexityReport& r : reports) {
    const std::string dl = r.D_l ? std::to_string(r.D_l) : "-";
    std::snprintf(line, sizeof line, "%-12s %-6s %4zu %4zu %6zu %5s %4zu %12llu %9s %8llu %14llu %9s  %-26s %s\n",
                  r.variant.c_str(), r.field.c_str(), r.T, r.N, r.D, dl.c_str(), r.K,
                  static_cast<unsigned long long>(r.params), format_scaled(static_cast<double>(r.params), 1e6, "M").c_str(),
                  static_cast<unsigned long long>(r.biases), static_cast<unsigned long long>(r.flops),
                  format_scaled(static_cast<double>(r.flops), 1e9, "G").c_str(), r.params_formula.c_str(),
                  r.flops_formula.c_str());
    os << line;
  }
  return os.str();
}

}  // namespace din
