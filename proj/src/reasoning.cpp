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

#include "din/reasoning.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace din {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Base:
      return "base";
    case Variant::EDP:
      return "edp";
    case Variant::ARG:
      return "arg";
    case Variant::DR:
      return "dr";
    case Variant::DW:
      return "dw";
    case Variant::DRDW:
      return "dr+dw";
    case Variant::DRDWStar:
      return "dr+dw*";
    case Variant::STFactorised:
      return "st";
  }
  return "unknown";
}

void parse_variant(std::string_view text, DinConfig& config) {
  bool lite = false;
  if (text.starts_with("lite-")) {
    lite = true;
    text.remove_prefix(5);
  }
  if (text == "st-dr+dw") text = "st";
  for (Variant v : {Variant::Base, Variant::EDP, Variant::ARG, Variant::DR, Variant::DW, Variant::DRDW,
                    Variant::DRDWStar, Variant::STFactorised}) {
    if (text == to_string(v)) {
      config.variant = v;
      config.lite = lite;
      return;
    }
  }
  throw std::invalid_argument("unknown variant '" + std::string(text) + "'");
}

std::vector<FieldSpec> DinConfig::layer_fields() const {
  switch (variant) {
    case Variant::Base:
      return {};
    case Variant::STFactorised:
      return {FieldSpec(1, field.kN()), FieldSpec(field.kT(), 1)};
    default:
      return {field};
  }
}

std::string DinConfig::name() const { return (lite ? "lite-" : "") + std::string(to_string(variant)); }

void DinConfig::validate() const {
  if (D == 0 || C == 0) throw std::invalid_argument("model widths and class count must be positive");
  if (lite && (D_l == 0 || D_l > D)) {
    throw std::invalid_argument("lite width must satisfy 0 < D_l <= D, got D_l=" + std::to_string(D_l) +
                                " D=" + std::to_string(D));
  }
}

namespace {

bool uses_edp(Variant v) { return v == Variant::EDP || v == Variant::ARG; }
bool uses_relation_conv(Variant v) {
  return v == Variant::DR || v == Variant::DRDW || v == Variant::DRDWStar || v == Variant::STFactorised;
}
bool uses_walk(Variant v) {
  return v == Variant::DW || v == Variant::DRDW || v == Variant::DRDWStar || v == Variant::STFactorised;
}

std::string layer_name(std::size_t layer, const char* what) { return "l" + std::to_string(layer) + "." + what; }

struct ParamSpec {
  Shape shape;
  std::size_t fan_in = 0;  // 0: zero initialised
};

std::map<std::string, ParamSpec> expected_params(const DinConfig& c) {
  std::map<std::string, ParamSpec> out;
  const std::size_t W = c.width();
  if (c.D_in > 0) {
    out["embed.w"] = {Shape{c.D, c.D_in}, c.D_in};
    out["embed.b"] = {Shape{c.D}, 0};
  }
  if (c.lite) {
    out["lite.w"] = {Shape{c.D_l, 1, 1, c.D}, c.D};
    out["lite.b"] = {Shape{c.D_l}, 0};
  }
  const auto fields = c.layer_fields();
  for (std::size_t l = 0; l < fields.size(); ++l) {
    const FieldSpec& f = fields[l];
    const std::size_t K = f.size();
    if (uses_edp(c.variant)) {
      out[layer_name(l, "theta")] = {Shape{W, W}, W};
      out[layer_name(l, "phi")] = {Shape{W, W}, W};
    }
    if (uses_relation_conv(c.variant)) {
      out[layer_name(l, "rel_w")] = {Shape{K, f.kT(), f.kN(), W}, 0};
      out[layer_name(l, "rel_b")] = {Shape{K}, 0};
    }
    if (uses_walk(c.variant)) {
      out[layer_name(l, "off_w")] = {Shape{2 * K, f.kT(), f.kN(), W}, 0};
      out[layer_name(l, "off_b")] = {Shape{2 * K}, 0};
    }
    out[layer_name(l, "w")] = {Shape{W, W}, W};
  }
  out["cls.w"] = {Shape{c.C, W}, W};
  out["cls.b"] = {Shape{c.C}, 0};
  return out;
}

}  // namespace

template <typename S>
const Tensor<S>& ModelParams<S>::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

template <typename S>
Tensor<S>& ModelParams<S>::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

template <typename S>
std::size_t ModelParams<S>::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

template <typename S>
std::vector<S> ModelParams<S>::flatten() const {
  std::vector<S> out;
  out.reserve(total_size());
  for (const auto& [_, t] : tensors_) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

template <typename S>
void ModelParams<S>::unflatten(std::span<const S> values) {
  if (values.size() != total_size()) {
    throw std::invalid_argument("flat parameter vector has " + std::to_string(values.size()) +
                                " entries, expected " + std::to_string(total_size()));
  }
  std::size_t off = 0;
  for (auto& [_, t] : tensors_) {
    std::copy(values.begin() + off, values.begin() + off + t.size(), t.data());
    off += t.size();
  }
}

template <typename S>
ModelParams<S> init_params(const DinConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<S> params;
  for (const auto& [name, spec] : expected_params(config)) {
    Tensor<S> t(spec.shape);
    if (spec.fan_in > 0) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (S& v : t.values()) v = static_cast<S>(dist(rng));
    }
    params.set(name, std::move(t));
  }
  return params;
}

template <typename S>
void check_params(const DinConfig& config, const ModelParams<S>& params) {
  const auto expected = expected_params(config);
  for (const auto& [name, spec] : expected) {
    const Tensor<S>& t = params.at(name);
    if (t.shape() != spec.shape) {
      throw std::invalid_argument("parameter '" + name + "' has shape " + to_string(t.shape()) +
                                  ", config " + config.name() + " expects " + to_string(spec.shape));
    }
  }
  for (const auto& [name, _] : params.tensors()) {
    if (!expected.count(name)) {
      throw std::invalid_argument("unexpected parameter '" + name + "' for config " + config.name());
    }
  }
}

template <typename S>
ParamVars<S> bind(Tape<S>& tape, const ModelParams<S>& params, bool requires_grad) {
  ParamVars<S> out;
  for (const auto& [name, t] : params.tensors()) {
    Tensor<S> copy = t;
    copy.set_requires_grad(requires_grad);
    out.emplace(name, tape.leaf(std::move(copy)));
  }
  return out;
}

namespace {

template <typename S>
Var<S> rows(Var<S> t, std::size_t cols) {
  return reshape(t, Shape{t.value().size() / cols, cols});
}

// Convolution of an already stacked field [T x N x K x W].
template <typename S>
Var<S> conv_stacked(Var<S> stacked, Var<S> kernel, Var<S> bias) {
  const Shape& s = stacked.shape();
  const std::size_t T = s[0], N = s[1], KW = s[2] * s[3];
  const std::size_t Cout = kernel.shape()[0];
  if (kernel.value().size() != Cout * KW) {
    throw ShapeError("kernel " + to_string(kernel.shape()) + " does not match field stack " + to_string(s));
  }
  Var<S> out = affine_nt(reshape(stacked, Shape{T * N, KW}), reshape(kernel, Shape{Cout, KW}), bias);
  return reshape(out, Shape{T, N, Cout});
}

// x + relu(agg w) for aggregated messages agg [T x N x W].
template <typename S>
Var<S> residual_update(Var<S> grid, Var<S> aggregated, Var<S> w) {
  const std::size_t W = grid.shape()[2];
  Var<S> msg = matmul(rows(aggregated, W), w);
  return add(grid, reshape(relu(msg), grid.shape()));
}

template <typename S>
Var<S> normalise_members(Var<S> logits) {
  return softmax_axis(logits, 2);
}

}  // namespace

template <typename S>
Var<S> edp_relations(Var<S> grid, Var<S> w_theta, Var<S> w_phi, RelationScope scope, const FieldSpec& field) {
  const Shape gs = grid.shape();
  const std::size_t T = gs[0], N = gs[1], W = gs[2];
  const std::size_t Dr = w_theta.shape()[0];
  const S inv_sqrt = S{1} / std::sqrt(static_cast<S>(Dr));
  Var<S> x = rows(grid, W);
  Var<S> q = matmul_nt(x, w_theta);
  Var<S> k = matmul_nt(x, w_phi);
  if (scope == RelationScope::Full) {
    Var<S> logits = scale(matmul_nt(q, k, MacKind::Aggregation), inv_sqrt);
    return softmax_axis(logits, 1);
  }
  Var<S> keys = stack_field(reshape(k, Shape{T, N, Dr}), field);
  Var<S> logits = scale(field_dot(reshape(q, Shape{T, N, Dr}), keys), inv_sqrt);
  return normalise_members(logits);
}

template <typename S>
Var<S> arg_update(Var<S> grid, Var<S> relations, Var<S> w) {
  const Shape gs = grid.shape();
  const std::size_t W = gs[2];
  Var<S> agg = matmul(relations, rows(grid, W), MacKind::Aggregation);
  return residual_update(grid, reshape(agg, gs), w);
}

template <typename S>
Var<S> dr_relations(Var<S> grid, Var<S> rel_kernel, Var<S> rel_bias, const FieldSpec& field) {
  return normalise_members(conv_stacked(stack_field(grid, field), rel_kernel, rel_bias));
}

template <typename S>
Var<S> dr_update(Var<S> grid, Var<S> relations, Var<S> w, const FieldSpec& field) {
  return residual_update(grid, field_aggregate(relations, stack_field(grid, field)), w);
}

template <typename S>
Var<S> dw_offsets(Var<S> grid, Var<S> off_kernel, Var<S> off_bias, const FieldSpec& field) {
  const Shape& gs = grid.shape();
  Var<S> p = conv_stacked(stack_field(grid, field), off_kernel, off_bias);
  return reshape(p, Shape{gs[0], gs[1], field.size(), 2});
}

template <typename S>
Var<S> din_update(Var<S> grid, const FieldSpec& field, const LayerVars<S>& params, RelationSource source,
                  LayerTrace<S>* trace) {
  const Shape gs = grid.shape();
  const std::size_t T = gs[0], N = gs[1], K = field.size();
  Var<S> u = stack_field(grid, field);
  Var<S> offsets = reshape(conv_stacked(u, params.off_w, params.off_b), Shape{T, N, K, 2});
  Var<S> walked = walk_sample(grid, offsets, field);
  Var<S> relations;
  if (!params.rel_w.valid()) {
    // Dynamic walk alone: every member weighs 1/K.
    relations = grid.tape().constant(Tensor<S>(Shape{T, N, K}, S{1} / static_cast<S>(K)));
  } else if (source == RelationSource::Original) {
    relations = normalise_members(conv_stacked(u, params.rel_w, params.rel_b));
  } else {
    relations = normalise_members(conv_stacked(walked, params.rel_w, params.rel_b));
  }
  if (trace) {
    trace->field = field;
    trace->relations = relations;
    trace->offsets = offsets;
    trace->fully_connected = false;
  }
  return residual_update(grid, field_aggregate(relations, walked), params.w);
}

template <typename S>
Var<S> st_factorised_forward(Var<S> grid, const FieldSpec& spatial, const FieldSpec& temporal,
                             const LayerVars<S>& spatial_params, const LayerVars<S>& temporal_params,
                             ForwardTrace<S>* trace) {
  if (spatial.kT() != 1 || temporal.kN() != 1) {
    throw std::invalid_argument("factorised fields must be 1 x kN then kT x 1, got " + spatial.to_string() +
                                " and " + temporal.to_string());
  }
  LayerTrace<S> a, b;
  Var<S> x = din_update(grid, spatial, spatial_params, RelationSource::Original, &a);
  x = din_update(x, temporal, temporal_params, RelationSource::Original, &b);
  if (trace) {
    trace->layers.push_back(a);
    trace->layers.push_back(b);
  }
  return x;
}

template <typename S>
Var<S> lite_project(Var<S> grid, Var<S> kernel, Var<S> bias) {
  const Shape& ks = kernel.shape();
  if (ks.size() != 4 || ks[1] != 1 || ks[2] != 1) {
    throw ShapeError("lite projection kernel must be D_l x 1 x 1 x D, got " + to_string(ks));
  }
  if (ks[0] > grid.shape()[2]) throw ShapeError("lite projection must not widen the grid");
  return grid_conv(grid, kernel, bias);
}

template <typename S>
Var<S> global_pool(Var<S> grid, std::span<const std::uint8_t> presence) {
  return reduce_mean_axis(reduce_max_axis(grid, 1, presence), 0);
}

template <typename S>
Var<S> forward(const DinConfig& config, const ParamVars<S>& params, Var<S> grid, ForwardTrace<S>* trace,
               std::span<const std::uint8_t> presence) {
  config.validate();
  auto get = [&](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("missing parameter '" + name + "'");
    return it->second;
  };
  auto maybe = [&](const std::string& name) {
    auto it = params.find(name);
    return it == params.end() ? Var<S>{} : it->second;
  };
  const Shape gs = grid.shape();
  if (gs.size() != 3) throw ShapeError("grid must be T x N x D, got " + to_string(gs));
  const std::size_t T = gs[0], N = gs[1];
  const std::size_t in_width = config.D_in > 0 ? config.D_in : config.D;
  if (gs[2] != in_width) {
    throw std::invalid_argument("grid width " + std::to_string(gs[2]) + " does not match config width " +
                                std::to_string(in_width));
  }
  if (!presence.empty() && presence.size() != T * N) {
    throw ShapeError("presence mask must have T*N entries");
  }

  Var<S> x = grid;
  if (config.D_in > 0) {
    x = reshape(affine_nt(rows(x, config.D_in), get("embed.w"), get("embed.b"), MacKind::Head),
                Shape{T, N, config.D});
  }
  if (config.lite) x = lite_project(x, get("lite.w"), get("lite.b"));

  const auto fields = config.layer_fields();
  auto layer_vars = [&](std::size_t l) {
    return LayerVars<S>{maybe(layer_name(l, "rel_w")), maybe(layer_name(l, "rel_b")), maybe(layer_name(l, "off_w")),
                        maybe(layer_name(l, "off_b")), get(layer_name(l, "w"))};
  };
  switch (config.variant) {
    case Variant::Base:
      break;
    case Variant::EDP:
    case Variant::ARG: {
      const bool full = config.variant == Variant::ARG;
      Var<S> r = edp_relations(x, get(layer_name(0, "theta")), get(layer_name(0, "phi")),
                               full ? RelationScope::Full : RelationScope::Field, fields[0]);
      if (trace) {
        LayerTrace<S> lt;
        lt.field = fields[0];
        lt.fully_connected = full;
        lt.relations = full ? reshape(r, Shape{T, N, T * N}) : r;
        trace->layers.push_back(lt);
      }
      x = full ? arg_update(x, r, get(layer_name(0, "w"))) : dr_update(x, r, get(layer_name(0, "w")), fields[0]);
      break;
    }
    case Variant::DR: {
      Var<S> r = dr_relations(x, get(layer_name(0, "rel_w")), get(layer_name(0, "rel_b")), fields[0]);
      if (trace) trace->layers.push_back(LayerTrace<S>{fields[0], r, {}, false});
      x = dr_update(x, r, get(layer_name(0, "w")), fields[0]);
      break;
    }
    case Variant::DW:
    case Variant::DRDW:
    case Variant::DRDWStar: {
      LayerTrace<S> lt;
      const auto source = config.variant == Variant::DRDWStar ? RelationSource::Walked : RelationSource::Original;
      x = din_update(x, fields[0], layer_vars(0), source, &lt);
      if (trace) trace->layers.push_back(lt);
      break;
    }
    case Variant::STFactorised:
      x = st_factorised_forward(x, fields[0], fields[1], layer_vars(0), layer_vars(1), trace);
      break;
  }

  const std::size_t W = config.width();
  Var<S> z = reshape(global_pool(x, presence), Shape{1, W});
  return reshape(affine_nt(z, get("cls.w"), get("cls.b"), MacKind::Head), Shape{config.C});
}

template <typename S>
Tensor<S> forward(const DinConfig& config, const ModelParams<S>& params, const Tensor<S>& grid) {
  Tape<S> tape;
  ParamVars<S> vars = bind(tape, params, false);
  return forward(config, vars, tape.constant(grid)).value();
}

#define DIN_INSTANTIATE(S)                                                                                   \
  template class ModelParams<S>;                                                                             \
  template ModelParams<S> init_params<S>(const DinConfig&, std::uint64_t);                                   \
  template void check_params<S>(const DinConfig&, const ModelParams<S>&);                                    \
  template ParamVars<S> bind<S>(Tape<S>&, const ModelParams<S>&, bool);                                      \
  template Var<S> edp_relations<S>(Var<S>, Var<S>, Var<S>, RelationScope, const FieldSpec&);                 \
  template Var<S> arg_update<S>(Var<S>, Var<S>, Var<S>);                                                     \
  template Var<S> dr_relations<S>(Var<S>, Var<S>, Var<S>, const FieldSpec&);                                 \
  template Var<S> dr_update<S>(Var<S>, Var<S>, Var<S>, const FieldSpec&);                                    \
  template Var<S> dw_offsets<S>(Var<S>, Var<S>, Var<S>, const FieldSpec&);                                   \
  template Var<S> din_update<S>(Var<S>, const FieldSpec&, const LayerVars<S>&, RelationSource, LayerTrace<S>*); \
  template Var<S> st_factorised_forward<S>(Var<S>, const FieldSpec&, const FieldSpec&, const LayerVars<S>&,  \
                                           const LayerVars<S>&, ForwardTrace<S>*);                           \
  template Var<S> lite_project<S>(Var<S>, Var<S>, Var<S>);                                                   \
  template Var<S> global_pool<S>(Var<S>, std::span<const std::uint8_t>);                                     \
  template Var<S> forward<S>(const DinConfig&, const ParamVars<S>&, Var<S>, ForwardTrace<S>*,                \
                             std::span<const std::uint8_t>);                                                 \
  template Tensor<S> forward<S>(const DinConfig&, const ModelParams<S>&, const Tensor<S>&);

DIN_INSTANTIATE(float)
DIN_INSTANTIATE(double)
DIN_INSTANTIATE(long double)

#undef DIN_INSTANTIATE

}  // namespace din
