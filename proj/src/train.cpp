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

#include "din/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace din {

std::string to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  throw std::invalid_argument("unknown precision '" + s + "' (expected f32 or f64)");
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0) || !std::isfinite(lr0)) throw std::invalid_argument("lr0 must be finite and non-negative");
  if (!(decay > 0)) throw std::invalid_argument("lr decay must be positive");
  if (decay_every == 0) throw std::invalid_argument("decay_every must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw std::invalid_argument("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw std::invalid_argument("Adam eps must be positive");
}

double lr_at(std::size_t epoch, const TrainConfig& config) {
  return config.lr0 * std::pow(config.decay, static_cast<double>(epoch / config.decay_every));
}

template <typename S>
AdamState<S> adam_init(const ModelParams<S>& params) {
  AdamState<S> s;
  for (const auto& [name, t] : params.tensors()) {
    s.m.set(name, Tensor<S>(t.shape()));
    s.v.set(name, Tensor<S>(t.shape()));
  }
  return s;
}

template <typename S>
void adam_step(ModelParams<S>& params, const ModelParams<S>& grads, AdamState<S>& state, double lr,
               const TrainConfig& config) {
  if (state.m.tensors().empty()) state = adam_init(params);
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const S b1 = static_cast<S>(config.beta1), b2 = static_cast<S>(config.beta2);
  for (auto& [name, p] : params.tensors()) {
    const Tensor<S>& g = grads.at(name);
    if (g.shape() != p.shape()) {
      throw ShapeError("gradient of " + name + " has shape " + to_string(g.shape()) + ", expected " +
                       to_string(p.shape()));
    }
    Tensor<S>& m = state.m.at(name);
    Tensor<S>& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (S{1} - b1) * g[i];
      v[i] = b2 * v[i] + (S{1} - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / c1;
      const double vhat = static_cast<double>(v[i]) / c2;
      p[i] = static_cast<S>(static_cast<double>(p[i]) - lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

EvalReport evaluate_predictions(std::span<const std::size_t> labels, std::span<const std::size_t> preds,
                                std::size_t C) {
  if (labels.size() != preds.size()) throw std::invalid_argument("labels and predictions differ in length");
  EvalReport r;
  r.confusion.assign(C, std::vector<std::uint64_t>(C, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= C || preds[i] >= C) throw std::out_of_range("class index out of range");
    ++r.confusion[labels[i]][preds[i]];
    if (labels[i] == preds[i]) ++correct;
  }
  r.mca = labels.empty() ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
  double sum = 0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const std::uint64_t row = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::uint64_t{0});
    if (row == 0) continue;
    sum += 100.0 * static_cast<double>(r.confusion[c][c]) / static_cast<double>(row);
    ++present;
  }
  r.mpca = present ? sum / static_cast<double>(present) : 0.0;
  return r;
}

namespace {

template <typename S>
std::size_t argmax(const Tensor<S>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace

template <typename S>
std::vector<std::size_t> predict(const DinConfig& config, const ModelParams<S>& params, const Dataset& data) {
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  for (const auto& g : data.grids) preds.push_back(argmax(forward(config, params, g.template cast<S>())));
  return preds;
}

template <typename S>
EvalReport evaluate(const DinConfig& config, const ModelParams<S>& params, const Dataset& data) {
  const std::vector<std::size_t> preds = predict(config, params, data);
  return evaluate_predictions(data.labels, preds, config.C);
}

template <typename S>
S batch_gradient(const DinConfig& config, const ModelParams<S>& params, const Dataset& data,
                 std::span<const std::size_t> indices, ModelParams<S>& grads, std::vector<std::size_t>* preds) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  grads = ModelParams<S>();
  for (const auto& [name, t] : params.tensors()) grads.set(name, Tensor<S>(t.shape()));
  S loss_sum = 0;
  for (std::size_t idx : indices) {
    Tape<S> tape;
    ParamVars<S> vars = bind(tape, params, true);
    Var<S> grid = tape.constant(data.grids.at(idx).template cast<S>());
    Var<S> logits = forward(config, vars, grid);
    Var<S> loss = cross_entropy(logits, data.labels.at(idx));
    tape.backward(loss);
    loss_sum += loss.value()[0];
    if (preds) preds->push_back(argmax(logits.value()));
    for (auto& [name, g] : grads.tensors()) {
      const Tensor<S> gi = tape.grad(vars.at(name));
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gi[i];
    }
  }
  const S inv = S{1} / static_cast<S>(indices.size());
  for (auto& [name, g] : grads.tensors()) {
    for (S& v : g.values()) v *= inv;
  }
  return loss_sum * inv;
}

template <typename S>
TrainResult<S> train_from(const DinConfig& model, const TrainConfig& config, ModelParams<S> init,
                          const Dataset& train_set, const Dataset* test_set, const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  check_params(model, init);
  if (train_set.size() == 0) throw std::invalid_argument("training set is empty");
  TrainResult<S> result;
  result.params = std::move(init);
  AdamState<S> adam = adam_init(result.params);
  std::mt19937_64 rng(config.seed ^ 0xD1B54A32D192ED03ull);
  std::vector<std::size_t> order(train_set.size());
  ModelParams<S> grads;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(epoch, config);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    double loss_sum = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> preds;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, stop - start);
      preds.clear();
      const S loss = batch_gradient(model, result.params, train_set, batch, grads, &preds);
      if (!std::isfinite(static_cast<double>(loss))) throw DivergenceError(epoch, step);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (preds[i] == train_set.labels[batch[i]]) ++correct;
      }
      result.step_losses.push_back(static_cast<double>(loss));
      loss_sum += static_cast<double>(loss) * static_cast<double>(batch.size());
      adam_step(result.params, grads, adam, lr, config);
      ++step;
    }
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_mca = 100.0 * static_cast<double>(correct) / static_cast<double>(train_set.size());
    const bool last = epoch + 1 == config.epochs;
    if (test_set && (last || (config.eval_every && (epoch + 1) % config.eval_every == 0))) {
      result.final_eval = evaluate(model, result.params, *test_set);
      stats.evaluated = true;
      stats.test_mca = result.final_eval.mca;
      stats.test_mpca = result.final_eval.mpca;
    }
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  if (test_set && config.epochs == 0) result.final_eval = evaluate(model, result.params, *test_set);
  return result;
}

template <typename S>
TrainResult<S> train(const DinConfig& model, const TrainConfig& config, const Dataset& train_set,
                     const Dataset* test_set, const EpochCallback& on_epoch) {
  return train_from(model, config, init_params<S>(model, config.seed), train_set, test_set, on_epoch);
}

#define DIN_INSTANTIATE(S)                                                                                         \
  template AdamState<S> adam_init(const ModelParams<S>&);                                                          \
  template void adam_step(ModelParams<S>&, const ModelParams<S>&, AdamState<S>&, double, const TrainConfig&);      \
  template std::vector<std::size_t> predict(const DinConfig&, const ModelParams<S>&, const Dataset&);             \
  template EvalReport evaluate(const DinConfig&, const ModelParams<S>&, const Dataset&);                          \
  template S batch_gradient(const DinConfig&, const ModelParams<S>&, const Dataset&, std::span<const std::size_t>, \
                            ModelParams<S>&, std::vector<std::size_t>*);                                            \
  template TrainResult<S> train_from(const DinConfig&, const TrainConfig&, ModelParams<S>, const Dataset&,         \
                                     const Dataset*, const EpochCallback&);                                        \
  template TrainResult<S> train(const DinConfig&, const TrainConfig&, const Dataset&, const Dataset*,              \
                                const EpochCallback&);

DIN_INSTANTIATE(float)
DIN_INSTANTIATE(double)

}  // namespace din
