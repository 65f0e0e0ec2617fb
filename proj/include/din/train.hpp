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

// Adam training loop, step learning-rate schedule and evaluation metrics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "din/reasoning.hpp"
#include "din/synth.hpp"

namespace din {

enum class Precision { F32, F64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  double lr0 = 1e-4;
  // lr = lr0 * decay^floor(epoch / decay_every)
  double decay = 1.0 / 3.0;
  std::size_t decay_every = 10;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  Precision precision = Precision::F64;
  // Evaluate the test set every this many epochs (and after the last one);
  // 0 evaluates only at the end.
  std::size_t eval_every = 1;

  void validate() const;
};

double lr_at(std::size_t epoch, const TrainConfig& config);

template <typename S>
struct AdamState {
  ModelParams<S> m;
  ModelParams<S> v;
  std::size_t step = 0;
};

template <typename S>
AdamState<S> adam_init(const ModelParams<S>& params);

// One bias-corrected Adam update; increments state.step first.
template <typename S>
void adam_step(ModelParams<S>& params, const ModelParams<S>& grads, AdamState<S>& state, double lr,
               const TrainConfig& config);

struct EvalReport {
  double mca = 0;   // percent of samples classified correctly
  double mpca = 0;  // mean over classes present of per-class accuracy, percent
  // confusion[true][pred]
  std::vector<std::vector<std::uint64_t>> confusion;
};

EvalReport evaluate_predictions(std::span<const std::size_t> labels, std::span<const std::size_t> preds,
                                std::size_t C);

template <typename S>
std::vector<std::size_t> predict(const DinConfig& config, const ModelParams<S>& params, const Dataset& data);

template <typename S>
EvalReport evaluate(const DinConfig& config, const ModelParams<S>& params, const Dataset& data);

// Mean cross-entropy of a batch and the mean gradient of every parameter.
template <typename S>
S batch_gradient(const DinConfig& config, const ModelParams<S>& params, const Dataset& data,
                 std::span<const std::size_t> indices, ModelParams<S>& grads, std::vector<std::size_t>* preds = nullptr);

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_mca = 0;  // percent, on the fly with the weights before each step
  bool evaluated = false;
  double test_mca = 0;
  double test_mpca = 0;
};

// Thrown when the loss stops being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t step)
      : std::runtime_error("loss is not finite at epoch " + std::to_string(epoch) + ", step " + std::to_string(step)),
        epoch_(epoch),
        step_(step) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t epoch_, step_;
};

template <typename S>
struct TrainResult {
  ModelParams<S> params;
  std::vector<EpochStats> curve;
  std::vector<double> step_losses;
  EvalReport final_eval;  // on the test set when one was given
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Parameters start from init_params(model, config.seed); batches follow a
// seeded per-epoch shuffle, so equal seeds reproduce bit-identical runs.
template <typename S>
TrainResult<S> train(const DinConfig& model, const TrainConfig& config, const Dataset& train_set,
                     const Dataset* test_set = nullptr, const EpochCallback& on_epoch = {});

// Same, starting from the given parameters.
template <typename S>
TrainResult<S> train_from(const DinConfig& model, const TrainConfig& config, ModelParams<S> init,
                          const Dataset& train_set, const Dataset* test_set = nullptr,
                          const EpochCallback& on_epoch = {});

}  // namespace din
