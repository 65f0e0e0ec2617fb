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

// Synthetic group-activity task on a T x N person grid.
//
// Each cell holds a one-hot action (V actions) plus the normalised (t, n)
// coordinate of the cell. One person performs a trigger action at frame t0;
// the responder at (t0 + dt, n_T + dn) performs one of four response actions
// r. The label is r + 4 * [dn < 0]. The trigger action names the slot offset
// dn (a pointing gesture), so the side is visible locally, while the response
// has to be fetched from the responder. Decoy persons in the responder's
// frame, on the pointed-to side and 2..6 slots from the trigger, perform the
// other response actions in turn. With three decoys every scene shows each
// response action exactly once in one frame, so only the slot the trigger
// points at tells which one answered.
//
// Action ids: 0 idle; 1..12 triggers pointing at dn = -6..-1, 1..6;
// 13..16 responses; 17..V-1 background.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "din/container.hpp"
#include "din/tensor.hpp"

namespace din {

inline constexpr std::size_t kIdleAction = 0;
inline constexpr std::size_t kFirstTriggerAction = 1;
inline constexpr std::size_t kMaxReach = 6;
// Frames between trigger and responder on the long-range task. A 3x3 field
// spreads evidence one frame either way and pooling takes a max over each
// frame, so at three frames apart no local layer can relate the two agents.
inline constexpr std::size_t kLongFrameGap = 3;
inline constexpr std::size_t kTriggerActions = 2 * kMaxReach;
inline constexpr std::size_t kFirstResponseAction = kFirstTriggerAction + kTriggerActions;
inline constexpr std::size_t kResponseActions = 4;
inline constexpr std::size_t kFirstBackgroundAction = kFirstResponseAction + kResponseActions;

// Trigger action pointing at slot offset dn (1 <= |dn| <= kMaxReach).
std::size_t trigger_action(long dn);
// Inverse of trigger_action.
long trigger_reach(std::size_t action);

enum class ReachKind {
  Short,  // responder within one frame and one slot
  Long,   // responder kLongFrameGap frames later and 2..6 slots away
};

struct SyntheticTaskSpec {
  std::size_t T = 10;
  std::size_t N = 12;
  std::size_t V = 19;
  std::size_t C = 8;
  // Gaussian noise added to the one-hot channels.
  double sigma = 0.0;
  ReachKind reach = ReachKind::Long;
  std::size_t decoys = 3;
  // false: every other cell is idle and there are no decoys.
  bool distractors = true;
  std::uint64_t seed = 0;

  std::size_t feature_width() const { return V + 2; }
  // Throws std::invalid_argument on impossible settings.
  void validate() const;
};

struct SampleInfo {
  std::size_t trigger_t = 0, trigger_n = 0;
  std::size_t responder_t = 0, responder_n = 0;
  std::size_t response = 0;  // 0..3
};

struct Dataset {
  std::vector<Tensor<double>> grids;  // [T x N x V+2] each
  std::vector<std::size_t> labels;
  std::vector<SampleInfo> info;

  std::size_t size() const { return labels.size(); }
};

// Labels are balanced: sample i gets class i mod C before a seeded shuffle.
Dataset generate(const SyntheticTaskSpec& spec, std::size_t count);

// Train and test sets drawn from independent streams of the same seed.
struct DatasetSplit {
  Dataset train, test;
};
DatasetSplit generate_split(const SyntheticTaskSpec& spec, std::size_t train_count, std::size_t test_count);

// Label rule on a noiseless grid: follow the trigger to the slot it points at
// and read the response there, within one frame of the trigger or
// kLongFrameGap frames after it. Throws
// std::invalid_argument when the trigger or its answer is missing.
std::size_t rule_label(const Tensor<double>& grid, std::size_t V);

Container to_container(const Dataset& data, Dtype dtype = Dtype::F64);
Dataset dataset_from_container(const Container& c);

void save_dataset(const std::filesystem::path& path, const Dataset& data, Dtype dtype = Dtype::F64);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace din
