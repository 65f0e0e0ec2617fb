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

#include "din/synth.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

namespace din {

namespace {

constexpr std::uint64_t kTestStream = 0x9E3779B97F4A7C15ull;

struct Cell {
  std::size_t t, n;
};

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::size_t dist(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

Dataset generate_stream(const SyntheticTaskSpec& spec, std::size_t count, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t T = spec.T, N = spec.N, V = spec.V, F = spec.feature_width();

  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = i % spec.C;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<std::size_t> background{kIdleAction};
  for (std::size_t a = kFirstBackgroundAction; a < V; ++a) background.push_back(a);

  Dataset data;
  data.grids.reserve(count);
  data.labels = labels;
  data.info.reserve(count);
  std::vector<std::size_t> actions(T * N);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = labels[i];
    const std::size_t response = label % kResponseActions;
    const bool left = label >= kResponseActions;

    long dt = static_cast<long>(kLongFrameGap);
    std::size_t reach = 1;
    if (spec.reach == ReachKind::Long) {
      reach = uniform(rng, 2, std::min(kMaxReach, N - 1));
    } else {
      dt = static_cast<long>(uniform(rng, 0, 2)) - 1;
    }
    // Leave room for the decoys on the pointing side when the grid allows.
    const std::size_t room = std::max(reach, std::min({spec.decoys + (reach == 1 ? 1 : 2), kMaxReach, N - 1}));
    const std::size_t t0 = dt < 0 ? uniform(rng, 1, T - 1) : uniform(rng, 0, T - 1 - static_cast<std::size_t>(dt));
    const std::size_t nT = left ? uniform(rng, room, N - 1) : uniform(rng, 0, N - 1 - room);
    SampleInfo info;
    info.trigger_t = t0;
    info.trigger_n = nT;
    info.responder_t = static_cast<std::size_t>(static_cast<long>(t0) + dt);
    info.responder_n = left ? nT - reach : nT + reach;
    info.response = response;

    for (std::size_t& a : actions) {
      a = spec.distractors ? background[uniform(rng, 0, background.size() - 1)] : kIdleAction;
    }
    actions[t0 * N + nT] = trigger_action(left ? -static_cast<long>(reach) : static_cast<long>(reach));
    actions[info.responder_t * N + info.responder_n] = kFirstResponseAction + response;

    if (spec.distractors) {
      // Decoys stand in the responder's frame on the side the trigger points
      // to, 2..6 slots out, so only the pointed-at slot tells them apart.
      // Leftovers go to the far side, then to frames away from both agents.
      std::vector<Cell> near, far, elsewhere;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t d = dist(n, nT);
        if (n == info.responder_n || d < 2) continue;
        ((n < nT) == left && d <= kMaxReach ? near : far).push_back({info.responder_t, n});
      }
      for (std::size_t t = 0; t < T; ++t) {
        if (dist(t, info.responder_t) < 2 || dist(t, t0) < 2) continue;
        for (std::size_t n = 0; n < N; ++n) elsewhere.push_back({t, n});
      }
      for (std::size_t d = 0; d < spec.decoys; ++d) {
        std::vector<Cell>& pool = !near.empty() ? near : !far.empty() ? far : elsewhere;
        if (pool.empty()) break;
        const std::size_t pick = uniform(rng, 0, pool.size() - 1);
        const Cell c = pool[pick];
        pool.erase(pool.begin() + static_cast<long>(pick));
        actions[c.t * N + c.n] = kFirstResponseAction + (response + uniform(rng, 1, kResponseActions - 1)) % kResponseActions;
      }
    }

    Tensor<double> grid({T, N, F});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t n = 0; n < N; ++n) {
        double* cell = grid.data() + (t * N + n) * F;
        cell[actions[t * N + n]] = 1.0;
        if (spec.sigma > 0) {
          for (std::size_t v = 0; v < V; ++v) cell[v] += spec.sigma * noise(rng);
        }
        cell[V] = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
        cell[V + 1] = N > 1 ? static_cast<double>(n) / static_cast<double>(N - 1) : 0.0;
      }
    }
    data.grids.push_back(std::move(grid));
    data.info.push_back(info);
  }
  return data;
}

}  // namespace

std::size_t trigger_action(long dn) {
  const long reach = static_cast<long>(kMaxReach);
  if (dn == 0 || dn < -reach || dn > reach) throw std::invalid_argument("trigger offset out of range: " + std::to_string(dn));
  return static_cast<std::size_t>(dn < 0 ? dn + reach : dn + reach - 1) + kFirstTriggerAction;
}

long trigger_reach(std::size_t action) {
  if (action < kFirstTriggerAction || action >= kFirstResponseAction) {
    throw std::invalid_argument("not a trigger action: " + std::to_string(action));
  }
  const long i = static_cast<long>(action - kFirstTriggerAction);
  const long reach = static_cast<long>(kMaxReach);
  return i < reach ? i - reach : i - reach + 1;
}

void SyntheticTaskSpec::validate() const {
  if (V < kFirstBackgroundAction) {
    throw std::invalid_argument("synthetic task needs V >= " + std::to_string(kFirstBackgroundAction) + ", got " +
                                std::to_string(V));
  }
  if (C != 2 * kResponseActions) throw std::invalid_argument("synthetic task has 8 classes, got C=" + std::to_string(C));
  if (T < 2) throw std::invalid_argument("synthetic task needs T >= 2");
  if (reach == ReachKind::Long && T <= kLongFrameGap) {
    throw std::invalid_argument("long-range task needs T > " + std::to_string(kLongFrameGap));
  }
  if (N < (reach == ReachKind::Long ? 3u : 2u)) throw std::invalid_argument("synthetic task grid too narrow: N=" + std::to_string(N));
  if (!(sigma >= 0)) throw std::invalid_argument("synthetic task noise must be non-negative");
}

Dataset generate(const SyntheticTaskSpec& spec, std::size_t count) { return generate_stream(spec, count, spec.seed); }

DatasetSplit generate_split(const SyntheticTaskSpec& spec, std::size_t train_count, std::size_t test_count) {
  return {generate_stream(spec, train_count, spec.seed), generate_stream(spec, test_count, spec.seed ^ kTestStream)};
}

std::size_t rule_label(const Tensor<double>& grid, std::size_t V) {
  if (grid.rank() != 3 || grid.shape()[2] != V + 2) {
    throw ShapeError("rule_label expects [T x N x " + std::to_string(V + 2) + "], got " + to_string(grid.shape()));
  }
  const std::size_t T = grid.shape()[0], N = grid.shape()[1];
  auto action = [&](std::size_t t, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t v = 1; v < V; ++v) {
      if (grid.at(t, n, v) > grid.at(t, n, best)) best = v;
    }
    return best;
  };
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t a = action(t, n);
      if (a < kFirstTriggerAction || a >= kFirstResponseAction) continue;
      const long dn = trigger_reach(a);
      const long target = static_cast<long>(n) + dn;
      if (target < 0 || target >= static_cast<long>(N)) break;
      for (long dt : {-1L, 0L, 1L, static_cast<long>(kLongFrameGap)}) {
        const long rt = static_cast<long>(t) + dt;
        if (rt < 0 || rt >= static_cast<long>(T)) continue;
        const std::size_t r = action(static_cast<std::size_t>(rt), static_cast<std::size_t>(target));
        if (r >= kFirstResponseAction && r < kFirstBackgroundAction) {
          return r - kFirstResponseAction + (dn < 0 ? kResponseActions : 0);
        }
      }
      throw std::invalid_argument("rule_label: nobody answers the trigger");
    }
  }
  throw std::invalid_argument("rule_label: grid has no trigger");
}

Container to_container(const Dataset& data, Dtype dtype) {
  if (data.grids.empty()) throw std::invalid_argument("cannot serialise an empty dataset");
  const Shape& gs = data.grids.front().shape();
  Shape shape{data.size()};
  shape.insert(shape.end(), gs.begin(), gs.end());
  std::vector<double> grids;
  grids.reserve(numel(shape));
  for (const auto& g : data.grids) {
    if (g.shape() != gs) throw ShapeError("dataset grids differ in shape");
    grids.insert(grids.end(), g.values().begin(), g.values().end());
  }
  std::vector<double> labels(data.labels.begin(), data.labels.end());
  std::vector<double> info;
  for (const SampleInfo& s : data.info) {
    for (std::size_t v : {s.trigger_t, s.trigger_n, s.responder_t, s.responder_n, s.response}) {
      info.push_back(static_cast<double>(v));
    }
  }
  Container c;
  c.meta["kind"] = "dataset";
  c.add("grids", Tensor<double>(shape, std::move(grids)), dtype);
  c.add("labels", Tensor<double>({data.size()}, std::move(labels)), Dtype::F64);
  if (!data.info.empty()) c.add("info", Tensor<double>({data.size(), 5}, std::move(info)), Dtype::F64);
  return c;
}

Dataset dataset_from_container(const Container& c) {
  const Tensor<double>& grids = c.entry("grids").tensor;
  const Tensor<double>& labels = c.entry("labels").tensor;
  if (grids.rank() != 4 || labels.rank() != 1 || labels.shape()[0] != grids.shape()[0]) {
    throw ShapeError("dataset container: grids " + to_string(grids.shape()) + " vs labels " +
                     to_string(labels.shape()));
  }
  const std::size_t count = grids.shape()[0];
  const Shape gs{grids.shape()[1], grids.shape()[2], grids.shape()[3]};
  const std::size_t stride = numel(gs);
  Dataset data;
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = grids.values().begin() + static_cast<long>(i * stride);
    data.grids.emplace_back(gs, std::vector<double>(first, first + static_cast<long>(stride)));
    data.labels.push_back(static_cast<std::size_t>(labels[i]));
  }
  if (c.contains("info")) {
    const Tensor<double>& info = c.entry("info").tensor;
    for (std::size_t i = 0; i < count; ++i) {
      auto f = [&](std::size_t j) { return static_cast<std::size_t>(info.at(i, j)); };
      data.info.push_back({f(0), f(1), f(2), f(3), f(4)});
    }
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data, Dtype dtype) {
  to_container(data, dtype).save(path);
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_container(Container::load(path)); }

}  // namespace din
