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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "din/complexity.hpp"
#include "din/gradcheck.hpp"
#include "din/graphs.hpp"
#include "din/kernels.hpp"
#include "din/train.hpp"
#include "oracles.hpp"

using namespace din;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// 1. Complexity table at T=10, N=12, D=1024, D_l=128, 3x3 field.
void criterion_complexity() {
  struct Row {
    const char* variant;
    double params_m, flops_g;
  };
  const Row rows[] = {{"edp", 3.146, 0.755}, {"dr", 1.140, 0.272}, {"dw", 1.222, 0.291},
                      {"dr+dw", 1.305, 0.311}, {"lite-dr+dw", 0.180, 0.042}};
  bool pass = true;
  std::string detail;
  for (const Row& row : rows) {
    DinConfig c;
    parse_variant(row.variant, c);
    c.D = 1024;
    c.D_l = 128;
    c.field = FieldSpec(3, 3);
    const ComplexityReport r = count_flops(c, 10, 12);
    const double pm = std::round(static_cast<double>(r.params) / 1e3) / 1e3;
    const double fg = std::round(static_cast<double>(r.flops) / 1e6) / 1e3;
    const bool params_ok = std::string(row.variant) == "edp" ? pm == row.params_m : rel(pm, row.params_m) <= 0.01;
    const bool flops_ok = rel(fg, row.flops_g) <= 0.01;
    pass = pass && params_ok && flops_ok;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s %.3fM/%.3fG%s", detail.empty() ? "" : "; ", row.variant, pm, fg,
                  params_ok && flops_ok ? "" : (std::string(" (want ") + fmt("%.3fM/", row.params_m) +
                                                fmt("%.3fG)", row.flops_g)).c_str());
    detail += buf;
  }
  verdict(1, pass, detail);
}

// 2. Executed dense MACs against the analytic count.
void criterion_instrumentation() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  const Tensor<double> grid = oracle::random_tensor(Shape{10, 12, 64}, rng);
  bool pass = true;
  std::string bad;
  for (const char* v : {"base", "edp", "arg", "dr", "dw", "dr+dw", "dr+dw*", "st", "lite-dr+dw"}) {
    DinConfig c;
    parse_variant(v, c);
    c.D = 64;
    c.D_l = 16;
    const bool ok = instrumented_count(c, grid).dense == count_flops(c, 10, 12).macs;
    if (!ok) bad += std::string(" ") + v;
    pass = pass && ok;
  }
  const double s = seconds_since(t0);
  verdict(2, pass && s < 1.0, "9 variants, dense tally == analytic" + (bad.empty() ? "" : ", mismatched:" + bad) +
                                  fmt(", %.2f s", s));
}

// 3. Full-model gradient audit, 8 variants x 20 seeds.
void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_at;
  std::size_t resamples = 0, checked = 0;
  for (const char* v : {"edp", "arg", "dr", "dw", "dr+dw", "dr+dw*", "st", "lite-dr+dw"}) {
    DinConfig c;
    parse_variant(v, c);
    c.D = 8;
    c.D_l = 4;
    c.C = 5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const ModelAudit a = audit_model_gradients(c, seed, 4, 3, 1e-5, 1e-3);
      resamples += a.resamples;
      checked += a.fd.checked;
      if (a.fd.max_rel_error > worst) {
        worst = a.fd.max_rel_error;
        worst_at = std::string(v) + " seed " + std::to_string(seed);
      }
    }
  }
  const double s = seconds_since(t0);
  verdict(3, worst < 1e-4 && s < 120,
          fmt("max rel error %.2e", worst) + " (" + worst_at + ") over " + std::to_string(checked) +
              " coordinates, " + std::to_string(resamples) + " kink resamples" + fmt(", %.1f s", s));
}

// 4. Library kernels against brute-force oracles on random instances.
void criterion_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> ext(1, 6), ch(1, 5), half(0, 1);
  double bilinear_err = 0, conv_err = 0, din_err = 0;
  const int trials = 150;
  for (int i = 0; i < trials; ++i) {
    const std::size_t T = ext(rng), N = ext(rng), D = ch(rng);
    const Tensor<double> data = oracle::random_tensor(Shape{T, N, D}, rng);
    FeatureGrid<double> grid(data);
    std::uniform_real_distribution<double> ct(-2.0, static_cast<double>(T) + 1), cn(-2.0, static_cast<double>(N) + 1);
    const double t = ct(rng), n = cn(rng);
    const Tensor<double> y = bilinear_sample(grid, clamp_coord(Coord<double>{t, n}, T, N));
    const std::vector<double> ref = oracle::bilinear(data, t, n);
    for (std::size_t d = 0; d < D; ++d) bilinear_err = std::max(bilinear_err, std::abs(y[d] - ref[d]));
  }
  for (int i = 0; i < trials; ++i) {
    const std::size_t T = ext(rng), N = ext(rng), Cin = ch(rng), Cout = ch(rng);
    const std::size_t kT = 2 * half(rng) + 1, kN = 2 * half(rng) + 1;
    const Tensor<double> g = oracle::random_tensor(Shape{T, N, Cin}, rng);
    const Tensor<double> k = oracle::random_tensor(Shape{Cout, kT, kN, Cin}, rng);
    const Tensor<double> b = oracle::random_tensor(Shape{Cout}, rng);
    Tape<double> tape;
    Var<double> y = grid_conv(tape.constant(g), tape.constant(k), tape.constant(b));
    conv_err = std::max(conv_err, oracle::max_abs_diff(y.value(), oracle::conv(g, k, b)));
  }
  for (int i = 0; i < trials; ++i) {
    const std::size_t T = ext(rng), N = ext(rng), D = ch(rng);
    const FieldSpec f(2 * half(rng) + 1, 2 * half(rng) + 1);
    const std::size_t K = f.size();
    const Tensor<double> g = oracle::random_tensor(Shape{T, N, D}, rng);
    const Tensor<double> rw = oracle::random_tensor(Shape{K, f.kT(), f.kN(), D}, rng);
    const Tensor<double> rb = oracle::random_tensor(Shape{K}, rng);
    const Tensor<double> ow = oracle::random_tensor(Shape{2 * K, f.kT(), f.kN(), D}, rng);
    const Tensor<double> ob = oracle::random_tensor(Shape{2 * K}, rng, -2, 2);
    const Tensor<double> w = oracle::random_tensor(Shape{D, D}, rng);
    const bool walked = i % 2 == 1;
    Tape<double> tape;
    LayerVars<double> lv{tape.constant(rw), tape.constant(rb), tape.constant(ow), tape.constant(ob), tape.constant(w)};
    Var<double> y = din_update(tape.constant(g), f, lv, walked ? RelationSource::Walked : RelationSource::Original);
    const Tensor<double> ref = oracle::din_update(g, static_cast<long>(f.kT()), static_cast<long>(f.kN()), rw, rb, ow,
                                                  ob, w, walked);
    din_err = std::max(din_err, oracle::max_abs_diff(y.value(), ref));
  }
  const double s = seconds_since(t0);
  verdict(4, bilinear_err <= 1e-12 && conv_err <= 1e-12 && din_err <= 1e-10 && s < 60,
          std::to_string(trials) + " instances each: bilinear " + fmt("%.1e", bilinear_err) + ", grid_conv " +
              fmt("%.1e", conv_err) + ", din_update " + fmt("%.1e", din_err) + fmt(", %.2f s", s));
}

// 5. w = 0 reduces every reasoning variant to the Base model bit for bit.
void criterion_zero_init() {
  std::mt19937_64 rng(5);
  bool pass = true;
  std::string bad;
  std::size_t compared = 0;
  for (const char* v : {"edp", "arg", "dr", "dw", "dr+dw", "dr+dw*", "st", "lite-dr+dw"}) {
    DinConfig c;
    parse_variant(v, c);
    c.D = 64;
    c.D_l = 16;
    c.D_in = SyntheticTaskSpec{}.feature_width();
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      ModelParams<double> p = init_params<double>(c, seed);
      for (auto& [name, t] : p.tensors()) {
        if (name[0] == 'l' && name != "lite.w" && name.ends_with(".w")) t.fill(0.0);
        // The second draw also randomises the relation and offset convolutions.
        if (seed == 1 && (name.find("rel_") != std::string::npos || name.find("off_") != std::string::npos)) {
          t = oracle::random_tensor(t.shape(), rng, -0.3, 0.3);
        }
      }
      DinConfig base = c;
      base.variant = Variant::Base;
      ModelParams<double> bp;
      for (const char* shared : {"embed.w", "embed.b", "lite.w", "lite.b", "cls.w", "cls.b"}) {
        if (p.contains(shared)) bp.set(shared, p.at(shared));
      }
      for (int i = 0; i < 3; ++i) {
        const Tensor<double> grid = oracle::random_tensor(Shape{10, 12, c.D_in}, rng);
        const bool same = forward(c, p, grid) == forward(base, bp, grid);
        ++compared;
        if (!same && bad.find(v) == std::string::npos) bad += std::string(" ") + v;
        pass = pass && same;
      }
    }
  }
  verdict(5, pass, std::to_string(compared) + " forward passes, logits bitwise equal to Base" +
                       (bad.empty() ? "" : ", differing:" + bad));
}

// 6. Long-range synthetic benchmark; the trained DR+DW models feed criterion 8.
struct BenchJob {
  std::string variant;
  std::uint64_t seed;
  double mca = 0;
  double seconds = 0;
  ModelParams<double> params;
  DinConfig model;
};

DinConfig bench_model(const std::string& variant) {
  DinConfig m;
  parse_variant(variant, m);
  m.D = 64;
  m.field = FieldSpec(3, 3);
  m.C = 8;
  m.D_in = SyntheticTaskSpec{}.feature_width();
  return m;
}

SyntheticTaskSpec bench_task(std::uint64_t seed) {
  SyntheticTaskSpec s;
  s.reach = ReachKind::Long;
  s.seed = seed;
  return s;
}

std::vector<BenchJob> run_benchmark() {
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<BenchJob> jobs;
  for (std::uint64_t seed : seeds) {
    for (const char* v : {"base", "dr", "dr+dw"}) jobs.push_back({v, seed});
  }
  std::vector<DatasetSplit> data;
  for (std::uint64_t seed : seeds) data.push_back(generate_split(bench_task(seed), 4000, 1000));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      BenchJob& j = jobs[i];
      const auto t0 = Clock::now();
      j.model = bench_model(j.variant);
      TrainConfig tc;
      tc.seed = j.seed;
      // From scratch the default 1e-4 barely moves in 30 epochs.
      tc.lr0 = 1e-3;
      tc.epochs = 30;
      tc.eval_every = 0;
      const DatasetSplit& d = data[j.seed];
      TrainResult<double> r = train<double>(j.model, tc, d.train, &d.test);
      j.mca = r.final_eval.mca;
      j.params = std::move(r.params);
      j.seconds = seconds_since(t0);
      std::printf("  bench %-6s seed %llu: test MCA %.2f%% (%.0f s)\n", j.variant.c_str(),
                  static_cast<unsigned long long>(j.seed), j.mca, j.seconds);
      std::fflush(stdout);
    }
  };
  const unsigned threads = std::clamp(std::thread::hardware_concurrency(), 1u, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return jobs;
}

void criterion_benchmark(const std::vector<BenchJob>& jobs) {
  auto find = [&](const std::string& v, std::uint64_t seed) -> const BenchJob& {
    for (const BenchJob& j : jobs) {
      if (j.variant == v && j.seed == seed) return j;
    }
    throw std::logic_error("missing job");
  };
  bool margin_ok = true;
  double dr_mean = 0, drdw_mean = 0, worst_margin = INFINITY, per_seed = 0;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const BenchJob &b = find("base", seed), &r = find("dr", seed), &w = find("dr+dw", seed);
    const double margin = w.mca - b.mca;
    worst_margin = std::min(worst_margin, margin);
    margin_ok = margin_ok && margin >= 10.0;
    dr_mean += r.mca / 3;
    drdw_mean += w.mca / 3;
    per_seed = std::max(per_seed, b.seconds + r.seconds + w.seconds);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%sseed %llu base/dr/dr+dw %.1f/%.1f/%.1f", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), b.mca, r.mca, w.mca);
    detail += buf;
  }
  detail += fmt("; worst dr+dw - base %.1f pp", worst_margin) + fmt(", mean dr %.2f", dr_mean) +
            fmt(" vs dr+dw %.2f", drdw_mean) + fmt(", slowest seed %.0f s", per_seed);
  verdict(6, margin_ok && drdw_mean > dr_mean, detail);
}

// 7. Metric identities on constructed prediction sets.
void criterion_metrics() {
  bool pass = true;
  std::vector<std::size_t> y(800);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 8;
  const EvalReport perfect = evaluate_predictions(y, y, 8);
  pass = pass && perfect.mca == 100.0 && perfect.mpca == 100.0;
  for (std::size_t a = 0; a < 8; ++a) {
    for (std::size_t b = 0; b < 8; ++b) pass = pass && perfect.confusion[a][b] == (a == b ? 100u : 0u);
  }
  std::vector<std::size_t> imb(100, 0);
  for (std::size_t i = 0; i < 10; ++i) imb[i * 10] = 1;
  const EvalReport majority = evaluate_predictions(imb, std::vector<std::size_t>(100, 0), 2);
  pass = pass && majority.mca == 90.0 && majority.mpca == 50.0;
  std::mt19937_64 rng(7);
  std::vector<std::size_t> p(y.size());
  for (std::size_t& v : p) v = std::uniform_int_distribution<std::size_t>(0, 7)(rng);
  const EvalReport random = evaluate_predictions(y, p, 8);
  std::uint64_t trace = 0, total = 0;
  double recall = 0;
  for (std::size_t c = 0; c < 8; ++c) {
    std::uint64_t row = 0;
    for (std::uint64_t v : random.confusion[c]) row += v;
    pass = pass && row == 100;
    trace += random.confusion[c][c];
    total += row;
    recall += 100.0 * static_cast<double>(random.confusion[c][c]) / static_cast<double>(row);
  }
  pass = pass && random.mca == 100.0 * static_cast<double>(trace) / static_cast<double>(total) &&
         random.mpca == recall / 8;
  verdict(7, pass, "perfect 100/100, majority 90/50, balanced-random MCA " + fmt("%.2f", random.mca) + " = trace/total");
}

// 8. Export mass, zero-init uniformity and the key-person census.
void criterion_export(const std::vector<BenchJob>& jobs) {
  const DinConfig m = bench_model("dr+dw");
  const DatasetSplit d = generate_split(bench_task(0), 1, 1000);
  double mass_err = 0;
  bool uniform = true;
  {
    const InteractionGraphExport g = export_interaction_graphs(init_params<double>(m, 0), m, d.test.grids[0]);
    for (const PersonEdge& e : g.edges) uniform = uniform && e.weight == 1.0 / 9.0;
    double mass = 0;
    for (double v : g.group.values()) {
      mass += v;
      uniform = uniform && std::abs(v - 1.0) < 1e-12;
    }
    mass_err = std::max(mass_err, std::abs(mass - 120.0));
  }
  const BenchJob* trained = nullptr;
  for (const BenchJob& j : jobs) {
    if (j.variant == "dr+dw" && j.seed == 0) trained = &j;
  }
  std::size_t hits = 0;
  const std::size_t samples = 200;
  for (std::size_t i = 0; i < samples; ++i) {
    const InteractionGraphExport g = export_interaction_graphs(trained->params, m, d.test.grids[i]);
    double mass = 0;
    for (double v : g.group.values()) mass += v;
    mass_err = std::max(mass_err, std::abs(mass - 120.0));
    const SampleInfo& info = d.test.info[i];
    if (g.key_person == info.trigger_n || g.key_person == info.responder_n) ++hits;
  }
  const double share = 100.0 * static_cast<double>(hits) / static_cast<double>(samples);
  verdict(8, mass_err < 1e-9 && uniform && share > 50.0,
          fmt("group mass within %.1e of T*N", mass_err) + (uniform ? ", zero-init uniform" : ", zero-init NOT uniform") +
              fmt(", key person on an agent in %.1f%%", share) + " of 200 held-out samples");
}

// 9. A train run replayed from its manifest reproduces its metrics bitwise.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("din_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << R"({"data": {"train_count": 200, "test_count": 100}, "model": {"variant": "dr+dw"},
                          "train": {"epochs": 3, "precision": "f64"}})";
  const std::string cli = DIN_CLI_PATH;
  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > /dev/null 2> " + (dir / "stderr.txt").string()).c_str());
  };
  const int a = run("train --config " + cfg.string() + " --seed 11 --out " + (dir / "a").string());
  const int b = run("train --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string());
  const int c = run("train --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "c").string());
  const std::string ma = slurp(dir / "a" / "metrics.csv");
  const bool same = a == 0 && b == 0 && c == 0 && !ma.empty() && ma == slurp(dir / "b" / "metrics.csv") &&
                    ma == slurp(dir / "c" / "metrics.csv") &&
                    slurp(dir / "a" / "checkpoint.dinc") == slurp(dir / "b" / "checkpoint.dinc");
  fs::remove_all(dir);
  verdict(9, same, "train replayed twice from its manifest: metrics.csv and checkpoint bitwise identical");
}

}  // namespace

int main() {
  kernels::set_isa(kernels::Isa::Scalar);
  const auto t0 = Clock::now();
  criterion_complexity();
  criterion_instrumentation();
  criterion_gradients();
  criterion_oracles();
  criterion_zero_init();
  const std::vector<BenchJob> jobs = run_benchmark();
  criterion_benchmark(jobs);
  criterion_metrics();
  criterion_export(jobs);
  criterion_determinism();
  std::printf("%d of 9 criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
