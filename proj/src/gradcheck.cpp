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

#include "din/gradcheck.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace din {

FdResult finite_diff_check(const std::function<double(std::span<const double>)>& f, std::span<const double> point,
                           std::span<const double> analytic, double eps) {
  if (point.size() != analytic.size()) throw std::invalid_argument("analytic gradient size differs from point size");
  FdResult r;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f(x);
    x[i] = keep - eps;
    const double down = f(x);
    x[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    if (i == 0 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
  }
  r.checked = x.size();
  return r;
}

FdResult finite_diff_check(const TapeFunction& f, const Tensor<double>& point, double eps) {
  Tensor<double> analytic;
  {
    Tape<double> tape;
    Tensor<double> p = point;
    p.set_requires_grad(true);
    Var<double> x = tape.leaf(std::move(p));
    Var<double> y = f(tape, x);
    tape.backward(y);
    analytic = tape.grad(x);
  }
  auto eval = [&](std::span<const double> values) {
    Tape<double> tape;
    Var<double> x = tape.constant(Tensor<double>(point.shape(), std::vector<double>(values.begin(), values.end())));
    return f(tape, x).value()[0];
  };
  return finite_diff_check(eval, point.values(), analytic.values(), eps);
}

namespace {

struct Draw {
  ModelParams<double> params;
  Tensor<double> grid;
  std::size_t label = 0;
};

Draw random_draw(const DinConfig& config, std::mt19937_64& rng, std::size_t T, std::size_t N) {
  Draw d;
  d.params = init_params<double>(config, rng());
  for (auto& [name, t] : d.params.tensors()) {
    const bool bias = t.rank() == 1;
    const double a = bias ? 0.5 : 1.0 / std::sqrt(static_cast<double>(t.size() / t.dim(0)));
    std::uniform_real_distribution<double> u(-a, a);
    for (double& v : t.values()) v = u(rng);
  }
  const std::size_t width = config.D_in > 0 ? config.D_in : config.D;
  d.grid = Tensor<double>({T, N, width});
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : d.grid.values()) v = g(rng);
  d.label = std::uniform_int_distribution<std::size_t>(0, config.C - 1)(rng);
  return d;
}

}  // namespace

ModelAudit audit_model_gradients(const DinConfig& config, std::uint64_t seed, std::size_t T, std::size_t N,
                                 double eps, double min_margin) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelAudit audit;
  for (;;) {
    Draw d = random_draw(config, rng, T, N);
    Tape<double> tape;
    ParamVars<double> vars = bind(tape, d.params, true);
    Var<double> loss = cross_entropy(forward(config, vars, tape.constant(d.grid)), d.label);
    if (tape.smooth_margin() < min_margin) {
      if (++audit.resamples > 1000) throw std::runtime_error("gradient audit found no smooth evaluation point");
      continue;
    }
    audit.margin = tape.smooth_margin();
    tape.backward(loss);
    std::vector<double> analytic;
    for (const auto& [name, v] : vars) {
      const Tensor<double> g = tape.grad(v);
      analytic.insert(analytic.end(), g.values().begin(), g.values().end());
    }
    // The reference derivative is evaluated in extended precision: in double
    // the central difference carries about ulp(loss) / (2 eps) ~ 2e-11 of
    // rounding noise, which swamps the relative error of gradients near 1e-8.
    ModelParams<long double> probe = d.params.cast<long double>();
    const Tensor<long double> grid = d.grid.cast<long double>();
    std::vector<long double> x = probe.flatten();
    auto f = [&]() {
      probe.unflatten(x);
      Tape<long double> t;
      ParamVars<long double> pv = bind(t, probe, false);
      return cross_entropy(forward(config, pv, t.constant(grid)), d.label).value()[0];
    };
    FdResult& r = audit.fd;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const long double keep = x[i];
      x[i] = keep + eps;
      const long double up = f();
      x[i] = keep - eps;
      const long double down = f();
      x[i] = keep;
      const double numeric = static_cast<double>((up - down) / (2 * static_cast<long double>(eps)));
      const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
      if (i == 0 || err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst = i;
        r.analytic = analytic[i];
        r.numeric = numeric;
      }
    }
    r.checked = x.size();
    return audit;
  }
}

}  // namespace din
