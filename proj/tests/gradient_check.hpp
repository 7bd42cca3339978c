#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fplcast/cnn.hpp"

namespace oracle {

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Gradient magnitudes below this are compared absolutely: a central
// difference cannot resolve them relative to cost() rounding.
inline constexpr double kGradientFloor = 1e-6;

// Central differences of cost() against backward(), one parameter at a time.
inline GradientCheck check_gradient(const fplcast::CnnModel& model,
                                    std::span<const fplcast::WindowedExample> examples,
                                    double lambda1, double lambda2,
                                    double step = 1e-5) {
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  const fplcast::CnnBatch batch{examples, idx};
  const auto analytic = fplcast::backward(model, batch, lambda1, lambda2).values();
  fplcast::CnnModel probe = model;
  auto& theta = probe.params.values();
  GradientCheck out;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    const double up = fplcast::cost(probe, batch, lambda1, lambda2);
    theta[i] = saved - step;
    const double down = fplcast::cost(probe, batch, lambda1, lambda2);
    theta[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double scale =
        std::max({std::fabs(analytic[i]), std::fabs(numeric), kGradientFloor});
    const double rel = std::fabs(analytic[i] - numeric) / scale;
    if (rel > out.max_relative_error) out = {rel, i, analytic[i], numeric};
  }
  return out;
}

// Small random regression problem for a given window shape.
inline std::vector<fplcast::WindowedExample> random_examples(std::mt19937_64& gen,
                                                             int n, int w, int f) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<fplcast::WindowedExample> out(n);
  for (auto& e : out) {
    e.X = fplcast::WindowMatrix(w, f);
    for (int r = 0; r < w; ++r) {
      for (int c = 0; c < f; ++c) e.X(r, c) = z(gen);
    }
    e.d = static_cast<int>(gen() % 7) - 3;
    e.y = static_cast<int>(gen() % 13) - 2;
  }
  return out;
}

// Gives every parameter, biases included, a nonzero random value so no
// gradient is trivially zero.
inline void randomize(fplcast::CnnModel& model, std::mt19937_64& gen, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& v : model.params.values()) v = u(gen);
}

}  // namespace oracle
