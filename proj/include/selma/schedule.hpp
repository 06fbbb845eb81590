#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "selma/types.hpp"

namespace selma {

// Linear-beta DDPM schedule. betas[i] belongs to step t = i+1; alphas_bar has
// T+1 entries with alphas_bar[0] = 1 so q_sample at t = 0 is the identity.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alphas_bar;
};

inline NoiseSchedule make_schedule(int T, double beta_min = 1e-4,
                                   double beta_max = 0.02) {
  if (T < 1) throw std::invalid_argument("schedule: T must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i)
    s.betas[static_cast<std::size_t>(i)] =
        T == 1 ? beta_min : beta_min + (beta_max - beta_min) * i / (T - 1);
  s.alphas_bar.resize(static_cast<std::size_t>(T) + 1);
  s.alphas_bar[0] = 1.0;
  for (int i = 0; i < T; ++i)
    s.alphas_bar[static_cast<std::size_t>(i) + 1] =
        s.alphas_bar[static_cast<std::size_t>(i)] *
        (1.0 - s.betas[static_cast<std::size_t>(i)]);
  return s;
}

template <typename S>
Vector<S> q_sample(const Vector<S>& x0, int t, const Vector<S>& eps,
                   const NoiseSchedule& sched) {
  if (t < 0 || t > sched.T) throw std::out_of_range("q_sample: t out of range");
  if (x0.size() != eps.size())
    throw std::invalid_argument("q_sample: x0/eps size mismatch");
  const double ab = sched.alphas_bar[static_cast<std::size_t>(t)];
  const S a = static_cast<S>(std::sqrt(ab));
  const S b = static_cast<S>(std::sqrt(1.0 - ab));
  return a * x0 + b * eps;
}

}  // namespace selma
