#include "core/diffusion.hpp"

namespace lfsr::diff {

NoiseSchedule cosine_schedule(int64_t steps) {
  if (steps < 1) fail_invalid("cosine_schedule: steps must be >= 1, got ", steps);
  constexpr double s = 0.008;
  constexpr double max_beta = 0.999;
  auto f = [steps](double t) {
    double x = ((t / double(steps)) + s) / (1.0 + s) * (M_PI / 2.0);
    double c = std::cos(x);
    return c * c;
  };
  NoiseSchedule sched;
  sched.steps = steps;
  sched.alpha.assign(size_t(steps) + 1, 0.0);
  sched.abar.assign(size_t(steps) + 1, 0.0);
  sched.sigma2.assign(size_t(steps) + 1, 0.0);
  sched.abar[0] = 1.0;
  double f_prev = f(0.0);
  for (int64_t t = 1; t <= steps; ++t) {
    double f_t = f(double(t));
    double beta = std::min(1.0 - f_t / f_prev, max_beta);
    sched.alpha[size_t(t)] = 1.0 - beta;
    sched.abar[size_t(t)] = sched.abar[size_t(t) - 1] * sched.alpha[size_t(t)];
    f_prev = f_t;
  }
  for (int64_t t = 1; t <= steps; ++t) {
    sched.sigma2[size_t(t)] = (1.0 - sched.abar[size_t(t) - 1]) * (1.0 - sched.alpha[size_t(t)]) /
                              (1.0 - sched.abar[size_t(t)]);
  }
  return sched;
}

}  // namespace lfsr::diff
