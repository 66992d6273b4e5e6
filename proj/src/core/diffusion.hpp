#pragma once

#include "core/tensor.hpp"

namespace lfsr::diff {

/// Per-step and cumulative noise-schedule coefficients.
///   alpha[t] in (0,1) for t = 1..T
///   abar[t]  = prod_{j<=t} alpha[j], with abar[0] := 1
///   sigma2[t] = (1 - abar[t-1]) * (1 - alpha[t]) / (1 - abar[t])
/// abar is strictly decreasing and sigma2[1] == 0.
struct NoiseSchedule {
  int64_t steps = 0;
  std::vector<double> alpha;   // index 1..steps
  std::vector<double> abar;    // index 0..steps
  std::vector<double> sigma2;  // index 1..steps

  void check(int64_t t) const {
    if (t < 1 || t > steps) fail_invalid("noise schedule: timestep ", t, " out of range [1,", steps, "]");
  }
  double sigma(int64_t t) const { return std::sqrt(sigma2[size_t(t)]); }
};

/// Cosine schedule: abar(t) tracks f(t)/f(0) with
/// f(t) = cos^2(((t/T + s)/(1+s)) * pi/2), s = 0.008, and the per-step beta
/// clipped to <= 0.999 before the cumulative product is rebuilt.
NoiseSchedule cosine_schedule(int64_t steps);

struct DiffusionConfig {
  int64_t timesteps = 100;
  std::string schedule = "cosine";  // only cosine is defined
  bool residual_mode = true;
  bool stochastic_sampling = true;
  int sr_scale = 4;

  NoiseSchedule make_schedule() const {
    if (timesteps < 1) fail_invalid("diffusion config: timesteps must be >= 1");
    if (schedule != "cosine") fail_invalid("diffusion config: unknown schedule '", schedule, "'");
    return cosine_schedule(timesteps);
  }
};

// The process ops below are pure value computations (no tape is recorded);
// training losses differentiate through the model only.

/// Marginal draw: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
template <typename T>
ad::Tensor<T> q_sample(const ad::Tensor<T>& x0, int64_t t, const ad::Tensor<T>& eps,
                       const NoiseSchedule& sched) {
  sched.check(t);
  if (x0.shape() != eps.shape())
    fail_invalid("q_sample: eps shape ", ad::shape_str(eps.shape()), " != x0 shape ",
                 ad::shape_str(x0.shape()));
  T c0 = T(std::sqrt(sched.abar[size_t(t)]));
  T c1 = T(std::sqrt(1.0 - sched.abar[size_t(t)]));
  std::vector<T> v(x0.numel());
  const auto &xv = x0.values(), &ev = eps.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = c0 * xv[i] + c1 * ev[i];
  return ad::Tensor<T>::from(x0.shape(), std::move(v));
}

/// Single forward step: sqrt(alpha_t) * x_{t-1} + sqrt(1 - alpha_t) * eps.
template <typename T>
ad::Tensor<T> q_step(const ad::Tensor<T>& x_prev, int64_t t, const ad::Tensor<T>& eps,
                     const NoiseSchedule& sched) {
  sched.check(t);
  if (x_prev.shape() != eps.shape())
    fail_invalid("q_step: eps shape ", ad::shape_str(eps.shape()), " != input shape ",
                 ad::shape_str(x_prev.shape()));
  T c0 = T(std::sqrt(sched.alpha[size_t(t)]));
  T c1 = T(std::sqrt(1.0 - sched.alpha[size_t(t)]));
  std::vector<T> v(x_prev.numel());
  const auto &xv = x_prev.values(), &ev = eps.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = c0 * xv[i] + c1 * ev[i];
  return ad::Tensor<T>::from(x_prev.shape(), std::move(v));
}

/// Posterior q(x_{t-1} | x_t, x_0) parameters: mean and (scalar) variance.
template <typename T>
std::pair<ad::Tensor<T>, double> posterior_params(const ad::Tensor<T>& x0, const ad::Tensor<T>& xt,
                                                  int64_t t, const NoiseSchedule& sched) {
  sched.check(t);
  if (x0.shape() != xt.shape()) fail_invalid("posterior_params: shape mismatch");
  double a = sched.alpha[size_t(t)];
  double ab = sched.abar[size_t(t)];
  double ab_prev = sched.abar[size_t(t) - 1];
  double c0 = std::sqrt(ab_prev) * (1.0 - a) / (1.0 - ab);
  double c1 = std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab);
  std::vector<T> v(x0.numel());
  const auto &x0v = x0.values(), &xtv = xt.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = T(c0) * x0v[i] + T(c1) * xtv[i];
  return {ad::Tensor<T>::from(x0.shape(), std::move(v)), sched.sigma2[size_t(t)]};
}

/// Inverts the marginal reparameterization:
/// (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t).
template <typename T>
ad::Tensor<T> predict_x0_from_eps(const ad::Tensor<T>& xt, int64_t t, const ad::Tensor<T>& eps_pred,
                                  const NoiseSchedule& sched) {
  sched.check(t);
  if (xt.shape() != eps_pred.shape()) fail_invalid("predict_x0_from_eps: shape mismatch");
  T inv = T(1.0 / std::sqrt(sched.abar[size_t(t)]));
  T c = T(std::sqrt(1.0 - sched.abar[size_t(t)]));
  std::vector<T> v(xt.numel());
  const auto &xv = xt.values(), &ev = eps_pred.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = (xv[i] - c * ev[i]) * inv;
  return ad::Tensor<T>::from(xt.shape(), std::move(v));
}

/// One reverse step:
/// (1/sqrt(alpha_t)) * (x_t - ((1-alpha_t)/sqrt(1-abar_t)) * eps_pred)
///   + sigma_t * noise
/// The noise term is dropped when stochastic is false or t == 1 (sigma_1=0).
/// The deterministic part equals the Eq.-3 posterior mean evaluated at the
/// eps-implied x0 (algebraic identity, covered by tests).
template <typename T>
ad::Tensor<T> p_step(const ad::Tensor<T>& xt, int64_t t, const ad::Tensor<T>& eps_pred,
                     const ad::Tensor<T>& noise, bool stochastic, const NoiseSchedule& sched) {
  sched.check(t);
  if (xt.shape() != eps_pred.shape()) fail_invalid("p_step: eps_pred shape mismatch");
  double a = sched.alpha[size_t(t)];
  double ab = sched.abar[size_t(t)];
  T inv_sqrt_a = T(1.0 / std::sqrt(a));
  T ecoef = T((1.0 - a) / std::sqrt(1.0 - ab));
  bool add_noise = stochastic && t > 1;
  if (add_noise && xt.shape() != noise.shape()) fail_invalid("p_step: noise shape mismatch");
  T s = T(sched.sigma(t));
  std::vector<T> v(xt.numel());
  const auto &xv = xt.values(), &ev = eps_pred.values();
  for (size_t i = 0; i < v.size(); ++i) {
    v[i] = inv_sqrt_a * (xv[i] - ecoef * ev[i]);
    if (add_noise) v[i] += s * noise.values()[i];
  }
  return ad::Tensor<T>::from(xt.shape(), std::move(v));
}

/// Denoiser interface: (x_t, per-sample timesteps, conditioning) -> eps_hat.
template <typename T>
using DenoiserFn =
    std::function<ad::Tensor<T>(const ad::Tensor<T>&, const std::vector<int64_t>&, const ad::Tensor<T>&)>;

/// eps-prediction L1 objective over a [B,...] batch: per sample draws
/// t ~ Uniform{1..T} and eps ~ N(0,I), forms x_t from `target` and returns
/// mean |eps - model(x_t, t, cond)|. With `target` = HR - up(LR) this is the
/// residual objective; with `target` = HR it is the direct one.
template <typename T>
ad::Tensor<T> eps_prediction_loss(const DenoiserFn<T>& model, const ad::Tensor<T>& target,
                                  const ad::Tensor<T>& cond, Rng& rng, const NoiseSchedule& sched,
                                  std::vector<int64_t>* out_ts = nullptr) {
  if (target.rank() < 1) fail_invalid("eps_prediction_loss: target must be batched");
  int64_t b = target.dim(0);
  int64_t per = target.numel() / b;
  std::vector<int64_t> ts(size_t(b));
  std::vector<T> eps(size_t(target.numel()));
  for (auto& e : eps) e = T(rng.normal());
  std::vector<T> xt(size_t(target.numel()));
  const auto& tv = target.values();
  for (int64_t bi = 0; bi < b; ++bi) {
    int64_t t = 1 + int64_t(rng.uniform_int(uint64_t(sched.steps)));
    ts[size_t(bi)] = t;
    T c0 = T(std::sqrt(sched.abar[size_t(t)]));
    T c1 = T(std::sqrt(1.0 - sched.abar[size_t(t)]));
    for (int64_t i = 0; i < per; ++i) {
      size_t idx = size_t(bi * per + i);
      xt[idx] = c0 * tv[idx] + c1 * eps[idx];
    }
  }
  if (out_ts) *out_ts = ts;
  auto eps_t = ad::Tensor<T>::from(target.shape(), std::move(eps));
  auto xt_t = ad::Tensor<T>::from(target.shape(), std::move(xt));
  return ad::l1_loss(eps_t, model(xt_t, ts, cond));
}

template <typename T>
ad::Tensor<T> loss_residual(const DenoiserFn<T>& model, const ad::Tensor<T>& x0_res,
                            const ad::Tensor<T>& cond, Rng& rng, const NoiseSchedule& sched) {
  return eps_prediction_loss(model, x0_res, cond, rng, sched);
}

template <typename T>
ad::Tensor<T> loss_direct(const DenoiserFn<T>& model, const ad::Tensor<T>& x0,
                          const ad::Tensor<T>& cond, Rng& rng, const NoiseSchedule& sched) {
  return eps_prediction_loss(model, x0, cond, rng, sched);
}

/// Full reverse chain from a given initial state (tests drive this directly).
template <typename T>
ad::Tensor<T> sample_from(const DenoiserFn<T>& model, ad::Tensor<T> x, const ad::Tensor<T>& cond,
                          const NoiseSchedule& sched, bool stochastic, Rng& rng) {
  ad::NoGradGuard ng;
  int64_t b = x.dim(0);
  for (int64_t t = sched.steps; t >= 1; --t) {
    std::vector<int64_t> ts(size_t(b), t);
    auto eps_pred = model(x, ts, cond);
    ad::Tensor<T> noise;
    if (stochastic && t > 1) {
      std::vector<T> nv(size_t(x.numel()));
      for (auto& n : nv) n = T(rng.normal());
      noise = ad::Tensor<T>::from(x.shape(), std::move(nv));
    } else {
      noise = ad::Tensor<T>::zeros(x.shape());
    }
    x = p_step(x, t, eps_pred, noise, stochastic, sched);
  }
  return x;
}

/// Reverse chain per the inference procedure: stochastic mode starts from
/// N(0, I); deterministic mode starts from zeros and suppresses all noise,
/// giving a fully reproducible (and with an untrained zero model, exactly
/// zero) output.
template <typename T>
ad::Tensor<T> sample(const DenoiserFn<T>& model, const ad::Tensor<T>& cond, const ad::Shape& shape,
                     const NoiseSchedule& sched, bool stochastic, Rng& rng) {
  ad::Tensor<T> x;
  if (stochastic) {
    std::vector<T> v(size_t(ad::shape_numel(shape)));
    for (auto& e : v) e = T(rng.normal());
    x = ad::Tensor<T>::from(shape, std::move(v));
  } else {
    x = ad::Tensor<T>::zeros(shape);
  }
  return sample_from(model, std::move(x), cond, sched, stochastic, rng);
}

/// Arithmetic mean of >= 1 equally shaped samples.
template <typename T>
ad::Tensor<T> sample_average(const std::vector<ad::Tensor<T>>& samples) {
  if (samples.empty()) fail_invalid("sample_average: empty sample list");
  const auto& s0 = samples[0];
  std::vector<T> acc(size_t(s0.numel()), T(0));
  for (const auto& s : samples) {
    if (s.shape() != s0.shape()) fail_invalid("sample_average: shape mismatch");
    const auto& v = s.values();
    for (size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  T inv = T(1) / T(samples.size());
  for (auto& v : acc) v *= inv;
  return ad::Tensor<T>::from(s0.shape(), std::move(acc));
}

}  // namespace lfsr::diff
