#pragma once

#include "core/tensor.hpp"

namespace lfsr::ad {

/// Bias-corrected Adam. One state per trained parameter set; `step` counts
/// completed updates. Moment buffers are shape-aligned with their parameters.
template <typename T>
struct AdamState {
  int64_t step = 0;
  T lr = T(2e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  std::vector<std::vector<T>> m;  // first moments, one per parameter
  std::vector<std::vector<T>> v;  // second moments

  static AdamState make(const std::vector<Tensor<T>>& params, T lr) {
    AdamState s;
    s.lr = lr;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
      s.m.emplace_back(p.numel(), T(0));
      s.v.emplace_back(p.numel(), T(0));
    }
    return s;
  }
};

/// Applies one Adam update in place; parameter order must match the order the
/// state was built with. Deterministic given (params, grads, state). A missing
/// gradient is an error naming the parameter index.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.m.size())
    fail_invalid("adam_step: parameter count ", params.size(), " does not match state (", state.m.size(), ")");
  state.step += 1;
  T bc1 = T(1) - std::pow(state.beta1, T(state.step));
  T bc2 = T(1) - std::pow(state.beta2, T(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (!p.has_grad())
      fail_invalid("adam_step: parameter ", pi, " has no gradient");
    if (int64_t(state.m[pi].size()) != p.numel())
      fail_invalid("adam_step: moment shape mismatch for parameter ", pi);
    const auto& g = p.grad();
    auto& val = p.mutable_values();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
      T mhat = m[i] / bc1;
      T vhat = v[i] / bc2;
      val[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace lfsr::ad
