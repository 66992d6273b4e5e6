#pragma once

#include <optional>
#include <string>
#include <unordered_map>

#include "core/tensor.hpp"

namespace lfsr::nn {

/// Ordered collection of named parameter tensors. Insertion order is the
/// optimizer order, so identical construction order gives bit-identical runs.
template <typename T>
class ParamStore {
public:
  ad::Tensor<T>& add(const std::string& name, ad::Tensor<T> t) {
    if (index_.count(name)) fail_invalid("param store: duplicate name '", name, "'");
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  ad::Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail_invalid("param store: unknown name '", name, "'");
    return tensors_[it->second];
  }
  const ad::Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail_invalid("param store: unknown name '", name, "'");
    return tensors_[it->second];
  }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<ad::Tensor<T>>& tensors() { return tensors_; }
  const std::vector<ad::Tensor<T>>& tensors() const { return tensors_; }
  size_t size() const { return tensors_.size(); }
  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }
  void set_requires_grad(bool on) {
    for (auto& t : tensors_) t.node()->requires_grad = on;
  }

private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor<T>> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

/// Kaiming-uniform fan-in bound: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <typename T>
std::vector<T> kaiming_uniform(int64_t n, int64_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / double(fan_in));
  std::vector<T> v(size_t(n));
  rng.fill_uniform(v, -bound, bound);
  return v;
}

template <typename T>
struct Conv2dLayer {
  ad::ConvSpec spec;
  ad::Tensor<T> weight, bias;
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::conv2d(x, weight, bias, spec); }
};

template <typename T>
Conv2dLayer<T> make_conv(ParamStore<T>& ps, const std::string& name, ad::ConvSpec spec, Rng& rng,
                         bool zero_init = false) {
  int64_t wn = spec.out_channels * spec.in_channels * spec.kernel_h * spec.kernel_w;
  int64_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
  std::vector<T> w = zero_init ? std::vector<T>(size_t(wn), T(0)) : kaiming_uniform<T>(wn, fan_in, rng);
  Conv2dLayer<T> layer;
  layer.spec = spec;
  layer.weight = ps.add(name + ".weight",
                        ad::Tensor<T>::param({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w},
                                             std::move(w)));
  layer.bias = ps.add(name + ".bias",
                      ad::Tensor<T>::param({spec.out_channels}, std::vector<T>(size_t(spec.out_channels), T(0))));
  return layer;
}

template <typename T>
struct LinearLayer {
  ad::Tensor<T> weight, bias;  // [M,K], [M]
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

template <typename T>
LinearLayer<T> make_linear(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out, Rng& rng) {
  LinearLayer<T> layer;
  layer.weight = ps.add(name + ".weight", ad::Tensor<T>::param({out, in}, kaiming_uniform<T>(out * in, in, rng)));
  layer.bias = ps.add(name + ".bias", ad::Tensor<T>::param({out}, std::vector<T>(size_t(out), T(0))));
  return layer;
}

inline int64_t norm_groups(int64_t channels) { return std::min<int64_t>(8, channels); }

template <typename T>
struct GroupNormLayer {
  int64_t groups = 1;
  ad::Tensor<T> gamma, beta;
  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const { return ad::group_norm(x, groups, gamma, beta); }
};

template <typename T>
GroupNormLayer<T> make_group_norm(ParamStore<T>& ps, const std::string& name, int64_t channels) {
  GroupNormLayer<T> layer;
  layer.groups = norm_groups(channels);
  layer.gamma = ps.add(name + ".scale", ad::Tensor<T>::param({channels}, std::vector<T>(size_t(channels), T(1))));
  layer.beta = ps.add(name + ".shift", ad::Tensor<T>::param({channels}, std::vector<T>(size_t(channels), T(0))));
  return layer;
}

}  // namespace lfsr::nn
