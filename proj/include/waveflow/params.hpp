#pragma once

// Named parameter registry shared by all learnable modules; the unit of
// checkpointing and optimization.

#include "waveflow/rng.hpp"
#include "waveflow/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace waveflow {

template <class S>
class ParamRegistry {
 public:
  Var<S> add(const std::string& name, Shape shape, std::vector<S> data) {
    if (by_name_.count(name)) throw std::runtime_error("duplicate parameter name: " + name);
    auto v = make_var<S>(std::move(shape), std::move(data), true);
    by_name_[name] = v;
    ordered_.push_back({name, v});
    return v;
  }

  Var<S> zeros(const std::string& name, Shape shape) {
    std::vector<S> d(numel(shape), S(0));
    return add(name, std::move(shape), std::move(d));
  }

  Var<S> constant(const std::string& name, Shape shape, S value) {
    std::vector<S> d(numel(shape), value);
    return add(name, std::move(shape), std::move(d));
  }

  // Uniform(-limit, limit); Glorot-style when limit = sqrt(6/(fan_in+fan_out)).
  Var<S> uniform(const std::string& name, Shape shape, double limit, Rng& rng) {
    std::vector<S> d(numel(shape));
    for (auto& x : d) x = static_cast<S>(rng.uniform(-limit, limit));
    return add(name, std::move(shape), std::move(d));
  }

  Var<S> glorot(const std::string& name, Shape shape, int fan_in, int fan_out, Rng& rng) {
    return uniform(name, std::move(shape), std::sqrt(6.0 / (fan_in + fan_out)), rng);
  }

  // Random orthogonal square matrix via QR; |det| = 1.
  Var<S> orthogonal(const std::string& name, int n, Rng& rng) {
    detail::EMat<S> a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = static_cast<S>(rng.normal());
    Eigen::HouseholderQR<detail::EMat<S>> qr(a);
    detail::EMat<S> q = qr.householderQ() * detail::EMat<S>::Identity(n, n);
    detail::EMat<S> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
      if (r(j, j) < 0) q.col(j) = -q.col(j);
    std::vector<S> d(static_cast<size_t>(n) * n);
    detail::EMap<S>(d.data(), n, n) = q;
    return add(name, {n, n}, std::move(d));
  }

  Var<S> get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  const std::vector<std::pair<std::string, Var<S>>>& ordered() const { return ordered_; }
  size_t count() const { return ordered_.size(); }

  long total_elems() const {
    long n = 0;
    for (const auto& [_, v] : ordered_) n += v->size();
    return n;
  }

  void zero_grads() {
    for (auto& [_, v] : ordered_)
      if (!v->grad.empty()) v->zero_grad();
  }

 private:
  std::map<std::string, Var<S>> by_name_;
  std::vector<std::pair<std::string, Var<S>>> ordered_;
};

}  // namespace waveflow
