#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "textres/core/checkpoint.hpp"
#include "textres/core/tensor.hpp"

namespace textres::nn {

/// A named trainable tensor. `group` selects the optimizer learning rate.
struct Parameter {
  std::string name;
  std::string group;
  Tensor value;
};

/// Ordered parameter collection. Indices are stable for the life of the set.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor value, std::string group = "main");

  std::size_t size() const noexcept { return items_.size(); }
  Parameter& operator[](std::size_t i) { return items_[i]; }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }
  std::optional<std::size_t> index_of(const std::string& name) const;
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const;
  /// Concatenation of all values in index order.
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

  Checkpoint to_checkpoint(const std::string& module_id, const std::string& config_digest) const;
  /// Every parameter must be present with a matching element count.
  void load(const Checkpoint& ckpt);

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with per-group learning rates; groups absent from the rate map are frozen.
class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig config = {});

  void step(ParamSet& params, const std::vector<Tensor>& grads, const std::map<std::string, double>& group_lr);

  long steps_taken() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace textres::nn
