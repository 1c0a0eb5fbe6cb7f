#include "textres/nn/params.hpp"

#include <cmath>

#include "textres/core/error.hpp"

namespace textres::nn {

std::size_t ParamSet::add(std::string name, Tensor value, std::string group) {
  require(!index_.contains(name), ErrorKind::InternalError, "duplicate parameter " + name);
  const std::size_t idx = items_.size();
  index_.emplace(name, idx);
  items_.push_back(Parameter{std::move(name), std::move(group), std::move(value)});
  return idx;
}

std::optional<std::size_t> ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Parameter& ParamSet::at(const std::string& name) const {
  auto idx = index_of(name);
  require(idx.has_value(), ErrorKind::InvalidInput, "no parameter named " + name);
  return items_[*idx];
}

Parameter& ParamSet::at(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParamSet&>(*this).at(name));
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for (const auto& p : items_) flat.insert(flat.end(), p.value.values().begin(), p.value.values().end());
  return flat;
}

void ParamSet::unflatten(const std::vector<double>& flat) {
  require(flat.size() == scalar_count(), ErrorKind::InvalidInput, "unflatten: wrong length");
  std::size_t off = 0;
  for (auto& p : items_)
    for (double& v : p.value.values()) v = flat[off++];
}

Checkpoint ParamSet::to_checkpoint(const std::string& module_id, const std::string& config_digest) const {
  Checkpoint ckpt;
  ckpt.module_id = module_id;
  ckpt.config_digest = config_digest;
  for (const auto& p : items_) {
    std::vector<float> blob(p.value.size());
    for (std::size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<float>(p.value[i]);
    ckpt.blobs.emplace_back(p.name, std::move(blob));
  }
  return ckpt;
}

void ParamSet::load(const Checkpoint& ckpt) {
  for (auto& p : items_) {
    const auto* blob = ckpt.find(p.name);
    require(blob != nullptr, ErrorKind::ModuleMismatch, "checkpoint lacks parameter " + p.name);
    require(blob->size() == p.value.size(), ErrorKind::ModuleMismatch,
            "parameter " + p.name + " has " + std::to_string(blob->size()) + " values, expected " +
                std::to_string(p.value.size()));
    for (std::size_t i = 0; i < blob->size(); ++i) p.value[i] = (*blob)[i];
  }
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name != other.items_[i].name || !(items_[i].value == other.items_[i].value)) return false;
  }
  return true;
}

Adam::Adam(const ParamSet& params, AdamConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads, const std::map<std::string, double>& group_lr) {
  require(grads.size() == params.size() && m_.size() == params.size(), ErrorKind::InternalError,
          "Adam: gradient count does not match parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto lr_it = group_lr.find(params[i].group);
    if (lr_it == group_lr.end()) continue;
    const double lr = lr_it->second;
    Tensor& value = params[i].value;
    const Tensor& g = grads[i];
    require(g.size() == value.size(), ErrorKind::InternalError, "Adam: gradient shape for " + params[i].name);
    for (std::size_t k = 0; k < value.size(); ++k) {
      m_[i][k] = config_.beta1 * m_[i][k] + (1.0 - config_.beta1) * g[k];
      v_[i][k] = config_.beta2 * v_[i][k] + (1.0 - config_.beta2) * g[k] * g[k];
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace textres::nn
