#pragma once

#include <map>
#include <string>
#include <vector>

#include "textres/backbone/backbone.hpp"
#include "textres/degrade/degrade.hpp"
#include "textres/guidance/guidance.hpp"

namespace textres::pipeline {

/// Flat key = value run configuration. Every key has a default; unknown keys
/// and malformed values raise ConfigError at load time.
class RunConfig {
 public:
  RunConfig();

  /// Parses `# comment` / `key = value` lines.
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  /// Applies "key=value".
  void set(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;
  Seed seed() const;

  /// FNV-1a over the sorted, resolved key=value lines, as 16 hex digits.
  std::string digest() const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  guidance::StageConfig stage_config(guidance::Stage stage) const;
  guidance::SamplerConfig sampler_config() const;
  backbone::BackboneConfig backbone_config() const;
  backbone::TrainConfig train_config() const;
  std::vector<degrade::DegradationSpec> degradations() const;
  int n_words() const;

  static std::vector<std::string> known_keys();

 private:
  void check(const std::string& key, const std::string& value) const;
  std::map<std::string, std::string> values_;
};

}  // namespace textres::pipeline
