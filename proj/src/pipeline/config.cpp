#include "textres/pipeline/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "textres/core/error.hpp"

namespace textres::pipeline {
namespace {

enum class Type { Int, Double, Bool, String, IntList, Choice };

struct KeySpec {
  const char* name;
  const char* fallback;
  Type type;
  const char* choices = "";  // comma separated, for Type::Choice
};

// clang-format off
const KeySpec kKeys[] = {
    {"data_dir", "data", Type::String},
    {"out_dir", "runs", Type::String},
    {"seed", "0", Type::Int},
    {"backend", "toy", Type::String},

    {"n_pairs", "20", Type::Int},
    {"image_size", "64", Type::Int},
    {"kinds", "noise", Type::String},
    {"noise_sigma", "25", Type::Double},
    {"rain_streaks", "40", Type::Int},
    {"rain_length", "9", Type::Int},
    {"rain_angle", "80", Type::Double},
    {"rain_intensity", "0.6", Type::Double},
    {"haze_beta", "1.5", Type::Double},
    {"haze_airlight", "0.85", Type::Double},
    {"blur_length", "7", Type::Int},
    {"blur_angle", "0", Type::Double},

    {"n_words", "20", Type::Int},
    {"stage_image_size", "32", Type::Int},
    {"stage1_steps", "200", Type::Int},
    {"stage1_lr", "0.001", Type::Double},
    {"stage1_batch", "4", Type::Int},
    {"stage2_steps", "200", Type::Int},
    {"stage2_lr", "0.001", Type::Double},
    {"stage2_batch", "4", Type::Int},
    {"restorer_noise", "0.001", Type::Double},

    {"ddim_steps", "200", Type::Int},
    {"guidance_scale", "5", Type::Double},
    {"condition_size", "32", Type::Int},
    {"guidance_source", "generated", Type::Choice, "generated,identity-restorer,degraded"},

    {"width", "16", Type::Int},
    {"n_stages", "3", Type::Int},
    {"blocks_per_stage", "1", Type::Int},
    {"extractor_blocks", "1", Type::Int},
    {"inject_sites", "enc,dec", Type::Choice, "enc,dec|enc|dec|none"},
    {"alpha_init", "0", Type::Double},
    {"fuse_kind", "conv", Type::Choice, "conv,attention"},
    {"block", "8", Type::Int},
    {"dilations", "1,2,3", Type::IntList},
    {"search_radius", "1", Type::Int},
    {"patch", "3", Type::Int},
    {"fine_radius", "2", Type::Int},

    {"train_steps", "2000", Type::Int},
    {"train_batch", "1", Type::Int},
    {"crop", "48", Type::Int},
    {"lr", "0.001", Type::Double},
    {"aggregation_lr", "0.0005", Type::Double},
    {"alpha_lr", "", Type::String},  // empty follows aggregation_lr
    {"freeze_alpha", "false", Type::Bool},
    {"val_fraction", "0.1", Type::Double},
    {"val_every", "250", Type::Int},

    {"eval_model", "backbone", Type::Choice, "backbone,identity"},

    {"ablation", "guidance_source", Type::Choice, "guidance_source,inject_sites,n_words"},
    {"ablation_steps", "300", Type::Int},
    {"ablation_guidance", "generated", Type::Choice, "generated,clean"},
    {"ablation_words", "5,10,20,30,40", Type::IntList},
};
// clang-format on

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& k : kKeys)
    if (key == k.name) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

bool parse_int(const std::string& s, long long& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end && !s.empty();
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

RunConfig::RunConfig() {
  for (const KeySpec& k : kKeys) values_[k.name] = k.fallback;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> out;
  for (const KeySpec& k : kKeys) out.emplace_back(k.name);
  return out;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::ConfigError, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::ConfigError,
            "line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, ErrorKind::ConfigError, "override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  check(key, value);
  values_[key] = value;
}

void RunConfig::check(const std::string& key, const std::string& value) const {
  const KeySpec* spec = find_key(key);
  require(spec != nullptr, ErrorKind::ConfigError, "unknown config key '" + key + "'");
  const std::string bad = "config key '" + key + "': invalid value '" + value + "'";
  long long i = 0;
  double d = 0;
  switch (spec->type) {
    case Type::Int:
      require(parse_int(value, i), ErrorKind::ConfigError, bad);
      break;
    case Type::Double:
      require(parse_double(value, d), ErrorKind::ConfigError, bad);
      break;
    case Type::Bool:
      require(value == "true" || value == "false", ErrorKind::ConfigError, bad);
      break;
    case Type::String:
      break;
    case Type::IntList:
      for (const auto& part : split(value, ',')) require(parse_int(part, i), ErrorKind::ConfigError, bad);
      require(!value.empty(), ErrorKind::ConfigError, bad);
      break;
    case Type::Choice: {
      const std::string choices = spec->choices;
      const char sep = choices.find('|') != std::string::npos ? '|' : ',';
      bool ok = false;
      for (const auto& c : split(choices, sep)) ok = ok || c == value;
      require(ok, ErrorKind::ConfigError, bad + " (choose from " + choices + ")");
      break;
    }
  }
  if (key == "kinds") {
    require(!value.empty(), ErrorKind::ConfigError, bad);
    for (const auto& k : split(value, ',')) {
      try {
        degrade::parse_kind(k);
      } catch (const Error&) {
        fail(ErrorKind::ConfigError, bad);
      }
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  require(it != values_.end(), ErrorKind::ConfigError, "unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const {
  long long v = 0;
  require(parse_int(get(key), v), ErrorKind::ConfigError, "config key '" + key + "' is not an integer");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  require(parse_double(get(key), v), ErrorKind::ConfigError, "config key '" + key + "' is not a number");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::string> RunConfig::get_list(const std::string& key) const { return split(get(key), ','); }

Seed RunConfig::seed() const {
  const long long s = get_int("seed");
  require(s >= 0, ErrorKind::ConfigError, "seed must be non-negative");
  return Seed{static_cast<std::uint64_t>(s)};
}

std::string RunConfig::digest() const {
  std::string canon;
  for (const auto& [k, v] : values_) canon += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

int RunConfig::n_words() const {
  const long long n = get_int("n_words");
  require(n >= 1 && n <= 1000, ErrorKind::ConfigError, "n_words must lie in [1, 1000]");
  return static_cast<int>(n);
}

namespace {

template <typename Cfg>
Cfg validated(Cfg c) {
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, e.what());
  }
  return c;
}

}  // namespace

guidance::StageConfig RunConfig::stage_config(guidance::Stage stage) const {
  const std::string p = stage == guidance::Stage::Stage1 ? "stage1_" : "stage2_";
  guidance::StageConfig c;
  c.stage = stage;
  c.steps = static_cast<int>(get_int(p + "steps"));
  c.lr = get_double(p + "lr");
  c.batch = static_cast<int>(get_int(p + "batch"));
  c.seed = seed();
  c.image_size = static_cast<int>(get_int("stage_image_size"));
  return validated(c);
}

guidance::SamplerConfig RunConfig::sampler_config() const {
  guidance::SamplerConfig c;
  c.num_steps = static_cast<int>(get_int("ddim_steps"));
  c.guidance_scale = get_double("guidance_scale");
  c.seed = seed();
  c.condition_size = static_cast<int>(get_int("condition_size"));
  return validated(c);
}

backbone::BackboneConfig RunConfig::backbone_config() const {
  backbone::BackboneConfig c;
  c.width = static_cast<int>(get_int("width"));
  c.n_stages = static_cast<int>(get_int("n_stages"));
  c.blocks_per_stage = static_cast<int>(get_int("blocks_per_stage"));
  c.extractor_blocks = static_cast<int>(get_int("extractor_blocks"));
  c.inject_sites = backbone::InjectSites::parse(get("inject_sites"));
  c.alpha_init = get_double("alpha_init");
  c.fuse_kind = get("fuse_kind") == "attention" ? aggregation::FuseKind::Attention : aggregation::FuseKind::Conv;
  c.match.block = static_cast<int>(get_int("block"));
  c.match.dilations.clear();
  for (const auto& d : get_list("dilations")) c.match.dilations.push_back(std::stoi(d));
  c.match.search_radius = static_cast<int>(get_int("search_radius"));
  c.match.patch = static_cast<int>(get_int("patch"));
  c.match.fine_radius = static_cast<int>(get_int("fine_radius"));
  c.seed = seed();
  return validated(c);
}

backbone::TrainConfig RunConfig::train_config() const {
  backbone::TrainConfig c;
  c.steps = static_cast<int>(get_int("train_steps"));
  c.batch = static_cast<int>(get_int("train_batch"));
  c.crop = static_cast<int>(get_int("crop"));
  c.lr = get_double("lr");
  c.aggregation_lr = get_double("aggregation_lr");
  if (!get("alpha_lr").empty()) c.alpha_lr = get_double("alpha_lr");
  c.freeze_alpha = get_bool("freeze_alpha");
  c.val_fraction = get_double("val_fraction");
  c.val_every = static_cast<int>(get_int("val_every"));
  c.seed = seed();
  return validated(c);
}

std::vector<degrade::DegradationSpec> RunConfig::degradations() const {
  std::vector<degrade::DegradationSpec> out;
  for (const auto& name : get_list("kinds")) {
    switch (degrade::parse_kind(name)) {
      case degrade::Kind::GaussianNoise:
        out.emplace_back(degrade::GaussianNoise{get_double("noise_sigma")});
        break;
      case degrade::Kind::Rain:
        out.emplace_back(degrade::Rain{static_cast<int>(get_int("rain_streaks")),
                                       static_cast<int>(get_int("rain_length")), get_double("rain_angle"),
                                       get_double("rain_intensity")});
        break;
      case degrade::Kind::Haze:
        out.emplace_back(degrade::Haze{get_double("haze_beta"), get_double("haze_airlight")});
        break;
      case degrade::Kind::MotionBlur:
        out.emplace_back(degrade::MotionBlur{static_cast<int>(get_int("blur_length")), get_double("blur_angle")});
        break;
    }
  }
  for (const auto& spec : out) {
    try {
      degrade::validate(spec);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  }
  return out;
}

}  // namespace textres::pipeline
