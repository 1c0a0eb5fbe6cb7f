#include "textres/pipeline/commands.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "textres/backbone/backbone.hpp"
#include "textres/core/checkpoint.hpp"
#include "textres/encoders/encoders.hpp"
#include "textres/guidance/guidance.hpp"
#include "textres/pipeline/dataset.hpp"
#include "textres/textual/textual.hpp"

namespace textres::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void say(const CommandContext& ctx, const std::string& msg) {
  if (ctx.log != nullptr) *ctx.log << msg << '\n';
}

void refuse_overwrite(const CommandContext& ctx, std::initializer_list<fs::path> targets) {
  if (ctx.force) return;
  for (const auto& t : targets)
    require(!fs::exists(t), ErrorKind::ConfigError, "refusing to overwrite " + t.string() + " (pass --force)");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Toolkit {
  encoders::Backends backends;
  guidance::ToyDenoiser denoiser;
  int n_words;

  explicit Toolkit(const RunConfig& cfg, int words)
      : backends(encoders::make_backends(cfg.get("backend"))),
        denoiser(backends.descriptor, backends.schedule, words),
        n_words(words) {}

  textual::MlpDims mapper_dims() const {
    return {backends.descriptor.image_dim, n_words, backends.descriptor.text_dim, 0};
  }
  textual::Mlp fresh_mapper(Seed seed) const { return textual::Mlp::mapper(mapper_dims(), seed); }
  textual::Mlp fresh_restorer(Seed seed, double noise) const {
    return textual::Mlp::restorer(n_words, backends.descriptor.text_dim, seed, noise);
  }
};

Checkpoint load_dependency(const CommandContext& ctx, const fs::path& path, const std::string& module,
                           const char* produced_by) {
  require(fs::exists(path), ErrorKind::DependencyMissing,
          path.string() + " not found; run '" + produced_by + "' first");
  LoadedCheckpoint loaded = load_checkpoint(path, module, ctx.config.digest());
  if (loaded.warning) say(ctx, "warning: " + *loaded.warning);
  return loaded.checkpoint;
}

void write_loss_csv(const std::vector<guidance::LossRecord>& curve, const fs::path& path) {
  std::string out = "step,loss\n";
  for (const auto& r : curve) out += std::to_string(r.step) + "," + fmt(r.loss) + "\n";
  write_text_file(path, out);
}

double window_mean(const std::vector<guidance::LossRecord>& curve, bool head) {
  const std::size_t n = std::min<std::size_t>(20, curve.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += curve[head ? i : curve.size() - n + i].loss;
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

struct Dataset {
  fs::path dir;
  std::vector<ManifestRecord> records;
  std::vector<Image> degraded, clean;
};

Dataset load_dataset(const fs::path& manifest) {
  Dataset d;
  d.dir = manifest.parent_path();
  d.records = read_manifest(manifest);
  std::map<std::string, Image> clean_cache;
  for (const auto& r : d.records) {
    d.degraded.push_back(load_record_image(d.dir, r.degraded_path, r.id, "degraded"));
    auto it = clean_cache.find(r.clean_path);
    if (it == clean_cache.end())
      it = clean_cache.emplace(r.clean_path, load_record_image(d.dir, r.clean_path, r.id, "clean")).first;
    d.clean.push_back(it->second);
    require(d.clean.back().same_dims(d.degraded.back()) && d.clean.back().is_rgb(), ErrorKind::DataError,
            "record '" + r.id + "': clean and degraded images must be RGB with equal dims");
  }
  return d;
}

std::vector<Image> unique_clean(const Dataset& d) {
  std::vector<Image> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    if (seen.insert(d.records[i].clean_path).second) out.push_back(d.clean[i]);
  return out;
}

textual::Mlp train_mapper_on(const Dataset& d, const Toolkit& kit, const guidance::StageConfig& cfg,
                             std::vector<guidance::LossRecord>* curve) {
  std::vector<Image> images = unique_clean(d);
  images.insert(images.end(), d.degraded.begin(), d.degraded.end());
  textual::Mlp mapper = kit.fresh_mapper(cfg.seed);
  auto result = guidance::train_stage1(images, cfg, kit.backends, kit.denoiser, mapper);
  mapper.params().load(result.checkpoint);
  if (curve != nullptr) *curve = std::move(result.curve);
  return mapper;
}

textual::Mlp train_restorer_on(const Dataset& d, const Toolkit& kit, const textual::Mlp& mapper,
                               const guidance::StageConfig& cfg, double noise,
                               std::vector<guidance::LossRecord>* curve) {
  std::vector<std::pair<Image, Image>> pairs;
  for (std::size_t i = 0; i < d.records.size(); ++i) pairs.emplace_back(d.degraded[i], d.clean[i]);
  textual::Mlp restorer = kit.fresh_restorer(cfg.seed, noise);
  auto result = guidance::train_stage2(pairs, cfg, kit.backends, kit.denoiser, &mapper, restorer);
  restorer.params().load(result.checkpoint);
  if (curve != nullptr) *curve = std::move(result.curve);
  return restorer;
}

std::vector<backbone::GuidedSample> samples_with(const Dataset& d, const std::vector<Image>& guidance) {
  std::vector<backbone::GuidedSample> out;
  for (std::size_t i = 0; i < d.records.size(); ++i)
    out.push_back({d.records[i].id, d.degraded[i], d.clean[i], guidance[i]});
  return out;
}

// Guidance images listed in the guidance manifest, in record order.
std::vector<Image> load_guidance(const RunPaths& paths, const Dataset& d) {
  require(fs::exists(paths.guidance_manifest()), ErrorKind::DependencyMissing,
          paths.guidance_manifest().string() + " not found; run 'gen-guidance' first");
  const auto records = read_manifest(paths.guidance_manifest());
  std::map<std::string, std::string> by_id;
  for (const auto& r : records) {
    require(r.guidance_path.has_value(), ErrorKind::DataError, "record '" + r.id + "' has no guidance_path");
    by_id[r.id] = *r.guidance_path;
  }
  std::vector<Image> out;
  for (const auto& r : d.records) {
    const auto it = by_id.find(r.id);
    require(it != by_id.end(), ErrorKind::DataError, "record '" + r.id + "' has no guidance entry");
    out.push_back(load_record_image(paths.guidance_manifest().parent_path(), it->second, r.id, "guidance"));
    require(out.back().same_dims(d.degraded[out.size() - 1]), ErrorKind::DataError,
            "record '" + r.id + "': guidance dims differ from the degraded image");
  }
  return out;
}

std::vector<std::size_t> test_split(const RunConfig& cfg, std::size_t n) {
  const auto tc = cfg.train_config();
  auto idx = backbone::validation_split(n, tc.val_fraction, tc.seed);
  if (idx.empty())
    for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
  return idx;
}

struct ArmScore {
  double psnr = 0, ssim = 0;
};

ArmScore score(const backbone::Backbone* model, const std::vector<backbone::GuidedSample>& samples,
               const std::vector<std::size_t>& indices, std::vector<std::array<double, 3>>* rows = nullptr) {
  ArmScore s;
  for (std::size_t i : indices) {
    const auto& smp = samples[i];
    const Image out = model ? model->restore(smp.degraded, smp.guidance) : smp.degraded;
    const double p = metrics::psnr(out, smp.clean, metrics::PsnrMode::RGB);
    const double py = metrics::psnr(out, smp.clean, metrics::PsnrMode::Y);
    const double ss = metrics::ssim(out, smp.clean);
    if (rows) rows->push_back({p, py, ss});
    s.psnr += p;
    s.ssim += ss;
  }
  s.psnr /= static_cast<double>(indices.size());
  s.ssim /= static_cast<double>(indices.size());
  return s;
}

std::string json_number(double v) { return std::isinf(v) ? (v > 0 ? "inf" : "-inf") : fmt(v); }

}  // namespace

RunPaths::RunPaths(const RunConfig& cfg) : data_dir(cfg.get("data_dir")), out_dir(cfg.get("out_dir")) {}

void cmd_synth_data(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  refuse_overwrite(ctx, {paths.manifest()});
  const long long n = cfg.get_int("n_pairs");
  const long long size = cfg.get_int("image_size");
  require(n >= 1, ErrorKind::ConfigError, "n_pairs must be >= 1");
  require(size >= 16 && size <= 4096, ErrorKind::ConfigError, "image_size must lie in [16, 4096]");
  const auto specs = cfg.degradations();
  const Seed seed = cfg.seed();

  std::vector<ManifestRecord> records;
  for (long long i = 0; i < n; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04lld", i);
    const Image clean = quantize8(procedural_image(static_cast<int>(size), seed, static_cast<std::uint64_t>(i)));
    const std::string clean_rel = std::string("clean/") + stem + ".png";
    write_png(clean, paths.data_dir / clean_rel);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const std::string kind = degrade::kind_name(degrade::kind_of(specs[k]));
      const std::uint64_t rec_seed =
          Rng(seed, "pipeline.synth", static_cast<std::uint64_t>(i) * specs.size() + k).next_u64();
      const auto pair = degrade::make_pair(clean, specs[k], Seed{rec_seed});
      ManifestRecord r;
      r.id = kind + "_" + stem;
      r.clean_path = clean_rel;
      r.degraded_path = "degraded/" + r.id + ".png";
      r.kind = kind;
      r.params_json = params_to_json(specs[k]);
      r.seed = rec_seed;
      write_png(pair.degraded, paths.data_dir / r.degraded_path);
      records.push_back(std::move(r));
    }
  }
  write_manifest(records, paths.manifest());
  say(ctx, "wrote " + std::to_string(records.size()) + " records to " + paths.manifest().string());
}

void cmd_train_mapper(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const auto stage_cfg = cfg.stage_config(guidance::Stage::Stage1);
  refuse_overwrite(ctx, {paths.mapper(), paths.mapper_log()});
  const Toolkit kit(cfg, cfg.n_words());
  const Dataset d = load_dataset(paths.manifest());
  std::vector<guidance::LossRecord> curve;
  const textual::Mlp mapper = train_mapper_on(d, kit, stage_cfg, &curve);
  save_checkpoint(mapper.params().to_checkpoint(textual::kMapperModuleId, cfg.digest()), paths.mapper());
  write_loss_csv(curve, paths.mapper_log());
  say(ctx, "stage 1: mean loss over 20 steps " + fmt(window_mean(curve, true)) + " -> " + fmt(window_mean(curve, false)));
}

void cmd_train_textres(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const auto stage_cfg = cfg.stage_config(guidance::Stage::Stage2);
  const Toolkit kit(cfg, cfg.n_words());
  textual::Mlp mapper = kit.fresh_mapper(cfg.seed());
  mapper.params().load(load_dependency(ctx, paths.mapper(), textual::kMapperModuleId, "train-mapper"));
  refuse_overwrite(ctx, {paths.restorer(), paths.restorer_log()});
  const Dataset d = load_dataset(paths.manifest());
  std::vector<guidance::LossRecord> curve;
  const textual::Mlp restorer =
      train_restorer_on(d, kit, mapper, stage_cfg, cfg.get_double("restorer_noise"), &curve);
  save_checkpoint(restorer.params().to_checkpoint(textual::kRestorerModuleId, cfg.digest()), paths.restorer());
  write_loss_csv(curve, paths.restorer_log());
  say(ctx, "stage 2: mean loss over 20 steps " + fmt(window_mean(curve, true)) + " -> " + fmt(window_mean(curve, false)));
}

void cmd_gen_guidance(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const std::string source = cfg.get("guidance_source");
  const auto sampler = cfg.sampler_config();
  const Toolkit kit(cfg, cfg.n_words());
  std::optional<textual::Mlp> mapper, restorer;
  if (source != "degraded") {
    mapper = kit.fresh_mapper(cfg.seed());
    mapper->params().load(load_dependency(ctx, paths.mapper(), textual::kMapperModuleId, "train-mapper"));
  }
  if (source == "generated") {
    restorer = kit.fresh_restorer(cfg.seed(), 0.0);
    restorer->params().load(load_dependency(ctx, paths.restorer(), textual::kRestorerModuleId, "train-textres"));
  }
  refuse_overwrite(ctx, {paths.guidance_manifest()});
  auto records = read_manifest(paths.manifest());
  const fs::path out_abs = fs::absolute(paths.out_dir);
  for (auto& r : records) {
    const fs::path target = paths.guidance_dir() / (r.id + ".png");
    const fs::path degraded = paths.data_dir / r.degraded_path;
    if (source == "degraded") {
      require(fs::exists(degraded), ErrorKind::DataError, "record '" + r.id + "': missing degraded file");
      fs::create_directories(target.parent_path());
      fs::copy_file(degraded, target, fs::copy_options::overwrite_existing);
    } else {
      const Image x = load_record_image(paths.data_dir, r.degraded_path, r.id, "degraded");
      const Image g = guidance::generate_guidance(x, *mapper, restorer ? &*restorer : nullptr, kit.backends,
                                                  kit.denoiser, sampler);
      write_png(g, target);
    }
    r.clean_path = fs::relative(fs::absolute(paths.data_dir / r.clean_path), out_abs).generic_string();
    r.degraded_path = fs::relative(fs::absolute(degraded), out_abs).generic_string();
    r.guidance_path = fs::relative(fs::absolute(target), out_abs).generic_string();
  }
  write_manifest(records, paths.guidance_manifest());
  say(ctx, "wrote " + std::to_string(records.size()) + " guidance images (" + source + ")");
}

void cmd_train_restore(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const auto bb_cfg = cfg.backbone_config();
  const auto train_cfg = cfg.train_config();
  refuse_overwrite(ctx, {paths.backbone(), paths.backbone_log()});
  const Dataset d = load_dataset(paths.manifest());
  const std::vector<Image> guidance = bb_cfg.inject_sites.none() ? d.degraded : load_guidance(paths, d);
  backbone::Backbone model(bb_cfg);
  const auto result = backbone::train_guided(samples_with(d, guidance), model, train_cfg, cfg.digest());
  save_checkpoint(result.checkpoint, paths.backbone());
  std::string log = "step,l1,val_psnr\n";
  for (const auto& r : result.curve)
    log += std::to_string(r.step) + "," + fmt(r.l1) + "," + (r.val_psnr ? json_number(*r.val_psnr) : "") + "\n";
  write_text_file(paths.backbone_log(), log);
  say(ctx, "restore: final l1 " + fmt(result.curve.empty() ? 0.0 : result.curve.back().l1));
}

metrics::MetricReport cmd_evaluate(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const bool identity = cfg.get("eval_model") == "identity";
  const auto bb_cfg = cfg.backbone_config();
  std::optional<backbone::Backbone> model;
  if (!identity) {
    model.emplace(bb_cfg);
    model->load(load_dependency(ctx, paths.backbone(), backbone::kModuleId, "train-restore"));
  }
  refuse_overwrite(ctx, {paths.report_csv(), paths.report_json()});
  const Dataset d = load_dataset(paths.manifest());
  const std::vector<Image> guidance =
      identity || bb_cfg.inject_sites.none() ? d.degraded : load_guidance(paths, d);
  const auto samples = samples_with(d, guidance);
  const auto split = test_split(cfg, samples.size());

  std::vector<std::array<double, 3>> rows;
  score(model ? &*model : nullptr, samples, split, &rows);
  metrics::MetricReport report;
  report.n_images = static_cast<int>(rows.size());
  std::string csv = "id,psnr_rgb,psnr_y,ssim\n";
  json per_image = json::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& id = samples[split[k]].id;
    report.psnr_rgb += rows[k][0];
    report.psnr_y += rows[k][1];
    report.ssim += rows[k][2];
    csv += id + "," + metrics::format_db(rows[k][0]) + "," + metrics::format_db(rows[k][1]) + "," + fmt(rows[k][2]) +
           "\n";
    per_image.push_back({{"id", id},
                         {"psnr_rgb", metrics::format_db(rows[k][0])},
                         {"psnr_y", metrics::format_db(rows[k][1])},
                         {"ssim", rows[k][2]}});
  }
  report.psnr_rgb /= report.n_images;
  report.psnr_y /= report.n_images;
  report.ssim /= report.n_images;
  json j{{"psnr_rgb", metrics::format_db(report.psnr_rgb)},
         {"psnr_y", metrics::format_db(report.psnr_y)},
         {"ssim", report.ssim},
         {"n_images", report.n_images},
         {"images", per_image}};
  write_text_file(paths.report_csv(), csv);
  write_text_file(paths.report_json(), j.dump(2) + "\n");
  say(ctx, "evaluate: psnr " + metrics::format_db(report.psnr_rgb) + " dB over " +
               std::to_string(report.n_images) + " images");
  return report;
}

std::vector<AblationRow> cmd_ablate(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.config;
  const RunPaths paths(cfg);
  const std::string which = cfg.get("ablation");
  refuse_overwrite(ctx, {paths.ablation_csv(which), paths.ablation_md(which)});
  auto train_cfg = cfg.train_config();
  train_cfg.steps = static_cast<int>(cfg.get_int("ablation_steps"));
  require(train_cfg.steps >= 1, ErrorKind::ConfigError, "ablation_steps must be >= 1");
  const auto base_bb = cfg.backbone_config();
  const Dataset d = load_dataset(paths.manifest());
  const auto split = test_split(cfg, d.records.size());

  std::vector<AblationRow> rows;
  auto run_arm = [&](const std::string& arm, backbone::InjectSites sites, const std::vector<Image>& guidance,
                     const char* paper_psnr, const char* paper_ssim) {
    auto bb = base_bb;
    bb.inject_sites = sites;
    backbone::Backbone model(bb);
    const auto samples = samples_with(d, guidance);
    backbone::train_guided(samples, model, train_cfg, cfg.digest());
    const ArmScore s = score(&model, samples, split);
    rows.push_back({arm, s.psnr, s.ssim, paper_psnr, paper_ssim});
    say(ctx, "ablate " + which + " / " + arm + ": " + fmt(s.psnr) + " dB");
  };
  const backbone::InjectSites none{false, false}, both{true, true};
  auto arm_guidance = [&]() {
    return cfg.get("ablation_guidance") == "clean" ? d.clean : load_guidance(paths, d);
  };

  if (which == "guidance_source") {
    const auto generated = load_guidance(paths, d);
    run_arm("baseline", none, d.degraded, "30.16", "0.932");
    run_arm("degraded-as-guidance", both, d.degraded, "30.13", "0.931");
    run_arm("generated", both, generated, "31.57", "0.947");
    run_arm("clean-guidance", both, d.clean, "", "");
  } else if (which == "inject_sites") {
    const auto g = arm_guidance();
    run_arm("baseline", none, d.degraded, "30.16", "0.932");
    run_arm("enc", {true, false}, g, "31.37", "0.946");
    run_arm("dec", {false, true}, g, "30.31", "0.934");
    run_arm("enc,dec", both, g, "31.57", "0.947");
  } else {
    const std::map<int, std::pair<const char*, const char*>> paper{
        {5, {"31.13", "0.941"}}, {10, {"31.36", "0.945"}}, {20, {"31.57", "0.947"}},
        {30, {"31.51", "0.947"}}, {40, {"31.60", "0.948"}}};
    run_arm("baseline", none, d.degraded, "30.16", "0.932");
    const auto sampler = cfg.sampler_config();
    for (const auto& w : cfg.get_list("ablation_words")) {
      const int n = std::stoi(w);
      require(n >= 1, ErrorKind::ConfigError, "ablation_words entries must be >= 1");
      const Toolkit kit(cfg, n);
      const auto mapper = train_mapper_on(d, kit, cfg.stage_config(guidance::Stage::Stage1), nullptr);
      const auto restorer = train_restorer_on(d, kit, mapper, cfg.stage_config(guidance::Stage::Stage2),
                                              cfg.get_double("restorer_noise"), nullptr);
      std::vector<Image> g;
      for (const Image& x : d.degraded)
        g.push_back(guidance::generate_guidance(x, mapper, &restorer, kit.backends, kit.denoiser, sampler));
      const auto it = paper.find(n);
      run_arm("N=" + w, both, g, it != paper.end() ? it->second.first : "",
              it != paper.end() ? it->second.second : "");
    }
  }

  std::string csv = "arm,psnr,ssim,paper_psnr,paper_ssim\n";
  std::string md = "| arm | PSNR (toy) | SSIM (toy) | PSNR (paper) | SSIM (paper) |\n|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    csv += r.arm + "," + metrics::format_db(r.psnr) + "," + fmt(r.ssim) + "," + r.paper_psnr + "," + r.paper_ssim + "\n";
    char line[256];
    std::snprintf(line, sizeof line, "| %s | %.2f | %.4f | %s | %s |\n", r.arm.c_str(), r.psnr, r.ssim,
                  r.paper_psnr.empty() ? "-" : r.paper_psnr.c_str(), r.paper_ssim.empty() ? "-" : r.paper_ssim.c_str());
    md += line;
  }
  write_text_file(paths.ablation_csv(which), csv);
  write_text_file(paths.ablation_md(which), md);
  return rows;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidParam:
      return 2;
    case ErrorKind::DependencyMissing:
      return 3;
    case ErrorKind::DataError:
    case ErrorKind::InvalidInput:
    case ErrorKind::Io:
    case ErrorKind::CorruptCheckpoint:
    case ErrorKind::VersionMismatch:
    case ErrorKind::ModuleMismatch:
      return 4;
    case ErrorKind::InternalError:
      return 1;
  }
  return 1;
}

}  // namespace textres::pipeline
