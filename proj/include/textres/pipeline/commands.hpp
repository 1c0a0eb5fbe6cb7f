#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "textres/core/error.hpp"
#include "textres/metrics/metrics.hpp"
#include "textres/pipeline/config.hpp"

namespace textres::pipeline {

struct CommandContext {
  RunConfig config;
  bool force = false;
  std::ostream* log = nullptr;  // progress messages; null silences them
};

/// Locations of every artifact a run reads or writes.
struct RunPaths {
  std::filesystem::path data_dir, out_dir;

  explicit RunPaths(const RunConfig& cfg);
  std::filesystem::path manifest() const { return data_dir / "manifest.jsonl"; }
  std::filesystem::path mapper() const { return out_dir / "mapper.ckpt"; }
  std::filesystem::path mapper_log() const { return out_dir / "mapper_loss.csv"; }
  std::filesystem::path restorer() const { return out_dir / "textres.ckpt"; }
  std::filesystem::path restorer_log() const { return out_dir / "textres_loss.csv"; }
  std::filesystem::path guidance_dir() const { return out_dir / "guidance"; }
  std::filesystem::path guidance_manifest() const { return out_dir / "guidance_manifest.jsonl"; }
  std::filesystem::path backbone() const { return out_dir / "backbone.ckpt"; }
  std::filesystem::path backbone_log() const { return out_dir / "restore_log.csv"; }
  std::filesystem::path report_csv() const { return out_dir / "report.csv"; }
  std::filesystem::path report_json() const { return out_dir / "report.json"; }
  std::filesystem::path ablation_csv(const std::string& name) const { return out_dir / ("ablation_" + name + ".csv"); }
  std::filesystem::path ablation_md(const std::string& name) const { return out_dir / ("ablation_" + name + ".md"); }
};

void cmd_synth_data(const CommandContext& ctx);
void cmd_train_mapper(const CommandContext& ctx);
void cmd_train_textres(const CommandContext& ctx);
void cmd_gen_guidance(const CommandContext& ctx);
void cmd_train_restore(const CommandContext& ctx);
metrics::MetricReport cmd_evaluate(const CommandContext& ctx);

struct AblationRow {
  std::string arm;
  double psnr;
  double ssim;
  std::string paper_psnr;  // empty when the paper has no matching entry
  std::string paper_ssim;
};
std::vector<AblationRow> cmd_ablate(const CommandContext& ctx);

/// 0 success, 2 config error, 3 dependency missing, 4 data error, 1 anything else.
int exit_code_for(ErrorKind kind);

}  // namespace textres::pipeline
