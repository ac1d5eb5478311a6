#pragma once

#include <map>
#include <stdexcept>
#include <string>

#include "splatfuse/finetune.hpp"
#include "splatfuse/matching.hpp"
#include "splatfuse/ptf.hpp"
#include "splatfuse/wfr.hpp"

namespace splatfuse {

// Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  // matching
  double d_near = 0.25;
  double d_far = 8.0;
  int num_planes = 64;
  std::string plane_spacing = "inverse";  // "uniform" | "inverse"
  double temperature = 0.05;
  int num_neighbors = 2;
  // lifting / decoding
  int stride = 2;
  double base_scale_px = 1.5;
  bool use_gt_depth = false;
  // fusion
  bool enable_fusion = true;
  bool broader_fusion = true;
  double ptf_delta = 0.1;
  // floater removal
  bool enable_wfr = true;
  double wfr_delta = 0.1;
  std::string wfr_strategy = "neighbor_accumulate";
  double wfr_epsilon_floor = 0.01;
  // rendering
  int tile_size = 16;
  // fine-tuning
  int finetune_iters = 200;
  double lambda1 = 0.2;
  double lambda2 = 0.1;
  bool use_ssim_loss = false;
  double lr_position = 1.6e-4;
  double lr_log_scale = 5e-3;
  double lr_opacity = 5e-2;
  double lr_color = 2.5e-3;
  std::string view_sampling = "roundrobin";  // "roundrobin" | "random"
  // process
  int threads = 0;  // 0 = library default
  uint64_t seed = 0;

  MatchingConfig matching() const;
  PtfOptions ptf() const;
  WfrOptions wfr() const;
  FinetuneConfig finetune() const;
};

// Flat "section.key = value" view of a TOML document (scalars only).
std::map<std::string, std::string> parse_toml(const std::string& path);

// Applies file keys then override pairs; unknown keys and out-of-range values
// raise ConfigError.
PipelineConfig load_config(const std::string& toml_path,
                           const std::map<std::string, std::string>& overrides = {});
PipelineConfig apply_config_entries(PipelineConfig base,
                                    const std::map<std::string, std::string>& entries);

std::string config_to_string(const PipelineConfig& config);

}  // namespace splatfuse
