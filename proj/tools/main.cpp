#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "splatfuse/config.hpp"
#include "splatfuse/core/parallel.hpp"
#include "splatfuse/finetune.hpp"
#include "splatfuse/image_io.hpp"
#include "splatfuse/pipeline.hpp"
#include "splatfuse/ply_io.hpp"
#include "splatfuse/renderer.hpp"
#include "splatfuse/scene_io.hpp"
#include "splatfuse/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDiverged = 4;

std::string view_tag(size_t index) {
  std::ostringstream s;
  s << std::setw(4) << std::setfill('0') << index;
  return s.str();
}

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& sets) {
  std::map<std::string, std::string> out;
  for (const std::string& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects section.key=value, got \"" + kv + "\"");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

ImageD to_double(const ImageF& img) {
  ImageD out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i];
  return out;
}

ImageF to_float(const ImageD& img) {
  ImageF out(img.height, img.width, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = static_cast<float>(img.data[i]);
  return out;
}

void write_depth_output(const std::string& path, const ImageD& depth) {
  if (fs::path(path).extension() == ".png") {
    Image<uint16_t> mm(depth.height, depth.width, 1);
    for (size_t i = 0; i < depth.data.size(); ++i) {
      const double v = std::clamp(depth.data[i] * 1000.0, 0.0, 65535.0);
      mm.data[i] = static_cast<uint16_t>(std::lround(v));
    }
    write_png_gray16(path, mm);
  } else {
    write_pfm(path, to_float(depth));
  }
}

Camera frame_camera(const CameraFrame& frame) { return {frame.intrinsics, frame.pose}; }

// ---- reconstruct ----

int cmd_reconstruct(const std::string& manifest_path, const std::string& out_dir,
                    const PipelineConfig& config) {
  const std::vector<CameraFrame> frames = load_scene(manifest_path);
  const ReconstructionResult result = reconstruct(frames, config);

  fs::create_directories(out_dir);
  export_ply(result.primitives, (fs::path(out_dir) / "scene.ply").string());

  for (size_t v = 0; v < result.lift_depths.size(); ++v) {
    write_pfm((fs::path(out_dir) / ("depth_" + view_tag(v) + ".pfm")).string(),
              result.lift_depths[v]);
    write_pfm((fs::path(out_dir) / ("conf_" + view_tag(v) + ".pfm")).string(),
              result.lift_confs[v]);
  }

  json stats;
  stats["views"] = json::array();
  size_t total_lifted = 0;
  for (const FusionStats& s : result.fusion_stats) {
    stats["views"].push_back({{"view", s.view_id},
                              {"lifted", s.lifted},
                              {"fused_pairs", s.fused_pairs},
                              {"global_after", s.global_after}});
    total_lifted += s.lifted;
  }
  stats["total_lifted"] = total_lifted;
  stats["final_count"] = result.primitives.size();
  stats["wfr"] = {{"indications", result.wfr_stats.indications},
                  {"removed", result.wfr_stats.removed}};
  std::ofstream stats_out(fs::path(out_dir) / "fusion_stats.json");
  stats_out << stats.dump(2) << "\n";

  std::ofstream config_out(fs::path(out_dir) / "config.toml");
  config_out << config_to_string(config);

  std::cout << "reconstructed " << result.primitives.size() << " gaussians from "
            << frames.size() << " views (" << total_lifted << " lifted)\n";
  return kExitOk;
}

// ---- render ----

int cmd_render(const std::string& ply_path, const std::string& manifest_path,
               const std::string& out_dir, const std::vector<int>& view_filter,
               const std::string& depth_ext, int tile_size) {
  const GaussianPrimitives prims = import_ply(ply_path);
  const std::vector<CameraFrame> frames = load_scene(manifest_path);

  std::vector<int> views = view_filter;
  if (views.empty())
    for (size_t v = 0; v < frames.size(); ++v) views.push_back(static_cast<int>(v));
  for (const int v : views)
    if (v < 0 || v >= static_cast<int>(frames.size())) {
      std::ostringstream valid;
      for (size_t i = 0; i < frames.size(); ++i) valid << (i ? ", " : "") << i;
      std::cerr << "error: unknown view id " << v << " (valid ids: " << valid.str() << ")\n";
      return kExitData;
    }

  if (prims.size() == 0)
    std::cerr << "warning: empty scene, rendering background only\n";

  fs::create_directories(out_dir);
  json report;
  report["views"] = json::array();
  double psnr_sum = 0;
  for (const int v : views) {
    const RenderedImage img = render(prims, frame_camera(frames[v]), tile_size);
    write_png_rgb((fs::path(out_dir) / ("color_" + view_tag(v) + ".png")).string(),
                  to_float(img.color));
    write_depth_output(
        (fs::path(out_dir) / ("depth_" + view_tag(v) + "." + depth_ext)).string(), img.depth);
    const double view_psnr = psnr(img.color, to_double(frames[v].image));
    psnr_sum += view_psnr;
    report["views"].push_back({{"view", v}, {"psnr", view_psnr}});
    std::cout << "view " << v << ": psnr " << std::fixed << std::setprecision(2) << view_psnr
              << " dB\n";
  }
  report["mean_psnr"] = psnr_sum / views.size();
  std::ofstream report_out(fs::path(out_dir) / "render_report.json");
  report_out << report.dump(2) << "\n";
  return kExitOk;
}

// ---- finetune ----

int cmd_finetune(const std::string& ply_path, const std::string& manifest_path,
                 const std::string& out_dir, const PipelineConfig& config,
                 int checkpoint_interval) {
  const GaussianPrimitives scene = import_ply(ply_path);
  if (scene.size() == 0) {
    std::cerr << "error: cannot fine-tune an empty scene\n";
    return kExitData;
  }
  const std::vector<CameraFrame> frames = load_scene(manifest_path);

  std::vector<TrainingView> views;
  views.reserve(frames.size());
  for (const CameraFrame& frame : frames)
    views.push_back({frame_camera(frame), to_double(frame.image)});

  fs::create_directories(out_dir);
  const AnchorDepths anchors = make_anchor_depths(scene, views, config.tile_size);

  FinetuneConfig ft = config.finetune();
  if (checkpoint_interval > 0) {
    ft.checkpoint_interval = checkpoint_interval;
    ft.checkpoint = [&](int iteration, const GaussianPrimitives& prims) {
      export_ply(prims,
                 (fs::path(out_dir) / ("checkpoint_" + std::to_string(iteration) + ".ply")).string());
    };
  }

  std::vector<LossBreakdown> trace;
  const GaussianPrimitives tuned = run_finetune(scene, views, anchors, ft, &trace);
  export_ply(tuned, (fs::path(out_dir) / "refined.ply").string());

  std::ofstream csv(fs::path(out_dir) / "loss.csv");
  csv << "# lambda1=" << ft.lambda1 << " lambda2=" << ft.lambda2
      << " use_ssim=" << (ft.use_ssim ? 1 : 0) << " iters=" << ft.iterations << "\n";
  csv << "iteration,total,color,ssim,depth\n";
  csv << std::setprecision(10);
  for (size_t i = 0; i < trace.size(); ++i)
    csv << i << "," << trace[i].total << "," << trace[i].color << "," << trace[i].ssim << ","
        << trace[i].depth << "\n";

  double before = 0, after = 0;
  for (const TrainingView& view : views) {
    before += psnr(render(scene, view.camera, config.tile_size).color, view.image);
    after += psnr(render(tuned, view.camera, config.tile_size).color, view.image);
  }
  before /= views.size();
  after /= views.size();
  std::cout << "training-view psnr: " << std::fixed << std::setprecision(2) << before << " -> "
            << after << " dB over " << ft.iterations << " iterations\n";
  return kExitOk;
}

// ---- eval ----

int cmd_eval(const std::string& pred_dir, const std::string& manifest_path,
             const std::string& out_path) {
  const std::vector<CameraFrame> frames = load_scene(manifest_path);
  json report;
  report["views"] = json::array();
  double psnr_sum = 0, ssim_sum = 0;
  DepthMetrics aggregate;
  size_t depth_views = 0;

  for (size_t v = 0; v < frames.size(); ++v) {
    const fs::path color_path = fs::path(pred_dir) / ("color_" + view_tag(v) + ".png");
    if (!fs::exists(color_path)) {
      std::cerr << "error: prediction missing for view " << v << " (" << color_path.string()
                << ")\n";
      return kExitData;
    }
    const ImageD pred = to_double(read_png_rgb(color_path.string()));
    const ImageD gt = to_double(frames[v].image);
    const double view_psnr = psnr(pred, gt);
    const double view_ssim = ssim(pred, gt);
    psnr_sum += view_psnr;
    ssim_sum += view_ssim;

    json entry = {{"view", v}, {"psnr", view_psnr}, {"ssim", view_ssim}};
    const fs::path depth_path = fs::path(pred_dir) / ("depth_" + view_tag(v) + ".pfm");
    if (frames[v].has_depth() && fs::exists(depth_path)) {
      const ImageF pred_depth = read_pfm(depth_path.string());
      ImageD pd = to_double(pred_depth);
      ImageD gd = to_double(resample_nearest(frames[v].depth, pd.height, pd.width));
      const DepthMetrics m = depth_metrics(pd, gd);
      entry["abs_diff"] = m.abs_diff;
      entry["abs_rel"] = m.abs_rel;
      entry["delta_125"] = m.delta_125;
      entry["delta_110"] = m.delta_110;
      aggregate.abs_diff += m.abs_diff;
      aggregate.abs_rel += m.abs_rel;
      aggregate.delta_125 += m.delta_125;
      aggregate.delta_110 += m.delta_110;
      ++depth_views;
    }
    report["views"].push_back(entry);
  }

  report["mean_psnr"] = psnr_sum / frames.size();
  report["mean_ssim"] = ssim_sum / frames.size();
  if (depth_views > 0) {
    report["mean_abs_diff"] = aggregate.abs_diff / depth_views;
    report["mean_abs_rel"] = aggregate.abs_rel / depth_views;
    report["mean_delta_125"] = aggregate.delta_125 / depth_views;
    report["mean_delta_110"] = aggregate.delta_110 / depth_views;
  }

  const std::string dump = report.dump(2);
  std::cout << dump << "\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << dump << "\n";
  }
  return kExitOk;
}

// ---- stats ----

int cmd_stats(const std::string& stats_path) {
  std::ifstream in(stats_path);
  if (!in) {
    std::cerr << "error: cannot open " << stats_path << "\n";
    return kExitData;
  }
  json stats;
  try {
    in >> stats;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed stats file: " << e.what() << "\n";
    return kExitData;
  }
  std::cout << std::left << std::setw(6) << "view" << std::setw(10) << "lifted" << std::setw(10)
            << "fused" << std::setw(12) << "global" << "\n";
  for (const auto& v : stats["views"]) {
    std::cout << std::left << std::setw(6) << v["view"].get<int>() << std::setw(10)
              << v["lifted"].get<size_t>() << std::setw(10) << v["fused_pairs"].get<size_t>()
              << std::setw(12) << v["global_after"].get<size_t>() << "\n";
  }
  const size_t lifted = stats["total_lifted"].get<size_t>();
  const size_t final_count = stats["final_count"].get<size_t>();
  std::cout << "total lifted: " << lifted << "\n";
  std::cout << "final gaussians: " << final_count << " ("
            << std::fixed << std::setprecision(1)
            << (lifted ? 100.0 * final_count / lifted : 0.0) << "% of lifted)\n";
  if (stats.contains("wfr"))
    std::cout << "wfr indications: " << stats["wfr"]["indications"].get<size_t>()
              << ", removed: " << stats["wfr"]["removed"].get<size_t>() << "\n";
  return kExitOk;
}

// ---- synth ----

int cmd_synth(const std::string& out_dir, int num_views, int width, int height, uint64_t seed,
              bool with_floater) {
  SyntheticScene scene;
  scene.box_min = Vec3(-3, -2, -1);
  scene.box_max = Vec3(3, 2, 4);
  scene.seed = seed;
  scene.intrinsics.fx = 1.1 * width;
  scene.intrinsics.fy = 1.1 * width;
  scene.intrinsics.cx = width / 2.0 - 0.35;
  scene.intrinsics.cy = height / 2.0 + 0.2;
  scene.intrinsics.width = width;
  scene.intrinsics.height = height;
  for (int v = 0; v < num_views; ++v) {
    const double t = num_views > 1 ? static_cast<double>(v) / (num_views - 1) : 0.5;
    Pose pose = Pose::identity();
    pose.translation = -Vec3(-0.9 + 1.8 * t, 0.15 * std::sin(2.2 * v), 0.1 * std::cos(1.7 * v));
    scene.poses.push_back(pose);
  }
  if (with_floater) {
    // Contaminating the first view exercises the broadened fusion band (wall
    // observations fuse the already-global floater); the last view leaves a
    // floater only the removal pass can reach.
    FloaterSpec f;
    f.center = Vec3(0, 0, 3.5);
    f.radius = 0.35;
    f.view_ids = {0, num_views - 1};
    scene.floaters.push_back(f);
  }
  const SyntheticFrames frames = generate_synthetic(scene);
  const std::string manifest = write_scene(frames.frames, out_dir);
  std::cout << "wrote " << frames.frames.size() << " frames to " << manifest << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feed-forward indoor scene reconstruction with fused Gaussian splats"};
  app.require_subcommand(1);

  std::string manifest_path, ply_path, out_dir = "out", config_path, pred_dir, stats_path,
              eval_out, depth_ext = "pfm";
  std::vector<std::string> set_entries;
  std::vector<int> view_filter;
  int threads = 0, iters = -1, checkpoint_interval = 0;
  int synth_views = 8, synth_width = 256, synth_height = 192;
  uint64_t seed = 0;
  bool use_gt_depth = false, synth_floater = false;

  CLI::App* reconstruct_cmd = app.add_subcommand("reconstruct", "Feed-forward reconstruction");
  reconstruct_cmd->add_option("manifest", manifest_path)->required();
  reconstruct_cmd->add_option("--out", out_dir);
  reconstruct_cmd->add_option("--config", config_path);
  reconstruct_cmd->add_option("--set", set_entries, "Override config keys (section.key=value)");
  reconstruct_cmd->add_flag("--use-gt-depth", use_gt_depth,
                            "Lift from manifest depth instead of the cost volume");
  reconstruct_cmd->add_option("--threads", threads);
  reconstruct_cmd->add_option("--seed", seed);

  CLI::App* render_cmd = app.add_subcommand("render", "Render a scene at manifest views");
  render_cmd->add_option("ply", ply_path)->required();
  render_cmd->add_option("manifest", manifest_path)->required();
  render_cmd->add_option("--out", out_dir);
  render_cmd->add_option("--views", view_filter);
  render_cmd->add_option("--depth-format", depth_ext)->check(CLI::IsMember({"pfm", "png"}));
  render_cmd->add_option("--config", config_path);
  render_cmd->add_option("--set", set_entries);
  render_cmd->add_option("--threads", threads);

  CLI::App* finetune_cmd = app.add_subcommand("finetune", "Depth-regularized refinement");
  finetune_cmd->add_option("ply", ply_path)->required();
  finetune_cmd->add_option("manifest", manifest_path)->required();
  finetune_cmd->add_option("--out", out_dir);
  finetune_cmd->add_option("--iters", iters);
  finetune_cmd->add_option("--config", config_path);
  finetune_cmd->add_option("--set", set_entries);
  finetune_cmd->add_option("--checkpoint-interval", checkpoint_interval);
  finetune_cmd->add_option("--threads", threads);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Compare rendered views against ground truth");
  eval_cmd->add_option("--pred", pred_dir)->required();
  eval_cmd->add_option("--gt", manifest_path)->required();
  eval_cmd->add_option("--out", eval_out);

  CLI::App* stats_cmd = app.add_subcommand("stats", "Summarize fusion statistics");
  stats_cmd->add_option("stats_json", stats_path)->required();

  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic test scene");
  synth_cmd->add_option("--out", out_dir)->required();
  synth_cmd->add_option("--views", synth_views);
  synth_cmd->add_option("--width", synth_width);
  synth_cmd->add_option("--height", synth_height);
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_flag("--floater", synth_floater, "Plant a depth-phantom floater");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    PipelineConfig config;
    if (reconstruct_cmd->parsed() || render_cmd->parsed() || finetune_cmd->parsed()) {
      auto overrides = parse_overrides(set_entries);
      if (use_gt_depth) overrides["lift.use_gt_depth"] = "true";
      if (threads > 0) overrides["process.threads"] = std::to_string(threads);
      if (iters >= 0) overrides["finetune.iters"] = std::to_string(iters);
      if (seed > 0) overrides["process.seed"] = std::to_string(seed);
      config = load_config(config_path, overrides);
      if (config.threads > 0) set_thread_count(config.threads);
    }

    if (reconstruct_cmd->parsed())
      return cmd_reconstruct(manifest_path, out_dir, config);
    if (render_cmd->parsed())
      return cmd_render(ply_path, manifest_path, out_dir, view_filter, depth_ext,
                        config.tile_size);
    if (finetune_cmd->parsed())
      return cmd_finetune(ply_path, manifest_path, out_dir, config, checkpoint_interval);
    if (eval_cmd->parsed()) return cmd_eval(pred_dir, manifest_path, eval_out);
    if (stats_cmd->parsed()) return cmd_stats(stats_path);
    if (synth_cmd->parsed())
      return cmd_synth(out_dir, synth_views, synth_width, synth_height, seed, synth_floater);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FinetuneDivergence& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const SceneIoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
