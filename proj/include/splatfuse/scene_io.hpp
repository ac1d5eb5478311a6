#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splatfuse/core/image.hpp"
#include "splatfuse/geometry.hpp"

namespace splatfuse {

// Loader/config errors map to CLI exit code 3 (data) via this type.
struct SceneIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CameraFrame {
  Intrinsics intrinsics;
  Pose pose;          // world-to-camera (manifest stores camera-to-world)
  ImageF image;       // h x w x 3 in [0,1]
  DepthMap depth;     // meters, empty if the frame has no depth
  std::string image_path;
  std::string depth_path;

  bool has_depth() const { return !depth.empty(); }
};

struct SceneManifest {
  int version = 1;
  std::string depth_unit = "mm";  // "mm" | "m"
  double near_hint = 0.25;
  double far_hint = 8.0;
  struct FrameEntry {
    std::string image_path;
    std::string depth_path;  // optional
    Eigen::Matrix4d camera_to_world = Eigen::Matrix4d::Identity();
    Intrinsics intrinsics;
  };
  std::vector<FrameEntry> frames;
};

SceneManifest parse_manifest(const std::string& manifest_path);

// Loads images/depths and inverts poses to world-to-camera. Errors carry the
// frame index and offending path.
std::vector<CameraFrame> load_scene(const std::string& manifest_path,
                                    SceneManifest* manifest_out = nullptr);

// Writes frames (images as 8-bit PNG, depths as PFM meters) plus a manifest
// into `directory`; returns the manifest path.
std::string write_scene(const std::vector<CameraFrame>& frames, const std::string& directory);

}  // namespace splatfuse
