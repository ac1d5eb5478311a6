#include "splatfuse/scene_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "splatfuse/image_io.hpp"

namespace splatfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_tag(size_t index) { return "frame " + std::to_string(index); }

Intrinsics parse_intrinsics(const json& j, size_t index) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  if (!k.valid())
    throw SceneIoError(frame_tag(index) + ": intrinsics violate fx,fy > 0 and principal point bounds");
  return k;
}

// Re-orthonormalize a near-rotation so downstream identities hold to 1e-9.
Mat3 orthonormalized(const Mat3& r) {
  const Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    out = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return out;
}

Pose pose_from_camera_to_world(const Eigen::Matrix4d& c2w, size_t index) {
  const Mat3 r = c2w.topLeftCorner<3, 3>();
  if (std::abs(r.determinant()) < 1e-9)
    throw SceneIoError(frame_tag(index) + ": camera-to-world pose is not invertible");
  if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      r.determinant() < 0)
    throw SceneIoError(frame_tag(index) + ": pose rotation is not orthonormal");
  const Mat3 rw = orthonormalized(r);
  Pose pose;
  pose.rotation = rw.transpose();
  pose.translation = -(rw.transpose() * c2w.topRightCorner<3, 1>());
  return pose;
}

DepthMap load_depth(const std::string& path, const std::string& unit, size_t index) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".pfm") {
    if (unit != "m")
      throw SceneIoError(frame_tag(index) + ": PFM depth requires depth_unit \"m\"");
    return read_pfm(path);
  }
  if (ext == ".png") {
    const Image<uint16_t> raw = read_png_gray16(path);
    double scale = 0;
    if (unit == "mm") {
      scale = 1e-3;
    } else if (unit == "m") {
      scale = 1.0;
    } else {
      throw SceneIoError(frame_tag(index) + ": unknown depth unit \"" + unit + "\"");
    }
    DepthMap out(raw.height, raw.width, 1);
    for (size_t i = 0; i < raw.data.size(); ++i)
      out.data[i] = static_cast<float>(raw.data[i] * scale);
    return out;
  }
  throw SceneIoError(frame_tag(index) + ": unsupported depth extension \"" + ext + "\"");
}

}  // namespace

SceneManifest parse_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw SceneIoError("cannot open manifest: " + manifest_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SceneIoError("manifest is not valid JSON: " + manifest_path + ": " + e.what());
  }

  SceneManifest m;
  m.version = j.value("version", 1);
  m.depth_unit = j.value("depth_unit", "mm");
  if (m.depth_unit != "mm" && m.depth_unit != "m")
    throw SceneIoError("unknown depth unit \"" + m.depth_unit + "\" in " + manifest_path);
  m.near_hint = j.value("near", 0.25);
  m.far_hint = j.value("far", 8.0);

  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty())
    throw SceneIoError("manifest needs a non-empty frames array: " + manifest_path);

  const fs::path base = fs::path(manifest_path).parent_path();
  for (size_t i = 0; i < j["frames"].size(); ++i) {
    const json& jf = j["frames"][i];
    SceneManifest::FrameEntry entry;
    entry.image_path = (base / jf.at("image").get<std::string>()).string();
    if (jf.contains("depth")) entry.depth_path = (base / jf.at("depth").get<std::string>()).string();
    const auto pose_values = jf.at("pose").get<std::vector<double>>();
    if (pose_values.size() != 16)
      throw SceneIoError(frame_tag(i) + ": pose must hold 16 row-major values");
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) entry.camera_to_world(r, c) = pose_values[4 * r + c];
    entry.intrinsics = parse_intrinsics(jf.at("intrinsics"), i);
    m.frames.push_back(std::move(entry));
  }
  return m;
}

std::vector<CameraFrame> load_scene(const std::string& manifest_path,
                                    SceneManifest* manifest_out) {
  const SceneManifest m = parse_manifest(manifest_path);
  std::vector<CameraFrame> frames;
  frames.reserve(m.frames.size());
  for (size_t i = 0; i < m.frames.size(); ++i) {
    const auto& entry = m.frames[i];
    CameraFrame frame;
    frame.intrinsics = entry.intrinsics;
    frame.pose = pose_from_camera_to_world(entry.camera_to_world, i);
    if (!fs::exists(entry.image_path))
      throw SceneIoError(frame_tag(i) + ": missing image file " + entry.image_path);
    frame.image = read_png_rgb(entry.image_path);
    frame.image_path = entry.image_path;
    if (!entry.depth_path.empty()) {
      if (!fs::exists(entry.depth_path))
        throw SceneIoError(frame_tag(i) + ": missing depth file " + entry.depth_path);
      frame.depth = load_depth(entry.depth_path, m.depth_unit, i);
      frame.depth_path = entry.depth_path;
    }
    frames.push_back(std::move(frame));
  }
  if (manifest_out) *manifest_out = m;
  return frames;
}

std::string write_scene(const std::vector<CameraFrame>& frames, const std::string& directory) {
  fs::create_directories(directory);
  json j;
  j["version"] = 1;
  j["depth_unit"] = "m";
  j["near"] = 0.25;
  j["far"] = 8.0;
  j["frames"] = json::array();

  for (size_t i = 0; i < frames.size(); ++i) {
    const CameraFrame& f = frames[i];
    std::ostringstream tag;
    tag << std::setw(4) << std::setfill('0') << i;
    const std::string image_name = "color_" + tag.str() + ".png";
    write_png_rgb((fs::path(directory) / image_name).string(), f.image);

    json jf;
    jf["image"] = image_name;
    if (f.has_depth()) {
      const std::string depth_name = "depth_" + tag.str() + ".pfm";
      write_pfm((fs::path(directory) / depth_name).string(), f.depth);
      jf["depth"] = depth_name;
    }
    const Pose c2w = f.pose.inverse();
    Eigen::Matrix4d mat = Eigen::Matrix4d::Identity();
    mat.topLeftCorner<3, 3>() = c2w.rotation;
    mat.topRightCorner<3, 1>() = c2w.translation;
    std::vector<double> pose_values(16);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) pose_values[4 * r + c] = mat(r, c);
    jf["pose"] = pose_values;
    jf["intrinsics"] = {{"fx", f.intrinsics.fx},   {"fy", f.intrinsics.fy},
                        {"cx", f.intrinsics.cx},   {"cy", f.intrinsics.cy},
                        {"width", f.intrinsics.width}, {"height", f.intrinsics.height}};
    j["frames"].push_back(jf);
  }

  const std::string manifest_path = (fs::path(directory) / "scene.json").string();
  std::ofstream out(manifest_path);
  out << std::setprecision(17) << j.dump(2) << "\n";
  return manifest_path;
}

}  // namespace splatfuse
