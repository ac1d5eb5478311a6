#include "splatfuse/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace splatfuse {

namespace {

constexpr float kEpsilonChannel = 0.01f;

inline float luma(const float* rgb) {
  return 0.299f * rgb[0] + 0.587f * rgb[1] + 0.114f * rgb[2];
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Sobel with clamped borders.
void sobel(const ImageF& src, ImageF& dx, ImageF& dy) {
  const int h = src.height, w = src.width;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto s = [&](int yy, int xx) {
        return src.at(clampi(yy, 0, h - 1), clampi(xx, 0, w - 1));
      };
      dx.at(y, x) = (s(y - 1, x + 1) + 2 * s(y, x + 1) + s(y + 1, x + 1)) -
                    (s(y - 1, x - 1) + 2 * s(y, x - 1) + s(y + 1, x - 1));
      dy.at(y, x) = (s(y + 1, x - 1) + 2 * s(y + 1, x) + s(y + 1, x + 1)) -
                    (s(y - 1, x - 1) + 2 * s(y - 1, x) + s(y - 1, x + 1));
    }
  }
}

ImageF box3(const ImageF& src) {
  const int h = src.height, w = src.width;
  ImageF out(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float sum = 0;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i)
          sum += src.at(clampi(y + j, 0, h - 1), clampi(x + i, 0, w - 1));
      out.at(y, x) = sum / 9.0f;
    }
  }
  return out;
}

}  // namespace

std::vector<double> make_depth_planes(double d_near, double d_far, int count,
                                      PlaneSpacing spacing) {
  if (!(d_near > 0) || !(d_far > d_near) || count < 2)
    throw std::invalid_argument("make_depth_planes: need 0 < d_near < d_far and count >= 2");
  std::vector<double> planes(count);
  for (int k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / (count - 1);
    if (spacing == PlaneSpacing::Uniform) {
      planes[k] = d_near + t * (d_far - d_near);
    } else {
      planes[k] = 1.0 / (1.0 / d_near + t * (1.0 / d_far - 1.0 / d_near));
    }
  }
  planes.front() = d_near;
  planes.back() = d_far;
  return planes;
}

FeatureMap compute_matching_features(const ImageF& image) {
  if (image.empty() || image.channels != 3)
    throw std::invalid_argument("compute_matching_features: expected non-empty RGB image");
  const int h = image.height / 4, w = image.width / 4;
  if (h == 0 || w == 0)
    throw std::invalid_argument("compute_matching_features: image smaller than 4x4");

  // 4x4 box downsample.
  ImageF rgb(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc[3] = {0, 0, 0};
      for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
          for (int c = 0; c < 3; ++c) acc[c] += image.at(4 * y + j, 4 * x + i, c);
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = acc[c] / 16.0f;
    }
  }

  ImageF lum(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum.at(y, x) = luma(&rgb.at(y, x, 0));

  ImageF dx1(h, w, 1), dy1(h, w, 1), dx2(h, w, 1), dy2(h, w, 1);
  sobel(lum, dx1, dy1);
  const ImageF lum_smooth = box3(lum);
  sobel(lum_smooth, dx2, dy2);

  FeatureMap fm;
  fm.values = ImageF(h, w, FeatureMap::kChannels);
  fm.texture = ImageF(h, w, 1);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // 5x5 local color mean.
      float mean[3] = {0, 0, 0};
      int count = 0;
      for (int j = -2; j <= 2; ++j)
        for (int i = -2; i <= 2; ++i) {
          const int yy = clampi(y + j, 0, h - 1), xx = clampi(x + i, 0, w - 1);
          for (int c = 0; c < 3; ++c) mean[c] += rgb.at(yy, xx, c);
          ++count;
        }
      // 3x3 luma variance.
      double lsum = 0, lsq = 0;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) {
          const float v = lum.at(clampi(y + j, 0, h - 1), clampi(x + i, 0, w - 1));
          lsum += v;
          lsq += static_cast<double>(v) * v;
        }
      const double lmean = lsum / 9.0;
      const float var = static_cast<float>(std::max(0.0, lsq / 9.0 - lmean * lmean));

      float* f = &fm.values.at(y, x, 0);
      for (int c = 0; c < 3; ++c) f[c] = rgb.at(y, x, c) - mean[c] / count;
      f[3] = dx1.at(y, x);
      f[4] = dy1.at(y, x);
      f[5] = dx2.at(y, x);
      f[6] = dy2.at(y, x);
      f[7] = var;
      f[8] = kEpsilonChannel;
      fm.texture.at(y, x) = var;

      double norm2 = 0;
      for (int c = 0; c < FeatureMap::kChannels; ++c) norm2 += static_cast<double>(f[c]) * f[c];
      const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
      for (int c = 0; c < FeatureMap::kChannels; ++c) f[c] *= inv;
    }
  }
  return fm;
}

std::vector<int> select_nearby_views(const std::vector<Pose>& poses, int t, int n) {
  const int count = static_cast<int>(poses.size());
  if (n >= count)
    throw std::invalid_argument("select_nearby_views: need n < number of views");
  constexpr double kRotWeight = 0.5;  // meters per radian
  std::vector<std::pair<double, int>> dist;
  dist.reserve(count - 1);
  for (int i = 0; i < count; ++i) {
    if (i == t) continue;
    const double dt = (poses[i].translation - poses[t].translation).norm();
    const double c = std::clamp(
        ((poses[i].rotation.transpose() * poses[t].rotation).trace() - 1.0) / 2.0, -1.0, 1.0);
    dist.emplace_back(dt + kRotWeight * std::acos(c), i);
  }
  std::sort(dist.begin(), dist.end());
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = dist[i].second;
  return out;
}

bool sample_bilinear(const ImageF& img, double x, double y, float* out) {
  const int c = img.channels;
  if (x < 0 || y < 0 || x > img.width - 1 || y > img.height - 1) {
    for (int i = 0; i < c; ++i) out[i] = 0;
    return false;
  }
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy);
  const double w10 = (1 - fx) * fy, w11 = fx * fy;
  const float* p00 = &img.at(y0, x0, 0);
  const float* p01 = &img.at(y0, x1, 0);
  const float* p10 = &img.at(y1, x0, 0);
  const float* p11 = &img.at(y1, x1, 0);
  for (int i = 0; i < c; ++i)
    out[i] = static_cast<float>(w00 * p00[i] + w01 * p01[i] + w10 * p10[i] + w11 * p11[i]);
  return true;
}

WarpedFeatures warp_features(const FeatureMap& src, const Pose& ref_to_src,
                             const Intrinsics& k, double plane_depth) {
  if (!(plane_depth > 0)) throw std::invalid_argument("warp_features: plane depth must be > 0");
  const int h = src.height(), w = src.width();
  WarpedFeatures out;
  out.values = ImageF(h, w, FeatureMap::kChannels);
  out.valid.assign(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 ref_cam((x - k.cx) * plane_depth / k.fx, (y - k.cy) * plane_depth / k.fy,
                         plane_depth);
      const Vec3 src_cam = ref_to_src.apply(ref_cam);
      if (src_cam.z() <= 1e-9) continue;
      const double u = k.fx * src_cam.x() / src_cam.z() + k.cx;
      const double v = k.fy * src_cam.y() / src_cam.z() + k.cy;
      if (sample_bilinear(src.values, u, v, &out.values.at(y, x, 0)))
        out.valid[static_cast<size_t>(y) * w + x] = 1;
    }
  }
  return out;
}

namespace {

void cost_volume_plane(const FeatureMap& ref, const std::vector<NeighborView>& neighbors,
                       const Intrinsics& k, double plane_depth, CostVolume& cv, int plane) {
  const int h = cv.height, w = cv.width;
  float warped[FeatureMap::kChannels];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 ref_cam((x - k.cx) * plane_depth / k.fx, (y - k.cy) * plane_depth / k.fy,
                         plane_depth);
      double sum = 0;
      int valid = 0;
      for (const NeighborView& nb : neighbors) {
        const Vec3 src_cam = nb.ref_to_src.apply(ref_cam);
        if (src_cam.z() <= 1e-9) continue;
        const double u = k.fx * src_cam.x() / src_cam.z() + k.cx;
        const double v = k.fy * src_cam.y() / src_cam.z() + k.cy;
        if (!sample_bilinear(nb.features->values, u, v, warped)) continue;
        const float* f = &ref.values.at(y, x, 0);
        double dot = 0, norm2 = 0;
        for (int c = 0; c < FeatureMap::kChannels; ++c) {
          dot += static_cast<double>(f[c]) * warped[c];
          norm2 += static_cast<double>(warped[c]) * warped[c];
        }
        if (norm2 < 1e-24) continue;
        sum += dot / std::sqrt(norm2);  // reference features are unit norm
        ++valid;
      }
      cv.at(plane, y, x) = valid > 0 ? static_cast<float>(sum / valid) : 0.0f;
    }
  }
}

}  // namespace

CostVolume build_cost_volume(const FeatureMap& ref, const std::vector<NeighborView>& neighbors,
                             const Intrinsics& k, const std::vector<double>& planes) {
  if (neighbors.empty()) throw std::invalid_argument("build_cost_volume: no neighbor views");
  CostVolume cv;
  cv.plane_depths = planes;
  cv.height = ref.height();
  cv.width = ref.width();
  cv.scores.assign(static_cast<size_t>(cv.num_planes()) * cv.height * cv.width, 0.0f);
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < cv.num_planes(); ++plane)
    cost_volume_plane(ref, neighbors, k, planes[plane], cv, plane);
  return cv;
}

CostVolume build_cost_volume_serial(const FeatureMap& ref,
                                    const std::vector<NeighborView>& neighbors,
                                    const Intrinsics& k, const std::vector<double>& planes) {
  if (neighbors.empty()) throw std::invalid_argument("build_cost_volume: no neighbor views");
  CostVolume cv;
  cv.plane_depths = planes;
  cv.height = ref.height();
  cv.width = ref.width();
  cv.scores.assign(static_cast<size_t>(cv.num_planes()) * cv.height * cv.width, 0.0f);
  for (int plane = 0; plane < cv.num_planes(); ++plane)
    cost_volume_plane(ref, neighbors, k, planes[plane], cv, plane);
  return cv;
}

CostVolume smooth_cost_volume(const CostVolume& cv) {
  CostVolume out = cv;
  const int h = cv.height, w = cv.width;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < cv.num_planes(); ++plane) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float sum = 0;
        int count = 0;
        for (int j = std::max(0, y - 1); j <= std::min(h - 1, y + 1); ++j)
          for (int i = std::max(0, x - 1); i <= std::min(w - 1, x + 1); ++i) {
            sum += cv.at(plane, j, i);
            ++count;
          }
        out.at(plane, y, x) = sum / count;
      }
    }
  }
  return out;
}

DepthPrediction softargmax_depth(const CostVolume& cv, double temperature) {
  if (!(temperature > 0)) throw std::invalid_argument("softargmax_depth: temperature must be > 0");
  const int h = cv.height, w = cv.width, kn = cv.num_planes();
  DepthPrediction out;
  out.depth = DepthMap(h, w, 1);
  out.confidence = ConfidenceMap(h, w, 1);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    std::vector<double> p(kn);
    for (int x = 0; x < w; ++x) {
      double best = -1e300;
      for (int k = 0; k < kn; ++k) best = std::max(best, static_cast<double>(cv.at(k, y, x)));
      double denom = 0;
      for (int k = 0; k < kn; ++k) {
        p[k] = std::exp((cv.at(k, y, x) - best) / temperature);
        denom += p[k];
      }
      double depth = 0, peak = 0;
      for (int k = 0; k < kn; ++k) {
        const double prob = p[k] / denom;
        depth += prob * cv.plane_depths[k];
        peak = std::max(peak, prob);
      }
      out.depth.at(y, x) = static_cast<float>(depth);
      out.confidence.at(y, x) = static_cast<float>(peak);
    }
  }
  return out;
}

ImageF resample_bilinear(const ImageF& src, int out_h, int out_w) {
  ImageF out(out_h, out_w, src.channels);
  const double sy = static_cast<double>(src.height) / out_h;
  const double sx = static_cast<double>(src.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double u = (x + 0.5) * sx - 0.5;
      const double v = (y + 0.5) * sy - 0.5;
      const double uc = std::clamp(u, 0.0, static_cast<double>(src.width - 1));
      const double vc = std::clamp(v, 0.0, static_cast<double>(src.height - 1));
      sample_bilinear(src, uc, vc, &out.at(y, x, 0));
    }
  }
  return out;
}

}  // namespace splatfuse
