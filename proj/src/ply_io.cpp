#include "splatfuse/ply_io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace splatfuse {

namespace {

const std::array<const char*, 14> kFields = {
    "x",       "y",       "z",       "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0",   "rot_1",   "rot_2",   "rot_3",   "f_dc_0",  "f_dc_1",  "f_dc_2"};

}  // namespace

void export_ply(const GaussianPrimitives& prims, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("export_ply: cannot write " + path);

  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << prims.size() << "\n";
  for (const char* f : kFields) out << "property float " << f << "\n";
  out << "end_header\n";

  std::vector<float> row(kFields.size());
  for (size_t i = 0; i < prims.size(); ++i) {
    row[0] = static_cast<float>(prims.centers[i].x());
    row[1] = static_cast<float>(prims.centers[i].y());
    row[2] = static_cast<float>(prims.centers[i].z());
    row[3] = static_cast<float>(logit(prims.opacities[i]));
    for (int c = 0; c < 3; ++c) row[4 + c] = static_cast<float>(std::log(prims.scales[i][c]));
    row[7] = static_cast<float>(prims.rotations[i].w());
    row[8] = static_cast<float>(prims.rotations[i].x());
    row[9] = static_cast<float>(prims.rotations[i].y());
    row[10] = static_cast<float>(prims.rotations[i].z());
    for (int c = 0; c < 3; ++c)
      row[11 + c] = static_cast<float>((prims.colors[i][c] - 0.5) / kSh0);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("export_ply: write failed for " + path);
}

GaussianPrimitives import_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("import_ply: cannot open " + path);

  std::string line;
  std::getline(in, line);
  if (line != "ply") throw std::runtime_error("import_ply: not a PLY file: " + path);
  size_t count = 0;
  std::vector<std::string> props;
  bool binary_le = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw std::runtime_error("import_ply: unexpected element " + name);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw std::runtime_error("import_ply: only float properties supported");
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw std::runtime_error("import_ply: expected binary little-endian: " + path);

  std::vector<int> slot(kFields.size(), -1);
  for (size_t i = 0; i < kFields.size(); ++i)
    for (size_t p = 0; p < props.size(); ++p)
      if (props[p] == kFields[i]) slot[i] = static_cast<int>(p);
  for (size_t i = 0; i < kFields.size(); ++i)
    if (slot[i] < 0)
      throw std::runtime_error(std::string("import_ply: missing property ") + kFields[i]);

  GaussianPrimitives prims;
  prims.centers.resize(count);
  prims.rotations.resize(count);
  prims.scales.resize(count);
  prims.opacities.resize(count);
  prims.colors.resize(count);

  std::vector<float> row(props.size());
  for (size_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw std::runtime_error("import_ply: truncated payload: " + path);
    auto v = [&](int field) { return static_cast<double>(row[slot[field]]); };
    prims.centers[i] = Vec3(v(0), v(1), v(2));
    prims.opacities[i] = sigmoid(v(3));
    prims.scales[i] = Vec3(std::exp(v(4)), std::exp(v(5)), std::exp(v(6)));
    prims.rotations[i] = Quat(v(7), v(8), v(9), v(10));
    prims.colors[i] = Vec3(v(11) * kSh0 + 0.5, v(12) * kSh0 + 0.5, v(13) * kSh0 + 0.5);
  }
  return prims;
}

}  // namespace splatfuse
