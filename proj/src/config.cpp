#include "splatfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace splatfuse {

MatchingConfig PipelineConfig::matching() const {
  MatchingConfig m;
  m.d_near = d_near;
  m.d_far = d_far;
  m.num_planes = num_planes;
  m.plane_spacing =
      plane_spacing == "uniform" ? PlaneSpacing::Uniform : PlaneSpacing::InverseDepth;
  m.temperature = temperature;
  m.num_neighbors = num_neighbors;
  return m;
}

PtfOptions PipelineConfig::ptf() const {
  PtfOptions p;
  p.delta = ptf_delta;
  p.broader = broader_fusion;
  p.fusion_enabled = enable_fusion;
  return p;
}

WfrOptions PipelineConfig::wfr() const {
  WfrOptions w;
  w.delta = wfr_delta;
  w.epsilon_floor = wfr_epsilon_floor;
  if (wfr_strategy == "neighbor_accumulate") w.strategy = WfrStrategy::NeighborAccumulate;
  else if (wfr_strategy == "no_accumulate") w.strategy = WfrStrategy::NoAccumulate;
  else if (wfr_strategy == "uniform") w.strategy = WfrStrategy::Uniform;
  else if (wfr_strategy == "direct_removal") w.strategy = WfrStrategy::DirectRemoval;
  else throw ConfigError("unknown wfr_strategy: " + wfr_strategy);
  return w;
}

FinetuneConfig PipelineConfig::finetune() const {
  FinetuneConfig f;
  f.iterations = finetune_iters;
  f.lambda1 = lambda1;
  f.lambda2 = lambda2;
  f.use_ssim = use_ssim_loss;
  f.lr_position = lr_position;
  f.lr_log_scale = lr_log_scale;
  f.lr_opacity_logit = lr_opacity;
  f.lr_color = lr_color;
  f.tile_size = tile_size;
  f.random_sampling = view_sampling == "random";
  f.sampling_seed = seed;
  return f;
}

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace

std::map<std::string, std::string> parse_toml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    out[key] = value;
  }
  return out;
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: \"" + value + "\"");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (v != static_cast<int>(v)) throw ConfigError("config key " + key + ": expected an integer");
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config key " + key + ": expected true or false, got \"" + value + "\"");
}

}  // namespace

PipelineConfig apply_config_entries(PipelineConfig c,
                                    const std::map<std::string, std::string>& entries) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> schema = {
      {"matching.d_near", [&](auto& k, auto& v) { c.d_near = parse_double(k, v); }},
      {"matching.d_far", [&](auto& k, auto& v) { c.d_far = parse_double(k, v); }},
      {"matching.num_planes", [&](auto& k, auto& v) { c.num_planes = parse_int(k, v); }},
      {"matching.plane_spacing", [&](auto&, auto& v) { c.plane_spacing = v; }},
      {"matching.temperature", [&](auto& k, auto& v) { c.temperature = parse_double(k, v); }},
      {"matching.num_neighbors", [&](auto& k, auto& v) { c.num_neighbors = parse_int(k, v); }},
      {"lift.stride", [&](auto& k, auto& v) { c.stride = parse_int(k, v); }},
      {"lift.base_scale_px", [&](auto& k, auto& v) { c.base_scale_px = parse_double(k, v); }},
      {"lift.use_gt_depth", [&](auto& k, auto& v) { c.use_gt_depth = parse_bool(k, v); }},
      {"ptf.enable_fusion", [&](auto& k, auto& v) { c.enable_fusion = parse_bool(k, v); }},
      {"ptf.broader_fusion", [&](auto& k, auto& v) { c.broader_fusion = parse_bool(k, v); }},
      {"ptf.ptf_delta", [&](auto& k, auto& v) { c.ptf_delta = parse_double(k, v); }},
      {"wfr.enable_wfr", [&](auto& k, auto& v) { c.enable_wfr = parse_bool(k, v); }},
      {"wfr.wfr_delta", [&](auto& k, auto& v) { c.wfr_delta = parse_double(k, v); }},
      {"wfr.wfr_strategy", [&](auto&, auto& v) { c.wfr_strategy = v; }},
      {"wfr.wfr_epsilon_floor",
       [&](auto& k, auto& v) { c.wfr_epsilon_floor = parse_double(k, v); }},
      {"render.tile_size", [&](auto& k, auto& v) { c.tile_size = parse_int(k, v); }},
      {"finetune.iters", [&](auto& k, auto& v) { c.finetune_iters = parse_int(k, v); }},
      {"finetune.lambda1", [&](auto& k, auto& v) { c.lambda1 = parse_double(k, v); }},
      {"finetune.lambda2", [&](auto& k, auto& v) { c.lambda2 = parse_double(k, v); }},
      {"finetune.use_ssim_loss", [&](auto& k, auto& v) { c.use_ssim_loss = parse_bool(k, v); }},
      {"finetune.lr_position", [&](auto& k, auto& v) { c.lr_position = parse_double(k, v); }},
      {"finetune.lr_log_scale", [&](auto& k, auto& v) { c.lr_log_scale = parse_double(k, v); }},
      {"finetune.lr_opacity", [&](auto& k, auto& v) { c.lr_opacity = parse_double(k, v); }},
      {"finetune.lr_color", [&](auto& k, auto& v) { c.lr_color = parse_double(k, v); }},
      {"finetune.view_sampling", [&](auto&, auto& v) { c.view_sampling = v; }},
      {"process.threads", [&](auto& k, auto& v) { c.threads = parse_int(k, v); }},
      {"process.seed",
       [&](auto& k, auto& v) { c.seed = static_cast<uint64_t>(parse_double(k, v)); }},
  };

  for (const auto& [key, value] : entries) {
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError("unknown config key: " + key);
    it->second(key, value);
  }

  // Range validation happens after all entries so overrides can fix files.
  if (!(c.d_near > 0) || !(c.d_far > c.d_near))
    throw ConfigError("need 0 < matching.d_near < matching.d_far");
  if (c.num_planes < 2) throw ConfigError("matching.num_planes must be >= 2");
  if (c.plane_spacing != "uniform" && c.plane_spacing != "inverse")
    throw ConfigError("matching.plane_spacing must be \"uniform\" or \"inverse\"");
  if (!(c.temperature > 0)) throw ConfigError("matching.temperature must be > 0");
  if (c.num_neighbors < 1) throw ConfigError("matching.num_neighbors must be >= 1");
  if (c.stride != 1 && c.stride != 2 && c.stride != 4)
    throw ConfigError("lift.stride must be 1, 2 or 4");
  if (!(c.base_scale_px > 0)) throw ConfigError("lift.base_scale_px must be > 0");
  if (!(c.ptf_delta > 0)) throw ConfigError("ptf.ptf_delta must be > 0");
  if (!(c.wfr_delta > 0)) throw ConfigError("wfr.wfr_delta must be > 0");
  if (!(c.wfr_epsilon_floor > 0 && c.wfr_epsilon_floor <= 1))
    throw ConfigError("wfr.wfr_epsilon_floor must be in (0, 1]");
  if (c.wfr_strategy != "neighbor_accumulate" && c.wfr_strategy != "no_accumulate" &&
      c.wfr_strategy != "uniform" && c.wfr_strategy != "direct_removal")
    throw ConfigError("unknown wfr.wfr_strategy: " + c.wfr_strategy);
  if (c.tile_size != 8 && c.tile_size != 16 && c.tile_size != 32)
    throw ConfigError("render.tile_size must be 8, 16 or 32");
  if (c.finetune_iters < 0) throw ConfigError("finetune.iters must be >= 0");
  if (!(c.lambda1 >= 0 && c.lambda1 < 1)) throw ConfigError("finetune.lambda1 must be in [0, 1)");
  if (!(c.lambda2 >= 0)) throw ConfigError("finetune.lambda2 must be >= 0");
  if (c.view_sampling != "roundrobin" && c.view_sampling != "random")
    throw ConfigError("finetune.view_sampling must be \"roundrobin\" or \"random\"");
  if (c.threads < 0) throw ConfigError("process.threads must be >= 0");
  return c;
}

PipelineConfig load_config(const std::string& toml_path,
                           const std::map<std::string, std::string>& overrides) {
  PipelineConfig c;
  std::map<std::string, std::string> entries;
  if (!toml_path.empty()) entries = parse_toml(toml_path);
  for (const auto& [k, v] : overrides) entries[k] = v;
  return apply_config_entries(c, entries);
}

std::string config_to_string(const PipelineConfig& c) {
  std::ostringstream s;
  s << "[matching]\n"
    << "d_near = " << c.d_near << "\nd_far = " << c.d_far << "\nnum_planes = " << c.num_planes
    << "\nplane_spacing = \"" << c.plane_spacing << "\"\ntemperature = " << c.temperature
    << "\nnum_neighbors = " << c.num_neighbors << "\n\n[lift]\nstride = " << c.stride
    << "\nbase_scale_px = " << c.base_scale_px
    << "\nuse_gt_depth = " << (c.use_gt_depth ? "true" : "false")
    << "\n\n[ptf]\nenable_fusion = " << (c.enable_fusion ? "true" : "false")
    << "\nbroader_fusion = " << (c.broader_fusion ? "true" : "false")
    << "\nptf_delta = " << c.ptf_delta
    << "\n\n[wfr]\nenable_wfr = " << (c.enable_wfr ? "true" : "false")
    << "\nwfr_delta = " << c.wfr_delta << "\nwfr_strategy = \"" << c.wfr_strategy
    << "\"\nwfr_epsilon_floor = " << c.wfr_epsilon_floor
    << "\n\n[render]\ntile_size = " << c.tile_size
    << "\n\n[finetune]\niters = " << c.finetune_iters << "\nlambda1 = " << c.lambda1
    << "\nlambda2 = " << c.lambda2
    << "\nuse_ssim_loss = " << (c.use_ssim_loss ? "true" : "false")
    << "\nlr_position = " << c.lr_position << "\nlr_log_scale = " << c.lr_log_scale
    << "\nlr_opacity = " << c.lr_opacity << "\nlr_color = " << c.lr_color
    << "\nview_sampling = \"" << c.view_sampling << "\"\n\n[process]\nthreads = " << c.threads
    << "\nseed = " << c.seed << "\n";
  return s.str();
}

}  // namespace splatfuse
