#include "histosge/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "histosge/errors.hpp"
#include "histosge/rng.hpp"

namespace histosge {

namespace {

struct Rgb {
  int r, g, b;
};

// H&E-like base colours, one per texture class (cycled).
constexpr Rgb kPalette[] = {
    {214, 120, 170}, {120, 80, 180}, {235, 180, 200}, {170, 60, 120},
    {200, 150, 220}, {90, 50, 140},  {245, 210, 225}, {150, 100, 160},
};

Rgb scale(Rgb c, double f) {
  auto s = [f](int v) { return std::clamp(static_cast<int>(std::lround(v * f)), 0, 255); };
  return {s(c.r), s(c.g), s(c.b)};
}

Rgb texture_colour(int texture, int x, int y) {
  const Rgb base = kPalette[texture % 8];
  switch (texture % 4) {
    case 0:  // horizontal stripes, period 8
      return ((y / 4) % 2 == 0) ? base : scale(base, 0.55);
    case 1: {  // dots of radius 3 on a 12 px lattice
      const int dx = x % 12 - 6, dy = y % 12 - 6;
      return dx * dx + dy * dy <= 9 ? scale(base, 0.4) : base;
    }
    case 2: {  // triangle-wave ramp along x, period 48
      const int phase = x % 48;
      const double t = (phase < 24 ? phase : 48 - phase) / 24.0;
      return scale(base, 0.6 + 0.4 * t);
    }
    default:
      return base;
  }
}

std::string gene_name(int g) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "G%04d", g);
  return buf;
}

std::string spot_name(int r, int c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spot_%03d_%03d", r, c);
  return buf;
}

}  // namespace

std::vector<std::string> validate(const SynthConfig& cfg) {
  if (cfg.grid_rows < 2 || cfg.grid_cols < 2) throw ParameterError("synthetic grid must be at least 2x2");
  if (cfg.pitch_px < 2) throw ParameterError("pitch_px must be at least 2");
  if (cfg.n_genes < 1) throw ParameterError("n_genes must be positive");
  if (cfg.n_textures < 1) throw ParameterError("n_textures must be positive");
  if (!(cfg.noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be non-negative");
  std::vector<std::string> warnings;
  if (cfg.pitch_px < 50) {
    warnings.push_back("pitch " + std::to_string(cfg.pitch_px) + " px is below the 50 px patch size; patches overlap");
  }
  return warnings;
}

int SynthTruth::texture_at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width || y >= height) {
    throw BoundsError("pixel (" + std::to_string(x) + "," + std::to_string(y) + ") lies outside the image");
  }
  for (const auto& r : regions) {
    if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) return r.texture;
  }
  throw BoundsError("pixel not covered by any region");
}

std::pair<STDataset, SynthTruth> generate(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  SynthTruth truth;
  truth.width = cfg.grid_cols * cfg.pitch_px;
  truth.height = cfg.grid_rows * cfg.pitch_px;

  const int block_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.n_textures))));
  const int block_rows = (cfg.n_textures + block_cols - 1) / block_cols;
  auto edge = [&](int k, int blocks, int cells) {
    return static_cast<int>(std::lround(static_cast<double>(k) * cells / blocks)) * cfg.pitch_px;
  };
  for (int br = 0; br < block_rows; ++br) {
    for (int bc = 0; bc < block_cols; ++bc) {
      SynthRegion r;
      r.x0 = edge(bc, block_cols, cfg.grid_cols);
      r.x1 = edge(bc + 1, block_cols, cfg.grid_cols);
      r.y0 = edge(br, block_rows, cfg.grid_rows);
      r.y1 = edge(br + 1, block_rows, cfg.grid_rows);
      r.texture = (br * block_cols + bc) % cfg.n_textures;
      if (r.x1 > r.x0 && r.y1 > r.y0) truth.regions.push_back(r);
    }
  }

  truth.prototypes.resize(cfg.n_textures, cfg.n_genes);
  for (Eigen::Index i = 0; i < truth.prototypes.size(); ++i) truth.prototypes.data()[i] = rng.uniform_real(0.0, 3.0);
  for (int g = 0; g < cfg.n_genes; ++g) truth.gene_names.push_back(gene_name(g));

  STDataset ds;
  char slice[48];
  std::snprintf(slice, sizeof(slice), "synth_%llu", static_cast<unsigned long long>(cfg.seed));
  ds.slice_id = slice;
  ds.image = RgbImage(truth.width, truth.height);
  for (int y = 0; y < truth.height; ++y) {
    for (int x = 0; x < truth.width; ++x) {
      const Rgb c = texture_colour(truth.texture_at(x, y), x, y);
      const int jitter = static_cast<int>(rng.uniform_index(9)) - 4;
      auto px = [jitter](int v) { return static_cast<std::uint8_t>(std::clamp(v + jitter, 0, 255)); };
      ds.image.set(x, y, px(c.r), px(c.g), px(c.b));
    }
  }

  ds.gene_names = truth.gene_names;
  ds.expression.resize(static_cast<Eigen::Index>(cfg.grid_rows) * cfg.grid_cols, cfg.n_genes);
  std::map<std::string, std::string> labels;
  for (int r = 0; r < cfg.grid_rows; ++r) {
    for (int c = 0; c < cfg.grid_cols; ++c) {
      Spot s{spot_name(r, c), c * cfg.pitch_px + cfg.pitch_px / 2, r * cfg.pitch_px + cfg.pitch_px / 2, true};
      const int texture = truth.texture_at(s.x_px, s.y_px);
      const auto row = static_cast<Eigen::Index>(ds.spots.size());
      for (int g = 0; g < cfg.n_genes; ++g) {
        const double noise = cfg.noise_sigma > 0.0 ? rng.normal(0.0, cfg.noise_sigma) : 0.0;
        ds.expression(row, g) = std::max(0.0, truth.prototypes(texture, g) + noise);
      }
      labels[s.spot_id] = "T" + std::to_string(texture);
      ds.spots.push_back(std::move(s));
    }
  }
  ds.annotations = std::move(labels);
  validate(ds);
  return {std::move(ds), std::move(truth)};
}

Vector true_expression(const SynthTruth& truth, const Spot& spot) {
  return truth.prototypes.row(truth.texture_at(spot.x_px, spot.y_px)).transpose();
}

void save_truth(const SynthTruth& truth, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["width"] = truth.width;
  j["height"] = truth.height;
  j["regions"] = nlohmann::ordered_json::array();
  for (const auto& r : truth.regions) {
    j["regions"].push_back({{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}, {"texture", r.texture}});
  }
  j["gene_names"] = truth.gene_names;
  j["prototypes"] = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < truth.prototypes.rows(); ++i) {
    std::vector<double> row(truth.prototypes.row(i).begin(), truth.prototypes.row(i).end());
    j["prototypes"].push_back(row);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

SynthTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing or unreadable file: " + path.string());
  SynthTruth t;
  try {
    const auto j = nlohmann::json::parse(in);
    t.width = j.at("width").get<int>();
    t.height = j.at("height").get<int>();
    for (const auto& r : j.at("regions")) {
      t.regions.push_back({r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("x1").get<int>(),
                           r.at("y1").get<int>(), r.at("texture").get<int>()});
    }
    t.gene_names = j.at("gene_names").get<std::vector<std::string>>();
    const auto& protos = j.at("prototypes");
    t.prototypes.resize(static_cast<Eigen::Index>(protos.size()), static_cast<Eigen::Index>(t.gene_names.size()));
    for (std::size_t i = 0; i < protos.size(); ++i) {
      const auto row = protos[i].get<std::vector<double>>();
      if (row.size() != t.gene_names.size()) throw FormatError("prototype row length mismatch in " + path.string());
      for (std::size_t g = 0; g < row.size(); ++g) t.prototypes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)) = row[g];
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return t;
}

}  // namespace histosge
