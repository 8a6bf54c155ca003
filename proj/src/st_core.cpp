#include "histosge/st_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "histosge/errors.hpp"
#include "histosge/rng.hpp"
#include "text_util.hpp"

namespace histosge {

namespace fs = std::filesystem;
using detail::format_double;
using detail::split_csv_line;

namespace {

constexpr char kBinaryMagic[8] = {'H', 'S', 'G', 'E', 'X', 'P', 'R', '\0'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr std::size_t kCsvEntryLimit = 1'000'000;

static_assert(std::endian::native == std::endian::little, "binary matrix I/O assumes little endian");

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(",\n\r") == std::string::npos;
}

void write_binary_matrix(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t version = kBinaryVersion, reserved = 0;
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(kBinaryMagic, 8);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(rows * cols * 8));
  if (!out) throw IoError("short write to " + path.string());
}

Matrix read_binary_matrix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing or unreadable file: " + path.string());
  char magic[8];
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (!in || std::memcmp(magic, kBinaryMagic, 8) != 0) {
    throw FormatError("bad header in " + path.string());
  }
  if (version != kBinaryVersion) {
    throw FormatError("unsupported expression.bin version " + std::to_string(version));
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(rows * cols * 8));
  if (!in) throw FormatError("truncated matrix data in " + path.string());
  return m;
}

fs::path find_image(const fs::path& dir) {
  for (const char* name : {"image.png", "image.tiff", "image.tif"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw FormatError("missing file: " + (dir / "image.png").string() + " (or image.tiff)");
}

}  // namespace

void validate(const STDataset& ds) {
  if (ds.spots.empty()) throw ValidationError("dataset has no spots (n_spots >= 1 required)");
  if (ds.image.empty()) throw ValidationError("dataset has no image");
  if (static_cast<std::size_t>(ds.expression.rows()) != ds.spots.size()) {
    throw ValidationError("expression has " + std::to_string(ds.expression.rows()) + " rows but " +
                          std::to_string(ds.spots.size()) + " spots");
  }
  if (static_cast<std::size_t>(ds.expression.cols()) != ds.gene_names.size()) {
    throw ValidationError("expression has " + std::to_string(ds.expression.cols()) +
                          " columns but " + std::to_string(ds.gene_names.size()) + " gene names");
  }
  std::unordered_set<std::string> ids;
  for (const auto& s : ds.spots) {
    if (!valid_token(s.spot_id)) throw ValidationError("invalid spot id '" + s.spot_id + "'");
    if (!ids.insert(s.spot_id).second) throw ValidationError("duplicate spot id " + s.spot_id);
    if (s.x_px < 0 || s.y_px < 0 || s.x_px >= ds.image.width() || s.y_px >= ds.image.height()) {
      throw ValidationError("spot " + s.spot_id + " at (" + std::to_string(s.x_px) + "," +
                            std::to_string(s.y_px) + ") lies outside the " +
                            std::to_string(ds.image.width()) + "x" +
                            std::to_string(ds.image.height()) + " image");
    }
  }
  std::unordered_set<std::string> genes;
  for (const auto& g : ds.gene_names) {
    if (!valid_token(g)) throw ValidationError("invalid gene name '" + g + "'");
    if (!genes.insert(g).second) throw ValidationError("duplicate gene name " + g);
  }
  for (Eigen::Index i = 0; i < ds.expression.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.expression.cols(); ++j) {
      const double v = ds.expression(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw ValidationError("expression of spot " + ds.spots[i].spot_id + ", gene " +
                              ds.gene_names[j] + " is negative or non-finite");
      }
    }
  }
  if (ds.annotations) {
    for (const auto& [id, label] : *ds.annotations) {
      if (!ids.contains(id)) throw ValidationError("annotation for unknown spot " + id);
      if (!valid_token(label)) throw ValidationError("invalid annotation label for spot " + id);
    }
  }
}

double dropout_rate(const STDataset& ds) {
  if (ds.expression.size() == 0) return 0.0;
  const auto zeros = (ds.expression.array() == 0.0).count();
  return static_cast<double>(zeros) / static_cast<double>(ds.expression.size());
}

void write_coords_csv(const std::vector<Spot>& spots, const fs::path& path, bool with_measured) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (with_measured ? "spot_id,x_px,y_px,measured\n" : "spot_id,x_px,y_px\n");
  for (const auto& s : spots) {
    out << s.spot_id << ',' << s.x_px << ',' << s.y_px;
    if (with_measured) out << ',' << (s.measured ? 1 : 0);
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<Spot> read_coords_csv(const fs::path& path) {
  auto lines = detail::read_lines(path.string());
  if (lines.empty()) throw FormatError(path.string() + ": missing header row");
  auto header = split_csv_line(lines[0]);
  if (header.size() < 3 || header[0] != "spot_id" || header[1] != "x_px" || header[2] != "y_px" ||
      (header.size() == 4 && header[3] != "measured") || header.size() > 4) {
    throw FormatError(path.string() + ": header must be spot_id,x_px,y_px[,measured]");
  }
  std::vector<Spot> spots;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = split_csv_line(lines[i]);
    Spot s;
    if (f.size() != header.size() || !detail::parse_int(f[1], s.x_px) ||
        !detail::parse_int(f[2], s.y_px)) {
      throw FormatError(path.string() + ": malformed row " + std::to_string(i + 1));
    }
    s.spot_id = f[0];
    if (f.size() == 4) {
      int m = 0;
      if (!detail::parse_int(f[3], m) || (m != 0 && m != 1)) {
        throw FormatError(path.string() + ": measured must be 0 or 1 on row " + std::to_string(i + 1));
      }
      s.measured = m == 1;
    }
    spots.push_back(std::move(s));
  }
  return spots;
}

STDataset load_dataset(const fs::path& dir) {
  STDataset ds;
  ds.slice_id = dir.filename().string();
  if (ds.slice_id.empty()) ds.slice_id = dir.parent_path().filename().string();

  const auto coords_path = dir / "coords.csv";
  const auto genes_path = dir / "gene_names.txt";
  const auto csv_path = dir / "expression.csv";
  const auto bin_path = dir / "expression.bin";
  if (!fs::exists(coords_path)) throw FormatError("missing file: " + coords_path.string());
  if (!fs::exists(genes_path)) throw FormatError("missing file: " + genes_path.string());
  const bool has_csv = fs::exists(csv_path), has_bin = fs::exists(bin_path);
  if (!has_csv && !has_bin) {
    throw FormatError("missing file: " + csv_path.string() + " (or expression.bin)");
  }
  if (has_csv && has_bin) {
    throw FormatError(dir.string() + ": both expression.csv and expression.bin present");
  }

  ds.image = read_image(find_image(dir));
  ds.spots = read_coords_csv(coords_path);
  for (auto& line : detail::read_lines(genes_path.string())) {
    if (!line.empty()) ds.gene_names.push_back(std::move(line));
  }

  std::unordered_map<std::string, std::size_t> coord_index;
  for (std::size_t i = 0; i < ds.spots.size(); ++i) {
    if (!coord_index.emplace(ds.spots[i].spot_id, i).second) {
      throw ValidationError("duplicate spot id " + ds.spots[i].spot_id + " in coords.csv");
    }
  }

  const auto n_genes = static_cast<Eigen::Index>(ds.gene_names.size());
  if (has_bin) {
    ds.expression = read_binary_matrix(bin_path);
    if (static_cast<std::size_t>(ds.expression.rows()) != ds.spots.size()) {
      throw AlignmentError("expression.bin has " + std::to_string(ds.expression.rows()) +
                           " rows but coords.csv lists " + std::to_string(ds.spots.size()) + " spots");
    }
  } else {
    auto lines = detail::read_lines(csv_path.string());
    if (lines.empty()) throw FormatError(csv_path.string() + ": missing header row");
    auto header = split_csv_line(lines[0]);
    if (header.empty() || header[0] != "spot_id") {
      throw FormatError(csv_path.string() + ": first header column must be spot_id");
    }
    if (static_cast<Eigen::Index>(header.size()) - 1 != n_genes ||
        !std::equal(header.begin() + 1, header.end(), ds.gene_names.begin())) {
      throw AlignmentError(csv_path.string() + ": gene columns do not match gene_names.txt");
    }
    ds.expression = Matrix::Zero(static_cast<Eigen::Index>(ds.spots.size()), n_genes);
    std::vector<bool> seen(ds.spots.size(), false);
    std::vector<std::string> unknown;
    for (std::size_t li = 1; li < lines.size(); ++li) {
      if (lines[li].empty()) continue;
      auto f = split_csv_line(lines[li]);
      if (static_cast<Eigen::Index>(f.size()) != n_genes + 1) {
        throw FormatError(csv_path.string() + ": wrong field count on row " + std::to_string(li + 1));
      }
      auto it = coord_index.find(f[0]);
      if (it == coord_index.end()) {
        unknown.push_back(f[0]);
        continue;
      }
      if (seen[it->second]) throw ValidationError("duplicate spot id " + f[0] + " in expression.csv");
      seen[it->second] = true;
      for (Eigen::Index j = 0; j < n_genes; ++j) {
        double v;
        if (!detail::parse_double(f[j + 1], v)) {
          throw FormatError(csv_path.string() + ": bad number on row " + std::to_string(li + 1));
        }
        ds.expression(static_cast<Eigen::Index>(it->second), j) = v;
      }
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) missing.push_back(ds.spots[i].spot_id);
    }
    if (!unknown.empty() || !missing.empty()) {
      std::ostringstream msg;
      msg << "spot_id mismatch between coords.csv and expression.csv;";
      if (!missing.empty()) {
        msg << " missing from expression:";
        for (const auto& id : missing) msg << ' ' << id;
        msg << ';';
      }
      if (!unknown.empty()) {
        msg << " absent from coords:";
        for (const auto& id : unknown) msg << ' ' << id;
      }
      throw AlignmentError(msg.str());
    }
  }

  const auto ann_path = dir / "annotations.csv";
  if (fs::exists(ann_path)) {
    auto lines = detail::read_lines(ann_path.string());
    if (lines.empty() || split_csv_line(lines[0]) != std::vector<std::string>{"spot_id", "label"}) {
      throw FormatError(ann_path.string() + ": header must be spot_id,label");
    }
    std::map<std::string, std::string> ann;
    for (std::size_t li = 1; li < lines.size(); ++li) {
      if (lines[li].empty()) continue;
      auto f = split_csv_line(lines[li]);
      if (f.size() != 2) throw FormatError(ann_path.string() + ": malformed row " + std::to_string(li + 1));
      if (!coord_index.contains(f[0])) {
        throw AlignmentError("annotations.csv names spot " + f[0] + " absent from coords.csv");
      }
      ann[f[0]] = f[1];
    }
    ds.annotations = std::move(ann);
  }

  validate(ds);
  return ds;
}

void save_dataset(const STDataset& ds, const fs::path& dir, ExpressionFormat format) {
  validate(ds);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  for (const char* stale : {"image.tiff", "image.tif", "expression.csv", "expression.bin", "annotations.csv"}) {
    fs::remove(dir / stale, ec);
  }

  write_image(ds.image, dir / "image.png");
  const bool any_unmeasured =
      std::any_of(ds.spots.begin(), ds.spots.end(), [](const Spot& s) { return !s.measured; });
  write_coords_csv(ds.spots, dir / "coords.csv", any_unmeasured);

  {
    std::ofstream out(dir / "gene_names.txt", std::ios::trunc);
    if (!out) throw IoError("cannot write gene_names.txt in " + dir.string());
    for (const auto& g : ds.gene_names) out << g << '\n';
  }

  if (format == ExpressionFormat::automatic) {
    format = static_cast<std::size_t>(ds.expression.size()) <= kCsvEntryLimit ? ExpressionFormat::csv
                                                                               : ExpressionFormat::binary;
  }
  if (format == ExpressionFormat::binary) {
    write_binary_matrix(ds.expression, dir / "expression.bin");
  } else {
    std::ofstream out(dir / "expression.csv", std::ios::trunc);
    if (!out) throw IoError("cannot write expression.csv in " + dir.string());
    out << "spot_id";
    for (const auto& g : ds.gene_names) out << ',' << g;
    out << '\n';
    for (std::size_t i = 0; i < ds.spots.size(); ++i) {
      out << ds.spots[i].spot_id;
      for (Eigen::Index j = 0; j < ds.expression.cols(); ++j) {
        out << ',' << format_double(ds.expression(static_cast<Eigen::Index>(i), j));
      }
      out << '\n';
    }
    if (!out) throw IoError("short write to expression.csv");
  }

  if (ds.annotations) {
    std::ofstream out(dir / "annotations.csv", std::ios::trunc);
    out << "spot_id,label\n";
    for (const auto& s : ds.spots) {
      auto it = ds.annotations->find(s.spot_id);
      if (it != ds.annotations->end()) out << s.spot_id << ',' << it->second << '\n';
    }
  }
}

STDataset subset_spots(const STDataset& ds, const std::vector<std::size_t>& indices) {
  STDataset out;
  out.slice_id = ds.slice_id;
  out.image = ds.image;
  out.gene_names = ds.gene_names;
  out.expression.resize(static_cast<Eigen::Index>(indices.size()), ds.expression.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.spots.push_back(ds.spots.at(indices[r]));
    out.expression.row(static_cast<Eigen::Index>(r)) = ds.expression.row(static_cast<Eigen::Index>(indices[r]));
  }
  if (ds.annotations) {
    std::map<std::string, std::string> ann;
    for (const auto& s : out.spots) {
      auto it = ds.annotations->find(s.spot_id);
      if (it != ds.annotations->end()) ann.emplace(s.spot_id, it->second);
    }
    out.annotations = std::move(ann);
  }
  return out;
}

std::pair<STDataset, STDataset> split_spots(const STDataset& ds, double holdout_fraction,
                                            std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ParameterError("holdout fraction must lie in (0,1), got " + format_double(holdout_fraction));
  }
  const std::size_t n = ds.n_spots();
  if (n < 2) throw ParameterError("split_spots needs at least 2 spots");
  auto n_test = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  auto train_ds = subset_spots(ds, train);
  auto test_ds = subset_spots(ds, test);
  train_ds.slice_id = ds.slice_id;
  test_ds.slice_id = ds.slice_id;
  return {std::move(train_ds), std::move(test_ds)};
}

}  // namespace histosge
