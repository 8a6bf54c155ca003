#pragma once

// Spatial-transcriptomics slice model and its canonical on-disk layout.
//
// A dataset directory holds:
//   image.png | image.tiff    H&E raster (RGB, 8 bit)
//   coords.csv                spot_id,x_px,y_px[,measured]
//   expression.csv            spot_id,<gene>,...   (text form), or
//   expression.bin            dense binary matrix   (see below)
//   gene_names.txt            one gene per line, column order
//   annotations.csv           spot_id,label         (optional)
//
// expression.bin: 8-byte magic "HSGEXPR\0", u32 version (=1), u32 reserved,
// u64 rows, u64 cols, then rows*cols little-endian float64 in row-major order.
// Rows follow coords.csv order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "histosge/image.hpp"
#include "histosge/types.hpp"

namespace histosge {

struct Spot {
  std::string spot_id;
  int x_px = 0;
  int y_px = 0;
  bool measured = true;

  friend bool operator==(const Spot&, const Spot&) = default;
};

struct STDataset {
  std::string slice_id;
  RgbImage image;
  std::vector<Spot> spots;
  Matrix expression;  // n_spots x n_genes
  std::vector<std::string> gene_names;
  std::optional<std::map<std::string, std::string>> annotations;

  std::size_t n_spots() const { return spots.size(); }
  std::size_t n_genes() const { return gene_names.size(); }
};

/// Throws ValidationError naming the first violated invariant.
void validate(const STDataset& ds);

/// Fraction of exactly-zero expression entries.
double dropout_rate(const STDataset& ds);

enum class ExpressionFormat { automatic, csv, binary };

STDataset load_dataset(const std::filesystem::path& dir);

/// automatic picks CSV up to one million entries and binary above.
void save_dataset(const STDataset& ds, const std::filesystem::path& dir,
                  ExpressionFormat format = ExpressionFormat::automatic);

/// Uniform random holdout. The test half has round(fraction * n) spots,
/// clamped so that neither half is empty; both halves keep the original
/// relative spot order and share the image.
std::pair<STDataset, STDataset> split_spots(const STDataset& ds, double holdout_fraction,
                                            std::uint64_t seed);

/// Rows of `ds` for the given spot ids, in that order.
STDataset subset_spots(const STDataset& ds, const std::vector<std::size_t>& indices);

void write_coords_csv(const std::vector<Spot>& spots, const std::filesystem::path& path,
                      bool with_measured_column);
std::vector<Spot> read_coords_csv(const std::filesystem::path& path);

}  // namespace histosge
