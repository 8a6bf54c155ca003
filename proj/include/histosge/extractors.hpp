#pragma once

// Histology feature extraction: the embedding Z_i of a spot's patch, and the
// multimodal feature map M_i = [Z_i, L_i, T_i].

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "histosge/preprocess.hpp"
#include "histosge/st_core.hpp"
#include "histosge/types.hpp"

namespace histosge {

class EmbeddingCache;

class FeatureExtractor {
public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual int embed_dim() const = 0;
  /// Deterministic for a fixed patch; length embed_dim().
  virtual Vector extract(const PatchTensor& patch) const = 0;
};

/// Seed of the fallback projection matrix. Part of the extractor's identity:
/// changing it invalidates every cached embedding and checkpoint.
inline constexpr std::uint64_t kFallbackProjectionSeed = 0x48495354'4f534745ULL;

/// Hand-crafted texture descriptor projected to `embed_dim` dimensions:
///   48  per-channel 16-bin intensity histograms (fractions of pixels)
///   96  gradient-orientation histograms, 8 bins x 4 quadrants x 3 channels,
///       magnitude weighted, central differences on interior pixels
///   192 per-channel 8x8 block-mean downsample
/// The 336-vector is multiplied by a Gaussian matrix drawn from
/// Rng(kFallbackProjectionSeed) and the result is L2-normalized.
class DeterministicFallbackExtractor final : public FeatureExtractor {
public:
  static constexpr int kDescriptorDim = 336;

  explicit DeterministicFallbackExtractor(int embed_dim = 1024);

  std::string name() const override;
  int embed_dim() const override { return embed_dim_; }
  Vector extract(const PatchTensor& patch) const override;

  /// The 336-dimensional descriptor before projection.
  static Vector descriptor(const PatchTensor& patch);

private:
  int embed_dim_;
  Matrix projection_;  // embed_dim x kDescriptorDim
};

/// Fallback extractor at 1024 dimensions.
Vector deterministic_fallback_extract(const PatchTensor& patch);

struct RemoteExtractorOptions {
  std::string url;  // http(s)://host[:port]/path
  std::string token_env = "HISTOSGE_EMBED_TOKEN";
  int embed_dim = 1024;
  int resize_to = 0;  // square side expected by the backend, 0 = send as-is
  std::chrono::seconds timeout{30};
};

/// POSTs the PNG-encoded patch (Content-Type image/png, bearer token from
/// the environment variable) and expects embed_dim little-endian float32
/// values as the response body.
class RemoteEmbeddingExtractor final : public FeatureExtractor {
public:
  explicit RemoteEmbeddingExtractor(RemoteExtractorOptions options);
  std::string name() const override { return "remote:" + options_.url; }
  int embed_dim() const override { return options_.embed_dim; }
  Vector extract(const PatchTensor& patch) const override;

private:
  RemoteExtractorOptions options_;
};

/// Runs `<command> <patch.png>` and reads embed_dim little-endian float32
/// values from its stdout. Used for locally installed weights runners.
class LocalRunnerExtractor final : public FeatureExtractor {
public:
  LocalRunnerExtractor(std::string command, int embed_dim = 1024, int resize_to = 0);
  std::string name() const override { return "local:" + command_; }
  int embed_dim() const override { return embed_dim_; }
  Vector extract(const PatchTensor& patch) const override;

private:
  std::string command_;
  int embed_dim_;
  int resize_to_;
};

/// Patch tensor to an 8-bit raster (rounding), optionally resized bilinearly.
RgbImage patch_to_image(const PatchTensor& patch, int resize_to = 0);

struct MultimodalFeatureMap {
  std::string spot_id;
  Vector z;  // histology embedding
  Vector l;  // (x_px, y_px)
  Vector t;  // RGB means
  Vector m;  // [z, l, t]
};

MultimodalFeatureMap make_feature_map(std::string spot_id, const Vector& z, const Spot& spot,
                                      const std::array<double, 3>& rgb);

/// One feature map per spot, in order. Embeddings are stored at float32
/// precision (the cache and remote wire format), so cached and fresh runs
/// agree bitwise. `threads` > 1 extracts in parallel.
std::vector<MultimodalFeatureMap> build_feature_map(const STDataset& ds, const std::vector<Spot>& spots,
                                                    const FeatureExtractor& extractor,
                                                    const PreprocessConfig& cfg,
                                                    EmbeddingCache* cache = nullptr, int threads = 1);

/// Stacks the m vectors row-wise.
Matrix stack_features(const std::vector<MultimodalFeatureMap>& maps);

}  // namespace histosge
