#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "histosge/digest.hpp"
#include "histosge/preprocess.hpp"

namespace histosge {

/// Append-only embedding log. Each record is
///   u32 magic "HSGC" | 32-byte SHA-256 key | u32 dim | dim x float32 (LE)
/// and is written with a single write(2) on an O_APPEND descriptor, so
/// concurrent writers interleave whole records. Later records win.
class EmbeddingCache {
public:
  explicit EmbeddingCache(std::filesystem::path path);

  static Sha256 patch_digest(const PatchTensor& patch);
  static Sha256 make_key(const std::string& slice_id, const std::string& spot_id,
                         const std::string& extractor_name, const Sha256& patch_digest);

  std::optional<std::vector<float>> get(const Sha256& key) const;
  void put(const Sha256& key, const std::vector<float>& values);

  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

private:
  struct KeyHash {
    std::size_t operator()(const Sha256& k) const noexcept {
      std::size_t h = 0;
      for (int i = 0; i < 8; ++i) h = (h << 8) | k[i];
      return h;
    }
  };

  void load();

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<Sha256, std::vector<float>, KeyHash> entries_;
};

}  // namespace histosge
