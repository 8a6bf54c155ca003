#include "histosge/embedding_cache.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <fstream>

#include "histosge/errors.hpp"

namespace histosge {

namespace {
constexpr std::uint32_t kRecordMagic = 0x43475348;  // "HSGC" little endian
}

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) { load(); }

Sha256 EmbeddingCache::patch_digest(const PatchTensor& patch) {
  Sha256Builder b;
  const std::int32_t dims[2] = {patch.height, patch.width};
  b.add(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(dims), sizeof(dims)));
  b.add(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(patch.pixels.data()),
                                      patch.pixels.size() * sizeof(double)));
  return b.finish();
}

Sha256 EmbeddingCache::make_key(const std::string& slice_id, const std::string& spot_id,
                                const std::string& extractor_name, const Sha256& digest) {
  Sha256Builder b;
  b.add_field(slice_id).add_field(spot_id).add_field(extractor_name);
  b.add(std::span<const std::uint8_t>(digest.data(), digest.size()));
  return b.finish();
}

void EmbeddingCache::load() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  while (true) {
    std::uint32_t magic = 0, dim = 0;
    Sha256 key{};
    if (!in.read(reinterpret_cast<char*>(&magic), 4)) break;
    if (magic != kRecordMagic) throw FormatError("corrupt embedding cache record in " + path_.string());
    in.read(reinterpret_cast<char*>(key.data()), 32);
    in.read(reinterpret_cast<char*>(&dim), 4);
    std::vector<float> values(dim);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(dim) * 4);
    if (!in) break;  // torn tail record from an interrupted writer
    entries_[key] = std::move(values);
  }
}

std::optional<std::vector<float>> EmbeddingCache::get(const Sha256& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const Sha256& key, const std::vector<float>& values) {
  std::string record(4 + 32 + 4 + values.size() * 4, '\0');
  const std::uint32_t magic = kRecordMagic;
  const auto dim = static_cast<std::uint32_t>(values.size());
  std::memcpy(record.data(), &magic, 4);
  std::memcpy(record.data() + 4, key.data(), 32);
  std::memcpy(record.data() + 36, &dim, 4);
  std::memcpy(record.data() + 40, values.data(), values.size() * 4);

  std::lock_guard lock(mutex_);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw IoError("cannot open embedding cache " + path_.string());
  const auto written = ::write(fd, record.data(), record.size());
  ::close(fd);
  if (written != static_cast<ssize_t>(record.size())) throw IoError("short write to embedding cache");
  entries_[key] = values;
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace histosge
