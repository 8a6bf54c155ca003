#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace histosge {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);
Sha256 sha256_file(const std::filesystem::path& path);

std::string to_hex(const Sha256& digest);

/// Incremental hashing for keys assembled from several fields.
class Sha256Builder {
public:
  Sha256Builder();
  ~Sha256Builder();
  Sha256Builder(const Sha256Builder&) = delete;
  Sha256Builder& operator=(const Sha256Builder&) = delete;

  Sha256Builder& add(std::span<const std::uint8_t> bytes);
  Sha256Builder& add(std::string_view text);
  /// Length-prefixed field, so ("ab","c") and ("a","bc") hash differently.
  Sha256Builder& add_field(std::string_view text);
  Sha256 finish();

private:
  void* ctx_;
};

}  // namespace histosge
