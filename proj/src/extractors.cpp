#include "histosge/extractors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>
#include <unistd.h>

#include "histosge/embedding_cache.hpp"
#include "histosge/errors.hpp"
#include "histosge/rng.hpp"

namespace histosge {

namespace {

constexpr int kHistBins = 16;
constexpr int kOrientBins = 8;
constexpr int kGrid = 8;
constexpr int kHistOffset = 0;
constexpr int kGradOffset = 3 * kHistBins;
constexpr int kDownOffset = kGradOffset + 3 * 4 * kOrientBins;

// Block weights bring the three descriptor groups to comparable L2 scale.
constexpr double kHistWeight = 1.0;
constexpr double kGradWeight = 2.0;
constexpr double kDownWeight = 0.125;

Vector decode_float32(const std::string& body, int dim, const std::string& source) {
  if (body.size() != static_cast<std::size_t>(dim) * 4) {
    throw ExtractorBackendError(source + " returned " + std::to_string(body.size()) +
                                " bytes, expected " + std::to_string(dim) + " float32 values");
  }
  Vector z(dim);
  for (int i = 0; i < dim; ++i) {
    float f;
    std::memcpy(&f, body.data() + static_cast<std::size_t>(i) * 4, 4);
    if (!std::isfinite(f)) throw ExtractorBackendError(source + " returned a non-finite embedding");
    z[i] = f;
  }
  return z;
}

}  // namespace

DeterministicFallbackExtractor::DeterministicFallbackExtractor(int embed_dim)
    : embed_dim_(embed_dim), projection_(embed_dim, kDescriptorDim) {
  if (embed_dim < 1) throw ParameterError("embed_dim must be positive");
  Rng rng(kFallbackProjectionSeed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kDescriptorDim));
  for (Eigen::Index i = 0; i < projection_.rows(); ++i) {
    for (Eigen::Index j = 0; j < projection_.cols(); ++j) projection_(i, j) = scale * rng.normal();
  }
}

std::string DeterministicFallbackExtractor::name() const {
  return "fallback-v1-d" + std::to_string(embed_dim_);
}

Vector DeterministicFallbackExtractor::descriptor(const PatchTensor& patch) {
  Vector d = Vector::Zero(kDescriptorDim);
  const int h = patch.height, w = patch.width;
  const double n_pix = static_cast<double>(h) * w;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int bin = std::min(kHistBins - 1, static_cast<int>(patch.at(y, x, c) * kHistBins));
        d[kHistOffset + c * kHistBins + bin] += kHistWeight / n_pix;
      }
    }
  }

  const double n_interior = std::max(1.0, static_cast<double>(h - 2) * (w - 2));
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const int quadrant = 2 * (2 * y >= h ? 1 : 0) + (2 * x >= w ? 1 : 0);
      for (int c = 0; c < 3; ++c) {
        const double gx = 0.5 * (patch.at(y, x + 1, c) - patch.at(y, x - 1, c));
        const double gy = 0.5 * (patch.at(y + 1, x, c) - patch.at(y - 1, x, c));
        const double mag = std::hypot(gx, gy);
        if (mag == 0.0) continue;
        double angle = std::atan2(gy, gx);
        if (angle < 0.0) angle += 2.0 * std::numbers::pi;
        const int bin = static_cast<int>(angle / (2.0 * std::numbers::pi / kOrientBins)) % kOrientBins;
        d[kGradOffset + c * 4 * kOrientBins + quadrant * kOrientBins + bin] += kGradWeight * mag / n_interior;
      }
    }
  }

  double counts[kGrid][kGrid] = {};
  double sums[3][kGrid][kGrid] = {};
  for (int y = 0; y < h; ++y) {
    const int by = y * kGrid / h;
    for (int x = 0; x < w; ++x) {
      const int bx = x * kGrid / w;
      counts[by][bx] += 1.0;
      for (int c = 0; c < 3; ++c) sums[c][by][bx] += patch.at(y, x, c);
    }
  }
  for (int c = 0; c < 3; ++c) {
    for (int by = 0; by < kGrid; ++by) {
      for (int bx = 0; bx < kGrid; ++bx) {
        if (counts[by][bx] > 0.0) {
          d[kDownOffset + c * kGrid * kGrid + by * kGrid + bx] = kDownWeight * sums[c][by][bx] / counts[by][bx];
        }
      }
    }
  }
  return d;
}

Vector DeterministicFallbackExtractor::extract(const PatchTensor& patch) const {
  Vector z = projection_ * descriptor(patch);
  const double norm = z.norm();
  if (norm > 0.0) z /= norm;
  return z;
}

Vector deterministic_fallback_extract(const PatchTensor& patch) {
  static const DeterministicFallbackExtractor extractor(1024);
  return extractor.extract(patch);
}

RgbImage patch_to_image(const PatchTensor& patch, int resize_to) {
  RgbImage img(patch.width, patch.height);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(patch.at(y, x, c), 0.0, 1.0) * 255.0));
      }
    }
  }
  if (resize_to <= 0 || (resize_to == patch.width && resize_to == patch.height)) return img;
  cv::Mat src(img.height(), img.width(), CV_8UC3, img.data().data());
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(resize_to, resize_to), 0, 0, cv::INTER_LINEAR);
  RgbImage out(resize_to, resize_to);
  std::memcpy(out.data().data(), dst.data, out.data().size());
  return out;
}

RemoteEmbeddingExtractor::RemoteEmbeddingExtractor(RemoteExtractorOptions options)
    : options_(std::move(options)) {
  if (options_.url.rfind("http://", 0) != 0 && options_.url.rfind("https://", 0) != 0) {
    throw ParameterError("remote extractor URL must start with http:// or https://, got '" +
                         options_.url + "'");
  }
}

Vector RemoteEmbeddingExtractor::extract(const PatchTensor& patch) const {
  const auto scheme_end = options_.url.find("://") + 3;
  const auto path_start = options_.url.find('/', scheme_end);
  const std::string base = options_.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : options_.url.substr(path_start);

  const auto png = encode_png(patch_to_image(patch, options_.resize_to));
  httplib::Client client(base);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (const char* token = std::getenv(options_.token_env.c_str()); token != nullptr && *token != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = client.Post(path, headers, reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
  if (!res) {
    throw ExtractorBackendError("embedding endpoint " + options_.url + " unreachable (" +
                                httplib::to_string(res.error()) +
                                "); check the URL and network, then retry");
  }
  if (res->status != 200) {
    throw ExtractorBackendError("embedding endpoint " + options_.url + " answered HTTP " +
                                std::to_string(res->status) +
                                (res->status == 401 || res->status == 403
                                     ? "; set " + options_.token_env + " and retry"
                                     : "; retry later"));
  }
  return decode_float32(res->body, options_.embed_dim, options_.url);
}

LocalRunnerExtractor::LocalRunnerExtractor(std::string command, int embed_dim, int resize_to)
    : command_(std::move(command)), embed_dim_(embed_dim), resize_to_(resize_to) {
  if (command_.empty()) throw ParameterError("local extractor needs a runner command");
}

Vector LocalRunnerExtractor::extract(const PatchTensor& patch) const {
  char tmpl[] = "/tmp/histosge_patch_XXXXXX.png";
  const int fd = ::mkstemps(tmpl, 4);
  if (fd < 0) throw ExtractorBackendError("cannot create a temporary patch file");
  ::close(fd);
  const std::filesystem::path tmp(tmpl);
  write_image(patch_to_image(patch, resize_to_), tmp);

  const std::string cmd = command_ + " '" + tmp.string() + "'";
  std::string out;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) {
    std::filesystem::remove(tmp);
    throw ExtractorBackendError("cannot start local runner '" + command_ + "'");
  }
  char buf[8192];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
  const int status = ::pclose(pipe);
  std::filesystem::remove(tmp);
  if (status != 0) {
    throw ExtractorBackendError("local runner '" + command_ + "' exited with status " +
                                std::to_string(status) + "; check its installation and retry");
  }
  return decode_float32(out, embed_dim_, "local runner '" + command_ + "'");
}

MultimodalFeatureMap make_feature_map(std::string spot_id, const Vector& z, const Spot& spot,
                                      const std::array<double, 3>& rgb) {
  MultimodalFeatureMap fm;
  fm.spot_id = std::move(spot_id);
  fm.z = z;
  fm.l = Vector(2);
  fm.l << static_cast<double>(spot.x_px), static_cast<double>(spot.y_px);
  fm.t = Vector(3);
  fm.t << rgb[0], rgb[1], rgb[2];
  fm.m = Vector(z.size() + 5);
  fm.m << fm.z, fm.l, fm.t;
  return fm;
}

std::vector<MultimodalFeatureMap> build_feature_map(const STDataset& ds, const std::vector<Spot>& spots,
                                                    const FeatureExtractor& extractor,
                                                    const PreprocessConfig& cfg, EmbeddingCache* cache,
                                                    int threads) {
  std::vector<MultimodalFeatureMap> maps(spots.size());
  const std::string extractor_name = extractor.name();

  auto one = [&](std::size_t i) {
    const Spot& spot = spots[i];
    const PatchTensor patch = extract_patch(ds.image, spot, cfg);
    std::optional<std::vector<float>> cached;
    Sha256 key{};
    if (cache != nullptr) {
      key = EmbeddingCache::make_key(ds.slice_id, spot.spot_id, extractor_name, EmbeddingCache::patch_digest(patch));
      cached = cache->get(key);
      if (cached && static_cast<int>(cached->size()) != extractor.embed_dim()) cached.reset();
    }
    Vector z;
    if (cached) {
      z = Eigen::Map<const Eigen::VectorXf>(cached->data(), static_cast<Eigen::Index>(cached->size())).cast<double>();
    } else {
      Vector raw;
      try {
        raw = extractor.extract(patch);
      } catch (const ExtractorBackendError& e) {
        throw ExtractorBackendError("spot " + spot.spot_id + ": " + e.what());
      }
      if (raw.size() != extractor.embed_dim()) {
        throw ExtractorBackendError("spot " + spot.spot_id + ": extractor returned " +
                                    std::to_string(raw.size()) + " values");
      }
      const Eigen::VectorXf as_float = raw.cast<float>();
      z = as_float.cast<double>();
      if (cache != nullptr) cache->put(key, std::vector<float>(as_float.data(), as_float.data() + as_float.size()));
    }
    maps[i] = make_feature_map(spot.spot_id, z, spot, rgb_feature(patch));
  };

  if (threads <= 1 || spots.size() < 2) {
    for (std::size_t i = 0; i < spots.size(); ++i) one(i);
    return maps;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), spots.size());
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < spots.size(); i = next++) {
        try {
          one(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = spots.size();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return maps;
}

Matrix stack_features(const std::vector<MultimodalFeatureMap>& maps) {
  if (maps.empty()) return Matrix(0, 0);
  Matrix x(static_cast<Eigen::Index>(maps.size()), maps.front().m.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].m.size() != x.cols()) throw ContractError("feature maps have inconsistent widths");
    x.row(static_cast<Eigen::Index>(i)) = maps[i].m.transpose();
  }
  return x;
}

}  // namespace histosge
