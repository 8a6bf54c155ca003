#include "histosge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "histosge/digest.hpp"
#include "histosge/errors.hpp"
#include "text_util.hpp"

namespace histosge {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'G', 'E', 'C', 'K', 'P', 'T'};

class Writer {
public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  const std::string& bytes() const { return buf_; }

private:
  std::string buf_;
};

class Reader {
public:
  explicit Reader(std::string bytes, std::string source) : buf_(std::move(bytes)), source_(std::move(source)) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }

private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint " + source_);
  }
  std::string buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

ModelConfig parse_model_config(const std::string& canonical) {
  ModelConfig cfg;
  std::istringstream in(canonical);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad model config line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    bool ok = true;
    if (key == "d_ff") ok = detail::parse_int(value, cfg.d_ff);
    else if (key == "d_model") ok = detail::parse_int(value, cfg.d_model);
    else if (key == "dropout_rate") ok = detail::parse_double(value, cfg.dropout_rate);
    else if (key == "gene_dim") ok = detail::parse_int(value, cfg.gene_dim);
    else if (key == "n_heads") ok = detail::parse_int(value, cfg.n_heads);
    else if (key == "n_layers") ok = detail::parse_int(value, cfg.n_layers);
    else if (key == "pe_base") ok = detail::parse_double(value, cfg.pe_base);
    else if (key == "pe_mode") cfg.pe_mode = parse_pe_mode(value);
    else if (key == "pe_table_size") ok = detail::parse_int(value, cfg.pe_table_size);
    else if (key == "plain_mhsa") cfg.plain_mhsa = value == "1";
    // Unknown keys come from newer writers and are ignored.
    if (!ok) throw FormatError("bad value for model config key " + key);
  }
  validate(cfg);
  return cfg;
}

void save_checkpoint(const HisToSGEModel& model, std::uint64_t step,
                     const std::map<std::string, std::string>& metadata, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32(0);
  w.u64(step);
  const std::string cfg_text = canonical_text(model.config());
  w.str(cfg_text);
  const Sha256 digest = sha256(cfg_text);
  w.raw(digest.data(), digest.size());
  w.u32(static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = p.value.cast<float>();
    w.raw(f.data(), static_cast<std::size_t>(f.size()) * 4);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("short write to checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing or unreadable checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());

  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError(path.string() + " is not a checkpoint");
  const auto version = r.u32();
  if (version == 0 || version > kCheckpointVersion) {
    throw IncompatibilityError("checkpoint version " + std::to_string(version) + " is newer than supported (" +
                               std::to_string(kCheckpointVersion) + ")");
  }
  r.u32();
  Checkpoint ck;
  ck.step = r.u64();
  const std::string cfg_text = r.str();
  Sha256 stored{};
  r.raw(stored.data(), stored.size());
  if (stored != sha256(cfg_text)) throw IncompatibilityError("checkpoint config digest mismatch in " + path.string());
  ck.config_digest = to_hex(stored);
  const ModelConfig cfg = parse_model_config(cfg_text);

  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    ck.metadata[k] = r.str();
  }
  const auto n_tensors = r.u32();
  std::vector<Param> params;
  params.reserve(n_tensors);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    Param p;
    p.name = r.str();
    const auto rows = r.u32(), cols = r.u32();
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
    r.raw(f.data(), static_cast<std::size_t>(rows) * cols * 4);
    p.value = f.cast<double>();
    params.push_back(std::move(p));
  }
  ck.model.assign(cfg, std::move(params));
  return ck;
}

}  // namespace histosge
