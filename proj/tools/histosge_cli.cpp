// histosge command-line entry point.
//
// Exit codes: 0 success, 1 environment failure (I/O, extractor backend),
// 2 usage or validation error, 3 numerical failure, 4 incompatible artifact.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <unordered_map>

#include "histosge/checkpoint.hpp"
#include "histosge/config_file.hpp"
#include "histosge/digest.hpp"
#include "histosge/embedding_cache.hpp"
#include "histosge/errors.hpp"
#include "histosge/extractors.hpp"
#include "histosge/image.hpp"
#include "histosge/metrics.hpp"
#include "histosge/plot.hpp"
#include "histosge/preprocess.hpp"
#include "histosge/st_core.hpp"
#include "histosge/superres.hpp"
#include "histosge/synthbench.hpp"
#include "histosge/trainer.hpp"
#include "text_util.hpp"

namespace fs = std::filesystem;
using namespace histosge;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kEnvironment = 1, kUsage = 2, kNumerical = 3, kIncompatible = 4 };

struct UsageError : Error {
  using Error::Error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collected while a command runs; written once, whatever the outcome.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  fs::path out_dir;
  std::string started = utc_now();
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string config_text;
  json inputs = json::object();
  json outputs = json::object();
  json summary = json::object();

  void input(const std::string& key, const fs::path& p) { inputs[key] = p.string(); }
  void output(const std::string& key, const fs::path& p) {
    std::string digest;
    if (fs::is_regular_file(p)) digest = to_hex(sha256_file(p));
    outputs[key] = {{"path", p.string()}, {"sha256", digest}};
  }

  void write(int exit_code, const std::string& error) const {
    if (out_dir.empty()) return;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["histosge_version"] = kVersion;
    j["checkpoint_format_version"] = kCheckpointVersion;
    j["started_utc"] = started;
    j["finished_utc"] = utc_now();
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["deterministic"] = deterministic;
    j["config"] = config_text;
    j["config_sha256"] = config_text.empty() ? "" : to_hex(sha256(config_text));
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["summary"] = summary;
    j["exit_code"] = exit_code;
    if (!error.empty()) j["error"] = error;
    std::ofstream f(out_dir / "manifest.json", std::ios::trunc);
    f << j.dump(2) << '\n';
  }
};

struct CommonOptions {
  std::string dataset;
  std::string out;
  std::string config;
  std::string extractor;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig rc;
  if (!o.config.empty()) rc = load_run_config(o.config);
  if (o.seed) rc.train.seed = *o.seed;
  if (!o.extractor.empty()) rc.extractor = o.extractor;
  if (o.deterministic) rc.train.threads = 1;
  return rc;
}

std::unique_ptr<FeatureExtractor> make_extractor(const RunConfig& rc) {
  if (rc.extractor == "fallback") return std::make_unique<DeterministicFallbackExtractor>(rc.embed_dim);
  if (rc.extractor == "remote") {
    RemoteExtractorOptions opt;
    opt.url = rc.remote_url;
    opt.embed_dim = rc.embed_dim;
    opt.resize_to = rc.resize_to;
    return std::make_unique<RemoteEmbeddingExtractor>(opt);
  }
  if (rc.extractor == "local") {
    if (rc.local_runner.empty()) throw UsageError("extractor 'local' needs local_runner=<command> in the config");
    return std::make_unique<LocalRunnerExtractor>(rc.local_runner, rc.embed_dim, rc.resize_to);
  }
  throw UsageError("unknown extractor '" + rc.extractor + "' (fallback, remote, local)");
}

// Rebuilds the extractor recorded in a checkpoint, so predictions use the
// same embedding the model was trained on.
std::unique_ptr<FeatureExtractor> extractor_for_checkpoint(const Checkpoint& ck, const RunConfig& rc,
                                                           bool kind_forced) {
  const auto it = ck.metadata.find("extractor");
  if (it == ck.metadata.end()) throw IncompatibilityError("checkpoint does not record its extractor");
  const std::string& name = it->second;
  const int dim = ck.model.config().embed_dim();
  std::string kind;
  if (name.rfind("fallback-v1-d", 0) == 0) kind = "fallback";
  else if (name.rfind("remote:", 0) == 0) kind = "remote";
  else if (name.rfind("local:", 0) == 0) kind = "local";
  else throw IncompatibilityError("checkpoint extractor '" + name + "' is not supported by this build");
  if (kind_forced && kind != rc.extractor) {
    throw IncompatibilityError("checkpoint was trained with extractor '" + name + "', not '" + rc.extractor + "'");
  }
  std::unique_ptr<FeatureExtractor> ex;
  if (kind == "fallback") {
    ex = std::make_unique<DeterministicFallbackExtractor>(dim);
  } else if (kind == "remote") {
    RemoteExtractorOptions opt;
    opt.url = name.substr(7);
    opt.embed_dim = dim;
    opt.resize_to = rc.resize_to;
    ex = std::make_unique<RemoteEmbeddingExtractor>(opt);
  } else {
    ex = std::make_unique<LocalRunnerExtractor>(name.substr(6), dim, rc.resize_to);
  }
  if (ex->name() != name) {
    throw IncompatibilityError("checkpoint extractor '" + name + "' cannot be rebuilt (got '" + ex->name() + "')");
  }
  return ex;
}

PreprocessConfig preprocess_for_checkpoint(const Checkpoint& ck) {
  PreprocessConfig p;
  int v = 0;
  if (auto it = ck.metadata.find("patch_w"); it != ck.metadata.end() && detail::parse_int(it->second, v)) p.patch_w = v;
  if (auto it = ck.metadata.find("patch_h"); it != ck.metadata.end() && detail::parse_int(it->second, v)) p.patch_h = v;
  return p;
}

std::vector<std::string> checkpoint_genes(const Checkpoint& ck) {
  std::vector<std::string> genes;
  if (auto it = ck.metadata.find("gene_names"); it != ck.metadata.end()) {
    std::istringstream in(it->second);
    for (std::string line; std::getline(in, line);) genes.push_back(line);
  }
  if (genes.empty()) {
    for (int j = 0; j < ck.model.config().gene_dim; ++j) genes.push_back("gene" + std::to_string(j));
  }
  if (static_cast<int>(genes.size()) != ck.model.config().gene_dim) {
    throw IncompatibilityError("checkpoint lists " + std::to_string(genes.size()) + " genes for a " +
                               std::to_string(ck.model.config().gene_dim) + "-gene head");
  }
  return genes;
}

PredictOptions predict_options(const RunConfig& rc) {
  PredictOptions p;
  p.batch_size = rc.train.batch_size;
  p.attention_scope = rc.train.attention_scope;
  p.slice_cap = rc.train.slice_cap;
  p.threads = rc.train.threads;
  return p;
}

fs::path require_out(const CommonOptions& o) {
  if (o.out.empty()) throw UsageError("--out is required");
  fs::create_directories(o.out);
  return o.out;
}

STDataset require_dataset(const CommonOptions& o, Manifest& m) {
  if (o.dataset.empty()) throw UsageError("--dataset is required");
  m.input("dataset", o.dataset);
  return load_dataset(o.dataset);
}

// ---------------------------------------------------------------- commands

int cmd_ingest(const CommonOptions& o, bool normalize, int n_hvg, const std::string& format, Manifest& m) {
  const auto out = require_out(o);
  const auto ds = require_dataset(o, m);
  validate(ds);
  ExpressionFormat fmt = ExpressionFormat::automatic;
  if (format == "csv") fmt = ExpressionFormat::csv;
  else if (format == "binary") fmt = ExpressionFormat::binary;
  else if (format != "auto") throw UsageError("--format must be auto, csv or binary");

  const double dropout = dropout_rate(ds);
  STDataset result = ds;
  if (normalize || n_hvg != 0) {
    PreprocessConfig pc;
    pc.n_hvg = n_hvg != 0 ? n_hvg : static_cast<int>(ds.n_genes());
    result = preprocess_dataset(ds, pc, normalize);
  }
  save_dataset(result, out, fmt);
  std::size_t measured = 0;
  for (const auto& s : ds.spots) measured += s.measured;

  std::printf("slice         %s\n", ds.slice_id.c_str());
  std::printf("spots         %zu (%zu measured)\n", ds.n_spots(), measured);
  std::printf("genes         %zu\n", ds.n_genes());
  std::printf("dropout_rate  %.6f\n", dropout);
  std::printf("image         %dx%d\n", ds.image.width(), ds.image.height());
  std::printf("annotations   %s\n", ds.annotations ? "yes" : "no");
  if (result.n_genes() != ds.n_genes() || normalize) std::printf("kept genes    %zu\n", result.n_genes());
  m.summary = {{"spots", ds.n_spots()}, {"genes", ds.n_genes()}, {"dropout_rate", dropout},
               {"kept_genes", result.n_genes()}, {"normalized", normalize}};
  m.output("dataset", out);
  return kOk;
}

int cmd_synth(const CommonOptions& o, SynthConfig sc, Manifest& m) {
  const auto out = require_out(o);
  if (o.seed) sc.seed = *o.seed;
  for (const auto& w : validate(sc)) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto [ds, truth] = generate(sc);
  save_dataset(ds, out);
  save_truth(truth, out / "truth.json");
  m.seed = sc.seed;
  m.summary = {{"spots", ds.n_spots()}, {"genes", ds.n_genes()}, {"textures", sc.n_textures},
               {"noise_sigma", sc.noise_sigma}};
  m.output("dataset", out);
  m.output("truth", out / "truth.json");
  std::printf("wrote %zu spots x %zu genes to %s\n", ds.n_spots(), ds.n_genes(), out.c_str());
  return kOk;
}

int cmd_split(const CommonOptions& o, double fraction, Manifest& m) {
  const auto out = require_out(o);
  const auto ds = require_dataset(o, m);
  const std::uint64_t seed = o.seed.value_or(0);
  m.seed = seed;
  const auto [train_part, test_part] = split_spots(ds, fraction, seed);
  save_dataset(train_part, out / "train");
  save_dataset(test_part, out / "test");
  m.output("train", out / "train");
  m.output("test", out / "test");
  m.summary = {{"train_spots", train_part.n_spots()}, {"test_spots", test_part.n_spots()}};
  std::printf("train %zu spots, test %zu spots\n", train_part.n_spots(), test_part.n_spots());
  return kOk;
}

int cmd_train(const CommonOptions& o, Manifest& m) {
  const auto out = require_out(o);
  if (!o.config.empty()) m.input("config", o.config);
  auto rc = resolve_config(o);
  m.config_text = canonical_text(rc);
  m.seed = rc.train.seed;
  const auto ds = require_dataset(o, m);
  const auto extractor = make_extractor(rc);

  ModelConfig mcfg = rc.model;
  mcfg.d_model = extractor->embed_dim() + 5;
  mcfg.gene_dim = static_cast<int>(ds.n_genes());
  TrainConfig tcfg = rc.train;
  tcfg.checkpoint_dir = out;

  std::unique_ptr<EmbeddingCache> cache;
  if (rc.use_cache) cache = std::make_unique<EmbeddingCache>(out / "embeddings.cache");
  {
    std::ofstream cfg(out / "run.cfg", std::ios::trunc);
    cfg << m.config_text;
  }
  m.output("config", out / "run.cfg");

  TrainResult res;
  try {
    res = train(ds, *extractor, mcfg, tcfg, rc.preprocess, cache.get(), {{"dataset", ds.slice_id}});
  } catch (const DivergenceError& e) {
    if (!e.last_checkpoint().empty()) m.output("last_checkpoint", e.last_checkpoint());
    throw;
  }
  std::ofstream trace(out / "loss_trace.csv", std::ios::trunc);
  trace << "epoch,loss\n";
  for (std::size_t i = 0; i < res.report.loss_trace.size(); ++i) {
    trace << (i + 1) << ',' << detail::format_double(res.report.loss_trace[i]) << '\n';
  }
  trace.close();
  m.output("loss_trace", out / "loss_trace.csv");
  m.output("checkpoint", res.report.final_checkpoint);
  const double last = res.report.loss_trace.empty() ? 0.0 : res.report.loss_trace.back();
  m.summary = {{"epochs_run", res.report.loss_trace.size()}, {"steps", res.report.steps}, {"final_loss", last},
               {"wall_seconds", res.report.wall_seconds}};
  std::printf("trained %zu epochs (%llu steps) in %.1f s, final loss %.6g\n", res.report.loss_trace.size(),
              static_cast<unsigned long long>(res.report.steps), res.report.wall_seconds, last);
  std::printf("checkpoint %s\n", res.report.final_checkpoint.c_str());
  return kOk;
}

// Shared by predict and upsample: loads the checkpoint and its extractor.
struct LoadedModel {
  Checkpoint ck;
  std::unique_ptr<FeatureExtractor> extractor;
  PreprocessConfig pcfg;
  std::vector<std::string> genes;
};

LoadedModel load_model(const std::string& path, const CommonOptions& o, const RunConfig& rc, Manifest& m) {
  if (path.empty()) throw UsageError("--checkpoint is required");
  m.input("checkpoint", path);
  LoadedModel lm{load_checkpoint(path), nullptr, {}, {}};
  lm.extractor = extractor_for_checkpoint(lm.ck, rc, !o.extractor.empty());
  lm.pcfg = preprocess_for_checkpoint(lm.ck);
  lm.genes = checkpoint_genes(lm.ck);
  return lm;
}

STDataset with_predictions(const STDataset& ds, std::vector<Spot> spots, Matrix pred, std::vector<std::string> genes) {
  STDataset out;
  out.slice_id = ds.slice_id;
  out.image = ds.image;
  out.spots = std::move(spots);
  // Expression datasets are non-negative; the linear head is not.
  out.expression = pred.cwiseMax(0.0);
  out.gene_names = std::move(genes);
  return out;
}

int cmd_predict(const CommonOptions& o, const std::string& checkpoint, Manifest& m) {
  const auto out = require_out(o);
  const auto rc = resolve_config(o);
  m.config_text = canonical_text(rc);
  const auto ds = require_dataset(o, m);
  auto lm = load_model(checkpoint, o, rc, m);
  std::unique_ptr<EmbeddingCache> cache;
  if (rc.use_cache) cache = std::make_unique<EmbeddingCache>(out / "embeddings.cache");
  Matrix pred = predict(lm.ck.model, ds, ds.spots, *lm.extractor, lm.pcfg, predict_options(rc), cache.get());
  auto result = with_predictions(ds, ds.spots, std::move(pred), lm.genes);
  save_dataset(result, out / "prediction");
  m.output("prediction", out / "prediction");
  m.summary = {{"spots", result.n_spots()}, {"genes", result.n_genes()}};
  std::printf("predicted %zu spots x %zu genes\n", result.n_spots(), result.n_genes());
  return kOk;
}

int cmd_upsample(const CommonOptions& o, const std::string& checkpoint, int factor, Manifest& m) {
  const auto out = require_out(o);
  if (factor != 2 && factor != 4 && factor != 8) {
    throw UsageError("unsupported factor " + std::to_string(factor) + " (use 2, 4 or 8)");
  }
  const auto rc = resolve_config(o);
  m.config_text = canonical_text(rc);
  const auto ds = require_dataset(o, m);
  auto lm = load_model(checkpoint, o, rc, m);

  std::vector<Spot> measured;
  for (const auto& s : ds.spots) {
    if (s.measured) measured.push_back(s);
  }
  const double spacing = nearest_neighbor_spacing(measured);
  const auto scheme = generalized_scheme(factor, spacing);
  const auto constructed = construct_unmeasured(measured, scheme, {ds.image.width(), ds.image.height()});
  std::vector<Spot> all = measured;
  all.insert(all.end(), constructed.begin(), constructed.end());

  std::unique_ptr<EmbeddingCache> cache;
  if (rc.use_cache) cache = std::make_unique<EmbeddingCache>(out / "embeddings.cache");
  Matrix pred = predict(lm.ck.model, ds, all, *lm.extractor, lm.pcfg, predict_options(rc), cache.get());
  auto result = with_predictions(ds, std::move(all), std::move(pred), lm.genes);
  save_dataset(result, out / "upsampled");
  m.output("upsampled", out / "upsampled");
  m.summary = {{"factor", factor}, {"spacing_px", spacing}, {"measured", measured.size()},
               {"constructed", constructed.size()}, {"total", result.n_spots()}};
  std::printf("spacing %.3f px, %zu measured + %zu constructed = %zu spots\n", spacing, measured.size(),
              constructed.size(), result.n_spots());
  return kOk;
}

int cmd_evaluate(const CommonOptions& o, const std::string& pred_dir, const std::string& axis_name, int top,
                 Manifest& m) {
  const auto out = require_out(o);
  const auto obs = require_dataset(o, m);
  if (pred_dir.empty()) throw UsageError("--pred is required");
  m.input("pred", pred_dir);
  const auto pred = load_dataset(pred_dir);
  PccAxis axis;
  if (axis_name == "gene") axis = PccAxis::gene;
  else if (axis_name == "spot") axis = PccAxis::spot;
  else throw UsageError("--pcc-axis must be gene or spot");

  std::unordered_map<std::string, std::size_t> pred_gene, pred_spot;
  for (std::size_t j = 0; j < pred.gene_names.size(); ++j) pred_gene.emplace(pred.gene_names[j], j);
  for (std::size_t i = 0; i < pred.spots.size(); ++i) pred_spot.emplace(pred.spots[i].spot_id, i);

  std::vector<std::size_t> obs_cols, pred_cols;
  std::vector<std::string> genes;
  for (std::size_t j = 0; j < obs.gene_names.size(); ++j) {
    if (auto it = pred_gene.find(obs.gene_names[j]); it != pred_gene.end()) {
      obs_cols.push_back(j);
      pred_cols.push_back(it->second);
      genes.push_back(obs.gene_names[j]);
    }
  }
  if (genes.empty()) throw AlignmentError("observed and predicted datasets share no gene names");

  std::vector<std::size_t> obs_rows, pred_rows;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < obs.spots.size(); ++i) {
    if (!obs.spots[i].measured) continue;
    auto it = pred_spot.find(obs.spots[i].spot_id);
    if (it == pred_spot.end()) {
      missing.push_back(obs.spots[i].spot_id);
      continue;
    }
    obs_rows.push_back(i);
    pred_rows.push_back(it->second);
  }
  if (!missing.empty()) {
    std::string names;
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 5); ++k) names += (k ? ", " : "") + missing[k];
    throw AlignmentError(std::to_string(missing.size()) + " observed spot(s) have no prediction: " + names);
  }
  Matrix a(static_cast<Eigen::Index>(obs_rows.size()), static_cast<Eigen::Index>(genes.size()));
  Matrix b(a.rows(), a.cols());
  for (std::size_t r = 0; r < obs_rows.size(); ++r) {
    for (std::size_t c = 0; c < genes.size(); ++c) {
      a(r, c) = obs.expression(obs_rows[r], obs_cols[c]);
      b(r, c) = pred.expression(pred_rows[r], pred_cols[c]);
    }
  }
  const auto report = evaluate(a, b, axis);
  std::vector<std::string> labels = genes;
  if (axis == PccAxis::spot) {
    labels.clear();
    for (auto r : obs_rows) labels.push_back(obs.spots[r].spot_id);
  }
  std::ofstream(out / "metrics.csv", std::ios::trunc) << format_report_csv(report, labels);
  std::ofstream(out / "metrics.json", std::ios::trunc) << format_report_json(report, labels);
  m.output("metrics_csv", out / "metrics.csv");
  m.output("metrics_json", out / "metrics.json");
  m.summary = {{"mean_pcc", report.mean_pcc}, {"mse", report.mse}, {"mae", report.mae},
               {"genes", genes.size()}, {"spots", obs_rows.size()}};
  std::fputs(format_report_table(report, labels, static_cast<std::size_t>(std::max(top, 0))).c_str(), stdout);
  return kOk;
}

std::map<std::string, std::string> read_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open labels file " + path.string());
  std::map<std::string, std::string> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 2) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected spot_id,label");
    if (line_no == 1 && f[0] == "spot_id") continue;
    labels[f[0]] = f[1];
  }
  return labels;
}

std::vector<long long> encode_labels(const std::vector<std::string>& labels) {
  std::map<std::string, long long> codes;
  std::vector<long long> out;
  for (const auto& l : labels) out.push_back(codes.emplace(l, static_cast<long long>(codes.size())).first->second);
  return out;
}

int cmd_cluster_eval(const CommonOptions& o, int k, const std::string& labels_path, Manifest& m) {
  const auto out = require_out(o);
  const auto ds = require_dataset(o, m);
  if (!ds.annotations || ds.annotations->empty()) {
    throw UsageError("dataset " + o.dataset + " has no annotations.csv to compare against");
  }
  std::vector<std::size_t> rows;
  std::vector<std::string> truth;
  for (std::size_t i = 0; i < ds.spots.size(); ++i) {
    if (auto it = ds.annotations->find(ds.spots[i].spot_id); it != ds.annotations->end()) {
      rows.push_back(i);
      truth.push_back(it->second);
    }
  }
  std::vector<long long> predicted;
  if (!labels_path.empty()) {
    m.input("labels", labels_path);
    const auto external = read_labels_csv(labels_path);
    std::vector<std::string> names;
    for (auto i : rows) {
      auto it = external.find(ds.spots[i].spot_id);
      if (it == external.end()) throw AlignmentError("labels file has no entry for spot " + ds.spots[i].spot_id);
      names.push_back(it->second);
    }
    predicted = encode_labels(names);
  } else {
    if (k == 0) k = static_cast<int>(std::set<std::string>(truth.begin(), truth.end()).size());
    const std::uint64_t seed = o.seed.value_or(0);
    m.seed = seed;
    Matrix x(static_cast<Eigen::Index>(rows.size()), ds.expression.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) x.row(r) = ds.expression.row(rows[r]);
    predicted = kmeans_domains(x, k, seed);
  }
  const double score = ari(predicted, encode_labels(truth));
  std::ofstream clusters(out / "clusters.csv", std::ios::trunc);
  clusters << "spot_id,cluster\n";
  for (std::size_t r = 0; r < rows.size(); ++r) clusters << ds.spots[rows[r]].spot_id << ',' << predicted[r] << '\n';
  clusters.close();
  m.output("clusters", out / "clusters.csv");
  m.summary = {{"ari", score}, {"spots", rows.size()}, {"k", labels_path.empty() ? k : 0},
               {"source", labels_path.empty() ? "kmeans" : "external"}};
  std::printf("spots %zu\nARI   %.6f\n", rows.size(), score);
  return kOk;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

int cmd_plot(const CommonOptions& o, const std::string& gene, std::string image_name, Manifest& m) {
  const auto out = require_out(o);
  const auto ds = require_dataset(o, m);
  const auto it = std::find(ds.gene_names.begin(), ds.gene_names.end(), gene);
  if (it == ds.gene_names.end()) {
    std::vector<std::pair<std::size_t, std::string>> close;
    for (const auto& g : ds.gene_names) close.emplace_back(edit_distance(gene, g), g);
    std::stable_sort(close.begin(), close.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string hint;
    for (std::size_t i = 0; i < std::min<std::size_t>(close.size(), 5); ++i) hint += (i ? ", " : "") + close[i].second;
    throw UsageError("unknown gene '" + gene + "'; closest: " + hint);
  }
  if (image_name.empty()) image_name = gene + ".png";
  const auto path = out / image_name;
  write_image(render_spatial_plot(ds, static_cast<std::size_t>(it - ds.gene_names.begin())), path);
  m.output("image", path);
  std::printf("wrote %s\n", path.c_str());
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IncompatibilityError*>(&e)) return kIncompatible;
  if (dynamic_cast<const DivergenceError*>(&e) || dynamic_cast<const DegenerateError*>(&e)) return kNumerical;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ExtractorBackendError*>(&e)) return kEnvironment;
  if (dynamic_cast<const ContractError*>(&e)) return kEnvironment;
  if (dynamic_cast<const Error*>(&e)) return kUsage;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kEnvironment;
  return kEnvironment;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"histosge: gene expression from histology, with spot super-resolution"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonOptions o;
  auto common = [&](CLI::App* sub, bool dataset = true) {
    if (dataset) sub->add_option("--dataset", o.dataset, "Dataset directory");
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_flag("--deterministic", o.deterministic, "Force sequential execution");
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key=value run configuration");
    sub->add_option("--extractor", o.extractor, "Feature extractor")
        ->check(CLI::IsMember({"fallback", "remote", "local"}));
  };

  bool normalize = false;
  int n_hvg = 0;
  std::string format = "auto";
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write it in canonical form");
  common(ingest);
  ingest->add_flag("--normalize", normalize, "Library-size normalize and log1p");
  ingest->add_option("--n-hvg", n_hvg, "Keep the most variable genes");
  ingest->add_option("--format", format, "Expression format: auto, csv, binary");

  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic slice with known ground truth");
  common(synth, false);
  synth->add_option("--rows", sc.grid_rows);
  synth->add_option("--cols", sc.grid_cols);
  synth->add_option("--pitch", sc.pitch_px);
  synth->add_option("--genes", sc.n_genes);
  synth->add_option("--textures", sc.n_textures);
  synth->add_option("--noise", sc.noise_sigma);

  double fraction = 0.5;
  auto* split = app.add_subcommand("split", "Random holdout of spots");
  common(split);
  split->add_option("--fraction", fraction, "Held-out fraction");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  common(train_cmd);
  model_opts(train_cmd);

  std::string checkpoint;
  auto* predict_cmd = app.add_subcommand("predict", "Predict expression at every spot of a dataset");
  common(predict_cmd);
  model_opts(predict_cmd);
  predict_cmd->add_option("--checkpoint", checkpoint)->required();

  int factor = 8;
  auto* upsample = app.add_subcommand("upsample", "Construct unmeasured spots and predict all spots");
  common(upsample);
  model_opts(upsample);
  upsample->add_option("--checkpoint", checkpoint)->required();
  upsample->add_option("--factor", factor, "Resolution factor: 2, 4 or 8");

  std::string pred_dir, axis = "gene";
  int top = 10;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare predictions with observations");
  common(evaluate_cmd);
  evaluate_cmd->add_option("--pred", pred_dir, "Predicted dataset directory")->required();
  evaluate_cmd->add_option("--pcc-axis", axis, "gene or spot");
  evaluate_cmd->add_option("--top", top, "Best-correlated genes to list");

  int k = 0;
  std::string labels;
  auto* cluster = app.add_subcommand("cluster-eval", "Spatial domains against annotations (ARI)");
  common(cluster);
  cluster->add_option("--k", k, "Clusters (default: number of annotated labels)");
  cluster->add_option("--labels", labels, "External spot_id,label CSV instead of k-means");

  std::string gene, image_name;
  auto* plot = app.add_subcommand("plot", "Spatial plot of one gene");
  common(plot);
  plot->add_option("--gene", gene)->required();
  plot->add_option("--image", image_name, "File name inside --out (default <gene>.png)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Manifest m;
  m.command = app.get_subcommands().front()->get_name();
  m.argv.assign(argv, argv + argc);
  m.out_dir = o.out;
  m.seed = o.seed;
  m.deterministic = o.deterministic;

  int code = kOk;
  std::string error;
  try {
    auto* sub = app.get_subcommands().front();
    if (sub == ingest) code = cmd_ingest(o, normalize, n_hvg, format, m);
    else if (sub == synth) code = cmd_synth(o, sc, m);
    else if (sub == split) code = cmd_split(o, fraction, m);
    else if (sub == train_cmd) code = cmd_train(o, m);
    else if (sub == predict_cmd) code = cmd_predict(o, checkpoint, m);
    else if (sub == upsample) code = cmd_upsample(o, checkpoint, factor, m);
    else if (sub == evaluate_cmd) code = cmd_evaluate(o, pred_dir, axis, top, m);
    else if (sub == cluster) code = cmd_cluster_eval(o, k, labels, m);
    else if (sub == plot) code = cmd_plot(o, gene, image_name, m);
  } catch (const DivergenceError& e) {
    code = kNumerical;
    error = e.what();
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "last checkpoint: %s\n",
                 e.last_checkpoint().empty() ? "(none written)" : e.last_checkpoint().c_str());
  } catch (const std::exception& e) {
    code = exit_code_for(e);
    error = e.what();
    std::fprintf(stderr, "error: %s\n", e.what());
  }
  try {
    m.write(code, error);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "warning: could not write manifest: %s\n", e.what());
  }
  return code;
}
