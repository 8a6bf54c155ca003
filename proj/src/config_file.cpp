#include "histosge/config_file.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace histosge {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

template <typename Int>
Setter int_field(Int TrainConfig::*field) {
  return [field](RunConfig& c, const std::string& v) {
    if (!detail::parse_int(v, c.train.*field)) throw std::invalid_argument(v);
  };
}

Setter model_int(int ModelConfig::*field) {
  return [field](RunConfig& c, const std::string& v) {
    if (!detail::parse_int(v, c.model.*field)) throw std::invalid_argument(v);
  };
}

Setter prep_int(int PreprocessConfig::*field) {
  return [field](RunConfig& c, const std::string& v) {
    if (!detail::parse_int(v, c.preprocess.*field)) throw std::invalid_argument(v);
  };
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument(v);
}

double parse_real(const std::string& v) {
  double d;
  if (!detail::parse_double(v, d)) throw std::invalid_argument(v);
  return d;
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"epochs", int_field(&TrainConfig::epochs)},
      {"batch_size", int_field(&TrainConfig::batch_size)},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_real(v); }},
      {"seed", int_field(&TrainConfig::seed)},
      {"checkpoint_every", int_field(&TrainConfig::checkpoint_every)},
      {"optimizer",
       [](RunConfig& c, const std::string& v) {
         if (v == "adam") c.train.optimizer = OptimizerKind::adam;
         else if (v == "sgd") c.train.optimizer = OptimizerKind::sgd;
         else throw std::invalid_argument(v);
       }},
      {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_real(v); }},
      {"lr_schedule",
       [](RunConfig& c, const std::string& v) {
         if (v == "constant") c.train.lr_schedule = LrSchedule::constant;
         else if (v == "cosine") c.train.lr_schedule = LrSchedule::cosine;
         else throw std::invalid_argument(v);
       }},
      {"early_stopping_patience", int_field(&TrainConfig::early_stopping_patience)},
      {"attention_scope",
       [](RunConfig& c, const std::string& v) {
         if (v == "batch") c.train.attention_scope = AttentionScope::batch;
         else if (v == "slice") c.train.attention_scope = AttentionScope::slice;
         else throw std::invalid_argument(v);
       }},
      {"slice_cap", int_field(&TrainConfig::slice_cap)},
      {"threads", int_field(&TrainConfig::threads)},
      {"n_heads", model_int(&ModelConfig::n_heads)},
      {"n_layers", model_int(&ModelConfig::n_layers)},
      {"d_ff", model_int(&ModelConfig::d_ff)},
      {"dropout", [](RunConfig& c, const std::string& v) { c.model.dropout_rate = parse_real(v); }},
      {"pe_mode", [](RunConfig& c, const std::string& v) { c.model.pe_mode = parse_pe_mode(v); }},
      {"pe_base", [](RunConfig& c, const std::string& v) { c.model.pe_base = parse_real(v); }},
      {"plain_mhsa", [](RunConfig& c, const std::string& v) { c.model.plain_mhsa = parse_bool(v); }},
      {"patch_w", prep_int(&PreprocessConfig::patch_w)},
      {"patch_h", prep_int(&PreprocessConfig::patch_h)},
      {"extractor",
       [](RunConfig& c, const std::string& v) {
         if (v != "fallback" && v != "remote" && v != "local") throw std::invalid_argument(v);
         c.extractor = v;
       }},
      {"remote_url", [](RunConfig& c, const std::string& v) { c.remote_url = v; }},
      {"local_runner", [](RunConfig& c, const std::string& v) { c.local_runner = v; }},
      {"embed_dim",
       [](RunConfig& c, const std::string& v) {
         if (!detail::parse_int(v, c.embed_dim)) throw std::invalid_argument(v);
       }},
      {"resize_to",
       [](RunConfig& c, const std::string& v) {
         if (!detail::parse_int(v, c.resize_to)) throw std::invalid_argument(v);
       }},
      {"cache", [](RunConfig& c, const std::string& v) { c.use_cache = parse_bool(v); }},
  };
  return table;
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value", std::string(trimmed));
    }
    const std::string key(detail::trim(trimmed.substr(0, eq)));
    const std::string value(detail::trim(trimmed.substr(eq + 1)));
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'", key);
    try {
      it->second(base, value);
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad value '" + value + "' for config key '" + key + "'", key);
    } catch (const ParameterError& e) {
      throw ConfigError(std::string(e.what()) + " (config key '" + key + "')", key);
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing or unreadable config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::move(base));
}

std::string canonical_text(const RunConfig& c) {
  std::map<std::string, std::string> kv = {
      {"epochs", std::to_string(c.train.epochs)},
      {"batch_size", std::to_string(c.train.batch_size)},
      {"learning_rate", detail::format_double(c.train.learning_rate)},
      {"seed", std::to_string(c.train.seed)},
      {"checkpoint_every", std::to_string(c.train.checkpoint_every)},
      {"optimizer", c.train.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
      {"weight_decay", detail::format_double(c.train.weight_decay)},
      {"lr_schedule", c.train.lr_schedule == LrSchedule::constant ? "constant" : "cosine"},
      {"early_stopping_patience", std::to_string(c.train.early_stopping_patience)},
      {"attention_scope", c.train.attention_scope == AttentionScope::batch ? "batch" : "slice"},
      {"slice_cap", std::to_string(c.train.slice_cap)},
      {"threads", std::to_string(c.train.threads)},
      {"n_heads", std::to_string(c.model.n_heads)},
      {"n_layers", std::to_string(c.model.n_layers)},
      {"d_ff", std::to_string(c.model.d_ff)},
      {"dropout", detail::format_double(c.model.dropout_rate)},
      {"pe_mode", to_string(c.model.pe_mode)},
      {"pe_base", detail::format_double(c.model.pe_base)},
      {"plain_mhsa", yes_no(c.model.plain_mhsa)},
      {"patch_w", std::to_string(c.preprocess.patch_w)},
      {"patch_h", std::to_string(c.preprocess.patch_h)},
      {"extractor", c.extractor},
      {"remote_url", c.remote_url},
      {"local_runner", c.local_runner},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"resize_to", std::to_string(c.resize_to)},
      {"cache", yes_no(c.use_cache)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

}  // namespace histosge
