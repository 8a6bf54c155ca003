#pragma once

// key=value run configuration shared by the CLI commands. '#' starts a
// comment; blank lines are ignored; unknown keys are rejected by name.

#include <filesystem>
#include <string>

#include "histosge/errors.hpp"
#include "histosge/model.hpp"
#include "histosge/preprocess.hpp"
#include "histosge/trainer.hpp"

namespace histosge {

class ConfigError : public ParameterError {
public:
  ConfigError(const std::string& what, std::string key) : ParameterError(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

struct RunConfig {
  TrainConfig train;
  ModelConfig model;  // d_model and gene_dim are filled in from the data
  PreprocessConfig preprocess;
  std::string extractor = "fallback";  // fallback | remote | local
  std::string remote_url;
  std::string local_runner;
  int embed_dim = 1024;
  int resize_to = 0;
  bool use_cache = true;
};

/// Applies the key=value pairs in `text` on top of `base`.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key with its effective value, sorted by key.
std::string canonical_text(const RunConfig& cfg);

}  // namespace histosge
