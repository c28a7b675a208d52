#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "lak/errors.hpp"
#include "lak/knn.hpp"
#include "lak/train.hpp"

namespace lak {

/// Everything a run needs: training and KNN settings, paths, and
/// execution flags. Sources merge in fixed precedence: defaults, then
/// the LAK_SEED environment variable (seed only), then the config file,
/// then command-line flags.
struct RunConfig {
  TrainConfig train;
  KnnConfig knn;
  std::string data_dir;
  std::string out_dir = "run";
  std::size_t jobs = 1;
  bool blend_after_average = false;
};

namespace detail {

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: " + key + " expects an integer, got '" + value + "'");
  return v;
}

inline double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + value + "'");
}

}  // namespace detail

/// Applies one key=value pair; unknown keys are an error.
inline void apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_u64;
  if (key == "epochs") c.train.epochs = parse_u64(key, value);
  else if (key == "batch_size") c.train.batch_size = parse_u64(key, value);
  else if (key == "learning_rate") c.train.learning_rate = parse_double(key, value);
  else if (key == "seed") c.train.seed = parse_u64(key, value);
  else if (key == "folds") c.train.folds = parse_u64(key, value);
  else if (key == "gamma") c.train.gamma = parse_double(key, value);
  else if (key == "tau_prime") c.train.tau_prime = parse_double(key, value);
  else if (key == "w_mode") c.train.w_mode = parse_w_mode(value);
  else if (key == "model_kind") c.train.kind = parse_model_kind(value);
  else if (key == "dim") c.train.dim = parse_u64(key, value);
  else if (key == "heads") c.train.heads = parse_u64(key, value);
  else if (key == "enc_layers") c.train.enc_layers = parse_u64(key, value);
  else if (key == "vocab_size") c.train.vocab_size = parse_u64(key, value);
  else if (key == "max_len") c.train.max_len = parse_u64(key, value);
  else if (key == "use_positions") c.train.use_positions = parse_bool(key, value);
  else if (key == "classifier_bias") c.train.classifier_bias = parse_bool(key, value);
  else if (key == "cl_squared") c.train.cl_squared = parse_bool(key, value);
  else if (key == "attention_scale") c.train.scale = parse_attn_scale(value);
  else if (key == "reduction") {
    if (value == "sum") c.train.reduction = Reduction::sum;
    else if (value == "mean") c.train.reduction = Reduction::mean;
    else throw ConfigError("config: reduction expects sum or mean, got '" + value + "'");
  } else if (key == "patience") c.train.patience = parse_u64(key, value);
  else if (key == "clip_norm") c.train.clip_norm = parse_double(key, value);
  else if (key == "optimizer") c.train.optimizer = parse_optimizer(value);
  else if (key == "momentum") c.train.momentum = parse_double(key, value);
  else if (key == "threshold") c.train.threshold = parse_double(key, value);
  else if (key == "k") c.knn.k = parse_u64(key, value);
  else if (key == "tau") c.knn.tau = parse_double(key, value);
  else if (key == "lambda") c.knn.lambda = parse_double(key, value);
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "jobs") c.jobs = parse_u64(key, value);
  else if (key == "blend_after_average") c.blend_after_average = parse_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

/// Flat key=value file; '#' starts a comment, blank lines are ignored.
inline void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t");
    line = line.substr(a, b - a + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " of " + path +
                        " is not key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto x = s.find_first_not_of(" \t");
      const auto y = s.find_last_not_of(" \t");
      s = x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    trim(key);
    trim(value);
    apply_config_key(c, key, value);
  }
}

/// Seed fallback from the environment; file and flag values win.
inline void apply_env_seed(RunConfig& c) {
  const char* env = std::getenv("LAK_SEED");
  if (env && *env) c.train.seed = detail::parse_u64("LAK_SEED", env);
}

/// Full resolved dump, written next to every run's outputs.
inline std::string resolved_config_text(const RunConfig& c) {
  std::ostringstream os;
  os << train_config_text(c.train);
  os << "k=" << c.knn.k << '\n'
     << "tau=" << c.knn.tau << '\n'
     << "lambda=" << c.knn.lambda << '\n'
     << "data_dir=" << c.data_dir << '\n'
     << "out_dir=" << c.out_dir << '\n'
     << "jobs=" << c.jobs << '\n'
     << "blend_after_average=" << (c.blend_after_average ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace lak
