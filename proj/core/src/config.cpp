// Copyright 2026 The MeasPipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "measpipe/config.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace measpipe::config {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw std::invalid_argument("config key '" + key + "': expected " + expected +
                              ", got '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") {
    return true;
  }
  if (value == "false" || value == "0" || value == "no" || value == "off") {
    return false;
  }
  bad_value(key, value, "a boolean");
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(value, &pos);
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
  if (pos != value.size()) bad_value(key, value, "a number");
  return d;
}

long long parse_integer(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(value, &pos);
  } catch (const std::exception&) {
    bad_value(key, value, "an integer");
  }
  if (pos != value.size()) bad_value(key, value, "an integer");
  return n;
}

int parse_int(const std::string& key, const std::string& value) {
  return static_cast<int>(parse_integer(key, value));
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  const long long n = parse_integer(key, value);
  if (n < 0) bad_value(key, value, "a non-negative integer");
  return static_cast<std::size_t>(n);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  std::uint64_t n = 0;
  try {
    n = std::stoull(value, &pos);
  } catch (const std::exception&) {
    bad_value(key, value, "an unsigned integer");
  }
  if (pos != value.size()) bad_value(key, value, "an unsigned integer");
  return n;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string double_str(double d) {
  std::ostringstream out;
  out << d;
  return out.str();
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "text_dir") { text_dir = value; return; }
  if (key == "tsv_dir") { tsv_dir = value; return; }
  if (key == "out_dir") { out_dir = value; return; }
  if (key == "run_name") { run_name = value; return; }
  if (key == "group_map") { group_map = value; return; }
  if (key == "encoder") { encoder = value; return; }
  if (key == "tokenizer") { tokenizer = value; return; }
  if (key == "vocab") { vocab = value; return; }
  if (key == "lowercase") { lowercase = parse_bool(key, value); return; }
  if (key == "max_len") { max_len = parse_size(key, value); return; }
  if (key == "unit_max_len") { unit_max_len = parse_size(key, value); return; }
  if (key == "split_ratio") { split_ratio = parse_double(key, value); return; }
  if (key == "seed") { seed = parse_u64(key, value); return; }
  if (key == "device") { device = value; return; }
  if (key == "softmax_emissions") {
    softmax_emissions = parse_bool(key, value);
    return;
  }
  if (key == "sweep_threshold") {
    sweep_threshold = parse_bool(key, value);
    return;
  }
  if (key == "tagger.dim") { tagger.dim = parse_int(key, value); return; }
  if (key == "tagger.dropout") {
    tagger.dropout = parse_double(key, value);
    return;
  }
  if (key == "tagger.batch_size") {
    tagger.batch_size = parse_int(key, value);
    return;
  }
  if (key == "tagger.lr") { tagger.lr = parse_double(key, value); return; }
  if (key == "tagger.epochs") { tagger.epochs = parse_int(key, value); return; }
  if (key == "tagger.patience") {
    tagger.patience = parse_int(key, value);
    return;
  }
  if (key == "unitdet.embed_dim") {
    unitdet.embed_dim = parse_int(key, value);
    return;
  }
  if (key == "unitdet.hidden_dim") {
    unitdet.hidden_dim = parse_int(key, value);
    return;
  }
  if (key == "unitdet.batch_size") {
    unitdet.batch_size = parse_int(key, value);
    return;
  }
  if (key == "unitdet.lr") { unitdet.lr = parse_double(key, value); return; }
  if (key == "unitdet.epochs") {
    unitdet.epochs = parse_int(key, value);
    return;
  }
  if (key == "unitdet.patience") {
    unitdet.patience = parse_int(key, value);
    return;
  }
  if (key == "modifier.dim") { modifier.dim = parse_int(key, value); return; }
  if (key == "modifier.dropout") {
    modifier.dropout = parse_double(key, value);
    return;
  }
  if (key == "modifier.batch_size") {
    modifier.batch_size = parse_int(key, value);
    return;
  }
  if (key == "modifier.lr") { modifier.lr = parse_double(key, value); return; }
  if (key == "modifier.epochs") {
    modifier.epochs = parse_int(key, value);
    return;
  }
  if (key == "modifier.patience") {
    modifier.patience = parse_int(key, value);
    return;
  }
  if (key == "modifier.threshold") {
    modifier.threshold = parse_double(key, value);
    return;
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> kKeys = {
      "text_dir",          "tsv_dir",          "out_dir",
      "run_name",          "group_map",        "encoder",
      "tokenizer",         "vocab",            "lowercase",
      "max_len",           "unit_max_len",     "split_ratio",
      "seed",              "device",           "softmax_emissions",
      "sweep_threshold",   "tagger.dim",       "tagger.dropout",
      "tagger.batch_size", "tagger.lr",        "tagger.epochs",
      "tagger.patience",   "unitdet.embed_dim", "unitdet.hidden_dim",
      "unitdet.batch_size", "unitdet.lr",      "unitdet.epochs",
      "unitdet.patience",  "modifier.dim",     "modifier.dropout",
      "modifier.batch_size", "modifier.lr",    "modifier.epochs",
      "modifier.patience", "modifier.threshold",
  };
  return kKeys;
}

std::string RunConfig::to_keyvalue() const {
  std::ostringstream out;
  auto line = [&](const char* key, const std::string& value) {
    out << key << " = " << value << "\n";
  };
  line("text_dir", text_dir);
  line("tsv_dir", tsv_dir);
  line("out_dir", out_dir);
  line("run_name", run_name);
  line("group_map", group_map);
  line("encoder", encoder);
  line("tokenizer", tokenizer);
  line("vocab", vocab);
  line("lowercase", bool_str(lowercase));
  line("max_len", std::to_string(max_len));
  line("unit_max_len", std::to_string(unit_max_len));
  line("split_ratio", double_str(split_ratio));
  line("seed", std::to_string(seed));
  line("device", device);
  line("softmax_emissions", bool_str(softmax_emissions));
  line("sweep_threshold", bool_str(sweep_threshold));
  line("tagger.dim", std::to_string(tagger.dim));
  line("tagger.dropout", double_str(tagger.dropout));
  line("tagger.batch_size", std::to_string(tagger.batch_size));
  line("tagger.lr", double_str(tagger.lr));
  line("tagger.epochs", std::to_string(tagger.epochs));
  line("tagger.patience", std::to_string(tagger.patience));
  line("unitdet.embed_dim", std::to_string(unitdet.embed_dim));
  line("unitdet.hidden_dim", std::to_string(unitdet.hidden_dim));
  line("unitdet.batch_size", std::to_string(unitdet.batch_size));
  line("unitdet.lr", double_str(unitdet.lr));
  line("unitdet.epochs", std::to_string(unitdet.epochs));
  line("unitdet.patience", std::to_string(unitdet.patience));
  line("modifier.dim", std::to_string(modifier.dim));
  line("modifier.dropout", double_str(modifier.dropout));
  line("modifier.batch_size", std::to_string(modifier.batch_size));
  line("modifier.lr", double_str(modifier.lr));
  line("modifier.epochs", std::to_string(modifier.epochs));
  line("modifier.patience", std::to_string(modifier.patience));
  line("modifier.threshold", double_str(modifier.threshold));
  return out.str();
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> problems;
  auto positive = [&](const char* key, double v) {
    if (!(v > 0)) {
      problems.push_back(std::string(key) + " must be positive");
    }
  };
  positive("max_len", static_cast<double>(max_len));
  positive("unit_max_len", static_cast<double>(unit_max_len));
  positive("tagger.dim", tagger.dim);
  positive("tagger.batch_size", tagger.batch_size);
  positive("tagger.lr", tagger.lr);
  positive("tagger.epochs", tagger.epochs);
  positive("tagger.patience", tagger.patience);
  positive("unitdet.embed_dim", unitdet.embed_dim);
  positive("unitdet.hidden_dim", unitdet.hidden_dim);
  positive("unitdet.batch_size", unitdet.batch_size);
  positive("unitdet.lr", unitdet.lr);
  positive("unitdet.epochs", unitdet.epochs);
  positive("unitdet.patience", unitdet.patience);
  positive("modifier.dim", modifier.dim);
  positive("modifier.batch_size", modifier.batch_size);
  positive("modifier.lr", modifier.lr);
  positive("modifier.epochs", modifier.epochs);
  positive("modifier.patience", modifier.patience);
  if (tagger.dropout < 0 || tagger.dropout >= 1) {
    problems.push_back("tagger.dropout must be in [0, 1)");
  }
  if (modifier.dropout < 0 || modifier.dropout >= 1) {
    problems.push_back("modifier.dropout must be in [0, 1)");
  }
  if (modifier.threshold <= 0 || modifier.threshold >= 1) {
    problems.push_back("modifier.threshold must be in (0, 1)");
  }
  if (!(split_ratio > 0 && split_ratio < 1)) {
    problems.push_back("split_ratio must be in (0, 1)");
  }
  if (device != "cpu") {
    problems.push_back("device '" + device + "' is not available (cpu only)");
  }
  if (tokenizer != "whitespace" && tokenizer != "wordpiece") {
    problems.push_back("tokenizer must be 'whitespace' or 'wordpiece'");
  }
  if (tokenizer == "wordpiece" && vocab.empty()) {
    problems.push_back("tokenizer 'wordpiece' needs a vocab file");
  }
  for (const auto& [key, path] : std::initializer_list<
           std::pair<const char*, const std::string&>>{
           {"text_dir", text_dir},
           {"tsv_dir", tsv_dir},
           {"vocab", vocab},
           {"group_map", group_map}}) {
    if (!path.empty() && !fs::exists(path)) {
      problems.push_back(std::string(key) + " '" + path + "' does not exist");
    }
  }
  return problems;
}

tagheads::TaggerHyperparams RunConfig::tagger_hp() const {
  tagheads::TaggerHyperparams hp = tagger;
  hp.max_len = max_len;
  hp.seed = seed;
  hp.softmax_emissions = softmax_emissions;
  return hp;
}

unitdet::UnitHyperparams RunConfig::unit_hp() const {
  unitdet::UnitHyperparams hp = unitdet;
  hp.max_len = unit_max_len;
  hp.seed = seed;
  return hp;
}

modcls::ModifierHyperparams RunConfig::modifier_hp() const {
  modcls::ModifierHyperparams hp = modifier;
  hp.max_len = max_len;
  hp.seed = seed;
  hp.sweep_threshold = sweep_threshold;
  return hp;
}

RunConfig resolve_config(
    const std::optional<std::string>& config_file,
    const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig config;
  if (config_file.has_value()) apply_file(config, *config_file);
  for (const auto& [key, value] : flags) config.set(key, value);
  apply_env(config);
  return config;
}

void apply_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value'");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
}

void apply_env(RunConfig& config) {
  for (const std::string& key : RunConfig::keys()) {
    std::string name = "MEASPIPE_";
    for (char c : key) {
      name += (c == '.') ? '_'
                         : static_cast<char>(
                               std::toupper(static_cast<unsigned char>(c)));
    }
    if (const char* value = std::getenv(name.c_str())) {
      config.set(key, value);
    }
  }
}

std::string create_run_dir(const RunConfig& config,
                           const std::string& command) {
  std::string base = config.run_name;
  if (base.empty()) {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    base = command + "-" + stamp;
  }
  fs::create_directories(config.out_dir);
  fs::path dir = fs::path(config.out_dir) / base;
  for (int suffix = 1; fs::exists(dir); ++suffix) {
    dir = fs::path(config.out_dir) / (base + "-" + std::to_string(suffix));
  }
  fs::create_directories(dir);
  std::ofstream out(dir / "config.txt");
  if (!out) {
    throw std::runtime_error("cannot write config.txt under " + dir.string());
  }
  out << config.to_keyvalue();
  return dir.string();
}

}  // namespace measpipe::config
