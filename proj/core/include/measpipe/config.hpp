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

#ifndef MEASPIPE_CONFIG_HPP_
#define MEASPIPE_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "measpipe/modcls.hpp"
#include "measpipe/tagheads.hpp"
#include "measpipe/unitdet.hpp"

namespace measpipe::config {

// Every knob a run can turn. Shared fields (seed, max_len, emissions and
// threshold modes) are folded into the per-model hyperparameter structs by
// the *_hp() helpers so they cannot disagree.
struct RunConfig {
  // Paths.
  std::string text_dir;
  std::string tsv_dir;
  std::string out_dir = "runs";
  std::string run_name;   // overrides the timestamped run directory name
  std::string group_map;  // optional doc_id -> subdomain file for evaluate

  // Text preparation.
  std::string encoder = "stub";
  std::string tokenizer = "whitespace";  // whitespace | wordpiece
  std::string vocab;                     // wordpiece vocabulary file
  bool lowercase = false;
  std::size_t max_len = 255;
  std::size_t unit_max_len = 64;

  // Run-wide switches.
  double split_ratio = 0.9;
  std::uint64_t seed = 42;
  std::string device = "cpu";
  bool softmax_emissions = true;
  bool sweep_threshold = false;

  // Per-model hyperparameters (keys tagger.*, unitdet.*, modifier.*).
  tagheads::TaggerHyperparams tagger;
  unitdet::UnitHyperparams unitdet;
  modcls::ModifierHyperparams modifier;

  // Assigns one key; throws std::invalid_argument for unknown keys or
  // unparseable values.
  void set(const std::string& key, const std::string& value);

  // Every settable key, in serialization order.
  static const std::vector<std::string>& keys();

  // The resolved configuration, one "key = value" per line.
  std::string to_keyvalue() const;

  // Static validation: positive hyperparameters, ratio in (0,1), known
  // tokenizer/device, and existence of every non-empty path field. Returns
  // human-readable problems; empty means valid.
  std::vector<std::string> validate() const;

  // Per-model hyperparameters with the shared fields folded in.
  tagheads::TaggerHyperparams tagger_hp() const;
  unitdet::UnitHyperparams unit_hp() const;
  modcls::ModifierHyperparams modifier_hp() const;
};

// Layered resolution: defaults <- config file <- flags <- MEASPIPE_* env.
RunConfig resolve_config(
    const std::optional<std::string>& config_file,
    const std::vector<std::pair<std::string, std::string>>& flags);

// Parses a flat "key = value" file ('#' starts a comment) onto `config`.
void apply_file(RunConfig& config, const std::string& path);

// Applies MEASPIPE_<KEY> environment variables ('.' becomes '_').
void apply_env(RunConfig& config);

// Creates <out_dir>/<run_name or command-UTCtimestamp>, serializes the
// resolved config into config.txt inside it, and returns the path. A name
// collision gets a numeric suffix rather than reusing the directory.
std::string create_run_dir(const RunConfig& config, const std::string& command);

}  // namespace measpipe::config

#endif  // MEASPIPE_CONFIG_HPP_
