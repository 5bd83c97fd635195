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

#include "measpipe/encoder.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace measpipe::encoder {

namespace fs = std::filesystem;

namespace {

constexpr int kDefaultDim = 768;
constexpr std::uint64_t kDefaultSeed = 17;

// Splits "name:123:45" into pieces after the name.
std::vector<std::string> split_colon(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t next = s.find(':', pos);
    if (next == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, next - pos));
    pos = next + 1;
  }
  return parts;
}

long parse_long(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("bad ") + what + " '" + s +
                                "' in encoder identifier");
  }
}

}  // namespace

StubEncoder::StubEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw std::invalid_argument("stub encoder dim must be positive");
}

Eigen::MatrixXd StubEncoder::forward(const std::vector<int>& token_ids,
                                     bool /*training*/) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(token_ids.size()), dim_);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const auto id = static_cast<std::uint64_t>(token_ids[i]);
    for (int k = 0; k < dim_; ++k) {
      const double by_token = rng::to_unit(
          rng::mix(rng::combine(seed_, rng::combine(id, 2 * k))));
      const double by_position = rng::to_unit(rng::mix(rng::combine(
          seed_, rng::combine(id, rng::combine(i, 2 * k + 1)))));
      h(static_cast<Eigen::Index>(i), k) = by_token + 0.1 * by_position;
    }
  }
  return h;
}

void StubEncoder::backward(const std::vector<int>& /*token_ids*/,
                           const Eigen::MatrixXd& /*d_hidden*/) {}

nlohmann::json StubEncoder::config() const {
  return {{"kind", "stub"}, {"dim", dim_}, {"seed", seed_}};
}

void StubEncoder::save(const std::string& dir) const {
  fs::create_directories(dir);
  nn::save_parameters(dir, {}, config());
}

EmbeddingEncoder::EmbeddingEncoder(int vocab_size, int max_positions, int dim,
                                   std::uint64_t seed)
    : vocab_size_(vocab_size),
      max_positions_(max_positions),
      dim_(dim),
      seed_(seed),
      tok_("encoder.tok", vocab_size, dim),
      pos_("encoder.pos", max_positions, dim) {
  if (vocab_size <= 0 || max_positions <= 0 || dim <= 0) {
    throw std::invalid_argument("embedding encoder sizes must be positive");
  }
  rng::Random random(seed);
  nn::init_normal(tok_, 0.1, random);
  nn::init_normal(pos_, 0.1, random);
}

Eigen::MatrixXd EmbeddingEncoder::forward(const std::vector<int>& token_ids,
                                          bool /*training*/) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(token_ids.size()), dim_);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= vocab_size_) {
      throw std::out_of_range("token id outside embedding table");
    }
    const int p = static_cast<int>(std::min<std::size_t>(
        i, static_cast<std::size_t>(max_positions_ - 1)));
    h.row(static_cast<Eigen::Index>(i)) = tok_.value.row(id) + pos_.value.row(p);
  }
  return h;
}

void EmbeddingEncoder::backward(const std::vector<int>& token_ids,
                                const Eigen::MatrixXd& d_hidden) {
  if (d_hidden.rows() != static_cast<Eigen::Index>(token_ids.size()) ||
      d_hidden.cols() != dim_) {
    throw std::invalid_argument("encoder backward: gradient shape mismatch");
  }
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int p = static_cast<int>(std::min<std::size_t>(
        i, static_cast<std::size_t>(max_positions_ - 1)));
    tok_.grad.row(token_ids[i]) += d_hidden.row(static_cast<Eigen::Index>(i));
    pos_.grad.row(p) += d_hidden.row(static_cast<Eigen::Index>(i));
  }
}

nn::ParamList EmbeddingEncoder::parameters() { return {&tok_, &pos_}; }

nlohmann::json EmbeddingEncoder::config() const {
  return {{"kind", "embedding"},
          {"vocab_size", vocab_size_},
          {"max_positions", max_positions_},
          {"dim", dim_},
          {"seed", seed_}};
}

void EmbeddingEncoder::save(const std::string& dir) const {
  auto* self = const_cast<EmbeddingEncoder*>(this);
  nn::save_parameters(dir, self->parameters(), config());
}

std::unique_ptr<EmbeddingEncoder> EmbeddingEncoder::load(const std::string& dir) {
  std::ifstream meta_in(fs::path(dir) / "meta.json");
  if (!meta_in) {
    throw std::runtime_error("no encoder checkpoint at '" + dir + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;
  const nlohmann::json extra = meta.value("extra", nlohmann::json::object());
  if (extra.value("kind", "") != "embedding") {
    throw std::runtime_error("checkpoint at '" + dir +
                             "' is not an embedding encoder");
  }
  auto out = std::make_unique<EmbeddingEncoder>(
      extra.at("vocab_size").get<int>(), extra.at("max_positions").get<int>(),
      extra.at("dim").get<int>(), extra.value("seed", kDefaultSeed));
  nn::load_parameters(dir, out->parameters());
  return out;
}

std::unique_ptr<Encoder> make_encoder(const std::string& identifier,
                                      int vocab_size, int max_positions) {
  const std::vector<std::string> parts = split_colon(identifier);
  const std::string& head = parts[0];

  if (head == "stub" || head == "embedding") {
    if (parts.size() > 3) {
      throw std::invalid_argument("encoder identifier '" + identifier +
                                  "' has too many fields");
    }
    const int dim = parts.size() > 1
                        ? static_cast<int>(parse_long(parts[1], "dim"))
                        : kDefaultDim;
    const std::uint64_t seed =
        parts.size() > 2
            ? static_cast<std::uint64_t>(parse_long(parts[2], "seed"))
            : kDefaultSeed;
    if (head == "stub") return std::make_unique<StubEncoder>(dim, seed);
    return std::make_unique<EmbeddingEncoder>(vocab_size, max_positions, dim,
                                              seed);
  }

  if (fs::exists(fs::path(identifier) / "meta.json")) {
    return EmbeddingEncoder::load(identifier);
  }

  throw std::invalid_argument(
      "unknown encoder '" + identifier +
      "'; expected \"stub[:dim[:seed]]\", \"embedding[:dim[:seed]]\", or a "
      "directory containing a saved encoder checkpoint");
}

std::unique_ptr<Encoder> from_config(const nlohmann::json& config) {
  const std::string kind = config.value("kind", "");
  if (kind == "stub") {
    return std::make_unique<StubEncoder>(config.at("dim").get<int>(),
                                         config.value("seed", kDefaultSeed));
  }
  if (kind == "embedding") {
    return std::make_unique<EmbeddingEncoder>(
        config.at("vocab_size").get<int>(),
        config.at("max_positions").get<int>(), config.at("dim").get<int>(),
        config.value("seed", kDefaultSeed));
  }
  throw std::invalid_argument("unknown encoder kind '" + kind + "' in config");
}

}  // namespace measpipe::encoder
