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

#ifndef MEASPIPE_ENCODER_HPP_
#define MEASPIPE_ENCODER_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "measpipe/nn.hpp"

namespace measpipe::encoder {

// Produces one hidden row per input token. Heads treat this as a black box;
// trainable encoders expose parameters and accept gradients, frozen ones
// ignore backward().
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual int dim() const = 0;
  // (n, dim) hidden states for n token ids.
  virtual Eigen::MatrixXd forward(const std::vector<int>& token_ids,
                                  bool training) = 0;
  // Accumulates gradients for the same ids passed to the matching forward.
  virtual void backward(const std::vector<int>& token_ids,
                        const Eigen::MatrixXd& d_hidden) = 0;
  virtual nn::ParamList parameters() = 0;  // empty for frozen encoders
  virtual std::string kind() const = 0;
  virtual nlohmann::json config() const = 0;
  virtual void save(const std::string& dir) const = 0;
};

// Frozen, hash-derived features: h(i, k) = u(id, k) + 0.1 * u(id, i, k)
// with u in [-1, 1). Token identity dominates, so linear heads remain
// learnable on top; no parameters, no I/O, fully deterministic.
class StubEncoder : public Encoder {
 public:
  StubEncoder(int dim, std::uint64_t seed);

  int dim() const override { return dim_; }
  Eigen::MatrixXd forward(const std::vector<int>& token_ids,
                          bool training) override;
  void backward(const std::vector<int>& token_ids,
                const Eigen::MatrixXd& d_hidden) override;
  nn::ParamList parameters() override { return {}; }
  std::string kind() const override { return "stub"; }
  nlohmann::json config() const override;
  void save(const std::string& dir) const override;

 private:
  int dim_;
  std::uint64_t seed_;
};

// Trainable lookup encoder: h(i) = E_tok[id_i] + E_pos[min(i, P-1)].
class EmbeddingEncoder : public Encoder {
 public:
  EmbeddingEncoder(int vocab_size, int max_positions, int dim,
                   std::uint64_t seed);

  int dim() const override { return dim_; }
  Eigen::MatrixXd forward(const std::vector<int>& token_ids,
                          bool training) override;
  void backward(const std::vector<int>& token_ids,
                const Eigen::MatrixXd& d_hidden) override;
  nn::ParamList parameters() override;
  std::string kind() const override { return "embedding"; }
  nlohmann::json config() const override;
  void save(const std::string& dir) const override;
  static std::unique_ptr<EmbeddingEncoder> load(const std::string& dir);

  int vocab_size() const { return vocab_size_; }
  int max_positions() const { return max_positions_; }

 private:
  int vocab_size_, max_positions_, dim_;
  std::uint64_t seed_;
  nn::Tensor tok_, pos_;
};

// Resolves an encoder identifier:
//   "stub[:dim[:seed]]"         frozen hash features
//   "embedding[:dim[:seed]]"    fresh trainable lookup encoder
//   <directory>                 a previously saved encoder
// Anything else is an error listing the supported forms.
std::unique_ptr<Encoder> make_encoder(const std::string& identifier,
                                      int vocab_size, int max_positions);

// Reconstructs an encoder (with fresh parameters) from a config() object.
std::unique_ptr<Encoder> from_config(const nlohmann::json& config);

}  // namespace measpipe::encoder

#endif  // MEASPIPE_ENCODER_HPP_
