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

#ifndef MEASPIPE_TAGHEADS_HPP_
#define MEASPIPE_TAGHEADS_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "measpipe/crf.hpp"
#include "measpipe/encoder.hpp"
#include "measpipe/nn.hpp"
#include "measpipe/textprep.hpp"

namespace measpipe::tagheads {

// The five span taggers share one architecture and differ only in training
// data. Qualifiers are trained twice: once against the quantity they
// qualify, once against the property.
enum class TaggerVariant {
  kQuantity,
  kMeasuredEntity,
  kMeasuredProperty,
  kQualifierQuantity,
  kQualifierProperty,
};
std::string to_string(TaggerVariant v);
TaggerVariant parse_tagger_variant(const std::string& s);

struct TagHeadConfig {
  int dim = 768;
  int num_tags = textprep::kNumBioTags;
  double dropout = 0.1;
  // Emissions are the softmax rows of the final projection; switching this
  // off feeds the raw logits to the CRF instead.
  bool softmax_emissions = true;
};

// Two-layer head over encoder states. With hidden rows H_i and the
// sentence-level row H_0 (the sentinel token):
//   A_i   = W1 tanh(H_i) + b1
//   A_cls = W0 tanh(H_0) + b0
//   Z_i   = W2 [A_i ; A_cls] + b2
// Emissions are softmax(Z_i) rowwise (or Z itself, per config).
class TagHead {
 public:
  TagHead(TagHeadConfig config, std::uint64_t seed);

  // `random` is only needed when training with dropout > 0.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& hidden, bool training,
                          rng::Random* random = nullptr);
  // Consumes d(loss)/d(emissions) for the cached forward, accumulates into
  // the head parameter gradients, returns d(loss)/d(hidden).
  Eigen::MatrixXd backward(const Eigen::MatrixXd& d_emissions);

  nn::ParamList parameters();
  const TagHeadConfig& config() const { return config_; }

 private:
  TagHeadConfig config_;
  nn::Tensor w0_, b0_, w1_, b1_, w2_, b2_;
  nn::Dropout dropout_;
  // forward cache
  Eigen::MatrixXd h_, tanh_h_, a_, z_, probs_;
  Eigen::VectorXd a_cls_;
};

// One training (or dev) item: a tokenized sentence with gold BIO tags and
// the gold character spans used for span-level scoring.
struct TagExample {
  textprep::TokenAlignment alignment;
  textprep::BioSequence gold;
  std::vector<Span> gold_spans;
};

struct TaggerHyperparams {
  int dim = 768;
  double dropout = 0.1;
  int batch_size = 24;
  std::size_t max_len = 255;
  double lr = 1e-5;
  int epochs = 15;
  int patience = 3;
  bool softmax_emissions = true;
  std::uint64_t seed = 42;
};

struct TagTrainResult {
  std::vector<double> train_loss;  // mean per-example NLL by epoch
  std::vector<double> dev_f1;      // exact-span micro F1 by epoch
  int best_epoch = -1;             // 0-based; -1 when dev was empty
  double best_dev_f1 = 0.0;
  int epochs_run = 0;
};

// Encoder + head + CRF for one variant.
class TaggerModel {
 public:
  TaggerModel(TaggerVariant variant, std::unique_ptr<encoder::Encoder> enc,
              TagHeadConfig head_config, std::uint64_t seed);

  std::vector<int> predict_tags(const std::vector<int>& token_ids);
  std::vector<Span> predict_spans(const textprep::TokenAlignment& alignment);

  double example_nll(const TagExample& example);

  TaggerVariant variant() const { return variant_; }
  encoder::Encoder& encoder() { return *encoder_; }
  TagHead& head() { return head_; }
  crf::Params crf_params() const;
  nn::ParamList parameters();

  void save(const std::string& dir) const;
  static std::unique_ptr<TaggerModel> load(const std::string& dir);

  friend TagTrainResult train_tagger(TaggerModel&,
                                     const std::vector<TagExample>&,
                                     const std::vector<TagExample>&,
                                     const TaggerHyperparams&,
                                     const std::function<void(int, double, double)>&);

 private:
  TaggerVariant variant_;
  std::unique_ptr<encoder::Encoder> encoder_;
  TagHead head_;
  nn::Tensor crf_trans_, crf_start_, crf_stop_;
};

// Adam over encoder, head, and CRF parameters; mean NLL per batch; keeps the
// parameters of the best dev epoch (exact-span micro F1, earliest epoch wins
// ties) and restores them before returning. Stops early after `patience`
// epochs without improvement. `log` may be null; it receives
// (epoch, train_loss, dev_f1) after each epoch.
TagTrainResult train_tagger(
    TaggerModel& model, const std::vector<TagExample>& train,
    const std::vector<TagExample>& dev, const TaggerHyperparams& hp,
    const std::function<void(int, double, double)>& log = nullptr);

// Micro exact-span F1 of predicted vs gold span lists.
double exact_span_f1(const std::vector<std::vector<Span>>& predicted,
                     const std::vector<std::vector<Span>>& gold);

}  // namespace measpipe::tagheads

#endif  // MEASPIPE_TAGHEADS_HPP_
