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

#ifndef MEASPIPE_MODCLS_HPP_
#define MEASPIPE_MODCLS_HPP_

#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "measpipe/corpus.hpp"
#include "measpipe/encoder.hpp"
#include "measpipe/nn.hpp"
#include "measpipe/textprep.hpp"

namespace measpipe::modcls {

// Tokens strictly between the two quantity markers (the markers themselves
// and everything outside are excluded). `marked_span` is the quantity span
// in marked-sentence coordinates.
std::vector<bool> inside_mask(const textprep::TokenAlignment& alignment,
                              const Span& marked_span);

struct ModifierExample {
  textprep::TokenAlignment alignment;      // over the marked sentence
  std::vector<bool> inside;                // one flag per token
  std::set<ModifierLabel> gold;            // {None} when unmodified
};

struct ModifierHyperparams {
  int dim = 768;
  double dropout = 0.1;
  int batch_size = 24;
  std::size_t max_len = 255;
  double lr = 1e-5;
  int epochs = 20;
  int patience = 3;
  double threshold = 0.5;
  // When set, after training the decision threshold is re-picked on dev
  // from {0.30, 0.35, ..., 0.70} by micro F1 (ties prefer 0.5, then lower).
  bool sweep_threshold = false;
  std::uint64_t seed = 42;
};

struct ModifierTrainResult {
  std::vector<double> train_loss;  // mean per-example BCE by epoch
  std::vector<double> dev_f1;      // label micro F1 by epoch
  int best_epoch = -1;
  double best_dev_f1 = 0.0;
  int epochs_run = 0;
  double threshold = 0.5;  // final decision threshold stored in the model
};

// Sigmoid multi-label head over the mean of the in-marker hidden rows:
//   z = W tanh(mean) + b,  p = sigmoid(z)
// Labels with p >= threshold fire; an empty result falls back to {None},
// and None is dropped whenever it fires alongside a real modifier.
class ModifierModel {
 public:
  ModifierModel(std::unique_ptr<encoder::Encoder> enc, int dim, double dropout,
                std::uint64_t seed);

  Eigen::VectorXd probabilities(const textprep::TokenAlignment& alignment,
                                const std::vector<bool>& inside);
  std::set<ModifierLabel> predict(const textprep::TokenAlignment& alignment,
                                  const std::vector<bool>& inside);

  // Summed 12-label BCE of one example in evaluation mode; accumulates the
  // analytic gradients into the parameters.
  double example_bce(const ModifierExample& example);

  double threshold() const { return threshold_; }
  void set_threshold(double t) { threshold_ = t; }
  encoder::Encoder& encoder() { return *encoder_; }
  nn::ParamList parameters();

  void save(const std::string& dir) const;
  static std::unique_ptr<ModifierModel> load(const std::string& dir);

  friend ModifierTrainResult train_modifier(
      ModifierModel&, const std::vector<ModifierExample>&,
      const std::vector<ModifierExample>&, const ModifierHyperparams&,
      const std::function<void(int, double, double)>&);

 private:
  // Forward with cache; returns the logits.
  Eigen::VectorXd forward(const textprep::TokenAlignment& alignment,
                          const std::vector<bool>& inside, bool training,
                          rng::Random* random);
  void backward(const Eigen::VectorXd& d_logits);

  std::unique_ptr<encoder::Encoder> encoder_;
  int dim_;
  double dropout_rate_;
  double threshold_ = 0.5;
  nn::Tensor w_, b_;
  nn::Dropout dropout_;
  // forward cache
  std::vector<int> cached_ids_;
  std::vector<Eigen::Index> cached_rows_;
  Eigen::VectorXd mean_, r_;
};

// Applies the firing rules to a probability vector.
std::set<ModifierLabel> decide_labels(const Eigen::VectorXd& probs,
                                      double threshold);

// Label-instance micro F1 of predicted vs gold modifier sets.
double modifier_micro_f1(const std::vector<std::set<ModifierLabel>>& predicted,
                         const std::vector<std::set<ModifierLabel>>& gold);

ModifierTrainResult train_modifier(
    ModifierModel& model, const std::vector<ModifierExample>& train,
    const std::vector<ModifierExample>& dev, const ModifierHyperparams& hp,
    const std::function<void(int, double, double)>& log = nullptr);

}  // namespace measpipe::modcls

#endif  // MEASPIPE_MODCLS_HPP_
