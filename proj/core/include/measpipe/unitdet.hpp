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

#ifndef MEASPIPE_UNITDET_HPP_
#define MEASPIPE_UNITDET_HPP_

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "measpipe/corpus.hpp"
#include "measpipe/nn.hpp"

namespace measpipe::unitdet {

// Character inventory for the detector; ids 0 and 1 are padding and
// unknown, observed characters follow in code-point order.
class CharVocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  explicit CharVocab(std::vector<char32_t> chars);
  static CharVocab from_texts(const std::vector<std::string>& texts);

  int id(char32_t c) const;
  int size() const { return static_cast<int>(chars_.size()) + 2; }
  const std::vector<char32_t>& chars() const { return chars_; }

 private:
  std::vector<char32_t> chars_;  // sorted, unique
};

// One labelled quantity surface: which code points of `text` are the unit.
// An empty span means the quantity has no unit.
struct UnitExample {
  std::string text;
  Span unit;
};

struct UnitHyperparams {
  int embed_dim = 32;
  int hidden_dim = 32;  // per direction
  int batch_size = 38;
  std::size_t max_len = 64;
  double lr = 1e-4;
  int epochs = 30;
  int patience = 5;
  std::uint64_t seed = 42;
};

struct UnitTrainResult {
  std::vector<double> train_loss;  // mean per-character BCE by epoch
  std::vector<double> dev_f1;      // character-level micro F1 by epoch
  int best_epoch = -1;
  double best_dev_f1 = 0.0;
  int epochs_run = 0;
};

// Single-layer character BiLSTM with a per-character sigmoid read-out.
// The predicted unit is the longest run of positive characters (the
// earliest run on ties); no positive character means no unit.
class UnitDetector {
 public:
  UnitDetector(CharVocab vocab, int embed_dim, int hidden_dim,
               std::uint64_t seed);

  // Per-character unit probability for the first max_len code points.
  Eigen::VectorXd char_probs(const std::u32string& text, std::size_t max_len);
  std::optional<Span> predict_span(const std::string& text,
                                   std::size_t max_len = 64);
  // The detected unit surface, or "" when no character fires.
  std::string predict_unit(const std::string& text, std::size_t max_len = 64);

  nn::ParamList parameters();
  const CharVocab& vocab() const { return vocab_; }
  int embed_dim() const { return embed_dim_; }
  int hidden_dim() const { return hidden_dim_; }

  void save(const std::string& dir) const;
  static std::unique_ptr<UnitDetector> load(const std::string& dir);

  friend UnitTrainResult train_unit_detector(
      UnitDetector&, const std::vector<UnitExample>&,
      const std::vector<UnitExample>&, const UnitHyperparams&,
      const std::function<void(int, double, double)>&);

 private:
  struct Cache;
  void forward(const std::vector<int>& ids, Cache* cache) const;
  // BCE backward for one example; returns the summed loss.
  double backward(const Cache& cache, const std::vector<double>& labels,
                  double scale);

  CharVocab vocab_;
  int embed_dim_, hidden_dim_;
  nn::Tensor embed_;
  nn::Tensor fwd_w_, fwd_u_, fwd_b_;  // gates packed [input; forget; cell; output]
  nn::Tensor bwd_w_, bwd_u_, bwd_b_;
  nn::Tensor out_w_, out_b_;
};

// The mask-to-span rule: longest run of probabilities >= 0.5, earliest on
// ties; nullopt when no character fires.
std::optional<Span> longest_positive_run(const Eigen::VectorXd& probs);

// Adam over all detector parameters, mean BCE per batch, best-epoch
// checkpointing on dev character F1 with early stopping (as train_tagger).
UnitTrainResult train_unit_detector(
    UnitDetector& model, const std::vector<UnitExample>& train,
    const std::vector<UnitExample>& dev, const UnitHyperparams& hp,
    const std::function<void(int, double, double)>& log = nullptr);

// Character-level micro F1 of predicted vs gold positive characters.
double char_f1(const std::vector<Span>& predicted,
               const std::vector<Span>& gold);

}  // namespace measpipe::unitdet

#endif  // MEASPIPE_UNITDET_HPP_
