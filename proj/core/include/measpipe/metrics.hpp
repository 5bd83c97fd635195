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

#ifndef MEASPIPE_METRICS_HPP_
#define MEASPIPE_METRICS_HPP_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "measpipe/corpus.hpp"

namespace measpipe::metrics {

// Whitespace-token multiset overlap F1. Empty vs empty is 1, empty vs
// non-empty is 0.
double token_f1(const std::string& pred_text, const std::string& gold_text);

enum class PairingMode { kGreedy, kOptimal };

// One-to-one pairing of pred/gold texts by token_f1. Greedy repeatedly takes
// the best remaining pair (ties: earlier gold, then earlier pred); optimal
// maximizes the summed token_f1 (assignment problem). Pairs with zero
// token_f1 are never formed. Returns (pred index, gold index) pairs.
std::vector<std::pair<std::size_t, std::size_t>> pair_items(
    const std::vector<std::string>& pred, const std::vector<std::string>& gold,
    PairingMode mode = PairingMode::kGreedy);

// SQuAD-style list score: matched pairs contribute their token_f1, unmatched
// items on either side contribute 0 with unit weight; total divided by
// max(#pred, #gold). Two empty lists agree vacuously (1.0).
double f1_overlap(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold,
                  PairingMode mode = PairingMode::kGreedy);

// Accumulated scores for one item class.
struct ClassScore {
  std::size_t num_predicted = 0;
  std::size_t num_gold = 0;
  double sum_f1 = 0.0;
  double sum_exact = 0.0;

  double precision() const;
  double recall() const;
  double f_measure() const;
  double f1_overlap() const;
  double exact_match() const;

  void add(bool has_pred, bool has_gold, double f1, bool exact);
  void merge(const ClassScore& other);
};

struct MetricReport {
  std::map<std::string, ClassScore> per_class;
  ClassScore global;                           // all items pooled
  std::map<std::string, ClassScore> per_group; // only with a grouping map
};

struct ScoreOptions {
  PairingMode pairing = PairingMode::kGreedy;
  // doc_id -> group label (e.g. subdomain); enables the per_group breakdown.
  std::map<std::string, std::string> group_of;
};

// Scores a predicted corpus against gold. Annotation sets are aligned per
// document by quantity-span token_f1; items are then scored per class:
//   Quantity / MeasuredEntity / MeasuredProperty / Qualifier: span surface
//     token_f1, exact = identical offsets;
//   Unit: the quantity's unit string (item exists when either side has one),
//     exact = identical quantity offsets and unit;
//   Modifier: one item per aligned quantity, scored by label-set F1
//     (an empty stored set means {None}), exact = identical offsets and set;
//   HasQuantity / HasProperty / Qualifies: source-span token_f1, counted as
//     matched only when source and target spans both overlap; exact =
//     identical source and target offsets.
// Throws std::invalid_argument when the corpora cover different documents.
MetricReport score_corpus(const Corpus& pred, const Corpus& gold,
                          const ScoreOptions& options = {});

// Fixed display order of the item classes.
const std::vector<std::string>& class_names();

std::string to_table(const MetricReport& report);     // human-readable
std::string to_keyvalue(const MetricReport& report);  // machine-readable
std::string group_csv(const MetricReport& report);    // per-group breakdown

}  // namespace measpipe::metrics

#endif  // MEASPIPE_METRICS_HPP_
