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

#ifndef MEASPIPE_TRAINDATA_HPP_
#define MEASPIPE_TRAINDATA_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "measpipe/corpus.hpp"
#include "measpipe/modcls.hpp"
#include "measpipe/tagheads.hpp"
#include "measpipe/textprep.hpp"
#include "measpipe/unitdet.hpp"

namespace measpipe::traindata {

// Everything example construction counted or had to set aside. Nothing is
// dropped silently: every skipped span lands in one of these counters.
struct DatasetStats {
  std::size_t documents = 0;
  std::size_t sentences = 0;
  std::size_t quantities = 0;
  std::size_t entities = 0;
  std::size_t properties = 0;
  std::size_t qualifiers = 0;

  // Gold spans clipped at a sentence edge or landing outside the quantity's
  // sentence; such pairs cannot be trained from a single marked sentence.
  std::size_t cross_sentence_spans = 0;
  // Gold spans entirely past the tokenizer truncation point.
  std::size_t unreachable_spans = 0;
  // Distinct gold spans overlapping each other within one tagging example,
  // or gold spans overlapping the marker span they would be trained under.
  std::size_t overlapping_gold_spans = 0;
  // Quantities whose unit string is not a substring of the phrase; excluded
  // from unit-detector training.
  std::size_t unit_not_substring = 0;
  // Gold modifier sets combining None with other labels.
  std::size_t none_with_other_labels = 0;
  // Qualifies relations pointing at neither the quantity nor the property.
  std::size_t qualifier_other_target = 0;

  DatasetStats& operator+=(const DatasetStats& other);
  std::string to_keyvalue() const;
};

// Supervised examples for every trainable model, derived from one corpus.
struct Dataset {
  std::vector<tagheads::TagExample> quantity;
  std::vector<tagheads::TagExample> entity;
  std::vector<tagheads::TagExample> property;
  std::vector<tagheads::TagExample> qualifier_q;
  std::vector<tagheads::TagExample> qualifier_p;
  std::vector<unitdet::UnitExample> unit;
  std::vector<modcls::ModifierExample> modifier;
  DatasetStats stats;

  const std::vector<tagheads::TagExample>& tagging(
      tagheads::TaggerVariant variant) const;
};

struct BuildOptions {
  std::size_t max_len = 255;
};

// Derives all training examples from gold annotations:
//  - quantity: one example per sentence, gold = every quantity span in it;
//  - entity / qualifier_q / modifier: the "$"-marked sentence of each
//    quantity (entity and qualifier sets may be empty — the pipeline runs
//    those models unconditionally, so all-O examples are genuine negatives);
//  - property / qualifier_p: only for sets whose conditioning annotation
//    (entity resp. property) exists in the quantity's sentence, mirroring
//    the pipeline's conditional stages;
//  - unit: (quantity phrase, unit span) via first-substring search.
Dataset build_dataset(const Corpus& corpus,
                      const textprep::SentenceSplitter& splitter,
                      const textprep::SubwordTokenizer& tokenizer,
                      const BuildOptions& options = {});

// Deterministic text caches: same examples in, byte-identical file out.
// Readers validate the header and throw std::runtime_error on mismatch.
void write_tag_cache(const std::vector<tagheads::TagExample>& examples,
                     const std::string& path);
std::vector<tagheads::TagExample> read_tag_cache(const std::string& path);

void write_unit_cache(const std::vector<unitdet::UnitExample>& examples,
                      const std::string& path);
std::vector<unitdet::UnitExample> read_unit_cache(const std::string& path);

void write_modifier_cache(const std::vector<modcls::ModifierExample>& examples,
                          const std::string& path);
std::vector<modcls::ModifierExample> read_modifier_cache(
    const std::string& path);

}  // namespace measpipe::traindata

#endif  // MEASPIPE_TRAINDATA_HPP_
