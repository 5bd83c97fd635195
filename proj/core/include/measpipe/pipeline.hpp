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

#ifndef MEASPIPE_PIPELINE_HPP_
#define MEASPIPE_PIPELINE_HPP_

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "measpipe/corpus.hpp"
#include "measpipe/modcls.hpp"
#include "measpipe/tagheads.hpp"
#include "measpipe/textprep.hpp"
#include "measpipe/unitdet.hpp"

namespace measpipe::pipeline {

// Everything inference needs: the five span taggers, the unit detector, the
// modifier classifier, and the shared text-preparation handles.
struct ModelBundle {
  std::unique_ptr<tagheads::TaggerModel> quantity;
  std::unique_ptr<tagheads::TaggerModel> entity;
  std::unique_ptr<tagheads::TaggerModel> property;
  std::unique_ptr<tagheads::TaggerModel> qualifier_q;
  std::unique_ptr<tagheads::TaggerModel> qualifier_p;
  std::unique_ptr<unitdet::UnitDetector> unit;
  std::unique_ptr<modcls::ModifierModel> modifier;

  std::shared_ptr<textprep::SentenceSplitter> splitter;
  std::shared_ptr<textprep::SubwordTokenizer> tokenizer;
  std::size_t max_len = 255;
  std::size_t unit_max_len = 64;

  // Throws std::invalid_argument listing every missing slot and every
  // tagger mounted under the wrong variant.
  void validate() const;
};

// Anomaly counters accumulated while running documents; nothing here aborts
// a document.
struct PipelineReport {
  // Predicted spans touching the truncation point of an over-long sentence
  // (the span may continue into text the tagger never saw); such quantities
  // are dropped rather than guessed.
  std::size_t cross_sentence_truncations = 0;
  std::size_t multi_candidate_selections = 0;
  std::size_t qualifier_merge_conflicts = 0;
  std::map<std::string, std::size_t> empty_predictions;  // stage name -> count
  std::vector<std::string> errors;  // caught per-stage failures

  void merge(const PipelineReport& other);
  std::string to_keyvalue() const;
};

// Gap distance candidate selection: 0 when spans overlap, otherwise the
// number of characters between them; ties take the earliest start.
Span select_closest(const std::vector<Span>& candidates, const Span& anchor);

enum class QualifierTarget { kQuantity, kProperty };

// Combines the two qualifier taggers' outputs. Each list is first reduced
// to its single closest candidate (quantity-anchored and property-anchored
// respectively); an identical span surviving in both keeps the property
// target. `report` (optional) receives selection and conflict counts.
std::vector<std::pair<Span, QualifierTarget>> merge_qualifiers(
    const std::vector<Span>& from_q, const Span& quantity_anchor,
    const std::vector<Span>& from_p, const std::optional<Span>& property_anchor,
    PipelineReport* report = nullptr);

// Wires the relation edges of one in-progress set: property gets
// HasQuantity; the entity gets HasProperty when a property exists and
// HasQuantity otherwise; qualifiers get Qualifies toward their target.
// Qualifier targets are passed separately since the relation direction is
// decided at merge time.
AnnotationSet attach_relations(
    AnnotationSet set,
    const std::vector<QualifierTarget>& qualifier_targets = {},
    PipelineReport* report = nullptr);

// The full per-document inference graph: sentence split, quantity tagging,
// then per quantity unit detection, modifier classification, and the
// marker-conditioned entity/property/qualifier taggers; spans are converted
// to paragraph offsets and assembled into annotation sets numbered densely
// from 1. Stage failures are logged to the report and never abort the
// document.
std::pair<std::vector<AnnotationSet>, PipelineReport> run_pipeline(
    const Document& document, ModelBundle& bundle);

// Runs every document of the corpus and collects the predictions into a new
// corpus holding the same documents.
std::pair<Corpus, PipelineReport> run_corpus(const Corpus& corpus,
                                             ModelBundle& bundle);

// Bundle persistence: one subdirectory per model plus bundle.json and the
// tokenizer vocabulary.
void save_bundle(const ModelBundle& bundle, const std::string& dir);
ModelBundle load_bundle(const std::string& dir);

}  // namespace measpipe::pipeline

#endif  // MEASPIPE_PIPELINE_HPP_
