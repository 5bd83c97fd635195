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

#ifndef MEASPIPE_CORPUS_HPP_
#define MEASPIPE_CORPUS_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace measpipe {

// Character-offset span, [start, end), counted in Unicode code points.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  auto operator<=>(const Span&) const = default;
};

enum class AnnotType { Quantity, MeasuredEntity, MeasuredProperty, Qualifier };

enum class RelationType { HasQuantity, HasProperty, Qualifies };

// The closed 12-label modifier set; serialized names are exactly these.
enum class ModifierLabel {
  HasTolerance,
  IsApproximate,
  IsCount,
  IsList,
  IsMean,
  IsMeanHasSD,
  IsMeanHasTolerance,
  IsMeanIsRange,
  IsMedian,
  IsRange,
  IsRangeHasTolerance,
  None,
};
inline constexpr int kNumModifierLabels = 12;

const std::string& to_string(AnnotType t);
const std::string& to_string(RelationType t);
const std::string& to_string(ModifierLabel m);
std::optional<AnnotType> parse_annot_type(const std::string& s);
std::optional<RelationType> parse_relation_type(const std::string& s);
std::optional<ModifierLabel> parse_modifier_label(const std::string& s);

struct Relation {
  RelationType type;
  std::string target;  // annot_id within the same annotation set

  auto operator<=>(const Relation&) const = default;
};

struct Annotation {
  std::string annot_id;
  AnnotType type = AnnotType::Quantity;
  Span span;                 // document-relative
  std::string surface_text;  // must equal the document slice
  std::optional<std::string> unit;
  std::set<ModifierLabel> modifiers;
  std::vector<Relation> relations;

  bool operator==(const Annotation&) const = default;
};

// One Quantity plus the entities, property, and qualifiers anchored on it.
struct AnnotationSet {
  int set_id = 0;
  std::vector<Annotation> annotations;

  const Annotation* find(AnnotType t) const;
  const Annotation* quantity() const { return find(AnnotType::Quantity); }
  std::vector<const Annotation*> qualifiers() const;

  bool operator==(const AnnotationSet&) const = default;
};

struct Document {
  std::string doc_id;
  std::string text;  // full paragraph, UTF-8

  bool operator==(const Document&) const = default;
};

struct Corpus {
  std::map<std::string, Document> documents;
  std::map<std::string, std::vector<AnnotationSet>> annotation_sets;

  std::size_t num_documents() const { return documents.size(); }
  std::size_t count(AnnotType t) const;

  bool operator==(const Corpus&) const = default;
};

struct Violation {
  std::string doc_id;
  std::string annot_id;  // empty when the violation is document-level
  std::string rule;
  std::string message;
};

// Reads one <docId>.txt per paragraph from text_dir and the matching
// <docId>.tsv annotation files from tsv_dir. Text files without a TSV load
// as documents with no annotation sets; a TSV without its text file is an
// error. Throws std::runtime_error on malformed input.
Corpus load_corpus(const std::string& text_dir, const std::string& tsv_dir);

// Writes one TSV per document (predictions use the same schema). Returns
// the number of files written.
std::size_t write_tsv(const Corpus& corpus, const std::string& out_dir);

// Pure invariant check; violations are data, not failures.
std::vector<Violation> validate_corpus(const Corpus& corpus);

// Document-level split; train gets floor(ratio * num_documents) documents.
// Deterministic for a fixed seed.
std::pair<Corpus, Corpus> split_train_dev(const Corpus& corpus, double ratio,
                                          std::uint64_t seed);

}  // namespace measpipe

#endif  // MEASPIPE_CORPUS_HPP_
