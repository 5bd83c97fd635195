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

#ifndef MEASPIPE_TESTS_TESTUTIL_HPP_
#define MEASPIPE_TESTS_TESTUTIL_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "measpipe/corpus.hpp"

namespace measpipe::test {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    for (int k = 0;; ++k) {
      auto candidate = base / (tag + "-" + std::to_string(k));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = std::move(candidate);
        return;
      }
      if (k > 10000) throw std::runtime_error("cannot create temp dir");
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }
  std::string sub(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A corpus of fully annotated single-pattern paragraphs. Every document
// reads "The <property> of the <entity> was <number> <unit> <qualifier>.
// It was measured twice." with one annotation set carrying the quantity
// (unit + IsApproximate), entity, property, qualifier, and their relations.
// The pattern is deliberately rigid so small models can learn it exactly.
inline Corpus toy_corpus(int num_docs) {
  static const std::vector<std::string> kEntities = {
      "sample", "rover", "glacier", "reactor", "basin", "probe", "core",
      "antenna"};
  static const std::vector<std::string> kProperties = {
      "mass", "speed", "depth", "temperature", "width", "age", "length",
      "height"};
  static const std::vector<std::string> kUnits = {"kg", "m", "K", "cm", "mm",
                                                  "km", "s", "g"};
  static const std::vector<std::string> kNumbers = {"25", "7", "140", "3",
                                                    "62", "980", "14", "5"};

  Corpus corpus;
  for (int d = 0; d < num_docs; ++d) {
    const std::string& entity = kEntities[d % kEntities.size()];
    const std::string& property = kProperties[d % kProperties.size()];
    const std::string& unit = kUnits[d % kUnits.size()];
    const std::string& number = kNumbers[d % kNumbers.size()];
    const std::string quantity = number + " " + unit;
    const std::string qualifier = "approximately";

    Document doc;
    doc.doc_id = "doc" + std::to_string(d);
    doc.text = "The " + property + " of the " + entity + " was " + quantity +
               " " + qualifier + ". It was measured twice.";

    auto find = [&](const std::string& needle) {
      const auto at = doc.text.find(needle);
      if (at == std::string::npos) throw std::logic_error("toy pattern broke");
      return Span{at, at + needle.size()};  // ASCII text: bytes == code points
    };

    AnnotationSet set;
    set.set_id = 1;
    Annotation q{"T1-1", AnnotType::Quantity, find(quantity), quantity,
                 unit,   {ModifierLabel::IsApproximate}, {}};
    Annotation e{"T1-2",
                 AnnotType::MeasuredEntity,
                 find(entity),
                 entity,
                 std::nullopt,
                 {},
                 {Relation{RelationType::HasProperty, "T1-3"}}};
    Annotation p{"T1-3",
                 AnnotType::MeasuredProperty,
                 find(property),
                 property,
                 std::nullopt,
                 {},
                 {Relation{RelationType::HasQuantity, "T1-1"}}};
    Annotation u{"T1-4",
                 AnnotType::Qualifier,
                 find(qualifier),
                 qualifier,
                 std::nullopt,
                 {},
                 {Relation{RelationType::Qualifies, "T1-1"}}};
    set.annotations = {q, e, p, u};
    corpus.annotation_sets[doc.doc_id] = {set};
    corpus.documents.emplace(doc.doc_id, std::move(doc));
  }
  return corpus;
}

// Writes corpus text (and TSVs unless tsv_dir is empty) to disk.
inline void write_corpus_dirs(const Corpus& corpus, const std::string& text_dir,
                              const std::string& tsv_dir) {
  std::filesystem::create_directories(text_dir);
  for (const auto& [doc_id, doc] : corpus.documents) {
    write_file(std::filesystem::path(text_dir) / (doc_id + ".txt"), doc.text);
  }
  if (!tsv_dir.empty()) write_tsv(corpus, tsv_dir);
}

}  // namespace measpipe::test

#endif  // MEASPIPE_TESTS_TESTUTIL_HPP_
