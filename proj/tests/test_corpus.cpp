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

#include "measpipe/corpus.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "measpipe/unicode.hpp"
#include "testutil.hpp"

using namespace measpipe;

namespace {

const char kHeader[] =
    "docId\tannotSet\tannotType\tstartOffset\tendOffset\tannotId\ttext\tother";

bool has_rule(const std::vector<Violation>& violations, const std::string& rule) {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.rule == rule; });
}

// One self-consistent single-annotation document for violation tests.
Corpus base_doc(const std::string& text) {
  Corpus c;
  c.documents["d"] = Document{"d", text};
  AnnotationSet set;
  set.set_id = 1;
  set.annotations.push_back(Annotation{
      "T1-1", AnnotType::Quantity, Span{0, 2}, utf8::slice(text, 0, 2),
      std::nullopt, {}, {}});
  c.annotation_sets["d"] = {set};
  return c;
}

}  // namespace

TEST_CASE("type names serialize exactly and parse back") {
  CHECK(to_string(AnnotType::Quantity) == "Quantity");
  CHECK(to_string(AnnotType::MeasuredEntity) == "MeasuredEntity");
  CHECK(to_string(AnnotType::MeasuredProperty) == "MeasuredProperty");
  CHECK(to_string(AnnotType::Qualifier) == "Qualifier");
  CHECK(to_string(RelationType::HasQuantity) == "HasQuantity");
  CHECK(to_string(RelationType::HasProperty) == "HasProperty");
  CHECK(to_string(RelationType::Qualifies) == "Qualifies");

  const std::vector<std::string> modifiers = {
      "HasTolerance",       "IsApproximate", "IsCount",
      "IsList",             "IsMean",        "IsMeanHasSD",
      "IsMeanHasTolerance", "IsMeanIsRange", "IsMedian",
      "IsRange",            "IsRangeHasTolerance", "None"};
  REQUIRE(static_cast<int>(modifiers.size()) == kNumModifierLabels);
  for (int k = 0; k < kNumModifierLabels; ++k) {
    const auto label = static_cast<ModifierLabel>(k);
    CHECK(to_string(label) == modifiers[k]);
    CHECK(parse_modifier_label(modifiers[k]) == label);
  }
  CHECK(parse_annot_type("Quantity") == AnnotType::Quantity);
  CHECK_FALSE(parse_annot_type("quantity").has_value());
  CHECK_FALSE(parse_relation_type("HasUnit").has_value());
  CHECK_FALSE(parse_modifier_label("IsTypo").has_value());
}

TEST_CASE("span overlap and length arithmetic") {
  CHECK(Span{0, 5}.length() == 5);
  CHECK(Span{2, 6}.overlaps(Span{5, 9}));
  CHECK_FALSE(Span{2, 6}.overlaps(Span{6, 9}));  // half-open ranges touch
  CHECK(Span{4, 5}.overlaps(Span{0, 50}));
  CHECK(Span{1, 2} < Span{1, 3});
}

TEST_CASE("annotation set accessors") {
  const Corpus corpus = test::toy_corpus(1);
  const AnnotationSet& set = corpus.annotation_sets.at("doc0")[0];
  REQUIRE(set.quantity() != nullptr);
  CHECK(set.quantity()->annot_id == "T1-1");
  REQUIRE(set.find(AnnotType::MeasuredProperty) != nullptr);
  CHECK(set.find(AnnotType::MeasuredProperty)->annot_id == "T1-3");
  CHECK(set.qualifiers().size() == 1);
  CHECK(set.qualifiers()[0]->annot_id == "T1-4");

  CHECK(corpus.count(AnnotType::Quantity) == 1);
  CHECK(corpus.count(AnnotType::Qualifier) == 1);
  CHECK(corpus.num_documents() == 1);
}

TEST_CASE("TSV write/load round-trips a 20-document fixture structurally") {
  Corpus corpus = test::toy_corpus(16);

  // Unicode offsets.
  {
    Document doc{"u1", "Die Masse betrug 25 µg/m³ im Kern."};
    AnnotationSet set;
    set.set_id = 1;
    set.annotations.push_back(Annotation{
        "T1-1", AnnotType::Quantity, Span{17, 25}, "25 µg/m³",
        std::string("µg/m³"), {ModifierLabel::IsApproximate,
                               ModifierLabel::IsRange}, {}});
    corpus.annotation_sets["u1"] = {set};
    corpus.documents.emplace("u1", std::move(doc));
  }
  // Tab and backslash inside a surface exercise the column escaping.
  {
    Document doc{"u2", "cell\tA1 \\ holds 9 kg now"};
    AnnotationSet set;
    set.set_id = 1;
    set.annotations.push_back(Annotation{"T1-1", AnnotType::Quantity,
                                         Span{0, 10}, "cell\tA1 \\ ",
                                         std::nullopt, {}, {}});
    corpus.annotation_sets["u2"] = {set};
    corpus.documents.emplace("u2", std::move(doc));
  }
  // Two annotation sets in one document.
  {
    Document doc{"u3", "first 5 m then 6 m follow"};
    AnnotationSet s1, s2;
    s1.set_id = 1;
    s1.annotations.push_back(Annotation{"T1-1", AnnotType::Quantity,
                                        Span{6, 9}, "5 m", std::string("m"),
                                        {}, {}});
    s2.set_id = 2;
    s2.annotations.push_back(Annotation{"T2-1", AnnotType::Quantity,
                                        Span{15, 18}, "6 m", std::string("m"),
                                        {}, {}});
    corpus.annotation_sets["u3"] = {s1, s2};
    corpus.documents.emplace("u3", std::move(doc));
  }
  // A document with no annotations at all.
  corpus.documents.emplace("u4", Document{"u4", "nothing to see here"});

  REQUIRE(corpus.num_documents() == 20);
  REQUIRE(validate_corpus(corpus).empty());

  test::TempDir tmp("measpipe-corpus-roundtrip");
  const std::string text_dir = tmp.sub("text");
  const std::string tsv_dir = tmp.sub("tsv");
  test::write_corpus_dirs(corpus, text_dir, tsv_dir);

  const Corpus loaded = load_corpus(text_dir, tsv_dir);
  CHECK(loaded == corpus);

  // A second write of the loaded corpus is byte-identical to the first.
  const std::string tsv_dir2 = tmp.sub("tsv2");
  write_tsv(loaded, tsv_dir2);
  for (const auto& [doc_id, doc] : corpus.documents) {
    CHECK(test::read_file(tmp.path() / "tsv" / (doc_id + ".tsv")) ==
          test::read_file(tmp.path() / "tsv2" / (doc_id + ".tsv")));
  }
}

TEST_CASE("text-only corpora load without a TSV directory") {
  test::TempDir tmp("measpipe-corpus-textonly");
  test::write_file(tmp.path() / "text" / "a.txt", "hello world");
  const Corpus corpus = load_corpus(tmp.sub("text"), tmp.sub("no-such-dir"));
  CHECK(corpus.num_documents() == 1);
  CHECK(corpus.documents.at("a").text == "hello world");
  CHECK(corpus.annotation_sets.empty());
}

TEST_CASE("loader rejects malformed TSV input") {
  test::TempDir tmp("measpipe-corpus-badtsv");
  test::write_file(tmp.path() / "text" / "d.txt", "some twenty characters");
  const std::string text_dir = tmp.sub("text");

  auto load_with = [&](const std::string& tsv_body) {
    test::TempDir inner("measpipe-corpus-badtsv-case");
    test::write_file(inner.path() / "tsv" / "d.tsv", tsv_body);
    // The text dir is shared; each case gets a fresh tsv dir.
    return load_corpus(text_dir, inner.sub("tsv"));
  };

  const std::string h = std::string(kHeader) + "\n";
  CHECK_THROWS_WITH_AS(load_with("docId\tWRONG\n"),
                       doctest::Contains("bad TSV header"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t0\t4\tT1-1\tsome\n"),
                       doctest::Contains("expected 8 columns"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "x\t1\tQuantity\t0\t4\tT1-1\tsome\t\n"),
                       doctest::Contains("does not match file name"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tFrequency\t0\t4\tT1-1\tsome\t\n"),
                       doctest::Contains("unknown annotType"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t0\tfour\tT1-1\tsome\t\n"),
                       doctest::Contains("non-integer offset"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t0\t400\tT1-1\tsome\t\n"),
                       doctest::Contains("span out of bounds"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t5\t5\tT1-1\t\t\n"),
                       doctest::Contains("span out of bounds"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t0\t4\tT1-1\telse\t\n"),
                       doctest::Contains("span text mismatch"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(load_with(h + "d\t1\tQuantity\t0\t4\tT1-1\tsome\t{oops\n"),
                       doctest::Contains("bad `other` JSON"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(
      load_with(h + "d\t1\tQuantity\t0\t4\tT1-1\tsome\t{\"mods\":[\"IsTypo\"]}\n"),
      doctest::Contains("unknown modifier"), std::runtime_error);

  // Header-only and fully empty files are fine (no annotations).
  CHECK(load_with(h).annotation_sets.empty());
  CHECK(load_with("").annotation_sets.empty());
}

TEST_CASE("a TSV without its text file is an error") {
  test::TempDir tmp("measpipe-corpus-orphan");
  test::write_file(tmp.path() / "text" / "a.txt", "hello");
  test::write_file(tmp.path() / "tsv" / "b.tsv", std::string(kHeader) + "\n");
  CHECK_THROWS_WITH_AS(load_corpus(tmp.sub("text"), tmp.sub("tsv")),
                       doctest::Contains("missing text file"),
                       std::runtime_error);
}

TEST_CASE("validate_corpus flags every rule") {
  SUBCASE("valid corpus has no violations") {
    CHECK(validate_corpus(test::toy_corpus(3)).empty());
  }

  SUBCASE("quantity cardinality") {
    Corpus c = base_doc("ab cd ef");
    c.annotation_sets["d"][0].annotations.clear();
    CHECK(has_rule(validate_corpus(c), "quantity-cardinality"));

    Corpus c2 = base_doc("ab cd ef");
    c2.annotation_sets["d"][0].annotations.push_back(Annotation{
        "T1-2", AnnotType::Quantity, Span{3, 5}, "cd", std::nullopt, {}, {}});
    CHECK(has_rule(validate_corpus(c2), "quantity-cardinality"));
  }

  SUBCASE("entity and property cardinality") {
    Corpus c = base_doc("ab cd ef");
    for (const char* id : {"T1-2", "T1-3"}) {
      c.annotation_sets["d"][0].annotations.push_back(
          Annotation{id, AnnotType::MeasuredEntity, Span{3, 5}, "cd",
                     std::nullopt, {}, {}});
    }
    CHECK(has_rule(validate_corpus(c), "entity-cardinality"));

    Corpus c2 = base_doc("ab cd ef");
    for (const char* id : {"T1-2", "T1-3"}) {
      c2.annotation_sets["d"][0].annotations.push_back(
          Annotation{id, AnnotType::MeasuredProperty, Span{6, 8}, "ef",
                     std::nullopt, {}, {}});
    }
    CHECK(has_rule(validate_corpus(c2), "property-cardinality"));
  }

  SUBCASE("span bounds and surface mismatch") {
    Corpus c = base_doc("ab cd ef");
    c.annotation_sets["d"][0].annotations[0].span = Span{0, 99};
    CHECK(has_rule(validate_corpus(c), "span-bounds"));

    Corpus c2 = base_doc("ab cd ef");
    c2.annotation_sets["d"][0].annotations[0].surface_text = "zz";
    CHECK(has_rule(validate_corpus(c2), "surface-mismatch"));
  }

  SUBCASE("unit or modifiers on a non-quantity") {
    Corpus c = base_doc("ab cd ef");
    c.annotation_sets["d"][0].annotations.push_back(
        Annotation{"T1-2", AnnotType::MeasuredEntity, Span{3, 5}, "cd",
                   std::string("kg"), {}, {
                       Relation{RelationType::HasQuantity, "T1-1"}}});
    CHECK(has_rule(validate_corpus(c), "payload-on-non-quantity"));
  }

  SUBCASE("dangling relation target") {
    Corpus c = base_doc("ab cd ef");
    c.annotation_sets["d"][0].annotations[0].relations.push_back(
        Relation{RelationType::Qualifies, "T9-9"});
    CHECK(has_rule(validate_corpus(c), "dangling-relation"));
  }

  SUBCASE("relation topology") {
    // Entity without HasQuantity.
    Corpus c = base_doc("ab cd ef");
    c.annotation_sets["d"][0].annotations.push_back(Annotation{
        "T1-2", AnnotType::MeasuredEntity, Span{3, 5}, "cd", std::nullopt,
        {}, {}});
    CHECK(has_rule(validate_corpus(c), "missing-has-quantity"));

    // Property without HasQuantity, and entity without HasProperty.
    Corpus c2 = base_doc("ab cd ef");
    c2.annotation_sets["d"][0].annotations.push_back(Annotation{
        "T1-2", AnnotType::MeasuredEntity, Span{3, 5}, "cd", std::nullopt,
        {}, {}});
    c2.annotation_sets["d"][0].annotations.push_back(Annotation{
        "T1-3", AnnotType::MeasuredProperty, Span{6, 8}, "ef", std::nullopt,
        {}, {}});
    const auto violations = validate_corpus(c2);
    CHECK(has_rule(violations, "missing-has-quantity"));
    CHECK(has_rule(violations, "missing-has-property"));
  }

  SUBCASE("document-level rules") {
    Corpus c;
    c.documents["d"] = Document{"d", ""};
    CHECK(has_rule(validate_corpus(c), "doc-empty-text"));

    Corpus c2 = base_doc("ab cd ef");
    c2.annotation_sets["ghost"] = c2.annotation_sets["d"];
    CHECK(has_rule(validate_corpus(c2), "unknown-document"));
  }
}

TEST_CASE("split_train_dev partitions documents deterministically") {
  SUBCASE("a 298-document corpus splits 268/30 at ratio 0.9") {
    Corpus corpus;
    for (int k = 0; k < 298; ++k) {
      const std::string id = "p" + std::to_string(k);
      corpus.documents[id] = Document{id, "text " + std::to_string(k)};
    }
    const auto [train, dev] = split_train_dev(corpus, 0.9, 42);
    CHECK(train.num_documents() == 268);
    CHECK(dev.num_documents() == 30);
  }

  SUBCASE("halves are disjoint and cover the corpus") {
    const Corpus corpus = test::toy_corpus(10);
    const auto [train, dev] = split_train_dev(corpus, 0.5, 7);
    CHECK(train.num_documents() == 5);
    CHECK(dev.num_documents() == 5);
    std::set<std::string> all;
    for (const auto& [id, doc] : train.documents) {
      all.insert(id);
      CHECK(train.annotation_sets.count(id) == 1);  // sets travel with docs
    }
    for (const auto& [id, doc] : dev.documents) {
      CHECK(all.insert(id).second);  // disjoint
    }
    CHECK(all.size() == 10);
  }

  SUBCASE("the same seed reproduces the same split") {
    const Corpus corpus = test::toy_corpus(12);
    const auto [t1, d1] = split_train_dev(corpus, 0.75, 5);
    const auto [t2, d2] = split_train_dev(corpus, 0.75, 5);
    CHECK(t1 == t2);
    CHECK(d1 == d2);
  }

  SUBCASE("invalid arguments throw") {
    const Corpus corpus = test::toy_corpus(4);
    CHECK_THROWS_AS(split_train_dev(corpus, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_train_dev(corpus, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(split_train_dev(test::toy_corpus(1), 0.5, 1),
                    std::invalid_argument);
  }
}
