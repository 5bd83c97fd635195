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

#include "measpipe/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "measpipe/rng.hpp"

using namespace measpipe;
using namespace measpipe::metrics;

namespace {

Annotation annot(std::string id, AnnotType type, Span span,
                 std::string surface) {
  Annotation a;
  a.annot_id = std::move(id);
  a.type = type;
  a.span = span;
  a.surface_text = std::move(surface);
  return a;
}

double pair_total(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold, PairingMode mode) {
  double total = 0.0;
  for (const auto& [p, g] : pair_items(pred, gold, mode)) {
    total += token_f1(pred[p], gold[g]);
  }
  return total;
}

// Best achievable pairing total, by trying every injective assignment.
double brute_force_total(const std::vector<std::string>& pred,
                         const std::vector<std::string>& gold) {
  const std::size_t np = pred.size(), ng = gold.size();
  if (np == 0 || ng == 0) return 0.0;
  std::vector<std::size_t> perm(std::max(np, ng));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    if (np <= ng) {
      for (std::size_t p = 0; p < np; ++p) total += token_f1(pred[p], gold[perm[p]]);
    } else {
      for (std::size_t g = 0; g < ng; ++g) total += token_f1(pred[perm[g]], gold[g]);
    }
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Two documents exercising every class: one wrong entity span, a wrong
// unit, an over-predicted modifier, a missed qualifier, a spurious
// quantity, and a clipped quantity span whose relation still overlaps.
Corpus spreadsheet_gold() {
  Corpus corpus;
  corpus.documents["docA"] = {
      "docA", "The mass is 25 mg per day. Temp was ~ 40 C at dawn."};
  corpus.documents["docB"] = {"docB", "Width: 5 m."};

  AnnotationSet a1;
  a1.set_id = 1;
  Annotation q1 = annot("T1-1", AnnotType::Quantity, Span{12, 25},
                        "25 mg per day");
  q1.unit = "mg";
  Annotation p1 = annot("T1-2", AnnotType::MeasuredProperty, Span{4, 8},
                        "mass");
  p1.relations.push_back({RelationType::HasQuantity, "T1-1"});
  Annotation e1 = annot("T1-3", AnnotType::MeasuredEntity, Span{0, 3}, "The");
  e1.relations.push_back({RelationType::HasProperty, "T1-2"});
  Annotation l1 = annot("T1-4", AnnotType::Qualifier, Span{22, 25}, "day");
  l1.relations.push_back({RelationType::Qualifies, "T1-1"});
  a1.annotations = {q1, p1, e1, l1};

  AnnotationSet a2;
  a2.set_id = 2;
  Annotation q2 = annot("T2-1", AnnotType::Quantity, Span{38, 42}, "40 C");
  q2.unit = "C";
  q2.modifiers = {ModifierLabel::IsApproximate};
  Annotation p2 = annot("T2-2", AnnotType::MeasuredProperty, Span{27, 31},
                        "Temp");
  p2.relations.push_back({RelationType::HasQuantity, "T2-1"});
  a2.annotations = {q2, p2};

  AnnotationSet b1;
  b1.set_id = 1;
  Annotation qb = annot("T1-1", AnnotType::Quantity, Span{7, 10}, "5 m");
  qb.unit = "m";
  Annotation eb = annot("T1-2", AnnotType::MeasuredEntity, Span{0, 5},
                        "Width");
  eb.relations.push_back({RelationType::HasQuantity, "T1-1"});
  b1.annotations = {qb, eb};

  corpus.annotation_sets["docA"] = {a1, a2};
  corpus.annotation_sets["docB"] = {b1};
  return corpus;
}

Corpus spreadsheet_pred() {
  Corpus corpus;
  corpus.documents["docA"] = {
      "docA", "The mass is 25 mg per day. Temp was ~ 40 C at dawn."};
  corpus.documents["docB"] = {"docB", "Width: 5 m."};

  AnnotationSet a1;
  a1.set_id = 1;
  Annotation q1 = annot("T1-1", AnnotType::Quantity, Span{12, 25},
                        "25 mg per day");
  q1.unit = "mg";
  Annotation p1 = annot("T1-2", AnnotType::MeasuredProperty, Span{4, 8},
                        "mass");
  p1.relations.push_back({RelationType::HasQuantity, "T1-1"});
  Annotation e1 = annot("T1-3", AnnotType::MeasuredEntity, Span{0, 8},
                        "The mass");  // too wide
  e1.relations.push_back({RelationType::HasProperty, "T1-2"});
  a1.annotations = {q1, p1, e1};  // the qualifier is missed

  AnnotationSet a2;
  a2.set_id = 2;
  Annotation q2 = annot("T2-1", AnnotType::Quantity, Span{38, 40}, "40");
  q2.unit = "F";  // wrong unit
  q2.modifiers = {ModifierLabel::IsApproximate, ModifierLabel::IsRange};
  Annotation p2 = annot("T2-2", AnnotType::MeasuredProperty, Span{27, 31},
                        "Temp");
  p2.relations.push_back({RelationType::HasQuantity, "T2-1"});
  a2.annotations = {q2, p2};

  AnnotationSet a3;  // spurious
  a3.set_id = 3;
  a3.annotations = {annot("T3-1", AnnotType::Quantity, Span{46, 50}, "dawn")};

  AnnotationSet b1;
  b1.set_id = 1;
  Annotation qb = annot("T1-1", AnnotType::Quantity, Span{7, 10}, "5 m");
  // unit missed
  Annotation eb = annot("T1-2", AnnotType::MeasuredEntity, Span{0, 5},
                        "Width");
  eb.relations.push_back({RelationType::HasQuantity, "T1-1"});
  b1.annotations = {qb, eb};

  corpus.annotation_sets["docA"] = {a1, a2, a3};
  corpus.annotation_sets["docB"] = {b1};
  return corpus;
}

void check_class(const MetricReport& report, const std::string& name,
                 std::size_t np, std::size_t ng, double precision,
                 double recall, double f_measure, double overlap,
                 double exact) {
  INFO("class ", name);
  const ClassScore& s = report.per_class.at(name);
  CHECK(s.num_predicted == np);
  CHECK(s.num_gold == ng);
  CHECK(s.precision() == doctest::Approx(precision).epsilon(1e-9));
  CHECK(s.recall() == doctest::Approx(recall).epsilon(1e-9));
  CHECK(s.f_measure() == doctest::Approx(f_measure).epsilon(1e-9));
  CHECK(s.f1_overlap() == doctest::Approx(overlap).epsilon(1e-9));
  CHECK(s.exact_match() == doctest::Approx(exact).epsilon(1e-9));
}

}  // namespace

TEST_CASE("token_f1 measures whitespace-token multiset overlap") {
  CHECK(token_f1("25 mg", "25 mg per day") == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(token_f1("25 mg", "25 mg per day") - 0.6667) < 0.0001);
  CHECK(token_f1("25 mg", "25 mg") == 1.0);
  CHECK(token_f1("alpha", "beta") == 0.0);
  CHECK(token_f1("", "") == 1.0);
  CHECK(token_f1("", "x") == 0.0);
  CHECK(token_f1("x", "") == 0.0);
  // Multiset counting: repeated tokens only match as often as both have them.
  CHECK(token_f1("a a b", "a b b") == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1("a a", "a") == doctest::Approx(2.0 / 3.0));
  // Any whitespace delimits; extra runs are ignored.
  CHECK(token_f1("  25\tmg \n", "25 mg") == 1.0);
}

TEST_CASE("token_f1 is symmetric and bounded") {
  rng::Random random(7);
  const std::vector<std::string> pool = {"a", "b", "c", "dd", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    auto sample = [&]() {
      std::string s;
      const std::size_t n = random.index(5);
      for (std::size_t k = 0; k < n; ++k) {
        if (!s.empty()) s += ' ';
        s += pool[random.index(pool.size())];
      }
      return s;
    };
    const std::string x = sample(), y = sample();
    const double f = token_f1(x, y);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(f == token_f1(y, x));
    CHECK(token_f1(x, x) == 1.0);
  }
}

TEST_CASE("greedy pairing takes best pairs first with stable ties") {
  using P = std::vector<std::pair<std::size_t, std::size_t>>;
  // Identical items pair in order.
  CHECK(pair_items({"a", "a"}, {"a", "a"}) == P{{0, 0}, {1, 1}});
  // Tie on score: the earlier gold wins.
  CHECK(pair_items({"a"}, {"b a", "a b"}) == P{{0, 0}});
  // Then the earlier pred.
  CHECK(pair_items({"a b", "b a"}, {"a"}) == P{{0, 0}});
  // Zero-score pairs are never formed.
  CHECK(pair_items({"x"}, {"y"}).empty());
  CHECK(pair_items({}, {"y"}).empty());
  CHECK(pair_items({"x"}, {}).empty());
  // Best-first: the 1.0 pair is taken before the partial ones.
  CHECK(pair_items({"a x", "a"}, {"a", "c"}) == P{{1, 0}});
}

TEST_CASE("optimal pairing maximizes the total where greedy cannot") {
  const std::vector<std::string> pred = {"a b c", "a x"};
  const std::vector<std::string> gold = {"a b c", "b c"};
  // Scores: pred0 = {1.0, 0.8}, pred1 = {0.4, 0.0}. Greedy locks 1.0 and
  // strands pred1; the assignment swap earns 1.2 in total.
  CHECK(pair_total(pred, gold, PairingMode::kGreedy) ==
        doctest::Approx(1.0));
  CHECK(pair_total(pred, gold, PairingMode::kOptimal) ==
        doctest::Approx(1.2));
  using P = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(pair_items(pred, gold, PairingMode::kGreedy) == P{{0, 0}});
  CHECK(pair_items(pred, gold, PairingMode::kOptimal) == P{{0, 1}, {1, 0}});

  CHECK(f1_overlap(pred, gold, PairingMode::kGreedy) == doctest::Approx(0.5));
  CHECK(f1_overlap(pred, gold, PairingMode::kOptimal) == doctest::Approx(0.6));
}

TEST_CASE("optimal pairing equals exhaustive search and dominates greedy") {
  rng::Random random(13);
  const std::vector<std::string> pool = {"a", "b", "c", "d", "a b", "b c",
                                         "a b c", "c d", "x"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> pred(random.index(4) + 1);
    std::vector<std::string> gold(random.index(4) + 1);
    for (auto& s : pred) s = pool[random.index(pool.size())];
    for (auto& s : gold) s = pool[random.index(pool.size())];

    const double best = brute_force_total(pred, gold);
    const double optimal = pair_total(pred, gold, PairingMode::kOptimal);
    const double greedy = pair_total(pred, gold, PairingMode::kGreedy);
    CHECK(optimal == doctest::Approx(best).epsilon(1e-9));
    CHECK(greedy <= optimal + 1e-9);

    // Pairings are one-to-one on both sides.
    for (const PairingMode mode : {PairingMode::kGreedy, PairingMode::kOptimal}) {
      std::vector<bool> pu(pred.size(), false), gu(gold.size(), false);
      for (const auto& [p, g] : pair_items(pred, gold, mode)) {
        CHECK_FALSE(pu[p]);
        CHECK_FALSE(gu[g]);
        pu[p] = true;
        gu[g] = true;
        CHECK(token_f1(pred[p], gold[g]) > 0.0);
      }
    }
  }
}

TEST_CASE("f1_overlap averages matched scores over the larger side") {
  // Spec example: pairs scoring {1.0, 0.5} average to 0.75.
  CHECK(f1_overlap({"a", "b c"}, {"a", "b d"}) == doctest::Approx(0.75));
  CHECK(f1_overlap({}, {}) == 1.0);
  CHECK(f1_overlap({}, {"a"}) == 0.0);
  CHECK(f1_overlap({"a"}, {}) == 0.0);
  CHECK(f1_overlap({"a"}, {"a", "b"}) == doctest::Approx(0.5));
  CHECK(f1_overlap({"a", "z"}, {"a"}) == doctest::Approx(0.5));
  CHECK(f1_overlap({"a", "b"}, {"a", "b"}) == 1.0);
  // Perfect score requires equal counts and perfect pairs.
  CHECK(f1_overlap({"a", "b"}, {"a", "b x"}) < 1.0);
}

TEST_CASE("ClassScore aggregates item contributions") {
  ClassScore s;
  CHECK(s.precision() == 1.0);  // nothing predicted, nothing gold
  CHECK(s.recall() == 1.0);
  CHECK(s.f1_overlap() == 1.0);
  CHECK(s.exact_match() == 1.0);

  s.add(true, true, 1.0, true);
  s.add(true, true, 0.5, false);
  s.add(false, true, 0.0, false);
  CHECK(s.num_predicted == 2);
  CHECK(s.num_gold == 3);
  CHECK(s.precision() == doctest::Approx(0.75));
  CHECK(s.recall() == doctest::Approx(0.5));
  CHECK(s.f_measure() == doctest::Approx(0.6));
  CHECK(s.f1_overlap() == doctest::Approx(0.5));
  CHECK(s.exact_match() == doctest::Approx(1.0 / 3.0));

  ClassScore t;
  t.add(true, false, 0.0, false);
  t.merge(s);
  CHECK(t.num_predicted == 3);
  CHECK(t.num_gold == 3);
  CHECK(t.sum_f1 == doctest::Approx(1.5));

  // Zero predictions score zero precision unless gold is empty too.
  ClassScore gold_only;
  gold_only.add(false, true, 0.0, false);
  CHECK(gold_only.precision() == 0.0);
  CHECK(gold_only.recall() == 0.0);
  CHECK(gold_only.f_measure() == 0.0);
  ClassScore pred_only;
  pred_only.add(true, false, 0.0, false);
  CHECK(pred_only.precision() == 0.0);  // sum_f1 stays 0
  CHECK(pred_only.recall() == 0.0);
}

TEST_CASE("scoring a corpus against itself is perfect") {
  const Corpus gold = spreadsheet_gold();
  const MetricReport report = score_corpus(gold, gold);
  for (const std::string& name : class_names()) {
    INFO("class ", name);
    const ClassScore& s = report.per_class.at(name);
    CHECK(s.num_predicted == s.num_gold);
    CHECK(s.precision() == 1.0);
    CHECK(s.recall() == 1.0);
    CHECK(s.f_measure() == 1.0);
    CHECK(s.f1_overlap() == 1.0);
    CHECK(s.exact_match() == 1.0);
  }
  CHECK(report.global.precision() == 1.0);
  CHECK(report.global.exact_match() == 1.0);
  // Every annotation and relation of the fixture lands in some class.
  CHECK(report.global.num_gold == 19);
}

TEST_CASE("the two-document fixture matches the hand-computed table") {
  const Corpus gold = spreadsheet_gold();
  const Corpus pred = spreadsheet_pred();
  const MetricReport report = score_corpus(pred, gold);

  //                                np ng   precision     recall      f_measure    overlap     exact
  check_class(report, "Quantity",    4, 3, 2.0 / 3.0,   8.0 / 9.0,  16.0 / 21.0, 2.0 / 3.0,  0.5);
  check_class(report, "Unit",        2, 3, 0.5,         1.0 / 3.0,  0.4,         1.0 / 3.0,  1.0 / 3.0);
  check_class(report, "Modifier",    4, 3, 2.0 / 3.0,   8.0 / 9.0,  16.0 / 21.0, 2.0 / 3.0,  0.5);
  check_class(report, "MeasuredEntity", 2, 2, 5.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0,   5.0 / 6.0,  0.5);
  check_class(report, "MeasuredProperty", 2, 2, 1.0,    1.0,        1.0,         1.0,        1.0);
  check_class(report, "Qualifier",   0, 1, 0.0,         0.0,        0.0,         0.0,        0.0);
  check_class(report, "HasQuantity", 3, 3, 1.0,         1.0,        1.0,         1.0,        2.0 / 3.0);
  check_class(report, "HasProperty", 1, 1, 2.0 / 3.0,   2.0 / 3.0,  2.0 / 3.0,   2.0 / 3.0,  0.0);
  check_class(report, "Qualifies",   0, 1, 0.0,         0.0,        0.0,         0.0,        0.0);

  CHECK(report.global.num_predicted == 18);
  CHECK(report.global.num_gold == 19);
  CHECK(report.global.precision() == doctest::Approx(41.0 / 54.0).epsilon(1e-9));
  CHECK(report.global.recall() == doctest::Approx(41.0 / 57.0).epsilon(1e-9));
  CHECK(report.global.f_measure() == doctest::Approx(82.0 / 111.0).epsilon(1e-9));
  CHECK(report.global.f1_overlap() == doctest::Approx(41.0 / 57.0).epsilon(1e-9));
  CHECK(report.global.exact_match() == doctest::Approx(10.0 / 19.0).epsilon(1e-9));
}

TEST_CASE("set numbering and ordering never changes the report") {
  const Corpus gold = spreadsheet_gold();
  Corpus pred = spreadsheet_pred();
  const std::string before = to_keyvalue(score_corpus(pred, gold));

  auto& sets = pred.annotation_sets["docA"];
  std::reverse(sets.begin(), sets.end());
  for (std::size_t k = 0; k < sets.size(); ++k) {
    sets[k].set_id = static_cast<int>(100 - k);
  }
  CHECK(to_keyvalue(score_corpus(pred, gold)) == before);
}

TEST_CASE("mismatched document sets are rejected") {
  const Corpus gold = spreadsheet_gold();
  Corpus pred = spreadsheet_pred();
  pred.documents.erase("docB");
  pred.annotation_sets.erase("docB");
  CHECK_THROWS_AS(score_corpus(pred, gold), std::invalid_argument);

  Corpus extra = spreadsheet_pred();
  extra.documents["docC"] = {"docC", "x"};
  CHECK_THROWS_AS(score_corpus(extra, gold), std::invalid_argument);
}

TEST_CASE("grouping splits the totals by document label") {
  const Corpus gold = spreadsheet_gold();
  const Corpus pred = spreadsheet_pred();
  ScoreOptions options;
  options.group_of = {{"docA", "phys"}, {"docB", "eng"}};
  const MetricReport report = score_corpus(pred, gold, options);

  REQUIRE(report.per_group.size() == 2);
  const ClassScore& phys = report.per_group.at("phys");
  CHECK(phys.num_predicted == 14);
  CHECK(phys.num_gold == 14);
  CHECK(phys.sum_f1 == doctest::Approx(29.0 / 3.0).epsilon(1e-9));
  CHECK(phys.exact_match() == doctest::Approx(6.0 / 14.0).epsilon(1e-9));
  const ClassScore& eng = report.per_group.at("eng");
  CHECK(eng.num_predicted == 4);
  CHECK(eng.num_gold == 5);
  CHECK(eng.sum_f1 == doctest::Approx(4.0).epsilon(1e-9));

  // The two groups together make up the global pool.
  CHECK(phys.num_predicted + eng.num_predicted ==
        report.global.num_predicted);
  CHECK(phys.num_gold + eng.num_gold == report.global.num_gold);

  // Documents without a label fall into "ungrouped".
  ScoreOptions partial;
  partial.group_of = {{"docA", "phys"}};
  const MetricReport fallback = score_corpus(pred, gold, partial);
  CHECK(fallback.per_group.count("ungrouped") == 1);
  CHECK(fallback.per_group.at("ungrouped").num_gold == 5);

  const std::string csv = group_csv(report);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line ==
        "group,num_predicted,num_gold,precision,recall,f_measure,"
        "f1_overlap,exact_match");
  std::getline(lines, line);
  CHECK(line == "eng,4,5,1.000000,0.800000,0.888889,0.800000,0.800000");
  std::getline(lines, line);
  CHECK(line == "phys,14,14,0.690476,0.690476,0.690476,0.690476,0.428571");
}

TEST_CASE("reports render as a table and as key-value pairs") {
  const MetricReport report =
      score_corpus(spreadsheet_pred(), spreadsheet_gold());

  const std::string table = to_table(report);
  for (const std::string& name : class_names()) {
    CHECK(table.find(name) != std::string::npos);
  }
  CHECK(table.find("global") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 13);

  const std::string kv = to_keyvalue(report);
  CHECK(kv.find("Quantity.num_predicted = 4\n") != std::string::npos);
  CHECK(kv.find("Quantity.f1_overlap = 0.666667\n") != std::string::npos);
  CHECK(kv.find("Unit.f_measure = 0.400000\n") != std::string::npos);
  CHECK(kv.find("Qualifier.recall = 0.000000\n") != std::string::npos);
  CHECK(kv.find("MeasuredEntity.f_measure = 0.833333\n") != std::string::npos);
  CHECK(kv.find("HasProperty.precision = 0.666667\n") != std::string::npos);
  CHECK(kv.find("global.exact_match = 0.526316\n") != std::string::npos);
}

TEST_CASE("class_names lists the nine classes in display order") {
  const std::vector<std::string> expected = {
      "Quantity",    "Unit",        "Modifier",
      "MeasuredEntity", "MeasuredProperty", "Qualifier",
      "HasQuantity", "HasProperty", "Qualifies"};
  CHECK(class_names() == expected);
}
