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

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace measpipe::metrics {

namespace {

std::map<std::string, int> token_multiset(const std::string& text) {
  std::map<std::string, int> counts;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() &&
           std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    std::size_t j = i;
    while (j < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[j]))) {
      ++j;
    }
    if (j > i) ++counts[text.substr(i, j - i)];
    i = j;
  }
  return counts;
}

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

// Greedy best-pair-first matching over a score matrix (rows = pred,
// cols = gold); ties prefer the earlier gold, then the earlier pred.
// Zero-score pairs are never formed.
Pairs greedy_pairs(const std::vector<std::vector<double>>& score) {
  const std::size_t np = score.size();
  const std::size_t ng = np == 0 ? 0 : score[0].size();
  std::vector<bool> pred_used(np, false), gold_used(ng, false);
  Pairs pairs;
  while (true) {
    double best = 0.0;
    std::size_t best_p = np, best_g = ng;
    for (std::size_t g = 0; g < ng; ++g) {
      if (gold_used[g]) continue;
      for (std::size_t p = 0; p < np; ++p) {
        if (pred_used[p]) continue;
        const double s = score[p][g];
        if (s > best || (s == best && s > 0.0 &&
                         (g < best_g || (g == best_g && p < best_p)))) {
          best = s;
          best_p = p;
          best_g = g;
        }
      }
    }
    if (best <= 0.0) break;
    pred_used[best_p] = true;
    gold_used[best_g] = true;
    pairs.emplace_back(best_p, best_g);
  }
  return pairs;
}

// Hungarian algorithm (potentials form) maximizing the summed score;
// zero-score assignments are dropped afterwards.
Pairs optimal_pairs(const std::vector<std::vector<double>>& score) {
  const std::size_t np = score.size();
  const std::size_t ng = np == 0 ? 0 : score[0].size();
  if (np == 0 || ng == 0) return {};
  const bool transposed = np > ng;
  const std::size_t n = transposed ? ng : np;
  const std::size_t m = transposed ? np : ng;
  auto cost = [&](std::size_t i, std::size_t j) {
    return transposed ? -score[j][i] : -score[i][j];
  };

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Pairs pairs;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const std::size_t a = p[j] - 1;  // row in the reduced problem
    const std::size_t b = j - 1;
    const std::size_t pi = transposed ? b : a;
    const std::size_t gi = transposed ? a : b;
    if (score[pi][gi] > 0.0) pairs.emplace_back(pi, gi);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

Pairs pair_matrix(const std::vector<std::vector<double>>& score,
                  PairingMode mode) {
  return mode == PairingMode::kGreedy ? greedy_pairs(score)
                                      : optimal_pairs(score);
}

std::set<ModifierLabel> normalized_modifiers(const Annotation& quantity) {
  if (quantity.modifiers.empty()) return {ModifierLabel::None};
  return quantity.modifiers;
}

struct RelationItem {
  RelationType type;
  const Annotation* source = nullptr;
  Span target_span;
  bool target_found = false;
};

std::vector<RelationItem> relation_items(const AnnotationSet& set) {
  std::vector<RelationItem> items;
  for (const Annotation& a : set.annotations) {
    for (const Relation& r : a.relations) {
      RelationItem item;
      item.type = r.type;
      item.source = &a;
      for (const Annotation& b : set.annotations) {
        if (b.annot_id == r.target) {
          item.target_span = b.span;
          item.target_found = true;
          break;
        }
      }
      items.push_back(item);
    }
  }
  return items;
}

const std::string kGlobalName = "global";

}  // namespace

double token_f1(const std::string& pred_text, const std::string& gold_text) {
  const auto pred = token_multiset(pred_text);
  const auto gold = token_multiset(gold_text);
  std::size_t np = 0, ng = 0, overlap = 0;
  for (const auto& [tok, c] : pred) np += static_cast<std::size_t>(c);
  for (const auto& [tok, c] : gold) ng += static_cast<std::size_t>(c);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  for (const auto& [tok, c] : pred) {
    const auto it = gold.find(tok);
    if (it != gold.end()) {
      overlap += static_cast<std::size_t>(std::min(c, it->second));
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(np);
  const double r = static_cast<double>(overlap) / static_cast<double>(ng);
  return 2.0 * p * r / (p + r);
}

std::vector<std::pair<std::size_t, std::size_t>> pair_items(
    const std::vector<std::string>& pred, const std::vector<std::string>& gold,
    PairingMode mode) {
  std::vector<std::vector<double>> score(pred.size(),
                                         std::vector<double>(gold.size(), 0.0));
  for (std::size_t p = 0; p < pred.size(); ++p) {
    for (std::size_t g = 0; g < gold.size(); ++g) {
      score[p][g] = token_f1(pred[p], gold[g]);
    }
  }
  return pair_matrix(score, mode);
}

double f1_overlap(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold, PairingMode mode) {
  if (pred.empty() && gold.empty()) return 1.0;
  double total = 0.0;
  for (const auto& [p, g] : pair_items(pred, gold, mode)) {
    total += token_f1(pred[p], gold[g]);
  }
  return total / static_cast<double>(std::max(pred.size(), gold.size()));
}

double ClassScore::precision() const {
  if (num_predicted == 0) return num_gold == 0 ? 1.0 : 0.0;
  return sum_f1 / static_cast<double>(num_predicted);
}

double ClassScore::recall() const {
  if (num_gold == 0) return num_predicted == 0 ? 1.0 : 0.0;
  return sum_f1 / static_cast<double>(num_gold);
}

double ClassScore::f_measure() const {
  const double p = precision();
  const double r = recall();
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double ClassScore::f1_overlap() const {
  const std::size_t denom = std::max(num_predicted, num_gold);
  if (denom == 0) return 1.0;
  return sum_f1 / static_cast<double>(denom);
}

double ClassScore::exact_match() const {
  const std::size_t denom = std::max(num_predicted, num_gold);
  if (denom == 0) return 1.0;
  return sum_exact / static_cast<double>(denom);
}

void ClassScore::add(bool has_pred, bool has_gold, double f1, bool exact) {
  num_predicted += has_pred ? 1 : 0;
  num_gold += has_gold ? 1 : 0;
  sum_f1 += f1;
  sum_exact += exact ? 1.0 : 0.0;
}

void ClassScore::merge(const ClassScore& other) {
  num_predicted += other.num_predicted;
  num_gold += other.num_gold;
  sum_f1 += other.sum_f1;
  sum_exact += other.sum_exact;
}

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> kNames = {
      "Quantity",   "Unit",        "Modifier",
      "MeasuredEntity", "MeasuredProperty", "Qualifier",
      "HasQuantity", "HasProperty", "Qualifies"};
  return kNames;
}

namespace {

// Routes one scored item into the per-class, global, and group buckets.
class Accumulator {
 public:
  Accumulator(MetricReport* report, const ScoreOptions& options)
      : report_(report), options_(options) {
    for (const std::string& name : class_names()) (*report).per_class[name];
  }

  void set_document(const std::string& doc_id) {
    group_ = nullptr;
    if (options_.group_of.empty()) return;
    const auto it = options_.group_of.find(doc_id);
    const std::string label = it == options_.group_of.end() ? "ungrouped"
                                                            : it->second;
    group_ = &report_->per_group[label];
  }

  void add(const std::string& cls, bool has_pred, bool has_gold, double f1,
           bool exact) {
    report_->per_class[cls].add(has_pred, has_gold, f1, exact);
    report_->global.add(has_pred, has_gold, f1, exact);
    if (group_ != nullptr) group_->add(has_pred, has_gold, f1, exact);
  }

 private:
  MetricReport* report_;
  const ScoreOptions& options_;
  ClassScore* group_ = nullptr;
};

// Items of one annotation set counted against nothing.
void add_one_sided(Accumulator& acc, const AnnotationSet& set, bool as_pred) {
  const bool hp = as_pred, hg = !as_pred;
  const Annotation* q = set.quantity();
  if (q != nullptr) {
    acc.add("Quantity", hp, hg, 0.0, false);
    if (q->unit.has_value() && !q->unit->empty()) {
      acc.add("Unit", hp, hg, 0.0, false);
    }
    acc.add("Modifier", hp, hg, 0.0, false);
  }
  if (set.find(AnnotType::MeasuredEntity) != nullptr) {
    acc.add("MeasuredEntity", hp, hg, 0.0, false);
  }
  if (set.find(AnnotType::MeasuredProperty) != nullptr) {
    acc.add("MeasuredProperty", hp, hg, 0.0, false);
  }
  for (std::size_t k = 0; k < set.qualifiers().size(); ++k) {
    acc.add("Qualifier", hp, hg, 0.0, false);
  }
  for (const RelationItem& item : relation_items(set)) {
    acc.add(to_string(item.type), hp, hg, 0.0, false);
  }
}

void score_pair(Accumulator& acc, const AnnotationSet& pred,
                const AnnotationSet& gold, PairingMode mode) {
  const Annotation* pq = pred.quantity();
  const Annotation* gq = gold.quantity();
  // Alignment guarantees both quantities exist (pairing key is the quantity
  // surface, and sets without one never pair).
  acc.add("Quantity", true, true, token_f1(pq->surface_text, gq->surface_text),
          pq->span == gq->span);

  const std::string pu = pq->unit.value_or("");
  const std::string gu = gq->unit.value_or("");
  if (!pu.empty() || !gu.empty()) {
    acc.add("Unit", !pu.empty(), !gu.empty(), token_f1(pu, gu),
            pq->span == gq->span && pu == gu);
  }

  const std::set<ModifierLabel> pm = normalized_modifiers(*pq);
  const std::set<ModifierLabel> gm = normalized_modifiers(*gq);
  std::size_t inter = 0;
  for (ModifierLabel m : pm) inter += gm.count(m);
  const double mod_f1 = 2.0 * static_cast<double>(inter) /
                        static_cast<double>(pm.size() + gm.size());
  acc.add("Modifier", true, true, mod_f1, pq->span == gq->span && pm == gm);

  for (const auto& [type, name] :
       {std::pair{AnnotType::MeasuredEntity, "MeasuredEntity"},
        std::pair{AnnotType::MeasuredProperty, "MeasuredProperty"}}) {
    const Annotation* pa = pred.find(type);
    const Annotation* ga = gold.find(type);
    if (pa == nullptr && ga == nullptr) continue;
    if (pa != nullptr && ga != nullptr) {
      acc.add(name, true, true, token_f1(pa->surface_text, ga->surface_text),
              pa->span == ga->span);
    } else {
      acc.add(name, pa != nullptr, ga != nullptr, 0.0, false);
    }
  }

  const std::vector<const Annotation*> pqs = pred.qualifiers();
  const std::vector<const Annotation*> gqs = gold.qualifiers();
  {
    std::vector<std::string> ptexts, gtexts;
    for (const Annotation* a : pqs) ptexts.push_back(a->surface_text);
    for (const Annotation* a : gqs) gtexts.push_back(a->surface_text);
    const Pairs pairs = pair_items(ptexts, gtexts, mode);
    std::vector<bool> pu_used(pqs.size(), false), gu_used(gqs.size(), false);
    for (const auto& [p, g] : pairs) {
      pu_used[p] = true;
      gu_used[g] = true;
      acc.add("Qualifier", true, true, token_f1(ptexts[p], gtexts[g]),
              pqs[p]->span == gqs[g]->span);
    }
    for (std::size_t p = 0; p < pqs.size(); ++p) {
      if (!pu_used[p]) acc.add("Qualifier", true, false, 0.0, false);
    }
    for (std::size_t g = 0; g < gqs.size(); ++g) {
      if (!gu_used[g]) acc.add("Qualifier", false, true, 0.0, false);
    }
  }

  const std::vector<RelationItem> pr = relation_items(pred);
  const std::vector<RelationItem> gr = relation_items(gold);
  for (const RelationType type : {RelationType::HasQuantity,
                                  RelationType::HasProperty,
                                  RelationType::Qualifies}) {
    std::vector<const RelationItem*> ps, gs;
    for (const RelationItem& item : pr) {
      if (item.type == type) ps.push_back(&item);
    }
    for (const RelationItem& item : gr) {
      if (item.type == type) gs.push_back(&item);
    }
    if (ps.empty() && gs.empty()) continue;
    // A pred relation can only match a gold one when both endpoints overlap.
    std::vector<std::vector<double>> score(ps.size(),
                                           std::vector<double>(gs.size(), 0.0));
    for (std::size_t p = 0; p < ps.size(); ++p) {
      for (std::size_t g = 0; g < gs.size(); ++g) {
        const bool gate = ps[p]->source->span.overlaps(gs[g]->source->span) &&
                          ps[p]->target_found && gs[g]->target_found &&
                          ps[p]->target_span.overlaps(gs[g]->target_span);
        if (gate) {
          score[p][g] = token_f1(ps[p]->source->surface_text,
                                 gs[g]->source->surface_text);
        }
      }
    }
    const Pairs pairs = pair_matrix(score, mode);
    std::vector<bool> pu_used(ps.size(), false), gu_used(gs.size(), false);
    const std::string& name = to_string(type);
    for (const auto& [p, g] : pairs) {
      pu_used[p] = true;
      gu_used[g] = true;
      const bool exact = ps[p]->source->span == gs[g]->source->span &&
                         ps[p]->target_span == gs[g]->target_span;
      acc.add(name, true, true, score[p][g], exact);
    }
    for (std::size_t p = 0; p < ps.size(); ++p) {
      if (!pu_used[p]) acc.add(name, true, false, 0.0, false);
    }
    for (std::size_t g = 0; g < gs.size(); ++g) {
      if (!gu_used[g]) acc.add(name, false, true, 0.0, false);
    }
  }
}

}  // namespace

MetricReport score_corpus(const Corpus& pred, const Corpus& gold,
                          const ScoreOptions& options) {
  for (const auto& [doc_id, doc] : gold.documents) {
    if (pred.documents.find(doc_id) == pred.documents.end()) {
      throw std::invalid_argument("score_corpus: document '" + doc_id +
                                  "' missing from predictions");
    }
  }
  for (const auto& [doc_id, doc] : pred.documents) {
    if (gold.documents.find(doc_id) == gold.documents.end()) {
      throw std::invalid_argument("score_corpus: document '" + doc_id +
                                  "' missing from gold");
    }
  }

  MetricReport report;
  Accumulator acc(&report, options);
  static const std::vector<AnnotationSet> kNoSets;

  for (const auto& [doc_id, doc] : gold.documents) {
    acc.set_document(doc_id);
    const auto pit = pred.annotation_sets.find(doc_id);
    const auto git = gold.annotation_sets.find(doc_id);
    const std::vector<AnnotationSet>& psets =
        pit == pred.annotation_sets.end() ? kNoSets : pit->second;
    const std::vector<AnnotationSet>& gsets =
        git == gold.annotation_sets.end() ? kNoSets : git->second;

    std::vector<std::string> ptexts, gtexts;
    for (const AnnotationSet& s : psets) {
      const Annotation* q = s.quantity();
      ptexts.push_back(q == nullptr ? "" : q->surface_text);
    }
    for (const AnnotationSet& s : gsets) {
      const Annotation* q = s.quantity();
      gtexts.push_back(q == nullptr ? "" : q->surface_text);
    }
    const Pairs pairs = pair_items(ptexts, gtexts, options.pairing);
    std::vector<bool> p_used(psets.size(), false), g_used(gsets.size(), false);
    for (const auto& [p, g] : pairs) {
      p_used[p] = true;
      g_used[g] = true;
      score_pair(acc, psets[p], gsets[g], options.pairing);
    }
    for (std::size_t p = 0; p < psets.size(); ++p) {
      if (!p_used[p]) add_one_sided(acc, psets[p], /*as_pred=*/true);
    }
    for (std::size_t g = 0; g < gsets.size(); ++g) {
      if (!g_used[g]) add_one_sided(acc, gsets[g], /*as_pred=*/false);
    }
  }
  return report;
}

namespace {

std::string format_row(const std::string& name, const ClassScore& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%-18s %6zu %6zu   %6.4f  %6.4f  %6.4f  %6.4f  %6.4f\n",
                name.c_str(), s.num_predicted, s.num_gold, s.precision(),
                s.recall(), s.f_measure(), s.f1_overlap(), s.exact_match());
  return buf;
}

void keyvalue_block(std::ostringstream& out, const std::string& name,
                    const ClassScore& s) {
  char buf[64];
  auto put = [&](const char* metric, double v) {
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    out << name << "." << metric << " = " << buf << "\n";
  };
  out << name << ".num_predicted = " << s.num_predicted << "\n";
  out << name << ".num_gold = " << s.num_gold << "\n";
  put("precision", s.precision());
  put("recall", s.recall());
  put("f_measure", s.f_measure());
  put("f1_overlap", s.f1_overlap());
  put("exact_match", s.exact_match());
}

}  // namespace

std::string to_table(const MetricReport& report) {
  std::ostringstream out;
  out << "class               #pred  #gold     prec    recall  f_meas "
         " f1_ovl      em\n";
  out << std::string(78, '-') << "\n";
  for (const std::string& name : class_names()) {
    const auto it = report.per_class.find(name);
    if (it == report.per_class.end()) continue;
    out << format_row(name, it->second);
  }
  out << std::string(78, '-') << "\n";
  out << format_row(kGlobalName, report.global);
  return out.str();
}

std::string to_keyvalue(const MetricReport& report) {
  std::ostringstream out;
  for (const std::string& name : class_names()) {
    const auto it = report.per_class.find(name);
    if (it == report.per_class.end()) continue;
    keyvalue_block(out, name, it->second);
  }
  keyvalue_block(out, kGlobalName, report.global);
  return out.str();
}

std::string group_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "group,num_predicted,num_gold,precision,recall,f_measure,"
         "f1_overlap,exact_match\n";
  char buf[64];
  for (const auto& [group, s] : report.per_group) {
    out << group << "," << s.num_predicted << "," << s.num_gold;
    for (const double v : {s.precision(), s.recall(), s.f_measure(),
                           s.f1_overlap(), s.exact_match()}) {
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      out << "," << buf;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace measpipe::metrics
