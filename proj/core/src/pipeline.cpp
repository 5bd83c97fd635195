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

#include "measpipe/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "measpipe/tokenizers.hpp"
#include "measpipe/unicode.hpp"

namespace measpipe::pipeline {

namespace fs = std::filesystem;

namespace {

std::size_t gap_distance(const Span& candidate, const Span& anchor) {
  if (candidate.overlaps(anchor)) return 0;
  if (candidate.end <= anchor.start) return anchor.start - candidate.end;
  return candidate.start - anchor.end;
}

std::string stage_error(const std::string& doc_id, std::size_t sentence_index,
                        const std::string& stage, const std::string& what) {
  std::ostringstream out;
  out << doc_id << " sentence " << sentence_index << " stage " << stage << ": "
      << what;
  return out.str();
}

}  // namespace

void ModelBundle::validate() const {
  std::vector<std::string> problems;
  auto check_tagger = [&](const tagheads::TaggerModel* model, const char* slot,
                          tagheads::TaggerVariant expected) {
    if (model == nullptr) {
      problems.push_back(std::string("missing slot ") + slot);
    } else if (model->variant() != expected) {
      problems.push_back(std::string("slot ") + slot + " holds variant " +
                         tagheads::to_string(model->variant()));
    }
  };
  check_tagger(quantity.get(), "quantity", tagheads::TaggerVariant::kQuantity);
  check_tagger(entity.get(), "entity", tagheads::TaggerVariant::kMeasuredEntity);
  check_tagger(property.get(), "property",
               tagheads::TaggerVariant::kMeasuredProperty);
  check_tagger(qualifier_q.get(), "qualifier_q",
               tagheads::TaggerVariant::kQualifierQuantity);
  check_tagger(qualifier_p.get(), "qualifier_p",
               tagheads::TaggerVariant::kQualifierProperty);
  if (unit == nullptr) problems.push_back("missing slot unit");
  if (modifier == nullptr) problems.push_back("missing slot modifier");
  if (splitter == nullptr) problems.push_back("missing sentence splitter");
  if (tokenizer == nullptr) problems.push_back("missing tokenizer");

  if (!problems.empty()) {
    std::string message = "incomplete model bundle:";
    for (const std::string& p : problems) message += " " + p + ";";
    message.pop_back();
    throw std::invalid_argument(message);
  }
}

void PipelineReport::merge(const PipelineReport& other) {
  cross_sentence_truncations += other.cross_sentence_truncations;
  multi_candidate_selections += other.multi_candidate_selections;
  qualifier_merge_conflicts += other.qualifier_merge_conflicts;
  for (const auto& [stage, n] : other.empty_predictions) {
    empty_predictions[stage] += n;
  }
  errors.insert(errors.end(), other.errors.begin(), other.errors.end());
}

std::string PipelineReport::to_keyvalue() const {
  std::ostringstream out;
  out << "cross_sentence_truncations = " << cross_sentence_truncations << "\n";
  out << "multi_candidate_selections = " << multi_candidate_selections << "\n";
  out << "qualifier_merge_conflicts = " << qualifier_merge_conflicts << "\n";
  for (const auto& [stage, n] : empty_predictions) {
    out << "empty." << stage << " = " << n << "\n";
  }
  out << "errors = " << errors.size() << "\n";
  for (std::size_t k = 0; k < errors.size(); ++k) {
    out << "error." << k << " = " << errors[k] << "\n";
  }
  return out.str();
}

Span select_closest(const std::vector<Span>& candidates, const Span& anchor) {
  if (candidates.empty()) {
    throw std::invalid_argument("select_closest: no candidates");
  }
  const Span* best = &candidates[0];
  std::size_t best_gap = gap_distance(candidates[0], anchor);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const std::size_t gap = gap_distance(candidates[k], anchor);
    if (gap < best_gap ||
        (gap == best_gap && candidates[k].start < best->start)) {
      best = &candidates[k];
      best_gap = gap;
    }
  }
  return *best;
}

std::vector<std::pair<Span, QualifierTarget>> merge_qualifiers(
    const std::vector<Span>& from_q, const Span& quantity_anchor,
    const std::vector<Span>& from_p, const std::optional<Span>& property_anchor,
    PipelineReport* report) {
  std::optional<Span> q_pick, p_pick;
  if (!from_q.empty()) {
    if (from_q.size() > 1 && report != nullptr) {
      ++report->multi_candidate_selections;
    }
    q_pick = select_closest(from_q, quantity_anchor);
  }
  // Property-anchored candidates are only meaningful when a property exists.
  if (!from_p.empty() && property_anchor.has_value()) {
    if (from_p.size() > 1 && report != nullptr) {
      ++report->multi_candidate_selections;
    }
    p_pick = select_closest(from_p, *property_anchor);
  }

  std::vector<std::pair<Span, QualifierTarget>> merged;
  if (q_pick && p_pick && *q_pick == *p_pick) {
    // The same span claimed by both anchors keeps the more specific target.
    if (report != nullptr) ++report->qualifier_merge_conflicts;
    merged.emplace_back(*p_pick, QualifierTarget::kProperty);
    return merged;
  }
  if (q_pick) merged.emplace_back(*q_pick, QualifierTarget::kQuantity);
  if (p_pick) merged.emplace_back(*p_pick, QualifierTarget::kProperty);
  std::sort(merged.begin(), merged.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return merged;
}

AnnotationSet attach_relations(
    AnnotationSet set, const std::vector<QualifierTarget>& qualifier_targets,
    PipelineReport* report) {
  const Annotation* quantity = set.quantity();
  if (quantity == nullptr) {
    throw std::invalid_argument("attach_relations: set has no quantity");
  }
  const std::string quantity_id = quantity->annot_id;
  std::string entity_id, property_id;
  for (const Annotation& a : set.annotations) {
    if (a.type == AnnotType::MeasuredEntity) entity_id = a.annot_id;
    if (a.type == AnnotType::MeasuredProperty) property_id = a.annot_id;
  }
  if (!property_id.empty() && entity_id.empty() && report != nullptr) {
    report->errors.push_back("attach_relations: property without entity (id " +
                             property_id + ")");
  }

  std::size_t qualifier_index = 0;
  for (Annotation& a : set.annotations) {
    a.relations.clear();
    switch (a.type) {
      case AnnotType::Quantity:
        break;
      case AnnotType::MeasuredEntity:
        if (!property_id.empty()) {
          a.relations.push_back({RelationType::HasProperty, property_id});
        } else {
          a.relations.push_back({RelationType::HasQuantity, quantity_id});
        }
        break;
      case AnnotType::MeasuredProperty:
        a.relations.push_back({RelationType::HasQuantity, quantity_id});
        break;
      case AnnotType::Qualifier: {
        QualifierTarget target = qualifier_index < qualifier_targets.size()
                                     ? qualifier_targets[qualifier_index]
                                     : QualifierTarget::kQuantity;
        ++qualifier_index;
        if (target == QualifierTarget::kProperty && property_id.empty()) {
          if (report != nullptr) {
            report->errors.push_back(
                "attach_relations: qualifier targets a missing property (id " +
                a.annot_id + ")");
          }
          target = QualifierTarget::kQuantity;
        }
        a.relations.push_back(
            {RelationType::Qualifies, target == QualifierTarget::kProperty
                                          ? property_id
                                          : quantity_id});
        break;
      }
    }
  }
  return set;
}

namespace {

std::vector<Span> predict_original_spans(tagheads::TaggerModel& tagger,
                                         const textprep::MarkedSentence& marked,
                                         const textprep::TokenAlignment& align) {
  std::vector<Span> out;
  for (const Span& span : tagger.predict_spans(align)) {
    const auto orig = marked.to_original_span(span);
    if (orig.has_value()) out.push_back(*orig);
  }
  return out;
}

}  // namespace

std::pair<std::vector<AnnotationSet>, PipelineReport> run_pipeline(
    const Document& document, ModelBundle& bundle) {
  bundle.validate();
  PipelineReport report;
  std::vector<AnnotationSet> sets;

  std::vector<textprep::Sentence> sentences;
  try {
    sentences = textprep::split_sentences(document, *bundle.splitter);
  } catch (const std::exception& e) {
    report.errors.push_back(document.doc_id + ": " + e.what());
    return {std::move(sets), std::move(report)};
  }

  for (const textprep::Sentence& sentence : sentences) {
    std::vector<Span> quantity_spans;
    try {
      const textprep::TokenAlignment alignment = textprep::align_tokens(
          sentence.text, *bundle.tokenizer, bundle.max_len);
      quantity_spans = bundle.quantity->predict_spans(alignment);
      if (alignment.truncated) {
        // Spans touching the truncation point may continue into text the
        // tagger never saw; drop them instead of guessing.
        std::size_t covered = 0;
        for (const textprep::Token& token : alignment.tokens) {
          if (!token.is_special) covered = std::max(covered, token.span.end);
        }
        std::erase_if(quantity_spans, [&](const Span& s) {
          const bool at_edge = s.end >= covered;
          if (at_edge) ++report.cross_sentence_truncations;
          return at_edge;
        });
      }
    } catch (const std::exception& e) {
      report.errors.push_back(
          stage_error(document.doc_id, sentence.index, "quantity", e.what()));
      continue;
    }
    if (quantity_spans.empty()) {
      ++report.empty_predictions["quantity"];
      continue;
    }

    for (const Span& q_span : quantity_spans) {
      const int set_id = static_cast<int>(sets.size()) + 1;
      const Span q_para = textprep::to_paragraph_span(sentence, q_span);
      Annotation quantity;
      quantity.annot_id = "T" + std::to_string(set_id) + "-1";
      quantity.type = AnnotType::Quantity;
      quantity.span = q_para;
      quantity.surface_text =
          utf8::slice(document.text, q_para.start, q_para.end);

      // Unit detection runs on the quantity phrase alone.
      try {
        const std::string unit =
            bundle.unit->predict_unit(quantity.surface_text, bundle.unit_max_len);
        if (unit.empty()) {
          ++report.empty_predictions["unit"];
        } else {
          quantity.unit = unit;
        }
      } catch (const std::exception& e) {
        report.errors.push_back(
            stage_error(document.doc_id, sentence.index, "unit", e.what()));
      }

      // The "$"-marked copy feeds the modifier classifier, the entity
      // tagger, and the quantity-anchored qualifier tagger.
      std::optional<textprep::MarkedSentence> marked;
      std::optional<textprep::TokenAlignment> marked_align;
      try {
        marked = textprep::insert_markers(sentence.text, q_span, U'$');
        marked_align =
            textprep::align_marked(*marked, *bundle.tokenizer, bundle.max_len);
      } catch (const std::exception& e) {
        report.errors.push_back(
            stage_error(document.doc_id, sentence.index, "marking", e.what()));
      }

      if (marked_align.has_value()) {
        try {
          const std::vector<bool> inside = modcls::inside_mask(
              *marked_align, marked->to_marked_span(q_span));
          const std::set<ModifierLabel> mods =
              bundle.modifier->predict(*marked_align, inside);
          if (mods.size() == 1 && mods.count(ModifierLabel::None) > 0) {
            ++report.empty_predictions["modifier"];
          } else {
            quantity.modifiers = mods;
          }
        } catch (const std::exception& e) {
          report.errors.push_back(stage_error(document.doc_id, sentence.index,
                                              "modifier", e.what()));
        }
      }

      std::optional<Span> entity_span;
      if (marked_align.has_value()) {
        try {
          const std::vector<Span> spans =
              predict_original_spans(*bundle.entity, *marked, *marked_align);
          if (spans.empty()) {
            ++report.empty_predictions["entity"];
          } else {
            if (spans.size() > 1) ++report.multi_candidate_selections;
            entity_span = select_closest(spans, q_span);
          }
        } catch (const std::exception& e) {
          report.errors.push_back(
              stage_error(document.doc_id, sentence.index, "entity", e.what()));
        }
      }

      std::optional<Span> property_span;
      bool property_runnable = entity_span.has_value();
      if (property_runnable && entity_span->overlaps(q_span)) {
        // Two-marker insertion needs disjoint spans; without the entity
        // marker the property tagger has nothing to condition on. The
        // entity itself is still kept.
        report.errors.push_back(
            stage_error(document.doc_id, sentence.index, "property",
                        "entity span overlaps the quantity; stage skipped"));
        property_runnable = false;
      }
      if (property_runnable) {
        try {
          const textprep::MarkedSentence marked2 = textprep::insert_markers(
              sentence.text, q_span, U'$', *entity_span, U'#');
          const textprep::TokenAlignment align2 = textprep::align_marked(
              marked2, *bundle.tokenizer, bundle.max_len);
          const std::vector<Span> spans =
              predict_original_spans(*bundle.property, marked2, align2);
          if (spans.empty()) {
            ++report.empty_predictions["property"];
          } else {
            if (spans.size() > 1) ++report.multi_candidate_selections;
            property_span = select_closest(spans, q_span);
          }
        } catch (const std::exception& e) {
          report.errors.push_back(stage_error(document.doc_id, sentence.index,
                                              "property", e.what()));
        }
      }

      std::vector<Span> from_q;
      if (marked_align.has_value()) {
        try {
          from_q = predict_original_spans(*bundle.qualifier_q, *marked,
                                          *marked_align);
          if (from_q.empty()) ++report.empty_predictions["qualifier_q"];
        } catch (const std::exception& e) {
          report.errors.push_back(stage_error(document.doc_id, sentence.index,
                                              "qualifier_q", e.what()));
        }
      }

      std::vector<Span> from_p;
      if (property_span.has_value()) {
        try {
          const textprep::MarkedSentence marked3 =
              textprep::insert_markers(sentence.text, *property_span, U'$');
          const textprep::TokenAlignment align3 = textprep::align_marked(
              marked3, *bundle.tokenizer, bundle.max_len);
          from_p = predict_original_spans(*bundle.qualifier_p, marked3, align3);
          if (from_p.empty()) ++report.empty_predictions["qualifier_p"];
        } catch (const std::exception& e) {
          report.errors.push_back(stage_error(document.doc_id, sentence.index,
                                              "qualifier_p", e.what()));
        }
      }

      const std::vector<std::pair<Span, QualifierTarget>> qualifiers =
          merge_qualifiers(from_q, q_span, from_p, property_span, &report);

      AnnotationSet set;
      set.set_id = set_id;
      set.annotations.push_back(std::move(quantity));
      int next_annot = 2;
      auto add_annot = [&](AnnotType type, const Span& sentence_span) {
        const Span para = textprep::to_paragraph_span(sentence, sentence_span);
        Annotation a;
        a.annot_id = "T" + std::to_string(set_id) + "-" +
                     std::to_string(next_annot++);
        a.type = type;
        a.span = para;
        a.surface_text = utf8::slice(document.text, para.start, para.end);
        set.annotations.push_back(std::move(a));
      };
      if (entity_span.has_value()) {
        add_annot(AnnotType::MeasuredEntity, *entity_span);
      }
      if (property_span.has_value()) {
        add_annot(AnnotType::MeasuredProperty, *property_span);
      }
      std::vector<QualifierTarget> targets;
      for (const auto& [span, target] : qualifiers) {
        add_annot(AnnotType::Qualifier, span);
        targets.push_back(target);
      }
      sets.push_back(attach_relations(std::move(set), targets, &report));
    }
  }
  return {std::move(sets), std::move(report)};
}

std::pair<Corpus, PipelineReport> run_corpus(const Corpus& corpus,
                                             ModelBundle& bundle) {
  Corpus out;
  PipelineReport report;
  out.documents = corpus.documents;
  for (const auto& [doc_id, document] : corpus.documents) {
    auto [sets, doc_report] = run_pipeline(document, bundle);
    report.merge(doc_report);
    out.annotation_sets[doc_id] = std::move(sets);
  }
  return {std::move(out), std::move(report)};
}

void save_bundle(const ModelBundle& bundle, const std::string& dir) {
  bundle.validate();
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["max_len"] = bundle.max_len;
  meta["unit_max_len"] = bundle.unit_max_len;
  meta["splitter"] = "rule";

  std::vector<std::string> vocab_lines;
  if (const auto* wp = dynamic_cast<const textprep::WordPieceTokenizer*>(
          bundle.tokenizer.get())) {
    meta["tokenizer"] = {{"type", "wordpiece"}, {"lowercase", wp->lowercase()}};
    vocab_lines = wp->vocab();
  } else if (const auto* ws = dynamic_cast<const textprep::WhitespaceTokenizer*>(
                 bundle.tokenizer.get())) {
    meta["tokenizer"] = {{"type", "whitespace"}, {"lowercase", ws->lowercase()}};
    vocab_lines = ws->words();
  } else {
    throw std::invalid_argument("save_bundle: unserializable tokenizer type");
  }

  {
    std::ofstream out(fs::path(dir) / "bundle.json");
    if (!out) throw std::runtime_error("cannot write bundle.json in " + dir);
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(dir) / "vocab.txt");
    if (!out) throw std::runtime_error("cannot write vocab.txt in " + dir);
    for (const std::string& line : vocab_lines) out << line << "\n";
  }

  bundle.quantity->save((fs::path(dir) / "quantity").string());
  bundle.entity->save((fs::path(dir) / "entity").string());
  bundle.property->save((fs::path(dir) / "property").string());
  bundle.qualifier_q->save((fs::path(dir) / "qualifier_q").string());
  bundle.qualifier_p->save((fs::path(dir) / "qualifier_p").string());
  bundle.unit->save((fs::path(dir) / "unit").string());
  bundle.modifier->save((fs::path(dir) / "modifier").string());
}

ModelBundle load_bundle(const std::string& dir) {
  std::ifstream meta_in(fs::path(dir) / "bundle.json");
  if (!meta_in) {
    throw std::runtime_error("no bundle.json at '" + dir + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;

  std::vector<std::string> missing;
  for (const char* slot : {"quantity", "entity", "property", "qualifier_q",
                           "qualifier_p", "unit", "modifier"}) {
    if (!fs::exists(fs::path(dir) / slot / "meta.json")) {
      missing.push_back(slot);
    }
  }
  if (!missing.empty()) {
    std::string message = "bundle at '" + dir + "' is missing:";
    for (const std::string& slot : missing) message += " " + slot;
    throw std::runtime_error(message);
  }

  ModelBundle bundle;
  bundle.max_len = meta.value("max_len", std::size_t{255});
  bundle.unit_max_len = meta.value("unit_max_len", std::size_t{64});
  bundle.splitter = std::make_shared<textprep::RuleSentenceSplitter>();

  const nlohmann::json tok = meta.at("tokenizer");
  const std::string vocab_path = (fs::path(dir) / "vocab.txt").string();
  if (tok.at("type") == "wordpiece") {
    bundle.tokenizer = std::make_shared<textprep::WordPieceTokenizer>(
        textprep::WordPieceTokenizer::from_file(vocab_path,
                                                tok.at("lowercase").get<bool>()));
  } else if (tok.at("type") == "whitespace") {
    std::ifstream in(vocab_path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) words.push_back(line);
    }
    bundle.tokenizer = std::make_shared<textprep::WhitespaceTokenizer>(
        std::move(words), tok.at("lowercase").get<bool>());
  } else {
    throw std::runtime_error("bundle.json declares an unknown tokenizer type");
  }

  bundle.quantity = tagheads::TaggerModel::load((fs::path(dir) / "quantity").string());
  bundle.entity = tagheads::TaggerModel::load((fs::path(dir) / "entity").string());
  bundle.property = tagheads::TaggerModel::load((fs::path(dir) / "property").string());
  bundle.qualifier_q =
      tagheads::TaggerModel::load((fs::path(dir) / "qualifier_q").string());
  bundle.qualifier_p =
      tagheads::TaggerModel::load((fs::path(dir) / "qualifier_p").string());
  bundle.unit = unitdet::UnitDetector::load((fs::path(dir) / "unit").string());
  bundle.modifier =
      modcls::ModifierModel::load((fs::path(dir) / "modifier").string());
  bundle.validate();
  return bundle;
}

}  // namespace measpipe::pipeline
