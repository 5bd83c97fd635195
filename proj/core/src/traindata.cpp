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

#include "measpipe/traindata.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "measpipe/unicode.hpp"

namespace measpipe::traindata {

namespace {

constexpr const char* kCacheMagic = "measpipe-cache-v1";

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += s[i];
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, delim)) parts.push_back(part);
  if (!s.empty() && s.back() == delim) parts.emplace_back();
  return parts;
}

std::size_t parse_index(const std::string& s, const std::string& context) {
  std::size_t pos = 0;
  std::size_t value = 0;
  try {
    value = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(context + ": expected a number, got '" + s + "'");
  }
  if (pos != s.size()) {
    throw std::runtime_error(context + ": trailing junk in number '" + s + "'");
  }
  return value;
}

std::string format_tokens(const textprep::TokenAlignment& alignment) {
  if (alignment.tokens.empty()) return "-";
  std::string out;
  for (std::size_t k = 0; k < alignment.tokens.size(); ++k) {
    const textprep::Token& t = alignment.tokens[k];
    if (k > 0) out += ',';
    const int flags = (t.is_special ? 1 : 0) | (t.normalized ? 2 : 0);
    out += std::to_string(t.id) + ":" + std::to_string(t.span.start) + ":" +
           std::to_string(t.span.end) + ":" + std::to_string(flags);
  }
  return out;
}

std::vector<textprep::Token> parse_tokens(const std::string& field,
                                          const std::string& context) {
  std::vector<textprep::Token> tokens;
  if (field == "-") return tokens;
  for (const std::string& item : split(field, ',')) {
    const std::vector<std::string> parts = split(item, ':');
    if (parts.size() != 4) {
      throw std::runtime_error(context + ": bad token record '" + item + "'");
    }
    textprep::Token t;
    t.id = static_cast<int>(parse_index(parts[0], context));
    t.span.start = parse_index(parts[1], context);
    t.span.end = parse_index(parts[2], context);
    const std::size_t flags = parse_index(parts[3], context);
    t.is_special = (flags & 1) != 0;
    t.normalized = (flags & 2) != 0;
    tokens.push_back(t);
  }
  return tokens;
}

std::string format_spans(const std::vector<Span>& spans) {
  if (spans.empty()) return "-";
  std::string out;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    if (k > 0) out += ' ';
    out += std::to_string(spans[k].start) + ":" + std::to_string(spans[k].end);
  }
  return out;
}

std::vector<Span> parse_spans(const std::string& field,
                              const std::string& context) {
  std::vector<Span> spans;
  if (field == "-") return spans;
  for (const std::string& item : split(field, ' ')) {
    const std::vector<std::string> parts = split(item, ':');
    if (parts.size() != 2) {
      throw std::runtime_error(context + ": bad span record '" + item + "'");
    }
    spans.push_back(
        {parse_index(parts[0], context), parse_index(parts[1], context)});
  }
  return spans;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing cache file '" + path + "'");
  std::string header;
  std::getline(in, header);
  if (header != std::string(kCacheMagic) + " " + kind) {
    throw std::runtime_error("'" + path + "' is not a " + kind + " cache");
  }
  return in;
}

// Sorts gold spans, drops duplicates, and sets aside spans that overlap a
// predecessor or touch no non-special token (e.g. past the truncation
// point). Everything set aside is counted.
std::vector<Span> sanitize_spans(std::vector<Span> spans,
                                 const textprep::TokenAlignment& alignment,
                                 DatasetStats* stats) {
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  std::vector<Span> out;
  for (const Span& s : spans) {
    if (!out.empty() && s.overlaps(out.back())) {
      ++stats->overlapping_gold_spans;
      continue;
    }
    const bool reachable = std::any_of(
        alignment.tokens.begin(), alignment.tokens.end(),
        [&](const textprep::Token& t) {
          return !t.is_special && t.span.overlaps(s);
        });
    if (!reachable) {
      ++stats->unreachable_spans;
      continue;
    }
    out.push_back(s);
  }
  return out;
}

tagheads::TagExample make_tag_example(const textprep::TokenAlignment& alignment,
                                      std::vector<Span> spans,
                                      DatasetStats* stats) {
  std::vector<Span> clean = sanitize_spans(std::move(spans), alignment, stats);
  textprep::BioSequence bio = textprep::encode_bio(alignment, clean);
  return {alignment, std::move(bio), std::move(clean)};
}

// Where an annotation lands relative to one sentence. nullopt if it starts
// in a different sentence (counted); clipping at the sentence edge is also
// counted but the clipped span is still used.
std::optional<Span> span_in_sentence(const Annotation* annotation,
                                     const std::vector<textprep::Sentence>& sentences,
                                     std::size_t sentence_index,
                                     DatasetStats* stats) {
  if (annotation == nullptr) return std::nullopt;
  const textprep::SpanLocation loc =
      textprep::locate_in_sentences(annotation->span, sentences);
  if (!loc.found || loc.sentence_index != sentence_index) {
    ++stats->cross_sentence_spans;
    return std::nullopt;
  }
  if (loc.clipped) ++stats->cross_sentence_spans;
  return loc.sentence_relative;
}

}  // namespace

DatasetStats& DatasetStats::operator+=(const DatasetStats& other) {
  documents += other.documents;
  sentences += other.sentences;
  quantities += other.quantities;
  entities += other.entities;
  properties += other.properties;
  qualifiers += other.qualifiers;
  cross_sentence_spans += other.cross_sentence_spans;
  unreachable_spans += other.unreachable_spans;
  overlapping_gold_spans += other.overlapping_gold_spans;
  unit_not_substring += other.unit_not_substring;
  none_with_other_labels += other.none_with_other_labels;
  qualifier_other_target += other.qualifier_other_target;
  return *this;
}

std::string DatasetStats::to_keyvalue() const {
  std::ostringstream out;
  out << "documents = " << documents << "\n";
  out << "sentences = " << sentences << "\n";
  out << "quantities = " << quantities << "\n";
  out << "entities = " << entities << "\n";
  out << "properties = " << properties << "\n";
  out << "qualifiers = " << qualifiers << "\n";
  out << "cross_sentence_spans = " << cross_sentence_spans << "\n";
  out << "unreachable_spans = " << unreachable_spans << "\n";
  out << "overlapping_gold_spans = " << overlapping_gold_spans << "\n";
  out << "unit_not_substring = " << unit_not_substring << "\n";
  out << "none_with_other_labels = " << none_with_other_labels << "\n";
  out << "qualifier_other_target = " << qualifier_other_target << "\n";
  return out.str();
}

const std::vector<tagheads::TagExample>& Dataset::tagging(
    tagheads::TaggerVariant variant) const {
  switch (variant) {
    case tagheads::TaggerVariant::kQuantity: return quantity;
    case tagheads::TaggerVariant::kMeasuredEntity: return entity;
    case tagheads::TaggerVariant::kMeasuredProperty: return property;
    case tagheads::TaggerVariant::kQualifierQuantity: return qualifier_q;
    case tagheads::TaggerVariant::kQualifierProperty: return qualifier_p;
  }
  throw std::invalid_argument("unknown tagger variant");
}

Dataset build_dataset(const Corpus& corpus,
                      const textprep::SentenceSplitter& splitter,
                      const textprep::SubwordTokenizer& tokenizer,
                      const BuildOptions& options) {
  Dataset ds;
  static const std::vector<AnnotationSet> kNoSets;

  for (const auto& [doc_id, document] : corpus.documents) {
    ++ds.stats.documents;
    const std::vector<textprep::Sentence> sentences =
        textprep::split_sentences(document, splitter);
    ds.stats.sentences += sentences.size();

    const auto sets_it = corpus.annotation_sets.find(doc_id);
    const std::vector<AnnotationSet>& sets =
        sets_it == corpus.annotation_sets.end() ? kNoSets : sets_it->second;

    struct Located {
      const AnnotationSet* set;
      const Annotation* quantity;
      std::size_t sentence_index;
      Span span;  // sentence-relative
    };
    std::vector<Located> located;
    std::vector<std::vector<Span>> per_sentence(sentences.size());

    for (const AnnotationSet& set : sets) {
      for (const Annotation& a : set.annotations) {
        switch (a.type) {
          case AnnotType::Quantity: ++ds.stats.quantities; break;
          case AnnotType::MeasuredEntity: ++ds.stats.entities; break;
          case AnnotType::MeasuredProperty: ++ds.stats.properties; break;
          case AnnotType::Qualifier: ++ds.stats.qualifiers; break;
        }
      }
      const Annotation* q = set.quantity();
      if (q == nullptr) continue;  // validate_corpus reports this separately
      const textprep::SpanLocation loc =
          textprep::locate_in_sentences(q->span, sentences);
      if (!loc.found) {
        ++ds.stats.cross_sentence_spans;
        continue;
      }
      if (loc.clipped) ++ds.stats.cross_sentence_spans;
      per_sentence[loc.sentence_index].push_back(loc.sentence_relative);
      located.push_back({&set, q, loc.sentence_index, loc.sentence_relative});
    }

    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const textprep::TokenAlignment alignment = textprep::align_tokens(
          sentences[i].text, tokenizer, options.max_len);
      ds.quantity.push_back(
          make_tag_example(alignment, per_sentence[i], &ds.stats));
    }

    for (const Located& lq : located) {
      const textprep::Sentence& sentence = sentences[lq.sentence_index];
      const textprep::MarkedSentence marked =
          textprep::insert_markers(sentence.text, lq.span, U'$');
      const textprep::TokenAlignment marked_align =
          textprep::align_marked(marked, tokenizer, options.max_len);

      {
        std::set<ModifierLabel> gold = lq.quantity->modifiers;
        if (gold.empty()) gold.insert(ModifierLabel::None);
        if (gold.size() > 1 && gold.count(ModifierLabel::None) > 0) {
          ++ds.stats.none_with_other_labels;
        }
        ds.modifier.push_back({marked_align,
                               modcls::inside_mask(
                                   marked_align, marked.to_marked_span(lq.span)),
                               std::move(gold)});
      }

      if (lq.quantity->unit.has_value() && !lq.quantity->unit->empty()) {
        const std::u32string phrase = utf8::decode(lq.quantity->surface_text);
        const std::u32string unit = utf8::decode(*lq.quantity->unit);
        const std::size_t pos = phrase.find(unit);
        if (pos == std::u32string::npos) {
          ++ds.stats.unit_not_substring;
        } else {
          ds.unit.push_back(
              {lq.quantity->surface_text, Span{pos, pos + unit.size()}});
        }
      }

      const Annotation* entity = lq.set->find(AnnotType::MeasuredEntity);
      const Annotation* property = lq.set->find(AnnotType::MeasuredProperty);
      const std::optional<Span> entity_span =
          span_in_sentence(entity, sentences, lq.sentence_index, &ds.stats);
      const std::optional<Span> property_span =
          span_in_sentence(property, sentences, lq.sentence_index, &ds.stats);

      {
        std::vector<Span> gold;
        if (entity_span.has_value()) {
          gold.push_back(marked.to_marked_span(*entity_span));
        }
        ds.entity.push_back(
            make_tag_example(marked_align, std::move(gold), &ds.stats));
      }

      if (entity_span.has_value()) {
        if (entity_span->overlaps(lq.span)) {
          // Two-marker insertion needs disjoint spans.
          ++ds.stats.overlapping_gold_spans;
        } else {
          const textprep::MarkedSentence marked2 = textprep::insert_markers(
              sentence.text, lq.span, U'$', *entity_span, U'#');
          const textprep::TokenAlignment align2 =
              textprep::align_marked(marked2, tokenizer, options.max_len);
          std::vector<Span> gold;
          if (property_span.has_value()) {
            gold.push_back(marked2.to_marked_span(*property_span));
          }
          ds.property.push_back(
              make_tag_example(align2, std::move(gold), &ds.stats));
        }
      }

      std::vector<Span> from_q, from_p;
      for (const Annotation* qual : lq.set->qualifiers()) {
        std::string target;
        for (const Relation& r : qual->relations) {
          if (r.type == RelationType::Qualifies) target = r.target;
        }
        const std::optional<Span> qual_span =
            span_in_sentence(qual, sentences, lq.sentence_index, &ds.stats);
        if (!qual_span.has_value()) continue;  // already counted
        if (target == lq.quantity->annot_id) {
          from_q.push_back(*qual_span);
        } else if (property != nullptr && target == property->annot_id) {
          from_p.push_back(*qual_span);
        } else {
          ++ds.stats.qualifier_other_target;
        }
      }

      {
        std::vector<Span> gold;
        gold.reserve(from_q.size());
        for (const Span& s : from_q) gold.push_back(marked.to_marked_span(s));
        ds.qualifier_q.push_back(
            make_tag_example(marked_align, std::move(gold), &ds.stats));
      }

      if (property_span.has_value()) {
        const textprep::MarkedSentence marked3 =
            textprep::insert_markers(sentence.text, *property_span, U'$');
        const textprep::TokenAlignment align3 =
            textprep::align_marked(marked3, tokenizer, options.max_len);
        std::vector<Span> gold;
        gold.reserve(from_p.size());
        for (const Span& s : from_p) gold.push_back(marked3.to_marked_span(s));
        ds.qualifier_p.push_back(
            make_tag_example(align3, std::move(gold), &ds.stats));
      }
    }
  }
  return ds;
}

void write_tag_cache(const std::vector<tagheads::TagExample>& examples,
                     const std::string& path) {
  std::ofstream out = open_out(path);
  out << kCacheMagic << " tag\n";
  for (const tagheads::TagExample& ex : examples) {
    out << ex.alignment.max_len << "\t" << (ex.alignment.truncated ? 1 : 0)
        << "\t" << format_tokens(ex.alignment) << "\t"
        << (ex.gold.tags.empty() ? "-" : ex.gold.to_letters()) << "\t"
        << format_spans(ex.gold_spans) << "\n";
  }
}

std::vector<tagheads::TagExample> read_tag_cache(const std::string& path) {
  std::ifstream in = open_in(path, "tag");
  std::vector<tagheads::TagExample> examples;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string context = path + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 5) {
      throw std::runtime_error(context + ": expected 5 fields, got " +
                               std::to_string(fields.size()));
    }
    tagheads::TagExample ex;
    ex.alignment.max_len = parse_index(fields[0], context);
    ex.alignment.truncated = parse_index(fields[1], context) != 0;
    ex.alignment.tokens = parse_tokens(fields[2], context);
    ex.gold = fields[3] == "-" ? textprep::BioSequence{}
                               : textprep::BioSequence::from_letters(fields[3]);
    ex.gold_spans = parse_spans(fields[4], context);
    if (ex.gold.size() != ex.alignment.tokens.size()) {
      throw std::runtime_error(context + ": tag count does not match tokens");
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_unit_cache(const std::vector<unitdet::UnitExample>& examples,
                      const std::string& path) {
  std::ofstream out = open_out(path);
  out << kCacheMagic << " unit\n";
  for (const unitdet::UnitExample& ex : examples) {
    out << escape(ex.text) << "\t" << ex.unit.start << "\t" << ex.unit.end
        << "\n";
  }
}

std::vector<unitdet::UnitExample> read_unit_cache(const std::string& path) {
  std::ifstream in = open_in(path, "unit");
  std::vector<unitdet::UnitExample> examples;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string context = path + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 3) {
      throw std::runtime_error(context + ": expected 3 fields, got " +
                               std::to_string(fields.size()));
    }
    examples.push_back({unescape(fields[0]),
                        Span{parse_index(fields[1], context),
                             parse_index(fields[2], context)}});
  }
  return examples;
}

void write_modifier_cache(const std::vector<modcls::ModifierExample>& examples,
                          const std::string& path) {
  std::ofstream out = open_out(path);
  out << kCacheMagic << " modifier\n";
  for (const modcls::ModifierExample& ex : examples) {
    out << ex.alignment.max_len << "\t" << (ex.alignment.truncated ? 1 : 0)
        << "\t" << format_tokens(ex.alignment) << "\t";
    if (ex.inside.empty()) {
      out << "-";
    } else {
      for (bool b : ex.inside) out << (b ? '1' : '0');
    }
    out << "\t";
    bool first = true;
    for (ModifierLabel label : ex.gold) {
      if (!first) out << ",";
      out << to_string(label);
      first = false;
    }
    if (ex.gold.empty()) out << "-";
    out << "\n";
  }
}

std::vector<modcls::ModifierExample> read_modifier_cache(
    const std::string& path) {
  std::ifstream in = open_in(path, "modifier");
  std::vector<modcls::ModifierExample> examples;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string context = path + ":" + std::to_string(line_no);
    const std::vector<std::string> fields = split(line, '\t');
    if (fields.size() != 5) {
      throw std::runtime_error(context + ": expected 5 fields, got " +
                               std::to_string(fields.size()));
    }
    modcls::ModifierExample ex;
    ex.alignment.max_len = parse_index(fields[0], context);
    ex.alignment.truncated = parse_index(fields[1], context) != 0;
    ex.alignment.tokens = parse_tokens(fields[2], context);
    if (fields[3] != "-") {
      for (char c : fields[3]) {
        if (c != '0' && c != '1') {
          throw std::runtime_error(context + ": bad inside mask");
        }
        ex.inside.push_back(c == '1');
      }
    }
    if (ex.inside.size() != ex.alignment.tokens.size()) {
      throw std::runtime_error(context + ": mask does not match tokens");
    }
    if (fields[4] != "-") {
      for (const std::string& name : split(fields[4], ',')) {
        const std::optional<ModifierLabel> label = parse_modifier_label(name);
        if (!label.has_value()) {
          throw std::runtime_error(context + ": unknown label '" + name + "'");
        }
        ex.gold.insert(*label);
      }
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace measpipe::traindata
