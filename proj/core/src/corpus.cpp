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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "measpipe/rng.hpp"
#include "measpipe/unicode.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace measpipe {

namespace {

const std::vector<std::string> kAnnotTypeNames = {
    "Quantity", "MeasuredEntity", "MeasuredProperty", "Qualifier"};
const std::vector<std::string> kRelationTypeNames = {"HasQuantity",
                                                     "HasProperty",
                                                     "Qualifies"};
const std::vector<std::string> kModifierNames = {
    "HasTolerance",   "IsApproximate",      "IsCount",
    "IsList",         "IsMean",             "IsMeanHasSD",
    "IsMeanHasTolerance", "IsMeanIsRange",  "IsMedian",
    "IsRange",        "IsRangeHasTolerance", "None"};

const char kTsvHeader[] =
    "docId\tannotSet\tannotType\tstartOffset\tendOffset\tannotId\ttext\tother";

// The text column would break the row format if a span contains tabs or
// newlines, so those characters travel escaped.
std::string escape_column(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_column(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      switch (s[i + 1]) {
        case '\\': out.push_back('\\'); ++i; continue;
        case 't': out.push_back('\t'); ++i; continue;
        case 'n': out.push_back('\n'); ++i; continue;
        case 'r': out.push_back('\r'); ++i; continue;
        default: break;
      }
    }
    out.push_back(s[i]);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t pos = 0;
  while (true) {
    const std::size_t tab = line.find('\t', pos);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(pos));
      break;
    }
    cols.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return cols;
}

std::size_t parse_offset(const std::string& s, const std::string& context) {
  if (s.empty() ||
      !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::runtime_error("non-integer offset '" + s + "' in " + context);
  }
  return static_cast<std::size_t>(std::stoull(s));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Annotation parse_row(const std::vector<std::string>& cols,
                     const std::string& context, int* set_id) {
  Annotation a;
  *set_id = std::stoi(cols[1]);
  const auto type = parse_annot_type(cols[2]);
  if (!type) {
    throw std::runtime_error("unknown annotType '" + cols[2] + "' in " + context);
  }
  a.type = *type;
  a.span.start = parse_offset(cols[3], context);
  a.span.end = parse_offset(cols[4], context);
  a.annot_id = cols[5];
  a.surface_text = unescape_column(cols[6]);

  if (!cols[7].empty()) {
    json other;
    try {
      other = json::parse(cols[7]);
    } catch (const json::exception& e) {
      throw std::runtime_error("bad `other` JSON in " + context + ": " + e.what());
    }
    if (other.contains("unit")) a.unit = other["unit"].get<std::string>();
    if (other.contains("mods")) {
      for (const auto& m : other["mods"]) {
        const auto label = parse_modifier_label(m.get<std::string>());
        if (!label) {
          throw std::runtime_error("unknown modifier '" + m.get<std::string>() +
                                   "' in " + context);
        }
        a.modifiers.insert(*label);
      }
    }
    for (const auto& name : kRelationTypeNames) {
      if (other.contains(name)) {
        a.relations.push_back(
            Relation{*parse_relation_type(name), other[name].get<std::string>()});
      }
    }
  }
  return a;
}

json other_column(const Annotation& a) {
  json other = json::object();
  if (a.unit) other["unit"] = *a.unit;
  if (!a.modifiers.empty()) {
    json mods = json::array();
    for (auto m : a.modifiers) mods.push_back(to_string(m));
    other["mods"] = mods;
  }
  for (const auto& r : a.relations) {
    const auto& key = to_string(r.type);
    if (other.contains(key)) {
      throw std::runtime_error("annotation " + a.annot_id +
                               " carries duplicate relation type " + key);
    }
    other[key] = r.target;
  }
  return other;
}

}  // namespace

const std::string& to_string(AnnotType t) {
  return kAnnotTypeNames[static_cast<int>(t)];
}
const std::string& to_string(RelationType t) {
  return kRelationTypeNames[static_cast<int>(t)];
}
const std::string& to_string(ModifierLabel m) {
  return kModifierNames[static_cast<int>(m)];
}

std::optional<AnnotType> parse_annot_type(const std::string& s) {
  for (std::size_t i = 0; i < kAnnotTypeNames.size(); ++i) {
    if (kAnnotTypeNames[i] == s) return static_cast<AnnotType>(i);
  }
  return std::nullopt;
}

std::optional<RelationType> parse_relation_type(const std::string& s) {
  for (std::size_t i = 0; i < kRelationTypeNames.size(); ++i) {
    if (kRelationTypeNames[i] == s) return static_cast<RelationType>(i);
  }
  return std::nullopt;
}

std::optional<ModifierLabel> parse_modifier_label(const std::string& s) {
  for (std::size_t i = 0; i < kModifierNames.size(); ++i) {
    if (kModifierNames[i] == s) return static_cast<ModifierLabel>(i);
  }
  return std::nullopt;
}

const Annotation* AnnotationSet::find(AnnotType t) const {
  for (const auto& a : annotations) {
    if (a.type == t) return &a;
  }
  return nullptr;
}

std::vector<const Annotation*> AnnotationSet::qualifiers() const {
  std::vector<const Annotation*> out;
  for (const auto& a : annotations) {
    if (a.type == AnnotType::Qualifier) out.push_back(&a);
  }
  return out;
}

std::size_t Corpus::count(AnnotType t) const {
  std::size_t n = 0;
  for (const auto& [doc_id, sets] : annotation_sets) {
    for (const auto& set : sets) {
      for (const auto& a : set.annotations) {
        if (a.type == t) ++n;
      }
    }
  }
  return n;
}

Corpus load_corpus(const std::string& text_dir, const std::string& tsv_dir) {
  Corpus corpus;
  if (!fs::is_directory(text_dir)) {
    throw std::runtime_error("text directory not found: " + text_dir);
  }
  for (const auto& entry : fs::directory_iterator(text_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    Document doc;
    doc.doc_id = entry.path().stem().string();
    doc.text = read_file(entry.path());
    corpus.documents.emplace(doc.doc_id, std::move(doc));
  }

  if (!fs::exists(tsv_dir)) return corpus;
  std::vector<fs::path> tsv_files;
  for (const auto& entry : fs::directory_iterator(tsv_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".tsv") {
      tsv_files.push_back(entry.path());
    }
  }
  std::sort(tsv_files.begin(), tsv_files.end());

  for (const auto& path : tsv_files) {
    const std::string file_doc_id = path.stem().string();
    const auto doc_it = corpus.documents.find(file_doc_id);
    if (doc_it == corpus.documents.end()) {
      throw std::runtime_error("missing text file for doc '" + file_doc_id + "'");
    }
    const std::u32string doc_text = utf8::decode(doc_it->second.text);

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) continue;  // empty file: no annotations
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTsvHeader) {
      throw std::runtime_error("bad TSV header in " + path.string());
    }

    std::map<int, AnnotationSet> sets;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto cols = split_tabs(line);
      const std::string context =
          path.filename().string() + ":" + std::to_string(line_no);
      if (cols.size() != 8) {
        throw std::runtime_error("expected 8 columns, got " +
                                 std::to_string(cols.size()) + " in " + context);
      }
      if (cols[0] != file_doc_id) {
        throw std::runtime_error("docId column '" + cols[0] +
                                 "' does not match file name in " + context);
      }
      int set_id = 0;
      Annotation a = parse_row(cols, context, &set_id);
      if (a.span.end > doc_text.size() || a.span.start >= a.span.end) {
        throw std::runtime_error("span out of bounds for annotation " +
                                 a.annot_id + " in " + context);
      }
      const std::string slice =
          utf8::encode(doc_text.substr(a.span.start, a.span.end - a.span.start));
      if (slice != a.surface_text) {
        throw std::runtime_error("span text mismatch for doc '" + file_doc_id +
                                 "' annotation '" + a.annot_id + "': offset slice \"" +
                                 slice + "\" != text column \"" + a.surface_text +
                                 "\"");
      }
      auto& set = sets[set_id];
      set.set_id = set_id;
      set.annotations.push_back(std::move(a));
    }
    if (!sets.empty()) {
      auto& doc_sets = corpus.annotation_sets[file_doc_id];
      for (auto& [id, set] : sets) doc_sets.push_back(std::move(set));
    }
  }
  return corpus;
}

std::size_t write_tsv(const Corpus& corpus, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::size_t written = 0;
  for (const auto& [doc_id, doc] : corpus.documents) {
    const fs::path path = fs::path(out_dir) / (doc_id + ".tsv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kTsvHeader << '\n';
    const auto sets_it = corpus.annotation_sets.find(doc_id);
    if (sets_it != corpus.annotation_sets.end()) {
      for (const auto& set : sets_it->second) {
        for (const auto& a : set.annotations) {
          const json other = other_column(a);
          out << doc_id << '\t' << set.set_id << '\t' << to_string(a.type) << '\t'
              << a.span.start << '\t' << a.span.end << '\t' << a.annot_id << '\t'
              << escape_column(a.surface_text) << '\t'
              << (other.empty() ? "" : other.dump()) << '\n';
        }
      }
    }
    if (!out) throw std::runtime_error("write failed for " + path.string());
    ++written;
  }
  return written;
}

namespace {

void validate_set(const std::string& doc_id, const std::u32string& doc_text,
                  const AnnotationSet& set, std::vector<Violation>* out) {
  int n_quantity = 0, n_entity = 0, n_property = 0;
  std::map<std::string, const Annotation*> by_id;
  for (const auto& a : set.annotations) {
    by_id[a.annot_id] = &a;
    switch (a.type) {
      case AnnotType::Quantity: ++n_quantity; break;
      case AnnotType::MeasuredEntity: ++n_entity; break;
      case AnnotType::MeasuredProperty: ++n_property; break;
      case AnnotType::Qualifier: break;
    }
  }
  const std::string set_tag = "set " + std::to_string(set.set_id);
  if (n_quantity != 1) {
    out->push_back({doc_id, "", "quantity-cardinality",
                    set_tag + " has " + std::to_string(n_quantity) +
                        " Quantity annotations, expected exactly 1"});
  }
  if (n_entity > 1) {
    out->push_back({doc_id, "", "entity-cardinality",
                    set_tag + " has more than one MeasuredEntity"});
  }
  if (n_property > 1) {
    out->push_back({doc_id, "", "property-cardinality",
                    set_tag + " has more than one MeasuredProperty"});
  }

  for (const auto& a : set.annotations) {
    bool span_ok = true;
    if (a.span.start >= a.span.end || a.span.end > doc_text.size()) {
      out->push_back({doc_id, a.annot_id, "span-bounds",
                      set_tag + ": span [" + std::to_string(a.span.start) + "," +
                          std::to_string(a.span.end) + ") out of bounds"});
      span_ok = false;
    }
    if (span_ok) {
      const std::string slice =
          utf8::encode(doc_text.substr(a.span.start, a.span.end - a.span.start));
      if (slice != a.surface_text) {
        out->push_back({doc_id, a.annot_id, "surface-mismatch",
                        set_tag + ": surface text does not equal document slice"});
      }
    }
    if (a.type != AnnotType::Quantity && (a.unit || !a.modifiers.empty())) {
      out->push_back({doc_id, a.annot_id, "payload-on-non-quantity",
                      set_tag + ": unit/modifiers on " + to_string(a.type)});
    }
    for (const auto& r : a.relations) {
      if (by_id.find(r.target) == by_id.end()) {
        out->push_back({doc_id, a.annot_id, "dangling-relation",
                        set_tag + ": relation " + to_string(r.type) +
                            " targets unknown annotation '" + r.target + "'"});
      }
    }
  }

  // Relation topology around the quantity / entity / property triangle.
  if (n_quantity != 1 || n_entity > 1 || n_property > 1) return;
  const Annotation* quantity = set.find(AnnotType::Quantity);
  const Annotation* entity = set.find(AnnotType::MeasuredEntity);
  const Annotation* property = set.find(AnnotType::MeasuredProperty);
  auto has_relation = [](const Annotation* a, RelationType t,
                         const std::string& target) {
    for (const auto& r : a->relations) {
      if (r.type == t && r.target == target) return true;
    }
    return false;
  };
  if (property) {
    if (!has_relation(property, RelationType::HasQuantity, quantity->annot_id)) {
      out->push_back({doc_id, property->annot_id, "missing-has-quantity",
                      set_tag + ": MeasuredProperty lacks HasQuantity -> Quantity"});
    }
    if (entity &&
        !has_relation(entity, RelationType::HasProperty, property->annot_id)) {
      out->push_back({doc_id, entity->annot_id, "missing-has-property",
                      set_tag + ": MeasuredEntity lacks HasProperty -> Property"});
    }
  } else if (entity) {
    if (!has_relation(entity, RelationType::HasQuantity, quantity->annot_id)) {
      out->push_back({doc_id, entity->annot_id, "missing-has-quantity",
                      set_tag + ": MeasuredEntity lacks HasQuantity -> Quantity"});
    }
  }
}

}  // namespace

std::vector<Violation> validate_corpus(const Corpus& corpus) {
  std::vector<Violation> out;
  for (const auto& [doc_id, doc] : corpus.documents) {
    if (doc.doc_id.empty()) {
      out.push_back({doc_id, "", "doc-empty-id", "document has empty doc_id"});
    }
    if (doc.text.empty()) {
      out.push_back({doc_id, "", "doc-empty-text", "document has empty text"});
    }
  }
  for (const auto& [doc_id, sets] : corpus.annotation_sets) {
    const auto doc_it = corpus.documents.find(doc_id);
    if (doc_it == corpus.documents.end()) {
      out.push_back({doc_id, "", "unknown-document",
                     "annotation sets reference a missing document"});
      continue;
    }
    const std::u32string doc_text = utf8::decode(doc_it->second.text);
    for (const auto& set : sets) validate_set(doc_id, doc_text, set, &out);
  }
  return out;
}

std::pair<Corpus, Corpus> split_train_dev(const Corpus& corpus, double ratio,
                                          std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("split ratio must lie in (0, 1)");
  }
  if (corpus.documents.size() < 2) {
    throw std::invalid_argument("cannot split a corpus with fewer than 2 documents");
  }
  std::vector<std::string> ids;
  ids.reserve(corpus.documents.size());
  for (const auto& [id, doc] : corpus.documents) ids.push_back(id);
  rng::Random random(seed);
  random.shuffle(ids);

  const auto n_train =
      static_cast<std::size_t>(ratio * static_cast<double>(ids.size()));
  Corpus train, dev;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Corpus& half = (i < n_train) ? train : dev;
    const auto& id = ids[i];
    half.documents.emplace(id, corpus.documents.at(id));
    const auto sets_it = corpus.annotation_sets.find(id);
    if (sets_it != corpus.annotation_sets.end()) {
      half.annotation_sets.emplace(id, sets_it->second);
    }
  }
  return {std::move(train), std::move(dev)};
}

}  // namespace measpipe
