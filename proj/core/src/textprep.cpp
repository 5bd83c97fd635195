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

#include "measpipe/textprep.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "measpipe/unicode.hpp"

namespace measpipe::textprep {

namespace {

bool is_upper_or_digit(char32_t c) {
  if (c >= U'0' && c <= U'9') return true;
  if (c >= U'A' && c <= U'Z') return true;
  return c >= 0xC0 && c <= 0xDE && c != 0xD7;
}

bool is_letterish(char32_t c) {
  if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z')) return true;
  return c >= 0xC0 && c <= 0xFF && c != 0xD7 && c != 0xF7;
}

// Tokens before a period that do not end a sentence.
const std::set<std::u32string>& abbreviations() {
  static const std::set<std::u32string> kAbbrev = {
      U"e.g", U"i.e", U"al",  U"fig", U"figs", U"eq",  U"eqs",
      U"ref", U"refs", U"cf", U"vs",  U"dr",   U"mr",  U"mrs",
      U"ms",  U"prof", U"no", U"approx", U"ca", U"resp", U"vol"};
  return kAbbrev;
}

}  // namespace

std::vector<int> TokenAlignment::ids() const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.id);
  return out;
}

std::string BioSequence::to_letters() const {
  std::string out;
  out.reserve(tags.size());
  for (auto t : tags) {
    out.push_back(t == BioTag::B ? 'B' : (t == BioTag::I ? 'I' : 'O'));
  }
  return out;
}

BioSequence BioSequence::from_letters(const std::string& s) {
  BioSequence seq;
  seq.tags.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case 'B': seq.tags.push_back(BioTag::B); break;
      case 'I': seq.tags.push_back(BioTag::I); break;
      case 'O': seq.tags.push_back(BioTag::O); break;
      default: throw std::invalid_argument("bad BIO letter in '" + s + "'");
    }
  }
  return seq;
}

std::vector<Span> RuleSentenceSplitter::split(const std::u32string& text) const {
  std::vector<Span> spans;
  const std::size_t n = text.size();

  auto skip_space = [&](std::size_t p) {
    while (p < n && utf8::is_space(text[p])) ++p;
    return p;
  };
  auto is_terminal = [](char32_t c) {
    return c == U'.' || c == U'!' || c == U'?';
  };

  std::size_t start = skip_space(0);
  std::size_t i = start;
  while (i < n) {
    if (start >= n) break;
    if (!is_terminal(text[i])) {
      ++i;
      continue;
    }
    std::size_t run_end = i;  // last terminal of the run
    while (run_end + 1 < n && is_terminal(text[run_end + 1])) ++run_end;

    bool guarded = false;
    if (text[i] == U'.' && run_end == i) {
      // Scan back over letters and inner periods to catch "e.g." / "et al.".
      std::size_t b = i;
      std::u32string token;
      while (b > 0 && (is_letterish(text[b - 1]) || text[b - 1] == U'.')) {
        --b;
        token.insert(token.begin(), utf8::fold_case(text[b]));
      }
      if (!token.empty()) {
        if (abbreviations().count(token) > 0) guarded = true;
        // Single uppercase letter: an initial, as in "J. Smith".
        if (token.size() == 1 && text[i - 1] >= U'A' && text[i - 1] <= U'Z') {
          guarded = true;
        }
      }
    }

    const std::size_t after = run_end + 1;
    const std::size_t next = skip_space(after);
    const bool at_end = next >= n;
    const bool boundary =
        !guarded && (at_end || (next > after && is_upper_or_digit(text[next])));
    if (boundary) {
      if (after > start) spans.push_back({start, after});
      start = next;
      i = next;
    } else {
      i = run_end + 1;
    }
  }
  if (start < n) {
    std::size_t end = n;
    while (end > start && utf8::is_space(text[end - 1])) --end;
    if (end > start) spans.push_back({start, end});
  }
  return spans;
}

std::vector<Sentence> split_sentences(const Document& document,
                                      const SentenceSplitter& splitter) {
  const std::u32string text = utf8::decode(document.text);
  std::vector<Span> spans;
  try {
    spans = splitter.split(text);
  } catch (const std::exception& e) {
    throw std::runtime_error("sentence splitter failed on doc '" +
                             document.doc_id + "': " + e.what());
  }
  std::vector<Sentence> out;
  std::size_t prev_end = 0;
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const Span s = spans[k];
    if (s.start >= s.end || s.end > text.size() || s.start < prev_end) {
      throw std::runtime_error("sentence splitter returned invalid spans for doc '" +
                               document.doc_id + "'");
    }
    prev_end = s.end;
    out.push_back(Sentence{document.doc_id, k, s,
                           utf8::encode(text.substr(s.start, s.end - s.start))});
  }
  return out;
}

TokenAlignment align_tokens(const std::string& sentence_text,
                            const SubwordTokenizer& tokenizer,
                            std::size_t max_len) {
  if (max_len < 3) {
    throw std::invalid_argument("max_len must be >= 3 (sentinel, token, terminator)");
  }
  const std::u32string text = utf8::decode(sentence_text);
  std::vector<RawToken> pieces = tokenizer.run(text);

  TokenAlignment out;
  out.max_len = max_len;
  if (pieces.size() > max_len - 2) {
    pieces.resize(max_len - 2);
    out.truncated = true;
  }
  out.tokens.reserve(pieces.size() + 2);
  out.tokens.push_back(Token{tokenizer.cls_id(), Span{0, 0}, true, false});
  for (const auto& p : pieces) {
    out.tokens.push_back(Token{p.id, p.span, false, p.normalized});
  }
  out.tokens.push_back(Token{tokenizer.sep_id(), Span{0, 0}, true, false});
  return out;
}

TokenAlignment align_marked(const MarkedSentence& marked,
                            const SubwordTokenizer& tokenizer,
                            std::size_t max_len) {
  TokenAlignment out = align_tokens(marked.text, tokenizer, max_len);
  for (auto& token : out.tokens) {
    if (token.is_special || token.span.length() == 0) continue;
    bool all_marker = true;
    for (std::size_t p = token.span.start; p < token.span.end; ++p) {
      if (marked.to_original(p).has_value()) {
        all_marker = false;
        break;
      }
    }
    if (all_marker) {
      token.is_special = true;
      token.span = Span{token.span.start, token.span.start};
    }
  }
  return out;
}

BioSequence encode_bio(const TokenAlignment& alignment,
                       const std::vector<Span>& spans) {
  std::vector<Span> sorted = spans;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    if (sorted[k].start < sorted[k - 1].end) {
      throw std::invalid_argument("encode_bio: input spans overlap");
    }
  }
  BioSequence seq;
  seq.tags.assign(alignment.tokens.size(), BioTag::O);
  for (const auto& span : sorted) {
    bool first = true;
    for (std::size_t t = 0; t < alignment.tokens.size(); ++t) {
      const Token& token = alignment.tokens[t];
      if (token.is_special || token.span.length() == 0) continue;
      if (!token.span.overlaps(span)) continue;
      if (first) {
        if (seq.tags[t] == BioTag::O) seq.tags[t] = BioTag::B;
        first = false;
      } else {
        seq.tags[t] = BioTag::I;
      }
    }
  }
  return seq;
}

std::vector<Span> decode_bio(const BioSequence& bio,
                             const TokenAlignment& alignment) {
  if (bio.tags.size() != alignment.tokens.size()) {
    throw std::invalid_argument("decode_bio: tag/token length mismatch");
  }
  std::vector<Span> out;
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // token index ranges
  bool open = false;
  std::size_t run_start = 0;
  for (std::size_t t = 0; t < bio.tags.size(); ++t) {
    const BioTag tag = bio.tags[t];
    if (tag == BioTag::B) {
      if (open) runs.emplace_back(run_start, t);
      run_start = t;
      open = true;
    } else if (tag == BioTag::I) {
      if (!open) {  // ill-formed leading I: repair as B
        run_start = t;
        open = true;
      }
    } else if (open) {
      runs.emplace_back(run_start, t);
      open = false;
    }
  }
  if (open) runs.emplace_back(run_start, bio.tags.size());

  for (const auto& [lo, hi] : runs) {
    bool any = false;
    std::size_t start = 0, end = 0;
    for (std::size_t t = lo; t < hi; ++t) {
      const Token& token = alignment.tokens[t];
      if (token.is_special || token.span.length() == 0) continue;
      if (!any) {
        start = token.span.start;
        end = token.span.end;
        any = true;
      } else {
        end = token.span.end;
      }
    }
    if (any) out.push_back({start, end});
  }
  return out;
}

std::optional<std::size_t> MarkedSentence::to_original(
    std::size_t marked_pos) const {
  std::size_t shift = 0;
  for (const auto& ins : insertions) {
    const std::size_t marked_start = ins.orig_pos + shift;
    if (marked_pos < marked_start) return marked_pos - shift;
    if (marked_pos < marked_start + ins.length) return std::nullopt;
    shift += ins.length;
  }
  const std::size_t orig = marked_pos - shift;
  if (orig >= original_length) {
    throw std::out_of_range("to_original: position beyond marked text");
  }
  return orig;
}

std::size_t MarkedSentence::to_marked(std::size_t orig_pos) const {
  std::size_t shift = 0;
  for (const auto& ins : insertions) {
    if (ins.orig_pos <= orig_pos) shift += ins.length;
  }
  return orig_pos + shift;
}

Span MarkedSentence::to_marked_span(const Span& orig) const {
  if (orig.start >= orig.end) {
    const std::size_t p = to_marked(orig.start);
    return {p, p};
  }
  return {to_marked(orig.start), to_marked(orig.end - 1) + 1};
}

std::optional<Span> MarkedSentence::to_original_span(const Span& marked) const {
  bool any = false;
  std::size_t lo = 0, hi = 0;
  for (std::size_t p = marked.start; p < marked.end; ++p) {
    const auto orig = to_original(p);
    if (!orig) continue;
    if (!any) {
      lo = *orig;
      hi = *orig + 1;
      any = true;
    } else {
      hi = *orig + 1;
    }
  }
  if (!any) return std::nullopt;
  return Span{lo, hi};
}

MarkedSentence insert_markers(const std::string& sentence_text,
                              const Span& primary_span, char32_t primary_symbol,
                              std::optional<Span> secondary_span,
                              char32_t secondary_symbol) {
  const std::u32string text = utf8::decode(sentence_text);
  auto check = [&](const Span& s, const char* which) {
    if (s.start >= s.end || s.end > text.size()) {
      throw std::invalid_argument(std::string("insert_markers: ") + which +
                                  " span out of bounds");
    }
  };
  check(primary_span, "primary");
  if (secondary_span) {
    check(*secondary_span, "secondary");
    if (primary_span.overlaps(*secondary_span)) {
      throw std::invalid_argument("insert_markers: spans overlap");
    }
  }

  // kind 0 = closing, 1 = opening; at equal positions a closing marker for
  // the earlier span precedes the next span's opening marker.
  struct Point {
    std::size_t pos;
    int kind;
    std::u32string text;
  };
  std::vector<Point> points;
  points.push_back({primary_span.start, 1, {primary_symbol, U' '}});
  points.push_back({primary_span.end, 0, {U' ', primary_symbol}});
  if (secondary_span) {
    points.push_back({secondary_span->start, 1, {secondary_symbol, U' '}});
    points.push_back({secondary_span->end, 0, {U' ', secondary_symbol}});
  }
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.kind < b.kind;
  });

  MarkedSentence out;
  out.original_length = text.size();
  out.marked_spans.push_back(primary_span);
  if (secondary_span) out.marked_spans.push_back(*secondary_span);

  std::u32string marked;
  marked.reserve(text.size() + points.size() * 2);
  std::size_t cursor = 0;
  for (const auto& p : points) {
    marked.append(text, cursor, p.pos - cursor);
    marked.append(p.text);
    out.insertions.push_back({p.pos, p.text.size()});
    cursor = p.pos;
  }
  marked.append(text, cursor, text.size() - cursor);
  out.text = utf8::encode(marked);
  return out;
}

Span to_paragraph_span(const Sentence& sentence, const Span& span) {
  if (span.end > sentence.span.length() || span.start >= span.end) {
    throw std::invalid_argument("to_paragraph_span: span exceeds sentence bounds");
  }
  return {sentence.span.start + span.start, sentence.span.start + span.end};
}

SpanLocation locate_in_sentences(const Span& span,
                                 const std::vector<Sentence>& sentences) {
  SpanLocation loc;
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    const Span s = sentences[k].span;
    // Containing sentence of the span start; a start in an inter-sentence
    // gap is folded into the following sentence.
    if (span.start < s.end) {
      const std::size_t lo = std::max(span.start, s.start);
      const std::size_t hi = std::min(span.end, s.end);
      if (lo >= hi) return loc;  // nothing of the span inside any sentence
      loc.found = true;
      loc.sentence_index = k;
      loc.sentence_relative = {lo - s.start, hi - s.start};
      loc.clipped = (span.start < s.start) || (span.end > s.end);
      return loc;
    }
  }
  return loc;
}

}  // namespace measpipe::textprep
