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

#ifndef MEASPIPE_TEXTPREP_HPP_
#define MEASPIPE_TEXTPREP_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "measpipe/corpus.hpp"

namespace measpipe::textprep {

struct Sentence {
  std::string doc_id;
  std::size_t index = 0;  // ordinal within the document
  Span span;              // document-relative
  std::string text;       // equals the document slice
};

struct Token {
  int id = 0;
  Span span;                // sentence-relative; empty for specials
  bool is_special = false;  // sentinel, terminator, or inserted marker
  bool normalized = false;  // surface was case-folded before vocab lookup
};

struct TokenAlignment {
  std::vector<Token> tokens;
  std::size_t max_len = 0;
  bool truncated = false;

  std::size_t size() const { return tokens.size(); }
  std::vector<int> ids() const;
};

// Tag indices are fixed; the CRF tag set size is 3 throughout.
enum class BioTag : int { B = 0, I = 1, O = 2 };
inline constexpr int kNumBioTags = 3;

struct BioSequence {
  std::vector<BioTag> tags;

  std::size_t size() const { return tags.size(); }
  std::string to_letters() const;            // e.g. "OOBIO"
  static BioSequence from_letters(const std::string& s);
  bool operator==(const BioSequence&) const = default;
};

// Injected handle: text in, sentence spans out. Spans are code-point
// ranges trimmed of surrounding whitespace, ordered, non-overlapping.
class SentenceSplitter {
 public:
  virtual ~SentenceSplitter() = default;
  virtual std::vector<Span> split(const std::u32string& text) const = 0;
};

// Punctuation-driven splitter with an abbreviation guard. Deterministic,
// no external models.
class RuleSentenceSplitter : public SentenceSplitter {
 public:
  std::vector<Span> split(const std::u32string& text) const override;
};

struct RawToken {
  int id = 0;
  Span span;
  bool normalized = false;
};

// Injected handle: text -> (vocabulary ids, code-point spans). The ids
// 0..3 are reserved for [PAD], [UNK], [CLS], [SEP] in every implementation.
class SubwordTokenizer {
 public:
  virtual ~SubwordTokenizer() = default;
  virtual std::vector<RawToken> run(const std::u32string& text) const = 0;
  virtual int vocab_size() const = 0;
  virtual int pad_id() const = 0;
  virtual int unk_id() const = 0;
  virtual int cls_id() const = 0;
  virtual int sep_id() const = 0;
};

// A sentence with sentinel symbols spliced in around one or two spans.
// Markers are inserted with a separating space ("$ span $") so they
// tokenize as standalone symbols.
struct MarkedSentence {
  struct Insertion {
    std::size_t orig_pos = 0;  // inserted immediately before this position
    std::size_t length = 0;    // inserted code points (always 2 here)
  };

  std::string text;                     // marked sentence, UTF-8
  std::vector<Insertion> insertions;    // sorted by orig_pos
  std::vector<Span> marked_spans;       // original enclosed spans, primary first
  std::size_t original_length = 0;      // code points of the unmarked sentence

  // Maps a marked-text position back to the original sentence; nullopt for
  // positions inside inserted marker text.
  std::optional<std::size_t> to_original(std::size_t marked_pos) const;
  std::size_t to_marked(std::size_t orig_pos) const;
  Span to_marked_span(const Span& orig) const;
  // Inverse for spans; marker positions are clipped away. nullopt when the
  // span covers nothing but marker text.
  std::optional<Span> to_original_span(const Span& marked) const;
};

std::vector<Sentence> split_sentences(const Document& document,
                                      const SentenceSplitter& splitter);

// Wraps the tokenizer output in [CLS] ... [SEP] and truncates the middle to
// max_len - 2 pieces. max_len must be >= 3.
TokenAlignment align_tokens(const std::string& sentence_text,
                            const SubwordTokenizer& tokenizer,
                            std::size_t max_len);

// Same, for a marked sentence: tokens lying entirely inside inserted marker
// text become specials with empty spans, so they never carry labels and
// never leak into decoded spans.
TokenAlignment align_marked(const MarkedSentence& marked,
                            const SubwordTokenizer& tokenizer,
                            std::size_t max_len);

// A token is inside a span iff their character ranges overlap; the first
// overlapping token gets B, contiguous followers get I. Specials stay O.
// Input spans must be non-overlapping.
BioSequence encode_bio(const TokenAlignment& alignment,
                       const std::vector<Span>& spans);

// Each maximal B(I)* run becomes one span; a leading I (at position 0 or
// after O) is repaired as B. Runs covering only special tokens vanish.
std::vector<Span> decode_bio(const BioSequence& bio,
                             const TokenAlignment& alignment);

MarkedSentence insert_markers(const std::string& sentence_text,
                              const Span& primary_span, char32_t primary_symbol,
                              std::optional<Span> secondary_span = std::nullopt,
                              char32_t secondary_symbol = U'#');

Span to_paragraph_span(const Sentence& sentence, const Span& span);

// Where a document-relative span lands in a sentence list. Spans crossing a
// sentence boundary are assigned to the sentence containing their start and
// clipped at its end.
struct SpanLocation {
  bool found = false;
  std::size_t sentence_index = 0;
  Span sentence_relative;  // clipped to the sentence
  bool clipped = false;
};
SpanLocation locate_in_sentences(const Span& span,
                                 const std::vector<Sentence>& sentences);

}  // namespace measpipe::textprep

#endif  // MEASPIPE_TEXTPREP_HPP_
