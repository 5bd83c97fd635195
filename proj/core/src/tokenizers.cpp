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

#include "measpipe/tokenizers.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "measpipe/unicode.hpp"

namespace measpipe::textprep {

namespace {

// Longest word the greedy matcher will attempt before emitting [UNK].
constexpr std::size_t kMaxWordPieceChars = 100;

std::u32string maybe_fold(const std::u32string& s, bool lowercase,
                          bool* changed) {
  if (!lowercase) {
    if (changed) *changed = false;
    return s;
  }
  std::u32string out = s;
  for (char32_t& c : out) c = utf8::fold_case(c);
  if (changed) *changed = (out != s);
  return out;
}

bool is_word_char(char32_t c) {
  if ((c >= U'0' && c <= U'9') || (c >= U'a' && c <= U'z') ||
      (c >= U'A' && c <= U'Z')) {
    return true;
  }
  if (c >= 0xC0 && c <= 0xFF && c != 0xD7 && c != 0xF7) return true;  // Latin-1
  if (c >= 0x100 && c <= 0x24F) return true;                          // Latin ext.
  if (c >= 0x386 && c <= 0x3CE) return true;                          // Greek
  if (c >= 0x400 && c <= 0x4FF) return true;                          // Cyrillic
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// WhitespaceTokenizer

WhitespaceTokenizer::WhitespaceTokenizer(std::vector<std::string> words,
                                         bool lowercase)
    : words_(std::move(words)), lowercase_(lowercase) {
  for (std::size_t k = 0; k < words_.size(); ++k) {
    const std::u32string key = utf8::decode(words_[k]);
    if (!index_.emplace(key, static_cast<int>(k) + 4).second) {
      throw std::invalid_argument("duplicate vocabulary word '" + words_[k] + "'");
    }
  }
}

WhitespaceTokenizer WhitespaceTokenizer::from_texts(
    const std::vector<std::string>& texts, bool lowercase) {
  std::set<std::u32string> seen;
  for (const auto& text : texts) {
    const std::u32string u = utf8::decode(text);
    std::size_t i = 0;
    while (i < u.size()) {
      while (i < u.size() && utf8::is_space(u[i])) ++i;
      std::size_t j = i;
      while (j < u.size() && !utf8::is_space(u[j])) ++j;
      if (j > i) {
        bool changed = false;
        seen.insert(maybe_fold(u.substr(i, j - i), lowercase, &changed));
      }
      i = j;
    }
  }
  std::vector<std::string> words;
  words.reserve(seen.size());
  for (const auto& w : seen) words.push_back(utf8::encode(w));
  return WhitespaceTokenizer(std::move(words), lowercase);
}

std::vector<RawToken> WhitespaceTokenizer::run(const std::u32string& text) const {
  std::vector<RawToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && utf8::is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !utf8::is_space(text[j])) ++j;
    if (j > i) {
      bool changed = false;
      const std::u32string key =
          maybe_fold(text.substr(i, j - i), lowercase_, &changed);
      const auto it = index_.find(key);
      out.push_back(RawToken{it == index_.end() ? kUnkId : it->second,
                             Span{i, j}, changed});
    }
    i = j;
  }
  return out;
}

int WhitespaceTokenizer::vocab_size() const {
  return static_cast<int>(words_.size()) + 4;
}

// ---------------------------------------------------------------------------
// WordPieceTokenizer

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab,
                                       bool lowercase)
    : vocab_(std::move(vocab)), lowercase_(lowercase) {
  for (std::size_t k = 0; k < vocab_.size(); ++k) {
    const std::u32string key = utf8::decode(vocab_[k]);
    if (!index_.emplace(key, static_cast<int>(k)).second) {
      throw std::invalid_argument("duplicate vocabulary entry '" + vocab_[k] + "'");
    }
  }
  auto required = [&](const char* token) {
    const auto it = index_.find(utf8::decode(token));
    if (it == index_.end()) {
      throw std::invalid_argument(std::string("vocabulary is missing ") + token);
    }
    return it->second;
  };
  pad_id_ = required("[PAD]");
  unk_id_ = required("[UNK]");
  cls_id_ = required("[CLS]");
  sep_id_ = required("[SEP]");
}

WordPieceTokenizer WordPieceTokenizer::from_file(const std::string& vocab_path,
                                                 bool lowercase) {
  std::ifstream in(vocab_path);
  if (!in) {
    throw std::runtime_error("cannot open vocabulary file '" + vocab_path + "'");
  }
  std::vector<std::string> vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    vocab.push_back(line);
  }
  return WordPieceTokenizer(std::move(vocab), lowercase);
}

std::vector<RawToken> WordPieceTokenizer::run(const std::u32string& text) const {
  std::vector<RawToken> out;

  // Greedy longest-match over one alphanumeric or punctuation group. The
  // whole group collapses to a single [UNK] when any tail fails to match.
  auto wordpiece = [&](std::size_t begin, std::size_t end) {
    const std::size_t len = end - begin;
    bool changed = false;
    const std::u32string folded =
        maybe_fold(text.substr(begin, len), lowercase_, &changed);
    if (len > kMaxWordPieceChars) {
      out.push_back(RawToken{unk_id_, Span{begin, end}, changed});
      return;
    }
    std::vector<RawToken> pieces;
    std::size_t start = 0;
    while (start < len) {
      std::size_t stop = len;
      int found = -1;
      while (stop > start) {
        std::u32string candidate =
            start == 0 ? folded.substr(0, stop)
                       : U"##" + folded.substr(start, stop - start);
        const auto it = index_.find(candidate);
        if (it != index_.end()) {
          found = it->second;
          break;
        }
        --stop;
      }
      if (found < 0) {
        out.push_back(RawToken{unk_id_, Span{begin, end}, changed});
        return;
      }
      pieces.push_back(RawToken{found, Span{begin + start, begin + stop}, changed});
      start = stop;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
  };

  std::size_t i = 0;
  while (i < text.size()) {
    if (utf8::is_space(text[i])) {
      ++i;
      continue;
    }
    if (is_word_char(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(text[j])) ++j;
      wordpiece(i, j);
      i = j;
    } else {
      // Punctuation and symbols are isolated, one code point each.
      wordpiece(i, i + 1);
      ++i;
    }
  }
  return out;
}

int WordPieceTokenizer::vocab_size() const {
  return static_cast<int>(vocab_.size());
}

}  // namespace measpipe::textprep
