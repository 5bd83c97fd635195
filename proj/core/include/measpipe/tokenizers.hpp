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

#ifndef MEASPIPE_TOKENIZERS_HPP_
#define MEASPIPE_TOKENIZERS_HPP_

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "measpipe/textprep.hpp"

namespace measpipe::textprep {

// Reserved vocabulary slots shared by both tokenizers.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline const char* const kReservedTokens[] = {"[PAD]", "[UNK]", "[CLS]",
                                              "[SEP]"};

// One token per whitespace-delimited word; the test stub and the tokenizer
// of choice for synthetic corpora. Vocabulary is fixed at construction.
class WhitespaceTokenizer : public SubwordTokenizer {
 public:
  explicit WhitespaceTokenizer(std::vector<std::string> words,
                               bool lowercase = false);

  // Collects the sorted unique words of `texts` as the vocabulary.
  static WhitespaceTokenizer from_texts(const std::vector<std::string>& texts,
                                        bool lowercase = false);

  std::vector<RawToken> run(const std::u32string& text) const override;
  int vocab_size() const override;
  int pad_id() const override { return kPadId; }
  int unk_id() const override { return kUnkId; }
  int cls_id() const override { return kClsId; }
  int sep_id() const override { return kSepId; }

  const std::vector<std::string>& words() const { return words_; }
  bool lowercase() const { return lowercase_; }

 private:
  std::vector<std::string> words_;  // ids are index + 4
  std::map<std::u32string, int> index_;
  bool lowercase_;
};

// Greedy longest-match-first subword tokenizer over a BERT-style vocabulary
// file (one token per line, continuations prefixed "##"). Case folding is
// length preserving, which keeps the character spans exact.
class WordPieceTokenizer : public SubwordTokenizer {
 public:
  WordPieceTokenizer(std::vector<std::string> vocab, bool lowercase);
  static WordPieceTokenizer from_file(const std::string& vocab_path,
                                      bool lowercase);

  std::vector<RawToken> run(const std::u32string& text) const override;
  int vocab_size() const override;
  int pad_id() const override { return pad_id_; }
  int unk_id() const override { return unk_id_; }
  int cls_id() const override { return cls_id_; }
  int sep_id() const override { return sep_id_; }

  const std::vector<std::string>& vocab() const { return vocab_; }
  bool lowercase() const { return lowercase_; }

 private:
  std::vector<std::string> vocab_;
  std::map<std::u32string, int> index_;
  bool lowercase_;
  int pad_id_, unk_id_, cls_id_, sep_id_;
};

}  // namespace measpipe::textprep

#endif  // MEASPIPE_TOKENIZERS_HPP_
