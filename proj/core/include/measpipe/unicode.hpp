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

#ifndef MEASPIPE_UNICODE_HPP_
#define MEASPIPE_UNICODE_HPP_

#include <cstddef>
#include <string>
#include <string_view>

// All text offsets in this project count Unicode code points, not bytes.
// These helpers bridge between UTF-8 storage and code-point arithmetic.
// Invalid UTF-8 bytes decode to U+FFFD, one replacement per bad byte, so
// decode/encode never changes the code-point length of well-formed input.
namespace measpipe::utf8 {

std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);

// Number of code points in a UTF-8 string.
std::size_t length(std::string_view s);

// Substring by code-point range [start, end). Throws std::out_of_range if
// the range does not fit.
std::string slice(std::string_view s, std::size_t start, std::size_t end);

// Lowercases ASCII and Latin-1 letters code point by code point. Length
// preserving, which keeps token offset maps exact.
char32_t fold_case(char32_t c);

bool is_space(char32_t c);

}  // namespace measpipe::utf8

#endif  // MEASPIPE_UNICODE_HPP_
