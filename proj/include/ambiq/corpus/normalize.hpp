#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace ambiq::corpus {

struct NormalizeOptions {
  /// Drop ASCII punctuation before tokenizing ("Yes." -> "yes").
  bool strip_punctuation = false;
};

/// Whitespace tokens of `text`.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) out.push_back(std::move(w));
  return out;
}

/// Lowercase, trim, collapse internal whitespace and drop leading "a",
/// "an", "the" tokens. Non-ASCII bytes pass through unchanged.
inline std::string normalize_answer(std::string_view text,
                                    NormalizeOptions opts = {}) {
  std::string lowered;
  lowered.reserve(text.size());
  for (unsigned char ch : text) {
    if (opts.strip_punctuation && ch < 0x80 && std::ispunct(ch)) continue;
    lowered.push_back(ch < 0x80 ? static_cast<char>(std::tolower(ch))
                                : static_cast<char>(ch));
  }
  auto words = split_words(lowered);
  std::size_t first = 0;
  while (first < words.size() &&
         (words[first] == "a" || words[first] == "an" || words[first] == "the"))
    ++first;

  std::string out;
  for (std::size_t i = first; i < words.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace ambiq::corpus
