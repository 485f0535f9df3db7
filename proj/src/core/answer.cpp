#include "stc/core/answer.hpp"

#include <array>
#include <cctype>

namespace stc {

namespace {

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?';
}

}  // namespace

std::string normalize_answer(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  while (!out.empty() && (out.back() == ' ' || is_terminal_punct(out.back())))
    out.pop_back();

  // Strip leading articles until none remains so that normalization is
  // idempotent ("a a cat" and "a cat" both map to "cat").
  static constexpr std::array<const char*, 3> kArticles = {"a ", "an ", "the "};
  bool stripped = true;
  while (stripped) {
    stripped = false;
    for (const char* article : kArticles) {
      if (out.starts_with(article)) {
        out.erase(0, std::string_view(article).size());
        stripped = true;
      }
    }
  }
  return out;
}

bool answers_equal(const AnswerPrediction& a, const AnswerPrediction& b) {
  return a.normalized_text == b.normalized_text;
}

AnswerPrediction make_answer(const std::string& raw, double score) {
  return AnswerPrediction{raw, normalize_answer(raw), score};
}

}  // namespace stc
