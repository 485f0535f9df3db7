#pragma once

#include <string>

#include "stc/core/types.hpp"

namespace stc {

// Canonical answer form used for convergence checks and accuracy matching:
// lowercase, whitespace collapsed, terminal punctuation (. , ! ?) stripped,
// leading articles ("a ", "an ", "the ") removed. Idempotent.
std::string normalize_answer(const std::string& raw);

bool answers_equal(const AnswerPrediction& a, const AnswerPrediction& b);

AnswerPrediction make_answer(const std::string& raw, double score);

}  // namespace stc
