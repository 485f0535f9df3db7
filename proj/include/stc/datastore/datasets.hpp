#pragma once

#include <filesystem>

#include "stc/core/types.hpp"

namespace stc::datastore {

// A-OKVQA-style JSON array of records with fields question_id, image_id,
// question, choices, correct_choice_idx, direct_answers, rationales.
// image_ref = image_prefix + image_id + ".jpg".
std::vector<Sample> load_aokvqa(const std::filesystem::path& path,
                                const std::string& image_prefix = "val2017/");

// OK-VQA-style two-file layout: a questions file and an annotations file
// joined on question_id; each annotation carries ten per-annotator answers.
std::vector<Sample> load_okvqa(const std::filesystem::path& questions_path,
                               const std::filesystem::path& annotations_path,
                               const std::string& image_prefix = "val2014/");

}  // namespace stc::datastore
