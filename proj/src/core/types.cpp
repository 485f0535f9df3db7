#include "stc/core/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace stc {

bool SceneContext::is_attended(const std::string& label) const {
  return std::any_of(attended.begin(), attended.end(),
                     [&](const auto& a) { return a.first.label == label; });
}

std::vector<std::string> SceneContext::remaining_labels() const {
  std::vector<std::string> out;
  for (const auto& c : candidates) {
    if (is_attended(c.label)) continue;
    if (std::find(out.begin(), out.end(), c.label) != out.end()) continue;
    out.push_back(c.label);
  }
  return out;
}

void EpisodeConfig::validate() const {
  if (example_count < 1)
    throw std::invalid_argument("config: n must be >= 1");
  if (ensemble_size < 1)
    throw std::invalid_argument("config: k must be >= 1");
  if (max_rounds < 1)
    throw std::invalid_argument("config: miter must be >= 1");
  if (bbox_expand < 1.0)
    throw std::invalid_argument("config: bbox_expand must be >= 1");
  if (caption_candidates < 1)
    throw std::invalid_argument("config: caption_candidates must be >= 1");
}

}  // namespace stc
