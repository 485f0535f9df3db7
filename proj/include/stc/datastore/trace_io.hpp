#pragma once

#include <filesystem>

#include "stc/core/types.hpp"

namespace stc::datastore {

// Traces persist as JSONL, one trace per line. Reading validates every
// ReasoningTrace invariant and rejects corrupted lines.
void write_traces(const std::filesystem::path& path,
                  const std::vector<ReasoningTrace>& traces);
std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path);

}  // namespace stc::datastore
