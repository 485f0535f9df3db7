#include "stc/datastore/trace_io.hpp"

#include <fstream>

#include "stc/core/serialize.hpp"

namespace stc::datastore {

void write_traces(const std::filesystem::path& path,
                  const std::vector<ReasoningTrace>& traces) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file " + path.string());
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

std::vector<ReasoningTrace> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path.string());
  std::vector<ReasoningTrace> traces;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw std::runtime_error("malformed trace at " + path.string() + ":" +
                               std::to_string(line_no));
    traces.push_back(trace_from_json(j));
  }
  return traces;
}

}  // namespace stc::datastore
