// Line-delimited JSON reading helpers.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "json.hpp"

#include "egopair/errors.hpp"

namespace egopair::detail {

// Invokes fn(line_number, parsed_object) for every non-empty line.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++line_no;
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw DatasetError(path.string() + ":" + std::to_string(line_no + 1) +
                         ": malformed JSON line");
    }
    fn(line_no, j);
    ++line_no;
  }
}

}  // namespace egopair::detail
