#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"

namespace forge::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write through a temporary file and rename, so readers never observe a
/// half-written artifact.
inline void write_file(const fs::path &p, const std::string &content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::transport, "cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, p);
}

inline json read_json(const fs::path &p) {
  auto j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::schema, p.string() + " is not valid JSON");
  return j;
}

inline void write_json(const fs::path &p, const json &j) { write_file(p, j.dump(2) + "\n"); }

inline std::vector<json> parse_jsonl(const std::string &content, const std::string &origin = "<jsonl>") {
  std::vector<json> rows;
  std::istringstream in(content);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(ErrorKind::schema, origin + ":" + std::to_string(lineno) + " is not valid JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

inline std::vector<json> read_jsonl(const fs::path &p) { return parse_jsonl(read_file(p), p.string()); }

inline std::string to_jsonl(const std::vector<json> &rows) {
  std::string out;
  for (const auto &r : rows) out += r.dump() + "\n";
  return out;
}

inline void write_jsonl(const fs::path &p, const std::vector<json> &rows) { write_file(p, to_jsonl(rows)); }

} // namespace forge::io
