#pragma once

#include <chrono>
#include <csignal>
#include <ctime>
#include <fcntl.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "forge/error.hpp"
#include "forge/jsonl.hpp"

namespace forge::ws {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char *kToolVersion = "0.1.0";

inline std::string sha256_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::not_found, "cannot read " + p.string());
  EVP_MD_CTX *ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string sha256_text(const std::string &s) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr);
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Parse a --set value: JSON when it parses, plain string otherwise.
inline json parse_scalar(const std::string &v) {
  auto j = json::parse(v, nullptr, false);
  return j.is_discarded() ? json(v) : j;
}

/// Apply "a.b.c=value" to a config object.
inline void apply_override(json &cfg, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::config, "--set expects key=value, got '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  json *node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorKind::config, "--set: malformed key '" + key + "'");
    if (dot == std::string::npos) {
      (*node)[part] = parse_scalar(assignment.substr(eq + 1));
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

/// One stage's manifest. Paths in outputs are relative to the stage directory;
/// inputs are keyed by workspace-relative or absolute path.
struct Manifest {
  std::string stage;
  std::string tool_version = kToolVersion;
  json config;
  std::string fingerprint;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;
  json stats = json::object();
};

inline void to_json(json &j, const Manifest &m) {
  j = json{{"stage", m.stage},         {"tool_version", m.tool_version}, {"config", m.config},
           {"fingerprint", m.fingerprint}, {"inputs", m.inputs},         {"outputs", m.outputs},
           {"started_at", m.started_at}, {"finished_at", m.finished_at}, {"stats", m.stats}};
}

inline void from_json(const json &j, Manifest &m) {
  m.stage = j.at("stage").get<std::string>();
  m.tool_version = j.value("tool_version", "");
  m.config = j.value("config", json::object());
  m.fingerprint = j.value("fingerprint", "");
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.stats = j.value("stats", json::object());
}

inline constexpr const char *kManifestName = "manifest.json";

inline std::optional<Manifest> read_manifest(const fs::path &stage_dir) {
  const auto p = stage_dir / kManifestName;
  if (!fs::exists(p)) return std::nullopt;
  return io::read_json(p).get<Manifest>();
}

/// Every regular file under dir except the manifest, keyed by relative path.
inline std::map<std::string, std::string> digest_tree(const fs::path &dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto &e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == kManifestName) continue;
    out[rel] = sha256_file(e.path());
  }
  return out;
}

/// Files whose content no longer matches the manifest, or that vanished.
inline std::vector<std::string> verify_outputs(const fs::path &stage_dir, const Manifest &m) {
  std::vector<std::string> bad;
  for (const auto &[rel, digest] : m.outputs) {
    const auto p = stage_dir / rel;
    if (!fs::exists(p)) {
      bad.push_back(m.stage + "/" + rel + " (missing)");
      continue;
    }
    if (sha256_file(p) != digest) bad.push_back(m.stage + "/" + rel);
  }
  return bad;
}

/// Exclusive per-workspace lock held for the lifetime of the object. A lock
/// left by a dead process is taken over.
class WorkspaceLock {
public:
  explicit WorkspaceLock(const fs::path &workspace) : path_(workspace / ".forge.lock") {
    fs::create_directories(workspace);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const auto pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        held_ = true;
        return;
      }
      std::ifstream in(path_);
      long pid = 0;
      in >> pid;
      if (pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM))
        throw Error(ErrorKind::precondition, "workspace is locked by process " + std::to_string(pid) + " (" +
                                                 path_.string() + ")");
      fs::remove(path_);
    }
    throw Error(ErrorKind::precondition, "cannot acquire workspace lock " + path_.string());
  }
  ~WorkspaceLock() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  WorkspaceLock(const WorkspaceLock &) = delete;
  WorkspaceLock &operator=(const WorkspaceLock &) = delete;

private:
  fs::path path_;
  bool held_ = false;
};

} // namespace forge::ws
