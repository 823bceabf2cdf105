#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <unistd.h>

#include "qpp/core.hpp"

namespace qpp::io {

/// Shortest round-trip is not enough for diffing; always 17 significant digits.
inline std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string join(const Vec& v, char sep = ',') {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += num(v(i));
  }
  return s;
}

/// Locale-independent strict parse of a whole token.
inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc() && r.ptr == e;
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Write through a temporary file in the same directory, then rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::NumericalFailure, "cannot write " + tmp.string());
    os << content;
    os.flush();
    if (!os) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorCode::NumericalFailure, "write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

}  // namespace qpp::io
