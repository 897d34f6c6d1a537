#pragma once

// Line tokenizer shared by the track and scenario loaders.

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpd/errors.hpp"

namespace dpd::detail {

struct TextLine {
  int number = 0;
  std::vector<std::string> tokens;  // `key = value` lines become {key, "=", value...}
};

inline std::vector<TextLine> tokenize_lines(std::string_view text) {
  std::vector<TextLine> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    // Treat '=' as its own token so "a=b" and "a = b" parse alike.
    std::string spaced;
    for (char c : raw) {
      if (c == '=') {
        spaced += " = ";
      } else {
        spaced += c;
      }
    }
    std::istringstream ls(spaced);
    TextLine line{number, {}};
    for (std::string tok; ls >> tok;) line.tokens.push_back(tok);
    if (!line.tokens.empty()) out.push_back(std::move(line));
  }
  return out;
}

[[noreturn]] inline void parse_fail(std::string_view source, int line, const std::string& msg) {
  std::ostringstream os;
  os << source << ":" << line << ": " << msg;
  throw Error(ErrorCode::ParseError, os.str());
}

inline double to_double(std::string_view source, int line, const std::string& tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    parse_fail(source, line, "expected a number, got '" + tok + "'");
  }
  return v;
}

inline long long to_int(std::string_view source, int line, const std::string& tok) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
    parse_fail(source, line, "expected an integer, got '" + tok + "'");
  }
  return v;
}

inline bool to_bool(std::string_view source, int line, const std::string& tok) {
  if (tok == "true" || tok == "yes" || tok == "1" || tok == "on") return true;
  if (tok == "false" || tok == "no" || tok == "0" || tok == "off") return false;
  parse_fail(source, line, "expected a boolean, got '" + tok + "'");
}

}  // namespace dpd::detail
