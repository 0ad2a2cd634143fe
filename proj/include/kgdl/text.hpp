#pragma once

#include "kgdl/common.hpp"

#include <cctype>
#include <string>
#include <utility>
#include <vector>

namespace kgdl {

/// Lowercase a value and collapse every whitespace run into a single
/// underscore, so "783 Arcadia Pl" becomes the single token "783_arcadia_pl".
/// Idempotent. Throws ValidationError on all-whitespace input.
inline std::string canonicalize(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_sep = false;
  for (const char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  if (out.empty())
    throw ValidationError("canonicalize: value is empty or all whitespace: \"" + raw + "\"");
  return out;
}

/// Split a comma-separated KB value into (attribute, canonical token) pairs.
/// Parts map positionally onto the given attribute names; a simple value maps
/// onto the first attribute alone.
inline std::vector<std::pair<std::string, std::string>> split_compound_entity(
    const std::string& raw_kb_value, const std::vector<std::string>& attributes) {
  if (attributes.empty())
    throw ValidationError("split_compound_entity: no attribute names given for \"" +
                          raw_kb_value + "\"");
  std::vector<std::string> parts;
  std::string cur;
  for (const char ch : raw_kb_value) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  if (parts.size() > attributes.size())
    throw ValidationError("split_compound_entity: value \"" + raw_kb_value + "\" has " +
                          std::to_string(parts.size()) + " parts but only " +
                          std::to_string(attributes.size()) + " attributes");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k)
    out.emplace_back(attributes[k], canonicalize(parts[k]));
  return out;
}

namespace detail {
inline bool is_sep_punct(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ';';
}
}  // namespace detail

/// Lowercase, split on whitespace, then peel {. , ? ! ;} off token boundaries
/// as standalone tokens. Interior punctuation stays put, so canonicalized
/// entities such as "p.f._changs" survive as single tokens.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) break;
    std::string chunk = text.substr(pos, end - pos);
    for (char& c : chunk) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    pos = end;

    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && detail::is_sep_punct(chunk[lo])) {
      out.emplace_back(1, chunk[lo]);
      ++lo;
    }
    std::size_t tail_start = hi;
    while (tail_start > lo && detail::is_sep_punct(chunk[tail_start - 1])) --tail_start;
    if (tail_start > lo) out.push_back(chunk.substr(lo, tail_start - lo));
    for (std::size_t k = tail_start; k < hi; ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

}  // namespace kgdl
