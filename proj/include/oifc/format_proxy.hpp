#pragma once

// Deterministic structural format-similarity scorer. LLM-free: it gates the
// distinctness of Query Type 2 variants and powers fast regression tests; it
// never replaces the judge in reported metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "oifc/text.hpp"

namespace oifc::format_proxy {

struct FormatFeatures {
  int line_count = 0;
  int char_length = 0;  // Unicode scalar values, not bytes
  int bullet_lines = 0;  // lines starting with -, * or •
  int numbered_lines = 0;  // lines starting with digits followed by . 、 or )
  int header_lines = 0;  // lines starting with #
  int code_fence_blocks = 0;  // pairs of ``` lines
  double blank_line_ratio = 0.0;
  bool ends_with_punctuation = false;
  int table_rows = 0;  // lines containing at least two '|'

  friend bool operator==(const FormatFeatures&, const FormatFeatures&) = default;
};

namespace detail {

inline std::string_view lstrip(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  return line.substr(i);
}

inline bool is_bullet(std::string_view line) {
  std::string_view s = lstrip(line);
  if (s.empty()) return false;
  if (s[0] == '-' || s[0] == '*') return true;
  return s.substr(0, 3) == "•";  // •
}

inline bool is_numbered(std::string_view line) {
  std::string_view s = lstrip(line);
  std::size_t i = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i == 0) return false;
  std::string_view rest = s.substr(i);
  return !rest.empty() && (rest[0] == '.' || rest[0] == ')' ||
                           rest.substr(0, 3) == "、");  // 、
}

inline bool is_fence(std::string_view line) {
  return lstrip(line).substr(0, 3) == "```";
}

inline bool ends_with_punct(std::string_view s) {
  static constexpr std::string_view marks[] = {
      ".", "!", "?", ";", ":", ",",
      "。", "！", "？", "；", "：", "，",
      "、", "…"};  // 。！？；：，、…
  while (!s.empty() && text::is_ascii_space(s.back())) s.remove_suffix(1);
  for (std::string_view m : marks) {
    if (s.size() >= m.size() && s.substr(s.size() - m.size()) == m) return true;
  }
  return false;
}

}  // namespace detail

inline FormatFeatures extract_features(std::string_view t) {
  FormatFeatures f;
  f.char_length = static_cast<int>(text::scalar_count(t));
  auto lines = text::split_lines(t);
  f.line_count = static_cast<int>(lines.size());
  int blank = 0;
  int fence_lines = 0;
  for (std::string_view line : lines) {
    if (text::is_blank(line)) ++blank;
    if (detail::is_fence(line)) {
      ++fence_lines;
      continue;  // a fence line is not a bullet/header even if indented oddly
    }
    if (detail::is_bullet(line)) ++f.bullet_lines;
    if (detail::is_numbered(line)) ++f.numbered_lines;
    if (!detail::lstrip(line).empty() && detail::lstrip(line)[0] == '#') ++f.header_lines;
    if (std::count(line.begin(), line.end(), '|') >= 2) ++f.table_rows;
  }
  f.code_fence_blocks = fence_lines / 2;
  f.blank_line_ratio =
      f.line_count == 0 ? 0.0 : static_cast<double>(blank) / f.line_count;
  f.ends_with_punctuation = detail::ends_with_punct(t);
  return f;
}

// Fixed feature weights of the similarity score. Count features and length
// compare via min/max ratio (1 when both zero), blank_line_ratio via
// 1 - |a-b|, the punctuation flag via equality.
struct FeatureWeights {
  double line_count = 3.0;
  double char_length = 2.0;
  double bullet_lines = 4.0;
  double numbered_lines = 2.0;
  double header_lines = 0.5;
  double code_fence_blocks = 0.5;
  double table_rows = 0.5;
  double blank_line_ratio = 0.5;
  double ends_with_punctuation = 1.0;
};

inline double ratio_agreement(double a, double b) {
  if (a == 0.0 && b == 0.0) return 1.0;
  return std::min(a, b) / std::max(a, b);
}

inline double similarity(const FormatFeatures& a, const FormatFeatures& b,
                         const FeatureWeights& w = {}) {
  double num = 0.0;
  double den = 0.0;
  auto acc = [&](double weight, double agreement) {
    num += weight * agreement;
    den += weight;
  };
  acc(w.line_count, ratio_agreement(a.line_count, b.line_count));
  acc(w.char_length, ratio_agreement(a.char_length, b.char_length));
  acc(w.bullet_lines, ratio_agreement(a.bullet_lines, b.bullet_lines));
  acc(w.numbered_lines, ratio_agreement(a.numbered_lines, b.numbered_lines));
  acc(w.header_lines, ratio_agreement(a.header_lines, b.header_lines));
  acc(w.code_fence_blocks, ratio_agreement(a.code_fence_blocks, b.code_fence_blocks));
  acc(w.table_rows, ratio_agreement(a.table_rows, b.table_rows));
  acc(w.blank_line_ratio, 1.0 - std::abs(a.blank_line_ratio - b.blank_line_ratio));
  acc(w.ends_with_punctuation,
      a.ends_with_punctuation == b.ends_with_punctuation ? 1.0 : 0.0);
  return num / den;
}

inline double similarity(std::string_view a, std::string_view b) {
  return similarity(extract_features(a), extract_features(b));
}

}  // namespace oifc::format_proxy
