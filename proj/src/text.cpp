#include "flowdialog/text.hpp"

#include <cctype>

namespace flowdialog::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(lower(c));
  }
  return out;
}

std::string normalize_label(std::string_view s) {
  std::string n = normalize(s);
  std::size_t b = 0;
  std::size_t e = n.size();
  // '_' is kept so control labels like DOMAIN_QUESTION survive.
  auto strip = [](char c) { return (is_punct(c) && c != '_') || is_space(c); };
  while (b < e && strip(n[b])) ++b;
  while (e > b && strip(n[e - 1])) --e;
  return n.substr(b, e - b);
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : s) {
    if (is_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else if (!is_punct(c)) {
      cur.push_back(lower(c));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

bool starts_with_word(std::string_view line, std::string_view word) {
  if (line.size() < word.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (lower(line[i]) != lower(word[i])) return false;
  }
  if (line.size() == word.size()) return true;
  char next = line[word.size()];
  return is_space(next) || next == '(' || next == ';';
}

}  // namespace flowdialog::text
