#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace flowdialog::text {

/// Lowercase, trim, and collapse internal whitespace runs to one space.
std::string normalize(std::string_view s);

/// normalize() plus stripping of leading/trailing punctuation and quotes, so
/// that model output such as "Yes." compares equal to the label "yes".
std::string normalize_label(std::string_view s);

/// Lowercased tokens with ASCII punctuation removed, split on whitespace.
std::vector<std::string> tokenize(std::string_view s);

std::string trim(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_word(std::string_view line, std::string_view word);

}  // namespace flowdialog::text
