#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace flowdialog::evaluation {

struct DiversityParams {
  std::size_t msttr_segment = 25;
  double mtld_threshold = 0.72;
  std::size_t hdd_sample = 42;
};

// Lexical diversity of a single token sequence.
double shannon_entropy(const std::vector<std::string>& tokens);
double conditional_bigram_entropy(const std::vector<std::string>& tokens);
/// Mean TTR over full segments; whole-sequence TTR (and `fallback` set) when
/// the sequence is shorter than one segment.
double msttr(const std::vector<std::string>& tokens, std::size_t segment, bool* fallback = nullptr);
/// Mean of forward and backward sequential-TTR factor passes. When no factor
/// accumulates at all the token count is returned and `fallback` set.
double mtld(const std::vector<std::string>& tokens, double threshold, bool* fallback = nullptr);
/// Expected number of distinct types in a random draw of `sample` tokens
/// without replacement (sum over types of 1 - P(type absent)). Uses the whole
/// sequence as the draw when it is shorter, setting `fallback`.
double hdd(const std::vector<std::string>& tokens, std::size_t sample, bool* fallback = nullptr);

struct TurnDiversity {
  double se = 0, ce = 0, msttr = 0, mtld = 0, hdd = 0;
  bool msttr_fallback = false, mtld_fallback = false, hdd_fallback = false, ce_fallback = false;
};

TurnDiversity turn_diversity(std::string_view utterance, const DiversityParams& params = {});

struct DiversityReport {
  double se = 0, ce = 0, msttr = 0, mtld = 0, hdd = 0;
  std::size_t samples = 0;
  std::size_t turns = 0;
  std::size_t msttr_fallbacks = 0, mtld_fallbacks = 0, hdd_fallbacks = 0, ce_fallbacks = 0;

  nlohmann::json to_json() const;
};

/// Per-turn values averaged within each sample, then across samples.
DiversityReport diversity(const std::vector<std::vector<std::string>>& turns_per_sample,
                          const DiversityParams& params = {});

}  // namespace flowdialog::evaluation
