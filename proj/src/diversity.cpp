#include "flowdialog/diversity.hpp"

#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "flowdialog/error.hpp"
#include "flowdialog/text.hpp"

namespace flowdialog::evaluation {

double shannon_entropy(const std::vector<std::string>& tokens) {
  if (tokens.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  const double n = static_cast<double>(tokens.size());
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h;
}

double conditional_bigram_entropy(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2) return 0.0;
  std::map<std::pair<std::string, std::string>, std::size_t> bigrams;
  std::unordered_map<std::string, std::size_t> firsts;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    ++bigrams[{tokens[i], tokens[i + 1]}];
    ++firsts[tokens[i]];
  }
  const double total = static_cast<double>(tokens.size() - 1);
  double h = 0.0;
  for (const auto& [bg, c] : bigrams) {
    const double joint = static_cast<double>(c) / total;
    const double cond = static_cast<double>(c) / static_cast<double>(firsts.at(bg.first));
    h -= joint * std::log2(cond);
  }
  return h;
}

namespace {

double ttr(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  if (end <= begin) return 0.0;
  std::set<std::string> types(tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                              tokens.begin() + static_cast<std::ptrdiff_t>(end));
  return static_cast<double>(types.size()) / static_cast<double>(end - begin);
}

template <typename It>
double mtld_factors(It first, It last, double threshold) {
  double factors = 0.0;
  std::set<std::string> types;
  std::size_t count = 0;
  double current = 1.0;
  for (It it = first; it != last; ++it) {
    ++count;
    types.insert(*it);
    current = static_cast<double>(types.size()) / static_cast<double>(count);
    if (current <= threshold) {
      factors += 1.0;
      types.clear();
      count = 0;
      current = 1.0;
    }
  }
  if (count > 0) factors += (1.0 - current) / (1.0 - threshold);
  return factors;
}

}  // namespace

double msttr(const std::vector<std::string>& tokens, std::size_t segment, bool* fallback) {
  if (segment == 0) throw PreconditionError("msttr segment length must be positive");
  if (tokens.size() < segment) {
    if (fallback) *fallback = true;
    return ttr(tokens, 0, tokens.size());
  }
  if (fallback) *fallback = false;
  const std::size_t full = tokens.size() / segment;
  double sum = 0.0;
  for (std::size_t s = 0; s < full; ++s) sum += ttr(tokens, s * segment, (s + 1) * segment);
  return sum / static_cast<double>(full);
}

double mtld(const std::vector<std::string>& tokens, double threshold, bool* fallback) {
  if (threshold <= 0.0 || threshold >= 1.0) throw PreconditionError("mtld threshold must be in (0,1)");
  const double n = static_cast<double>(tokens.size());
  const double fwd = mtld_factors(tokens.begin(), tokens.end(), threshold);
  const double bwd = mtld_factors(tokens.rbegin(), tokens.rend(), threshold);
  bool fb = false;
  auto pass = [&](double factors) {
    if (factors <= 0.0) {
      fb = true;
      return n;
    }
    return n / factors;
  };
  const double value = (pass(fwd) + pass(bwd)) / 2.0;
  if (fallback) *fallback = fb;
  return value;
}

double hdd(const std::vector<std::string>& tokens, std::size_t sample, bool* fallback) {
  if (sample == 0) throw PreconditionError("hdd sample size must be positive");
  const std::size_t n = tokens.size();
  const std::size_t draw = std::min(sample, n);
  if (fallback) *fallback = n < sample;
  if (n == 0) return 0.0;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : tokens) ++counts[t];
  double total = 0.0;
  for (const auto& [_, c] : counts) {
    // P(type absent) = prod_{i<draw} (n - c - i) / (n - i)
    double absent = 1.0;
    if (n - c < draw) {
      absent = 0.0;
    } else {
      for (std::size_t i = 0; i < draw; ++i) {
        absent *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
      }
    }
    total += 1.0 - absent;
  }
  return total;
}

TurnDiversity turn_diversity(std::string_view utterance, const DiversityParams& params) {
  const auto tokens = text::tokenize(utterance);
  TurnDiversity d;
  d.se = shannon_entropy(tokens);
  d.ce = conditional_bigram_entropy(tokens);
  d.ce_fallback = tokens.size() < 2;
  d.msttr = msttr(tokens, params.msttr_segment, &d.msttr_fallback);
  d.mtld = mtld(tokens, params.mtld_threshold, &d.mtld_fallback);
  d.hdd = hdd(tokens, params.hdd_sample, &d.hdd_fallback);
  return d;
}

DiversityReport diversity(const std::vector<std::vector<std::string>>& turns_per_sample,
                          const DiversityParams& params) {
  if (turns_per_sample.empty()) throw EmptyInputError("diversity needs at least one sample");
  DiversityReport r;
  for (const auto& sample : turns_per_sample) {
    if (sample.empty()) throw PreconditionError("every sample needs at least one user turn");
    TurnDiversity mean;
    for (const auto& turn : sample) {
      const auto d = turn_diversity(turn, params);
      mean.se += d.se;
      mean.ce += d.ce;
      mean.msttr += d.msttr;
      mean.mtld += d.mtld;
      mean.hdd += d.hdd;
      r.msttr_fallbacks += d.msttr_fallback;
      r.mtld_fallbacks += d.mtld_fallback;
      r.hdd_fallbacks += d.hdd_fallback;
      r.ce_fallbacks += d.ce_fallback;
      ++r.turns;
    }
    const double k = static_cast<double>(sample.size());
    r.se += mean.se / k;
    r.ce += mean.ce / k;
    r.msttr += mean.msttr / k;
    r.mtld += mean.mtld / k;
    r.hdd += mean.hdd / k;
  }
  r.samples = turns_per_sample.size();
  const double s = static_cast<double>(r.samples);
  r.se /= s;
  r.ce /= s;
  r.msttr /= s;
  r.mtld /= s;
  r.hdd /= s;
  return r;
}

nlohmann::json DiversityReport::to_json() const {
  return {{"se", se},
          {"ce", ce},
          {"msttr", msttr},
          {"mtld", mtld},
          {"hdd", hdd},
          {"samples", samples},
          {"turns", turns},
          {"fallbacks",
           {{"msttr", msttr_fallbacks}, {"mtld", mtld_fallbacks}, {"hdd", hdd_fallbacks}, {"ce", ce_fallbacks}}}};
}

}  // namespace flowdialog::evaluation
