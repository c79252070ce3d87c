#include "flowdialog/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "flowdialog/text.hpp"

namespace flowdialog::knowledge {

using nlohmann::json;

std::set<std::string> token_set(std::string_view s) {
  const auto tokens = text::tokenize(s);
  return {tokens.begin(), tokens.end()};
}

double SetCosineScorer::score(const std::set<std::string>& q, const std::set<std::string>& d) const {
  if (q.empty() || d.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : q) common += d.count(t);
  return static_cast<double>(common) /
         std::sqrt(static_cast<double>(q.size()) * static_cast<double>(d.size()));
}

FaqStore::FaqStore(std::vector<FaqEntry> entries, std::shared_ptr<const Scorer> scorer)
    : entries_(std::move(entries)), scorer_(std::move(scorer)) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (text::trim(e.question).empty() || text::trim(e.answer).empty()) {
      throw SchemaError("faq entry " + std::to_string(i) + " has an empty question or answer");
    }
    if (!seen.insert(text::normalize(e.question)).second) {
      throw DuplicateQuestionError("duplicate faq question: '" + e.question + "'");
    }
    index_.push_back(token_set(e.question));
  }
}

std::vector<ScoredEntry> FaqStore::retrieve(std::string_view query, std::size_t k) const {
  if (k == 0) throw PreconditionError("retrieve needs k >= 1");
  if (entries_.empty()) throw EmptyInputError("faq store is empty");
  const auto q = token_set(query);
  std::vector<ScoredEntry> scored;
  scored.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    scored.push_back({&entries_[i], scorer_->score(q, index_[i])});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredEntry& a, const ScoredEntry& b) { return a.score > b.score; });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

FaqStore ingest_faqs(const json& document) {
  if (document.is_null()) return FaqStore{};
  if (!document.is_array()) throw SchemaError("faq file must be a JSON array");
  std::vector<FaqEntry> entries;
  for (std::size_t i = 0; i < document.size(); ++i) {
    const auto& e = document[i];
    const std::string where = "faq[" + std::to_string(i) + "]";
    if (!e.is_object() || !e.contains("question") || !e.contains("answer") ||
        !e["question"].is_string() || !e["answer"].is_string()) {
      throw SchemaError(where + ": needs string 'question' and 'answer'");
    }
    FaqEntry entry{e["question"].get<std::string>(), e["answer"].get<std::string>(), std::nullopt};
    if (auto d = e.find("domain"); d != e.end() && d->is_string()) entry.domain = d->get<std::string>();
    entries.push_back(std::move(entry));
  }
  return FaqStore(std::move(entries));
}

FaqStore ingest_faqs(std::string_view document) {
  if (text::trim(document).empty()) return FaqStore{};
  json j;
  try {
    j = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("faq file is not valid JSON: ") + e.what());
  }
  return ingest_faqs(j);
}

}  // namespace flowdialog::knowledge
