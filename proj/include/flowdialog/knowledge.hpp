#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/error.hpp"

namespace flowdialog::knowledge {

struct FaqEntry {
  std::string question;
  std::string answer;
  std::optional<std::string> domain;
};

class DuplicateQuestionError : public Error {
 public:
  using Error::Error;
};

/// Scores a query against an entry question. Implementations must return
/// values in [0, 1].
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const std::set<std::string>& query_tokens,
                       const std::set<std::string>& entry_tokens) const = 0;
};

/// |Q ∩ D| / sqrt(|Q| |D|) over token sets.
class SetCosineScorer final : public Scorer {
 public:
  double score(const std::set<std::string>& query_tokens,
               const std::set<std::string>& entry_tokens) const override;
};

struct ScoredEntry {
  const FaqEntry* entry;
  double score;
};

class FaqStore {
 public:
  FaqStore() = default;
  /// Throws DuplicateQuestionError on repeated (normalized) questions and
  /// SchemaError on empty fields.
  explicit FaqStore(std::vector<FaqEntry> entries,
                    std::shared_ptr<const Scorer> scorer = std::make_shared<SetCosineScorer>());

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<FaqEntry>& entries() const noexcept { return entries_; }

  /// Up to k entries by descending score, ties in entry order. Throws
  /// EmptyInputError on an empty store.
  std::vector<ScoredEntry> retrieve(std::string_view query, std::size_t k) const;

 private:
  std::vector<FaqEntry> entries_;
  std::vector<std::set<std::string>> index_;
  std::shared_ptr<const Scorer> scorer_;
};

/// FAQ file: JSON array of {question, answer, domain?}. Empty text or an
/// empty array yields an empty store.
FaqStore ingest_faqs(std::string_view document);
FaqStore ingest_faqs(const nlohmann::json& document);

std::set<std::string> token_set(std::string_view s);

}  // namespace flowdialog::knowledge
