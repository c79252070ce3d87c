#include "flowdialog/evaluation.hpp"

#include <cstdio>
#include <set>

namespace flowdialog::evaluation {

using nlohmann::json;

void EpisodeRecord::check() const {
  if (predicted.empty()) throw PreconditionError(sample_id + ": predicted sequence is empty");
  if (ground_truth.empty()) throw PreconditionError(sample_id + ": ground truth is empty");
  if (turns < 1) throw PreconditionError(sample_id + ": turn count must be >= 1");
  for (int l : transitions) {
    if (l < 1) throw PreconditionError(sample_id + ": transition length below 1");
  }
}

namespace {

void require_records(const std::vector<EpisodeRecord>& records, const char* metric) {
  if (records.empty()) throw EmptyInputError(std::string(metric) + " needs at least one record");
  for (const auto& r : records) r.check();
}

template <typename Pred>
double rate(const std::vector<EpisodeRecord>& records, Pred pred) {
  std::size_t hits = 0;
  for (const auto& r : records) hits += pred(r) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

}  // namespace

Inga inga(const std::vector<EpisodeRecord>& records) {
  require_records(records, "INGA");
  std::size_t hits = 0, root_hits = 0, root_n = 0, middle_hits = 0, middle_n = 0;
  for (const auto& r : records) {
    const bool hit = r.predicted.front() == r.ground_truth.front();
    hits += hit;
    if (r.gt_initial_is_root) {
      ++root_n;
      root_hits += hit;
    } else {
      ++middle_n;
      middle_hits += hit;
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) -> std::optional<double> {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
  };
  return Inga{static_cast<double>(hits) / static_cast<double>(records.size()),
              ratio(root_hits, root_n), ratio(middle_hits, middle_n), root_n, middle_n};
}

double tnga(const std::vector<EpisodeRecord>& records) {
  require_records(records, "TNGA");
  return rate(records, [](const EpisodeRecord& r) { return r.predicted.back() == r.ground_truth.back(); });
}

bool is_subsequence(const NodePath& needle, const NodePath& haystack) {
  std::size_t i = 0;
  for (std::size_t j = 0; i < needle.size() && j < haystack.size(); ++j) {
    if (needle[i] == haystack[j]) ++i;
  }
  return i == needle.size();
}

double pca(const std::vector<EpisodeRecord>& records) {
  require_records(records, "PCA");
  return rate(records,
              [](const EpisodeRecord& r) { return is_subsequence(r.ground_truth, r.predicted); });
}

Nsr nsr(const std::vector<EpisodeRecord>& records) {
  require_records(records, "NSR");
  double sum = 0;
  std::size_t used = 0;
  std::size_t excluded = 0;
  for (const auto& r : records) {
    if (r.transitions.empty()) {
      ++excluded;
      continue;
    }
    long redundant = 0;
    long total = 0;
    for (int l : r.transitions) {
      redundant += l - 1;
      total += l;
    }
    sum += static_cast<double>(redundant) / static_cast<double>(total);
    ++used;
  }
  if (used == 0) return Nsr{std::nullopt, excluded};
  return Nsr{sum / static_cast<double>(used), excluded};
}

double tr(const std::vector<EpisodeRecord>& records) {
  require_records(records, "TR");
  for (const auto& r : records) {
    if (r.budget < 1) throw PreconditionError(r.sample_id + ": turn budget not set");
  }
  return rate(records, [](const EpisodeRecord& r) { return r.turns > r.budget; });
}

std::string_view to_string(CoverageRelation r) {
  switch (r) {
    case CoverageRelation::exact_match: return "exact_match";
    case CoverageRelation::prediction_covers_gt: return "prediction_covers_gt";
    case CoverageRelation::prediction_contained_in_gt: return "prediction_contained_in_gt";
    case CoverageRelation::partial_overlap: return "partial_overlap";
    case CoverageRelation::disjoint: return "disjoint";
  }
  return "disjoint";
}

CoverageRelation classify_coverage(const NodePath& gt, const NodePath& pred) {
  if (gt.empty() || pred.empty()) throw PreconditionError("coverage needs non-empty sequences");
  if (gt == pred) return CoverageRelation::exact_match;
  if (is_subsequence(gt, pred)) return CoverageRelation::prediction_covers_gt;
  if (is_subsequence(pred, gt)) return CoverageRelation::prediction_contained_in_gt;
  const std::set<NodeId> gt_nodes(gt.begin(), gt.end());
  for (const auto& n : pred) {
    if (gt_nodes.count(n)) return CoverageRelation::partial_overlap;
  }
  return CoverageRelation::disjoint;
}

CoverageHistogram coverage_histogram(const std::vector<EpisodeRecord>& records) {
  CoverageHistogram h{};
  for (const auto& r : records) {
    ++h[static_cast<std::size_t>(classify_coverage(r.ground_truth, r.predicted))];
  }
  return h;
}

MetricsReport evaluate(const std::vector<EpisodeRecord>& records) {
  MetricsReport m;
  m.n = records.size();
  m.inga = inga(records);
  m.tnga = tnga(records);
  m.pca = pca(records);
  m.nsr = nsr(records);
  m.tr = tr(records);
  m.coverage = coverage_histogram(records);
  return m;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

std::string cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v * 100.0);
  return buf;
}

}  // namespace

json MetricsReport::to_json() const {
  json cov = json::object();
  for (std::size_t i = 0; i < kCoverageRelationCount; ++i) {
    cov[std::string(to_string(static_cast<CoverageRelation>(i)))] = coverage[i];
  }
  return {
      {"n", n},
      {"split", {{"root_init", inga.root_count}, {"middle_init", inga.middle_count}}},
      {"inga",
       {{"overall", inga.overall},
        {"root_init", optional_number(inga.root_init)},
        {"middle_init", optional_number(inga.middle_init)}}},
      {"tnga", tnga},
      {"pca", pca},
      {"tr", tr},
      {"nsr", {{"value", optional_number(nsr.value)}, {"excluded", nsr.excluded}}},
      {"coverage", cov},
  };
}

MetricsReport MetricsReport::from_json(const json& j) {
  MetricsReport m;
  try {
    m.n = j.at("n").get<std::size_t>();
    m.inga.overall = j.at("inga").at("overall").get<double>();
    m.inga.root_init = read_optional(j.at("inga"), "root_init");
    m.inga.middle_init = read_optional(j.at("inga"), "middle_init");
    m.inga.root_count = j.at("split").at("root_init").get<std::size_t>();
    m.inga.middle_count = j.at("split").at("middle_init").get<std::size_t>();
    m.tnga = j.at("tnga").get<double>();
    m.pca = j.at("pca").get<double>();
    m.tr = j.at("tr").get<double>();
    m.nsr.value = read_optional(j.at("nsr"), "value");
    m.nsr.excluded = j.at("nsr").at("excluded").get<std::size_t>();
    for (std::size_t i = 0; i < kCoverageRelationCount; ++i) {
      m.coverage[i] =
          j.at("coverage").at(std::string(to_string(static_cast<CoverageRelation>(i)))).get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("metrics report: ") + e.what());
  }
  return m;
}

std::string MetricsReport::to_table(std::string_view label) const {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof line, "%-16s | %-31s | %-15s | %-15s\n", "", "Initialization", "Task Success",
                "Efficiency");
  out += line;
  std::snprintf(line, sizeof line, "%-16s | %9s %10s %10s | %7s %7s | %7s %7s\n", "Method", "Root-init",
                "Middle-init", "Overall", "TNGA", "PCA", "TR", "NSR");
  out += line;
  out += std::string(88, '-') + "\n";
  std::snprintf(line, sizeof line, "%-16.16s | %9s %10s %10s | %7s %7s | %7s %7s\n",
                std::string(label).c_str(), cell(inga.root_init).c_str(), cell(inga.middle_init).c_str(),
                cell(inga.overall).c_str(), cell(tnga).c_str(), cell(pca).c_str(), cell(tr).c_str(),
                cell(nsr.value).c_str());
  out += line;
  std::snprintf(line, sizeof line, "N=%zu (root-init %zu, middle-init %zu); NSR excluded %zu\n", n,
                inga.root_count, inga.middle_count, nsr.excluded);
  out += line;
  out += "coverage:";
  for (std::size_t i = 0; i < kCoverageRelationCount; ++i) {
    out += " " + std::string(to_string(static_cast<CoverageRelation>(i))) + "=" +
           std::to_string(coverage[i]);
  }
  out += "\n";
  return out;
}

}  // namespace flowdialog::evaluation
