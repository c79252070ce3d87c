#include <doctest.h>

#include <random>

#include "flowdialog/evaluation.hpp"
#include "oracles.hpp"

using namespace flowdialog;
using namespace flowdialog::evaluation;
using testsupport::Fraction;

namespace {

EpisodeRecord rec(std::string id, NodePath pred, NodePath gt, int turns, int budget, std::vector<int> l,
                  bool root) {
  EpisodeRecord r;
  r.sample_id = std::move(id);
  r.predicted = std::move(pred);
  r.ground_truth = std::move(gt);
  r.turns = turns;
  r.budget = budget;
  r.transitions = std::move(l);
  r.gt_initial_is_root = root;
  return r;
}

// Eight records covering every coverage relation and both splits.
std::vector<EpisodeRecord> eight() {
  return {
      rec("r1", {"a", "b", "c"}, {"a", "b", "c"}, 3, 6, {1, 1}, true),
      rec("r2", {"a", "b", "x", "c"}, {"a", "b", "c"}, 5, 6, {1, 3, 1}, true),
      rec("r3", {"a", "b"}, {"b", "c"}, 4, 4, {1}, false),
      rec("r4", {"b", "c"}, {"b", "c"}, 2, 4, {1}, false),
      rec("r5", {"a"}, {"a", "b"}, 7, 6, {}, true),
      rec("r6", {"z", "y", "w"}, {"a", "b"}, 3, 4, {1, 3}, true),
      rec("r7", {"c", "d"}, {"c", "d"}, 9, 8, {4}, false),
      rec("r8", {"a", "b", "c", "d"}, {"a", "c", "d"}, 4, 6, {1, 1, 2}, true),
  };
}

// Per-record redundancy fraction sum(L-1)/sum(L).
Fraction redundancy(const std::vector<int>& l) {
  std::int64_t red = 0, tot = 0;
  for (int x : l) {
    red += x - 1;
    tot += x;
  }
  return {red, tot};
}

}  // namespace

TEST_CASE("metrics on eight hand-built records") {
  const auto rs = eight();
  const auto i = inga(rs);
  CHECK(i.overall == doctest::Approx(6.0 / 8));
  CHECK(i.root_init == doctest::Approx(4.0 / 5));
  CHECK(i.middle_init == doctest::Approx(2.0 / 3));
  CHECK(i.root_count == 5);
  CHECK(i.middle_count == 3);
  CHECK(tnga(rs) == doctest::Approx(5.0 / 8));
  CHECK(pca(rs) == doctest::Approx(5.0 / 8));
  CHECK(tr(rs) == doctest::Approx(2.0 / 8));

  Fraction sum{0, 1};
  std::int64_t used = 0;
  for (const auto& r : rs) {
    if (r.transitions.empty()) continue;
    sum = testsupport::add(sum, redundancy(r.transitions));
    ++used;
  }
  const Fraction expected = testsupport::divide(sum, used);
  CHECK(expected.num == 19);
  CHECK(expected.den == 70);
  const auto n = nsr(rs);
  REQUIRE(n.value);
  CHECK(*n.value == doctest::Approx(expected.value()).epsilon(1e-12));
  CHECK(n.excluded == 1);

  const auto h = coverage_histogram(rs);
  CHECK(h == CoverageHistogram{3, 2, 1, 1, 1});
}

TEST_CASE("a record with transition lengths 1 and 3 is half redundant") {
  const auto n = nsr({rec("x", {"a", "b", "c"}, {"a", "b", "c"}, 4, 8, {1, 3}, true)});
  CHECK(*n.value == doctest::Approx(0.5));
}

TEST_CASE("NSR is undefined when every record is excluded") {
  const auto n = nsr({rec("x", {"a"}, {"a"}, 1, 2, {}, true)});
  CHECK_FALSE(n.value);
  CHECK(n.excluded == 1);
}

TEST_CASE("INGA split is null when empty") {
  const auto i = inga({rec("x", {"a"}, {"a"}, 1, 2, {}, true)});
  CHECK(i.root_init == doctest::Approx(1.0));
  CHECK_FALSE(i.middle_init);
}

TEST_CASE("metric input validation") {
  CHECK_THROWS_AS(inga({}), EmptyInputError);
  CHECK_THROWS_AS(tnga({}), EmptyInputError);
  CHECK_THROWS_AS(pca({}), EmptyInputError);
  CHECK_THROWS_AS(nsr({}), EmptyInputError);
  CHECK_THROWS_AS(tr({}), EmptyInputError);
  CHECK_THROWS_AS(tr({rec("x", {"a"}, {"a"}, 1, 0, {}, true)}), PreconditionError);
  CHECK_THROWS_AS(nsr({rec("x", {"a"}, {"a"}, 1, 2, {0}, true)}), PreconditionError);
  CHECK_THROWS_AS(pca({rec("x", {}, {"a"}, 1, 2, {}, true)}), PreconditionError);
  CHECK_THROWS_AS(inga({rec("x", {"a"}, {"a"}, 0, 2, {}, true)}), PreconditionError);
  CHECK_THROWS_AS(classify_coverage({}, {"a"}), PreconditionError);
}

TEST_CASE("subsequence matches the LCS oracle on random sequences") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> len(0, 9), sym(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    NodePath a, b;
    for (int k = len(rng); k > 0; --k) a.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    for (int k = len(rng); k > 0; --k) b.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
    CHECK(is_subsequence(a, b) == testsupport::dp_is_subsequence(a, b));
  }
}

TEST_CASE("property: metrics stay in [0, 1] and coverage sums to N") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(1, 6), sym(0, 4), turns(1, 12), lval(1, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EpisodeRecord> rs;
    const int n = 1 + static_cast<int>(rng() % 10);
    for (int k = 0; k < n; ++k) {
      NodePath p, g;
      for (int m = len(rng); m > 0; --m) p.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
      for (int m = len(rng); m > 0; --m) g.push_back(std::string(1, static_cast<char>('a' + sym(rng))));
      std::vector<int> l;
      for (std::size_t m = 1; m < p.size(); ++m) l.push_back(lval(rng));
      rs.push_back(rec("r", p, g, turns(rng), turns(rng), l, rng() % 2 == 0));
    }
    const auto m = evaluate(rs);
    for (double v : {m.inga.overall, m.tnga, m.pca, m.tr}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (m.nsr.value) {
      CHECK(*m.nsr.value >= 0.0);
      CHECK(*m.nsr.value < 1.0);
    }
    std::size_t total = 0;
    for (auto c : m.coverage) total += c;
    CHECK(total == rs.size());
    CHECK(m.inga.root_count + m.inga.middle_count == rs.size());
    // Exact matches imply a hit on every per-record metric.
    for (const auto& r : rs) {
      if (classify_coverage(r.ground_truth, r.predicted) == CoverageRelation::exact_match) {
        CHECK(is_subsequence(r.ground_truth, r.predicted));
      }
    }
  }
}

TEST_CASE("report round-trips through JSON and renders a table") {
  const auto m = evaluate(eight());
  const auto back = MetricsReport::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.n == 8);
  CHECK(back.inga.overall == m.inga.overall);
  CHECK(back.inga.middle_init == m.inga.middle_init);
  CHECK(back.nsr.value == m.nsr.value);
  CHECK(back.coverage == m.coverage);
  CHECK(m.to_json()["coverage"]["partial_overlap"] == 1);
  const auto table = m.to_table("FlowAgent");
  CHECK(table.find("Root-init") != std::string::npos);
  CHECK(table.find("75.00") != std::string::npos);
  CHECK(table.find("27.14") != std::string::npos);
  CHECK(table.find("N=8 (root-init 5, middle-init 3); NSR excluded 1") != std::string::npos);
  CHECK_THROWS_AS(MetricsReport::from_json(nlohmann::json{{"n", 1}}), SchemaError);
}
