#include "random_flowchart.hpp"

#include <random>
#include <set>

namespace testsupport {

using flowdialog::Edge;
using flowdialog::FlowchartData;

FlowchartData random_flowchart(std::uint64_t seed, const RandomFlowchartOptions& opts) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int n = uniform(opts.min_nodes, opts.max_nodes);

  FlowchartData d;
  d.id = "random_" + std::to_string(seed);
  for (int i = 0; i < n; ++i) {
    d.nodes.push_back({"v" + std::to_string(i), "step " + std::to_string(i) + " text", std::nullopt});
  }
  d.root = "v0";

  // Node n-1 is always terminal; others are terminal with probability 1/4
  // (never the root when there is more than one node).
  std::vector<bool> terminal(n, false);
  terminal[n - 1] = true;
  for (int i = 1; i < n - 1; ++i) terminal[i] = uniform(0, 3) == 0;

  std::vector<std::set<int>> targets(n);
  auto add = [&](int from, int to) {
    if (from == to || targets[from].count(to)) return;
    targets[from].insert(to);
    const std::string cond = "c" + std::to_string(targets[from].size() - 1);
    d.edges.push_back(Edge{d.nodes[from].id, d.nodes[to].id, cond});
  };
  for (int j = 1; j < n; ++j) {
    std::vector<int> parents;
    for (int i = 0; i < j; ++i) {
      if (!terminal[i]) parents.push_back(i);
    }
    add(parents[static_cast<std::size_t>(uniform(0, static_cast<int>(parents.size()) - 1))], j);
  }
  for (int i = 0; i < n - 1; ++i) {
    if (terminal[i]) continue;
    const int extra = uniform(0, opts.max_out_degree - 1);
    for (int k = 0; k < extra && static_cast<int>(targets[i].size()) < opts.max_out_degree; ++k) {
      add(i, uniform(i + 1, n - 1));
    }
    if (opts.back_edge_probability > 0 && i > 0 &&
        std::bernoulli_distribution(opts.back_edge_probability)(rng) &&
        static_cast<int>(targets[i].size()) < opts.max_out_degree) {
      add(i, uniform(0, i - 1));
    }
  }
  // A non-terminal whose only parent edges were skipped still needs an exit.
  for (int i = 0; i < n - 1; ++i) {
    if (!terminal[i] && targets[i].empty()) add(i, n - 1);
  }
  return d;
}

}  // namespace testsupport
