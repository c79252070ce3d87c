#include "flowdialog/flowgraph.hpp"

#include <deque>
#include <functional>
#include <set>
#include <unordered_set>

#include "flowdialog/text.hpp"

namespace flowdialog {

NoMatchingEdgeError::NoMatchingEdgeError(const std::string& node, const std::string& condition,
                                         std::vector<std::string> available)
    : Error("no outgoing edge of '" + node + "' matches condition '" + condition +
            "'; available: [" + text::join(available, ", ") + "]"),
      available_(std::move(available)) {}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::decision: return "decision";
    case NodeKind::operation: return "operation";
    case NodeKind::terminal: return "terminal";
  }
  return "unknown";
}

std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "decision") return NodeKind::decision;
  if (s == "operation") return NodeKind::operation;
  if (s == "terminal") return NodeKind::terminal;
  return std::nullopt;
}

NodeKind kind_for_out_degree(std::size_t out_degree) {
  if (out_degree == 0) return NodeKind::terminal;
  if (out_degree == 1) return NodeKind::operation;
  return NodeKind::decision;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::empty_node_id: return "empty-node-id";
    case ViolationKind::duplicate_node: return "duplicate-node";
    case ViolationKind::empty_attribute: return "empty-attribute";
    case ViolationKind::missing_root: return "missing-root";
    case ViolationKind::dangling_edge: return "dangling-edge";
    case ViolationKind::empty_condition: return "empty-condition";
    case ViolationKind::duplicate_condition: return "duplicate-condition";
    case ViolationKind::kind_mismatch: return "kind-mismatch";
    case ViolationKind::unreachable_node: return "unreachable-node";
    case ViolationKind::missing_terminal: return "missing-terminal";
  }
  return "unknown";
}

std::string Violation::message() const {
  std::string m(to_string(kind));
  m += " [" + subject + "]";
  if (!detail.empty()) m += ": " + detail;
  return m;
}

namespace {

std::string summarize(const std::vector<Violation>& violations) {
  std::string m = "flowchart is invalid:";
  for (const auto& v : violations) m += "\n  " + v.message();
  return m;
}

bool kind_matches_degree(NodeKind kind, std::size_t degree) {
  switch (kind) {
    case NodeKind::terminal: return degree == 0;
    case NodeKind::operation: return degree == 1;
    case NodeKind::decision: return degree >= 2;
  }
  return false;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : Error(summarize(violations)), violations_(std::move(violations)) {}

std::vector<Violation> validate(const FlowchartData& data) {
  std::vector<Violation> out;
  std::unordered_map<std::string, std::size_t> index;

  for (std::size_t i = 0; i < data.nodes.size(); ++i) {
    const auto& n = data.nodes[i];
    if (n.id.empty()) {
      out.push_back({ViolationKind::empty_node_id, "#" + std::to_string(i), ""});
      continue;
    }
    if (!index.emplace(n.id, i).second) {
      out.push_back({ViolationKind::duplicate_node, n.id, "node id declared more than once"});
    }
    if (text::trim(n.text).empty()) {
      out.push_back({ViolationKind::empty_attribute, n.id, "node text is empty"});
    }
  }

  const bool root_ok = index.count(data.root) > 0;
  if (!root_ok) {
    out.push_back({ViolationKind::missing_root, data.root, "root is not a declared node"});
  }

  std::vector<std::vector<std::size_t>> adj(data.nodes.size());
  std::unordered_map<std::string, std::set<std::string>> seen_conditions;
  for (const auto& e : data.edges) {
    const std::string subject = e.source + "->" + e.target;
    const auto src = index.find(e.source);
    const auto dst = index.find(e.target);
    if (src == index.end() || dst == index.end()) {
      std::string missing = src == index.end() ? e.source : e.target;
      out.push_back({ViolationKind::dangling_edge, subject, "unknown node '" + missing + "'"});
    }
    const std::string cond = text::normalize(e.condition);
    if (cond.empty()) {
      out.push_back({ViolationKind::empty_condition, subject, "edge condition is empty"});
    } else if (!seen_conditions[e.source].insert(cond).second) {
      out.push_back({ViolationKind::duplicate_condition, subject,
                     "condition '" + cond + "' repeated on source '" + e.source + "'"});
    }
    if (src != index.end() && dst != index.end()) adj[src->second].push_back(dst->second);
  }

  for (const auto& n : data.nodes) {
    if (!n.kind || n.id.empty()) continue;
    const auto it = index.find(n.id);
    const std::size_t degree = adj[it->second].size();
    if (!kind_matches_degree(*n.kind, degree)) {
      out.push_back({ViolationKind::kind_mismatch, n.id,
                     "declared " + std::string(to_string(*n.kind)) + " but out-degree is " +
                         std::to_string(degree)});
    }
  }

  if (root_ok) {
    std::vector<bool> seen(data.nodes.size(), false);
    std::deque<std::size_t> queue{index.at(data.root)};
    seen[queue.front()] = true;
    bool terminal_reached = false;
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      if (adj[cur].empty()) terminal_reached = true;
      for (std::size_t nxt : adj[cur]) {
        if (!seen[nxt]) {
          seen[nxt] = true;
          queue.push_back(nxt);
        }
      }
    }
    for (std::size_t i = 0; i < data.nodes.size(); ++i) {
      const auto& id = data.nodes[i].id;
      if (id.empty() || index.at(id) != i) continue;
      if (!seen[i]) {
        out.push_back({ViolationKind::unreachable_node, id, "not reachable from root"});
      }
    }
    if (!terminal_reached) {
      out.push_back({ViolationKind::missing_terminal, data.root,
                     "no terminal node is reachable from root"});
    }
  }
  return out;
}

Flowchart Flowchart::build(FlowchartData data) {
  auto violations = validate(data);
  if (!violations.empty()) throw ValidationError(std::move(violations));

  Flowchart fc;
  fc.id_ = std::move(data.id);
  fc.root_ = std::move(data.root);
  fc.nodes_.reserve(data.nodes.size());
  fc.out_.resize(data.nodes.size());
  for (std::size_t i = 0; i < data.nodes.size(); ++i) {
    fc.index_.emplace(data.nodes[i].id, i);
  }
  fc.edges_ = std::move(data.edges);
  for (std::size_t e = 0; e < fc.edges_.size(); ++e) {
    fc.out_[fc.index_.at(fc.edges_[e].source)].push_back(e);
  }
  for (std::size_t i = 0; i < data.nodes.size(); ++i) {
    auto& spec = data.nodes[i];
    const NodeKind kind = spec.kind.value_or(kind_for_out_degree(fc.out_[i].size()));
    fc.kind_declared_.push_back(spec.kind.has_value());
    fc.nodes_.push_back(Node{std::move(spec.id), std::move(spec.text), kind});
  }
  return fc;
}

std::size_t Flowchart::index_of(std::string_view node) const {
  const auto it = index_.find(std::string(node));
  if (it == index_.end()) throw UnknownNodeError(std::string(node));
  return it->second;
}

bool Flowchart::contains(std::string_view node) const {
  return index_.count(std::string(node)) > 0;
}

const Node& Flowchart::node(std::string_view node) const { return nodes_[index_of(node)]; }

const std::string& Flowchart::node_attr(std::string_view node) const {
  return nodes_[index_of(node)].text;
}

std::vector<std::string> Flowchart::out_edge_attrs(std::string_view node) const {
  std::vector<std::string> conds;
  for (std::size_t e : out_[index_of(node)]) conds.push_back(edges_[e].condition);
  return conds;
}

const NodeId& Flowchart::next_hop(std::string_view node, std::string_view condition) const {
  const std::string wanted = text::normalize(condition);
  for (std::size_t e : out_[index_of(node)]) {
    if (text::normalize(edges_[e].condition) == wanted) return edges_[e].target;
  }
  throw NoMatchingEdgeError(std::string(node), std::string(condition), out_edge_attrs(node));
}

bool Flowchart::terminal_check(std::string_view node) const {
  return out_[index_of(node)].empty();
}

bool Flowchart::has_edge(std::string_view source, std::string_view target) const {
  if (!contains(source)) return false;
  for (std::size_t e : out_[index_of(source)]) {
    if (edges_[e].target == target) return true;
  }
  return false;
}

std::vector<const Edge*> Flowchart::out_edges(std::string_view node) const {
  std::vector<const Edge*> out;
  for (std::size_t e : out_[index_of(node)]) out.push_back(&edges_[e]);
  return out;
}

FlowchartData Flowchart::data() const {
  FlowchartData d;
  d.id = id_;
  d.root = root_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    d.nodes.push_back(
        NodeSpec{n.id, n.text, kind_declared_[i] ? std::optional<NodeKind>(n.kind) : std::nullopt});
  }
  d.edges = edges_;
  return d;
}

std::vector<NodePath> enumerate_paths(const Flowchart& fc, int revisit_bound, std::size_t cap) {
  if (revisit_bound < 0) throw PreconditionError("revisit bound must be >= 0");
  std::vector<NodePath> paths;
  NodePath current;
  std::unordered_map<std::string, int> visits;
  const int max_visits = revisit_bound + 1;

  std::function<void(const NodeId&)> walk = [&](const NodeId& node) {
    current.push_back(node);
    ++visits[node];
    const auto edges = fc.out_edges(node);
    if (edges.empty()) {
      if (paths.size() >= cap) {
        throw PathExplosionError("more than " + std::to_string(cap) + " paths in flowchart '" +
                                 fc.id() + "'");
      }
      paths.push_back(current);
    }
    for (const Edge* e : edges) {
      if (visits[e->target] < max_visits) walk(e->target);
    }
    --visits[node];
    current.pop_back();
  };
  walk(fc.root());
  return paths;
}

int depth(const Flowchart& fc) {
  try {
    int best = 0;
    for (const auto& p : enumerate_paths(fc, 0)) {
      best = std::max(best, static_cast<int>(p.size()) - 1);
    }
    return best;
  } catch (const PathExplosionError&) {
    return static_cast<int>(fc.nodes().size());
  }
}

std::optional<NodePath> shortest_path(const Flowchart& fc, std::string_view from,
                                      std::string_view to) {
  if (!fc.contains(from) || !fc.contains(to)) return std::nullopt;
  std::unordered_map<std::string, std::string> parent;
  std::unordered_set<std::string> seen{std::string(from)};
  std::deque<std::string> queue{std::string(from)};
  while (!queue.empty()) {
    const std::string cur = queue.front();
    queue.pop_front();
    if (cur == to) {
      NodePath path{cur};
      while (path.back() != from) path.push_back(parent.at(path.back()));
      return NodePath(path.rbegin(), path.rend());
    }
    for (const Edge* e : fc.out_edges(cur)) {
      if (seen.insert(e->target).second) {
        parent[e->target] = cur;
        queue.push_back(e->target);
      }
    }
  }
  return std::nullopt;
}

bool is_edge_consistent(const Flowchart& fc, const NodePath& path) {
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!fc.has_edge(path[i], path[i + 1])) return false;
  }
  return true;
}

}  // namespace flowdialog
