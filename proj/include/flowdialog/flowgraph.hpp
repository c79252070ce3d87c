#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flowdialog/error.hpp"

namespace flowdialog {

using NodeId = std::string;
using NodePath = std::vector<NodeId>;

enum class NodeKind { decision, operation, terminal };

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view s);

/// Kind implied by an out-degree: 0 terminal, 1 operation, otherwise decision.
NodeKind kind_for_out_degree(std::size_t out_degree);

struct NodeSpec {
  NodeId id;
  std::string text;
  std::optional<NodeKind> kind;  // inferred from out-degree when absent
};

struct Edge {
  NodeId source;
  NodeId target;
  std::string condition;
};

/// Unchecked flowchart description, as read from a document. Turned into a
/// Flowchart by Flowchart::build once validate() reports nothing.
struct FlowchartData {
  std::string id;
  NodeId root;
  std::vector<NodeSpec> nodes;
  std::vector<Edge> edges;  // declaration order
};

enum class ViolationKind {
  empty_node_id,
  duplicate_node,
  empty_attribute,
  missing_root,
  dangling_edge,
  empty_condition,
  duplicate_condition,
  kind_mismatch,
  unreachable_node,
  missing_terminal,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string subject;  // node id or "src->dst"
  std::string detail;

  std::string message() const;
  bool operator==(const Violation&) const = default;
};

/// Every invariant violation in declaration order; empty means valid.
std::vector<Violation> validate(const FlowchartData& data);

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct Node {
  NodeId id;
  std::string text;
  NodeKind kind;
};

// Immutable text-attributed directed graph. All queries are const and safe to
// share across threads.
class Flowchart {
 public:
  /// Throws ValidationError listing every violation.
  static Flowchart build(FlowchartData data);

  const std::string& id() const noexcept { return id_; }
  const NodeId& root() const noexcept { return root_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  bool contains(std::string_view node) const;
  const Node& node(std::string_view node) const;

  /// Textual attribute of a node, exactly as stored.
  const std::string& node_attr(std::string_view node) const;

  /// Conditions of the node's outgoing edges in declaration order.
  std::vector<std::string> out_edge_attrs(std::string_view node) const;

  /// Target of the unique outgoing edge whose normalized condition equals the
  /// normalized `condition`.
  const NodeId& next_hop(std::string_view node, std::string_view condition) const;

  bool terminal_check(std::string_view node) const;

  bool has_edge(std::string_view source, std::string_view target) const;

  /// Outgoing edges of `node` in declaration order.
  std::vector<const Edge*> out_edges(std::string_view node) const;

  /// Declared kinds are kept so serialization can reproduce them.
  FlowchartData data() const;

 private:
  Flowchart() = default;
  std::size_t index_of(std::string_view node) const;

  std::string id_;
  NodeId root_;
  std::vector<Node> nodes_;
  std::vector<bool> kind_declared_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> out_;  // edge indices per node
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::size_t kDefaultPathCap = 10'000;

/// All root-to-terminal paths visiting no node more than revisit_bound + 1
/// times, in depth-first declaration order.
std::vector<NodePath> enumerate_paths(const Flowchart& fc, int revisit_bound,
                                      std::size_t cap = kDefaultPathCap);

/// Longest root-to-terminal simple path, counted in edges. Falls back to the
/// node count when simple paths exceed the enumeration cap.
int depth(const Flowchart& fc);

/// Breadth-first shortest path (declaration-order tie break), or nullopt.
std::optional<NodePath> shortest_path(const Flowchart& fc, std::string_view from,
                                      std::string_view to);

/// True when every consecutive pair of `path` is an edge of `fc`.
bool is_edge_consistent(const Flowchart& fc, const NodePath& path);

}  // namespace flowdialog
