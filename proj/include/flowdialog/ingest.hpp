#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/flowgraph.hpp"

namespace flowdialog::ingest {

/// On-disk edge list: {id, root, nodes:[{id, text, kind?}], edges:[{src, dst, cond}]}.
/// Node text is carried verbatim.
struct EdgeListDocument {
  FlowchartData data;

  static EdgeListDocument from_json(const nlohmann::json& j);  // throws SchemaError
  nlohmann::json to_json() const;
};

Flowchart load_edge_list(const EdgeListDocument& doc);
EdgeListDocument serialize_edge_list(const Flowchart& fc);

/// Parses the supported activity-diagram subset: @startuml/@enduml, start,
/// stop/end, `:activity;`, if/elseif/else/endif, repeat/repeat while.
/// Throws SyntaxError or UnsupportedConstructError with 1-based positions and
/// ValidationError if the resulting graph is invalid.
Flowchart parse_plantuml(std::string_view source, std::string flowchart_id);

/// Loads `.json` edge lists or `.puml`/`.plantuml` diagrams. The file stem is
/// the flowchart id for PlantUML.
Flowchart load_flowchart_file(const std::filesystem::path& path);

/// Every flowchart file in a directory, sorted by file name.
std::vector<Flowchart> load_flowchart_dir(const std::filesystem::path& dir);

struct GroundTruthPath {
  NodePath nodes;
  std::vector<std::string> attributes;  // node text along the path
  std::vector<std::string> conditions;  // traversed edge conditions, size nodes-1
};

/// Paths from enumerate_paths with the text the simulator is prompted with.
std::vector<GroundTruthPath> ground_truth_paths(const Flowchart& fc, int revisit_bound);

/// Same as above for a single node sequence; edges are looked up in
/// declaration order when a pair is joined by more than one edge.
GroundTruthPath describe_path(const Flowchart& fc, const NodePath& nodes);

/// Structure-and-attribute equality under the identity node mapping,
/// including edge declaration order.
bool isomorphic(const Flowchart& a, const Flowchart& b);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace flowdialog::ingest
