#include <algorithm>
#include <fstream>
#include <sstream>

#include "flowdialog/ingest.hpp"
#include "flowdialog/text.hpp"

namespace flowdialog::ingest {

using nlohmann::json;

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw SchemaError(where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

EdgeListDocument EdgeListDocument::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("edge list: top level must be an object");
  EdgeListDocument doc;
  doc.data.id = require_string(j, "id", "edge list");
  doc.data.root = require_string(j, "root", "edge list");

  const auto nodes = j.find("nodes");
  const auto edges = j.find("edges");
  if (nodes == j.end() || !nodes->is_array()) throw SchemaError("edge list: 'nodes' must be an array");
  if (edges == j.end() || !edges->is_array()) throw SchemaError("edge list: 'edges' must be an array");

  for (std::size_t i = 0; i < nodes->size(); ++i) {
    const auto& n = (*nodes)[i];
    const std::string where = "nodes[" + std::to_string(i) + "]";
    if (!n.is_object()) throw SchemaError(where + ": must be an object");
    NodeSpec spec{require_string(n, "id", where), require_string(n, "text", where), std::nullopt};
    if (const auto k = n.find("kind"); k != n.end() && !k->is_null()) {
      if (!k->is_string()) throw SchemaError(where + ": 'kind' must be a string");
      spec.kind = parse_node_kind(k->get<std::string>());
      if (!spec.kind) throw SchemaError(where + ": unknown kind '" + k->get<std::string>() + "'");
    }
    doc.data.nodes.push_back(std::move(spec));
  }
  for (std::size_t i = 0; i < edges->size(); ++i) {
    const auto& e = (*edges)[i];
    const std::string where = "edges[" + std::to_string(i) + "]";
    if (!e.is_object()) throw SchemaError(where + ": must be an object");
    doc.data.edges.push_back(
        Edge{require_string(e, "src", where), require_string(e, "dst", where),
             require_string(e, "cond", where)});
  }
  return doc;
}

json EdgeListDocument::to_json() const {
  json nodes = json::array();
  for (const auto& n : data.nodes) {
    json jn = {{"id", n.id}, {"text", n.text}};
    if (n.kind) jn["kind"] = std::string(to_string(*n.kind));
    nodes.push_back(std::move(jn));
  }
  json edges = json::array();
  for (const auto& e : data.edges) {
    edges.push_back({{"src", e.source}, {"dst", e.target}, {"cond", e.condition}});
  }
  json j;
  j["id"] = data.id;
  j["root"] = data.root;
  j["nodes"] = std::move(nodes);
  j["edges"] = std::move(edges);
  return j;
}

Flowchart load_edge_list(const EdgeListDocument& doc) { return Flowchart::build(doc.data); }

EdgeListDocument serialize_edge_list(const Flowchart& fc) { return EdgeListDocument{fc.data()}; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Flowchart load_flowchart_file(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  const std::string body = read_text_file(path);
  if (ext == ".json") {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw SchemaError(path.string() + ": " + e.what());
    }
    return load_edge_list(EdgeListDocument::from_json(j));
  }
  if (ext == ".puml" || ext == ".plantuml" || ext == ".pu") {
    return parse_plantuml(body, path.stem().string());
  }
  throw SchemaError("unsupported flowchart file extension: " + path.string());
}

std::vector<Flowchart> load_flowchart_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".json" || ext == ".puml" || ext == ".plantuml" || ext == ".pu") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Flowchart> out;
  for (const auto& f : files) out.push_back(load_flowchart_file(f));
  return out;
}

GroundTruthPath describe_path(const Flowchart& fc, const NodePath& nodes) {
  if (nodes.empty()) throw PreconditionError("cannot describe an empty path");
  GroundTruthPath gt;
  gt.nodes = nodes;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    gt.attributes.push_back(fc.node_attr(nodes[i]));
    if (i + 1 == nodes.size()) break;
    const Edge* via = nullptr;
    for (const Edge* e : fc.out_edges(nodes[i])) {
      if (e->target == nodes[i + 1]) {
        via = e;
        break;
      }
    }
    if (!via) {
      throw PreconditionError("'" + nodes[i] + "' -> '" + nodes[i + 1] + "' is not an edge");
    }
    gt.conditions.push_back(via->condition);
  }
  return gt;
}

std::vector<GroundTruthPath> ground_truth_paths(const Flowchart& fc, int revisit_bound) {
  std::vector<GroundTruthPath> out;
  for (const auto& p : enumerate_paths(fc, revisit_bound)) out.push_back(describe_path(fc, p));
  return out;
}

bool isomorphic(const Flowchart& a, const Flowchart& b) {
  if (a.root() != b.root() || a.nodes().size() != b.nodes().size() ||
      a.edges().size() != b.edges().size()) {
    return false;
  }
  for (const auto& n : a.nodes()) {
    if (!b.contains(n.id)) return false;
    const Node& m = b.node(n.id);
    if (m.text != n.text || m.kind != n.kind) return false;
  }
  for (const auto& n : a.nodes()) {
    const auto ea = a.out_edges(n.id);
    const auto eb = b.out_edges(n.id);
    if (ea.size() != eb.size()) return false;
    for (std::size_t i = 0; i < ea.size(); ++i) {
      if (ea[i]->target != eb[i]->target || ea[i]->condition != eb[i]->condition) return false;
    }
  }
  return true;
}

}  // namespace flowdialog::ingest
