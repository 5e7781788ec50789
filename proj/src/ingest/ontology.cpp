#include "t2iaudit/ontology.hpp"

#include <set>

#include "t2iaudit/error.hpp"
#include "t2iaudit/hash.hpp"

namespace t2iaudit {

using nlohmann::json;

namespace {

OntologyNode build(const json& j, std::size_t depth, std::vector<std::string>& ancestors,
                   std::set<std::string>& seen) {
  if (!j.is_object()) throw AuditError(ErrorCode::Parse, "ontology node must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "concept" && key != "children") throw AuditError(ErrorCode::Parse, "unknown ontology field: " + key);
  }
  auto c = j.find("concept");
  if (c == j.end() || !c->is_string() || c->get<std::string>().empty()) {
    throw AuditError(ErrorCode::Parse, "ontology node needs a non-empty string 'concept'");
  }
  OntologyNode node{c->get<std::string>(), depth, {}};
  for (const auto& a : ancestors) {
    if (a == node.name) throw AuditError(ErrorCode::InvalidArgument, "ontology cycle: '" + node.name + "' is its own descendant");
  }
  if (!seen.insert(node.name).second) {
    throw AuditError(ErrorCode::InvalidArgument, "duplicate ontology concept '" + node.name + "'");
  }
  if (auto ch = j.find("children"); ch != j.end()) {
    if (!ch->is_array()) throw AuditError(ErrorCode::Parse, "'children' must be an array");
    ancestors.push_back(node.name);
    for (const auto& child : *ch) node.children.push_back(build(child, depth + 1, ancestors, seen));
    ancestors.pop_back();
  }
  return node;
}

void walk(const OntologyNode& n, std::vector<const OntologyNode*>& out) {
  out.push_back(&n);
  for (const auto& c : n.children) walk(c, out);
}

}  // namespace

OntologyNode ontology_from_json(const json& j) {
  std::vector<std::string> ancestors;
  std::set<std::string> seen;
  return build(j, 0, ancestors, seen);
}

OntologyNode load_ontology(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw AuditError(ErrorCode::Parse, "cannot parse ontology " + path.string() + ": " + e.what());
  }
  return ontology_from_json(j);
}

std::vector<const OntologyNode*> preorder(const OntologyNode& root) {
  std::vector<const OntologyNode*> out;
  walk(root, out);
  return out;
}

}  // namespace t2iaudit
