#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace t2iaudit {

struct OntologyNode {
  std::string name;
  std::size_t depth = 0;
  std::vector<OntologyNode> children;
};

// Nested {"concept": ..., "children": [...]}; rejects cycles and duplicate concepts.
OntologyNode ontology_from_json(const nlohmann::json& j);
OntologyNode load_ontology(const std::filesystem::path& path);

// Depth-first preorder.
std::vector<const OntologyNode*> preorder(const OntologyNode& root);

}  // namespace t2iaudit
