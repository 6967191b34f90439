#include "hpgkit/ast_io.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "hpgkit/error.hpp"

namespace hpgkit {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "hpgkit-ast";
constexpr int kVersion = 1;

json node_to_json(const TypedAstNode& n) {
  json j;
  j["node_type"] = n.node_type;
  j["value"] = n.value;
  if (n.span.known()) {
    j["span"] = {n.span.start.line, n.span.start.col, n.span.end.line, n.span.end.col};
  }
  json children = json::array();
  for (const auto& c : n.children) children.push_back({{"label", c.label}, {"node", node_to_json(c.node)}});
  j["children"] = std::move(children);
  return j;
}

[[noreturn]] void malformed(const std::string& path, const std::string& what) {
  throw Error("malformed AST document at " + path + ": " + what);
}

TypedAstNode node_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) malformed(path, "node is not an object");
  TypedAstNode n;
  auto type = j.find("node_type");
  auto value = j.find("value");
  if (type == j.end() || !type->is_string()) malformed(path, "missing string 'node_type'");
  if (value == j.end() || !value->is_string()) malformed(path, "missing string 'value'");
  n.node_type = type->get<std::string>();
  n.value = value->get<std::string>();
  if (n.node_type.empty()) malformed(path, "empty 'node_type'");
  if (auto span = j.find("span"); span != j.end()) {
    if (!span->is_array() || span->size() != 4) malformed(path, "'span' must be [line, col, end_line, end_col]");
    for (const auto& v : *span) {
      if (!v.is_number_integer()) malformed(path, "'span' entries must be integers");
    }
    n.span = {{(*span)[0].get<int>(), (*span)[1].get<int>()}, {(*span)[2].get<int>(), (*span)[3].get<int>()}};
  }
  if (auto children = j.find("children"); children != j.end()) {
    if (!children->is_array()) malformed(path, "'children' must be an array");
    std::size_t i = 0;
    for (const auto& c : *children) {
      const std::string cpath = path + ".children[" + std::to_string(i++) + "]";
      if (!c.is_object()) malformed(cpath, "child is not an object");
      auto label = c.find("label");
      auto node = c.find("node");
      if (label == c.end() || !label->is_string() || label->get<std::string>().empty())
        malformed(cpath, "missing nonempty string 'label'");
      if (node == c.end()) malformed(cpath, "missing 'node'");
      n.children.push_back({label->get<std::string>(), node_from_json(*node, cpath + ".node")});
    }
  }
  return n;
}

}  // namespace

json ast_to_json(const TypedAstNode& root, const std::vector<std::string>& primitive_types) {
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  if (!primitive_types.empty()) doc["primitive_types"] = primitive_types;
  doc["root"] = node_to_json(root);
  return doc;
}

std::string export_ast(const TypedAstNode& root, const std::vector<std::string>& primitive_types) {
  return ast_to_json(root, primitive_types).dump();
}

ExternalAst ast_from_json(const json& doc, const asdl::AsdlGrammar* grammar) {
  if (!doc.is_object()) malformed("$", "document is not an object");
  if (auto f = doc.find("format"); f != doc.end() && (!f->is_string() || f->get<std::string>() != kFormat))
    malformed("$", "unexpected 'format'");
  if (auto v = doc.find("version"); v != doc.end() && (!v->is_number_integer() || v->get<int>() != kVersion))
    malformed("$", "unsupported 'version'");
  auto root = doc.find("root");
  if (root == doc.end()) malformed("$", "missing 'root'");
  ExternalAst out;
  out.root = node_from_json(*root, "$.root");
  if (auto p = doc.find("primitive_types"); p != doc.end()) {
    if (!p->is_array()) malformed("$", "'primitive_types' must be an array");
    for (const auto& t : *p) {
      if (!t.is_string()) malformed("$", "'primitive_types' entries must be strings");
      out.primitive_types.push_back(t.get<std::string>());
    }
  }
  if (grammar != nullptr) {
    auto diags = validate_against_grammar(out.root, *grammar);
    if (!diags.empty()) {
      const auto& d = diags.front();
      throw Error("AST does not conform to grammar: " + d.message + " (" + std::to_string(diags.size()) +
                  " diagnostic" + (diags.size() == 1 ? "" : "s") + ")");
    }
    if (out.primitive_types.empty()) out.primitive_types = grammar->primitive_types;
  }
  return out;
}

ExternalAst ingest_external_ast(std::string_view document, const asdl::AsdlGrammar* grammar) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed AST document: ") + e.what());
  }
  return ast_from_json(doc, grammar);
}

asdl::TypeRegistries registries_from_ast(const ExternalAst& ast) { return registries_from_asts({&ast}); }

asdl::TypeRegistries registries_from_asts(const std::vector<const ExternalAst*>& asts) {
  std::vector<std::string> types;
  std::map<std::string, bool> only_leaves;
  std::vector<std::string> labels;
  std::set<std::string> seen_labels;
  std::set<std::string> declared;
  for (const ExternalAst* ast : asts) {
    std::vector<const TypedAstNode*> stack{&ast->root};
    while (!stack.empty()) {
      const TypedAstNode* n = stack.back();
      stack.pop_back();
      auto [it, inserted] = only_leaves.emplace(n->node_type, true);
      if (inserted) types.push_back(n->node_type);
      if (!n->children.empty()) it->second = false;
      for (const auto& c : n->children) {
        if (seen_labels.insert(c.label).second) labels.push_back(c.label);
      }
      for (auto c = n->children.rbegin(); c != n->children.rend(); ++c) stack.push_back(&c->node);
    }
    declared.insert(ast->primitive_types.begin(), ast->primitive_types.end());
  }
  for (const ExternalAst* ast : asts) {
    for (const auto& t : ast->primitive_types) {
      if (only_leaves.emplace(t, true).second) types.push_back(t);
    }
  }
  std::vector<bool> prim;
  for (const auto& t : types) prim.push_back(declared.empty() ? only_leaves[t] : declared.count(t) > 0);
  return asdl::TypeRegistries(std::move(types), std::move(prim), std::move(labels));
}

}  // namespace hpgkit
