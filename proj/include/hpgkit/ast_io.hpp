#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hpgkit/asdl.hpp"
#include "hpgkit/ast.hpp"
#include "json.hpp"

namespace hpgkit {

/// A tree read from the external AST format (docs/ast-format.md).
struct ExternalAst {
  TypedAstNode root;
  // Types the document declares as terminal types; empty when undeclared.
  std::vector<std::string> primitive_types;
};

/// Serializes a tree as a single-line external AST document.
std::string export_ast(const TypedAstNode& root, const std::vector<std::string>& primitive_types = {});

/// Parses one external AST document. When `grammar` is given the tree is also
/// validated against it; the first diagnostic is raised as an Error.
ExternalAst ingest_external_ast(std::string_view document,
                                const asdl::AsdlGrammar* grammar = nullptr);

/// JSON-value forms of the same document, used when a tree is embedded in a
/// corpus record.
nlohmann::json ast_to_json(const TypedAstNode& root, const std::vector<std::string>& primitive_types = {});
ExternalAst ast_from_json(const nlohmann::json& document, const asdl::AsdlGrammar* grammar = nullptr);

/// Registries for a grammar-less tree: node types and field labels in
/// first-appearance (pre-order) order. Terminal types are the declared
/// primitive types, or every type that only ever appears on leaves.
asdl::TypeRegistries registries_from_ast(const ExternalAst& ast);

/// The same over several trees, visited in order.
asdl::TypeRegistries registries_from_asts(const std::vector<const ExternalAst*>& asts);

}  // namespace hpgkit
