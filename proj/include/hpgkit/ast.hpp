#pragma once

#include <string>
#include <vector>

#include "hpgkit/asdl.hpp"

namespace hpgkit {

struct SourcePos {
  int line = 0;
  int col = 0;

  friend bool operator==(const SourcePos&, const SourcePos&) = default;
  friend auto operator<=>(const SourcePos&, const SourcePos&) = default;
};

/// Half-open source range: `end` is the position just past the last character.
/// A default (all-zero) span means "unknown".
struct Span {
  SourcePos start;
  SourcePos end;

  bool known() const { return start.line > 0; }
  bool contains(const Span& other) const { return start <= other.start && other.end <= end; }

  friend bool operator==(const Span&, const Span&) = default;
};

struct AstChild;

/// A grammar-conformant AST node. Terminals carry a primitive node type and
/// the token text as value; non-terminals carry their composite type and the
/// constructor name.
struct TypedAstNode {
  std::string node_type;
  std::string value;
  std::vector<AstChild> children;
  Span span;

  bool is_leaf() const { return children.empty(); }
  std::size_t size() const;  // nodes in this subtree
};

struct AstChild {
  std::string label;
  TypedAstNode node;
};

bool operator==(const TypedAstNode& a, const TypedAstNode& b);
inline bool operator==(const AstChild& a, const AstChild& b) {
  return a.label == b.label && a.node == b.node;
}
/// Equality of node types, values and labels; spans are ignored.
bool structurally_equal(const TypedAstNode& a, const TypedAstNode& b);

/// Checks `ast` against the grammar: node types, constructor values, field
/// labels, field order and multiplicities. Empty result means valid.
std::vector<asdl::Diagnostic> validate_against_grammar(const TypedAstNode& ast,
                                                      const asdl::AsdlGrammar& grammar);

/// Indented human-readable dump, one node per line.
std::string dump_tree(const TypedAstNode& ast);

}  // namespace hpgkit
