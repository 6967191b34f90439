#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hpgkit::asdl {

enum class Qualifier { Single, Optional, Sequence };

struct Location {
  int line = 0;
  int col = 0;
};

struct Field {
  std::string type_name;
  Qualifier qualifier = Qualifier::Single;
  std::string label;
  Location loc;
};

struct Constructor {
  std::string name;
  std::string owner_type;
  std::vector<Field> fields;
  // Anonymous product form `T = (fields)`; the constructor is named after T.
  bool is_product = false;
  Location loc;

  const Field* find_field(std::string_view label) const;
};

struct CompositeType {
  std::string name;
  std::vector<Constructor> constructors;
  Location loc;
};

/// In-memory ASDL grammar. Composite types keep declaration order, which
/// fixes the ordering of every derived registry.
struct AsdlGrammar {
  std::vector<CompositeType> composite_types;
  std::vector<std::string> primitive_types;
  // `%union constant = int | string`: a field of primitive type `constant`
  // accepts terminals typed `int` or `string`.
  std::map<std::string, std::vector<std::string>> unions;

  const CompositeType* find_composite(std::string_view name) const;
  const Constructor* find_constructor(std::string_view name) const;
  bool is_primitive(std::string_view name) const;
  bool is_composite(std::string_view name) const;
  // True when a terminal of `terminal_type` may fill a field typed `field_type`.
  bool primitive_accepts(std::string_view field_type, std::string_view terminal_type) const;
  std::size_t constructor_count() const;
};

/// Structural equality; source locations are ignored.
bool structurally_equal(const AsdlGrammar& a, const AsdlGrammar& b);

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  std::string message;
  Location loc;
};

/// Parses grammar text. Throws SyntaxError for lexical/syntactic problems and
/// for the first invariant violation reported by validate().
AsdlGrammar parse_asdl(std::string_view text);

/// Checks grammar invariants; an empty result means the grammar is valid.
std::vector<Diagnostic> validate(const AsdlGrammar& grammar);

/// Renders a grammar back to text accepted by parse_asdl.
std::string to_text(const AsdlGrammar& grammar);

/// Dense id registries for node types and edge types.
///
/// Forward edge types are the distinct field labels (first-appearance order)
/// followed by NextSib, NextToken and subtoken_of. Reverse types follow, so the
/// reverse of forward id f is f + forward_count().
class TypeRegistries {
 public:
  TypeRegistries() = default;
  TypeRegistries(std::vector<std::string> node_types, std::vector<bool> primitive_flags,
                 std::vector<std::string> field_labels);

  const std::vector<std::string>& node_types() const { return node_types_; }
  const std::vector<std::string>& edge_types() const { return edge_types_; }

  std::size_t node_type_count() const { return node_types_.size(); }
  std::size_t edge_type_count() const { return edge_types_.size(); }
  std::size_t forward_count() const { return edge_types_.size() / 2; }
  // Number of forward types that come from grammar field labels.
  std::size_t field_label_count() const { return forward_count() - 3; }

  std::optional<int> node_type_id(std::string_view name) const;
  std::optional<int> edge_type_id(std::string_view name) const;

  bool is_primitive(int node_type) const { return primitive_[static_cast<std::size_t>(node_type)]; }
  bool is_forward(int edge_type) const { return static_cast<std::size_t>(edge_type) < forward_count(); }
  bool is_field_edge(int edge_type) const {
    return static_cast<std::size_t>(edge_type) < field_label_count();
  }
  int reverse(int edge_type) const;

  int subtoken_type() const { return static_cast<int>(node_types_.size()) - 1; }
  int next_sib() const { return static_cast<int>(field_label_count()); }
  int next_token() const { return next_sib() + 1; }
  int subtoken_of() const { return next_sib() + 2; }

  friend bool operator==(const TypeRegistries& a, const TypeRegistries& b) {
    return a.node_types_ == b.node_types_ && a.edge_types_ == b.edge_types_ &&
           a.primitive_ == b.primitive_;
  }

 private:
  std::vector<std::string> node_types_;
  std::vector<bool> primitive_;
  std::vector<std::string> edge_types_;
  std::map<std::string, int, std::less<>> node_ids_;
  std::map<std::string, int, std::less<>> edge_ids_;
};

inline constexpr std::string_view kSubtokenType = "subtoken";
inline constexpr std::string_view kNextSib = "NextSib";
inline constexpr std::string_view kNextToken = "NextToken";
inline constexpr std::string_view kLastToken = "LastToken";
inline constexpr std::string_view kSubtokenOf = "subtoken_of";

TypeRegistries build_registries(const AsdlGrammar& grammar);

/// Name given to the reverse of a forward edge type.
std::string reverse_name(std::string_view forward);

/// The bundled MiniLang grammar text (data/minilang.asdl, compiled in).
std::string_view minilang_grammar_text();
const AsdlGrammar& minilang_grammar();

}  // namespace hpgkit::asdl
