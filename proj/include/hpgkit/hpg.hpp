#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "hpgkit/asdl.hpp"
#include "hpgkit/ast.hpp"

namespace hpgkit::hpg {

enum class SubtokenScheme { None, Shared, Independent };

const char* to_string(SubtokenScheme scheme);
SubtokenScheme parse_scheme(std::string_view text);

struct BuildOptions {
  SubtokenScheme scheme = SubtokenScheme::Shared;
  bool next_sib = true;
  bool next_token = true;
};

struct HpgNode {
  int id = 0;
  int type_id = 0;
  std::string value;
  std::int64_t timestamp = 0;
};

struct HpgEdge {
  int src = 0;
  int dst = 0;
  int type_id = 0;

  friend bool operator==(const HpgEdge&, const HpgEdge&) = default;
  friend auto operator<=>(const HpgEdge&, const HpgEdge&) = default;
};

/// Which identifier occurrence first produced a subtoken node, and at which
/// part index. Drives subtoken timestamps.
struct SubtokenOrigin {
  int identifier = 0;
  int part = 0;
};

inline constexpr int kErasedType = 0;
inline constexpr std::string_view kMask = "<MASK>";

/// Heterogeneous program graph. AST nodes occupy ids [0, ast_node_count) in
/// DFS pre-order; subtoken nodes follow.
struct Hpg {
  std::shared_ptr<const asdl::TypeRegistries> registries;
  std::vector<HpgNode> nodes;
  std::vector<HpgEdge> edges;
  int root_id = 0;
  int ast_node_count = 0;

  BuildOptions options;
  bool node_types_erased = false;
  bool edge_types_erased = false;

  // Indexed by (node id - ast_node_count).
  std::vector<SubtokenOrigin> subtoken_origins;
  int max_parts = 0;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }
  bool is_subtoken(int id) const { return id >= ast_node_count; }
};

/// Splits an identifier on `_`, lower->Upper and letter<->digit boundaries,
/// lowercasing the parts. Identifiers with no parts yield themselves
/// lowercased; the mask sentinel is never split.
std::vector<std::string> split_identifier(std::string_view identifier);

/// A graph during construction: the Hpg plus AST bookkeeping the crafted-edge
/// passes need.
struct GraphUnderConstruction {
  Hpg graph;
  std::vector<std::vector<int>> children;  // per AST node, in stored order
  std::vector<Span> spans;
  std::vector<bool> terminal;
};

/// Typed AST step: one node per AST node in pre-order and one field-labelled
/// edge per parent/child link.
GraphUnderConstruction typed_ast_graph(const TypedAstNode& ast,
                                       std::shared_ptr<const asdl::TypeRegistries> registries);

// Each pass returns the number of edges (or nodes, for split_subtokens) added.
int add_next_sib(GraphUnderConstruction& g);
int add_next_token(GraphUnderConstruction& g);
int split_subtokens(GraphUnderConstruction& g, SubtokenScheme scheme);
int add_reverse_edges(GraphUnderConstruction& g);
void assign_timestamps(GraphUnderConstruction& g);

/// Runs the full pipeline: typed AST, NextSib, NextToken, subtokens, reverse
/// edges, timestamps.
Hpg build_graph(const TypedAstNode& ast, std::shared_ptr<const asdl::TypeRegistries> registries,
                const BuildOptions& options = {});

/// Collapses node and/or edge types to kErasedType. When edge types go, the
/// field order among siblings goes with them, so nodes are renumbered by a
/// canonical DFS whose sibling order depends only on subtree content, and
/// timestamps are recomputed from that order.
Hpg erase_types(const Hpg& graph, bool erase_nodes, bool erase_edges);

struct MaskedGraph {
  Hpg graph;
  std::vector<std::string> target;
};

/// Replaces the single top-level FunctionDef's name, and every identifier
/// occurrence with the same value, by kMask; returns the name's subtokens as
/// the target. The graph is rebuilt from `ast` with the options (and
/// erasure) recorded in `graph`.
MaskedGraph mask_method_name(const Hpg& graph, const TypedAstNode& ast);

/// Deterministic text encoding: nodes by id, edges sorted by (src,dst,type).
std::string canonical_serialize(const Hpg& graph);

/// Reads a canonical dump back. The subtoken scheme and erasure flags round
/// trip; crafted-edge options and subtoken origins come back defaulted.
Hpg parse_graph_dump(std::string_view text);

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::size_t ast_nodes = 0;
  std::size_t terminals = 0;
  std::size_t subtokens = 0;
  std::vector<std::size_t> node_type_histogram;
  std::vector<std::size_t> edge_type_histogram;
};

GraphStats graph_stats(const Hpg& graph);

/// Table-style summary over many graphs.
struct CorpusStats {
  std::size_t graphs = 0;
  double avg_nodes = 0;
  double avg_edges = 0;
  std::size_t node_types_used = 0;
  std::size_t edge_types_used = 0;
  std::vector<std::size_t> node_type_histogram;
  std::vector<std::size_t> edge_type_histogram;
};

CorpusStats corpus_stats(const std::vector<const Hpg*>& graphs);

}  // namespace hpgkit::hpg
