#include "hpgkit/hpg.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "hpgkit/error.hpp"
#include "json.hpp"

namespace hpgkit::hpg {

const char* to_string(SubtokenScheme scheme) {
  switch (scheme) {
    case SubtokenScheme::None:
      return "none";
    case SubtokenScheme::Shared:
      return "shared";
    case SubtokenScheme::Independent:
      return "independent";
  }
  return "?";
}

SubtokenScheme parse_scheme(std::string_view text) {
  if (text == "none") return SubtokenScheme::None;
  if (text == "shared") return SubtokenScheme::Shared;
  if (text == "independent") return SubtokenScheme::Independent;
  throw Error("unknown subtoken scheme '" + std::string(text) + "' (expected none|shared|independent)");
}

// ---------------------------------------------------------------------------
// Subtoken splitting
// ---------------------------------------------------------------------------

namespace {
enum class CharClass { Lower, Upper, Digit, Other, Separator };

CharClass classify(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (c == '_') return CharClass::Separator;
  if (std::islower(u)) return CharClass::Lower;
  if (std::isupper(u)) return CharClass::Upper;
  if (std::isdigit(u)) return CharClass::Digit;
  return CharClass::Other;
}

bool is_letter(CharClass c) { return c == CharClass::Lower || c == CharClass::Upper || c == CharClass::Other; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace

std::vector<std::string> split_identifier(std::string_view identifier) {
  if (identifier == kMask) return {std::string(kMask)};
  std::vector<std::string> parts;
  std::string current;
  CharClass prev = CharClass::Separator;
  for (char c : identifier) {
    const CharClass cls = classify(c);
    if (cls == CharClass::Separator) {
      if (!current.empty()) parts.push_back(lower(current));
      current.clear();
      prev = cls;
      continue;
    }
    const bool boundary = !current.empty() &&
                          ((prev == CharClass::Lower && cls == CharClass::Upper) ||
                           (is_letter(prev) && cls == CharClass::Digit) ||
                           (prev == CharClass::Digit && is_letter(cls)));
    if (boundary) {
      parts.push_back(lower(current));
      current.clear();
    }
    current.push_back(c);
    prev = cls;
  }
  if (!current.empty()) parts.push_back(lower(current));
  if (parts.empty()) parts.push_back(lower(identifier));
  return parts;
}

// ---------------------------------------------------------------------------
// Construction passes
// ---------------------------------------------------------------------------

GraphUnderConstruction typed_ast_graph(const TypedAstNode& ast,
                                       std::shared_ptr<const asdl::TypeRegistries> registries) {
  GraphUnderConstruction g;
  g.graph.registries = std::move(registries);
  const auto& reg = *g.graph.registries;

  struct Frame {
    const TypedAstNode* node;
    int parent;
    const std::string* label;
  };
  std::vector<Frame> stack{{&ast, -1, nullptr}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const int id = static_cast<int>(g.graph.nodes.size());
    auto type = reg.node_type_id(f.node->node_type);
    if (!type) throw Error("node type '" + f.node->node_type + "' is not in the registry");
    g.graph.nodes.push_back({id, *type, f.node->value, 0});
    g.children.emplace_back();
    g.spans.push_back(f.node->span);
    g.terminal.push_back(reg.is_primitive(*type) && f.node->children.empty());
    if (f.parent >= 0) {
      auto label = reg.edge_type_id(*f.label);
      if (!label || !reg.is_field_edge(*label)) throw Error("field label '" + *f.label + "' is not in the registry");
      g.graph.edges.push_back({f.parent, id, *label});
      g.children[static_cast<std::size_t>(f.parent)].push_back(id);
    }
    for (auto c = f.node->children.rbegin(); c != f.node->children.rend(); ++c) {
      stack.push_back({&c->node, id, &c->label});
    }
  }
  g.graph.root_id = 0;
  g.graph.ast_node_count = static_cast<int>(g.graph.nodes.size());
  return g;
}

int add_next_sib(GraphUnderConstruction& g) {
  const int type = g.graph.registries->next_sib();
  int added = 0;
  for (const auto& kids : g.children) {
    for (std::size_t i = 1; i < kids.size(); ++i) {
      g.graph.edges.push_back({kids[i - 1], kids[i], type});
      ++added;
    }
  }
  return added;
}

int add_next_token(GraphUnderConstruction& g) {
  std::vector<int> terms;
  bool spans_known = true;
  for (int i = 0; i < g.graph.ast_node_count; ++i) {
    if (!g.terminal[static_cast<std::size_t>(i)]) continue;
    terms.push_back(i);
    spans_known = spans_known && g.spans[static_cast<std::size_t>(i)].known();
  }
  // Without spans the pre-order of terminals stands in for text order.
  if (spans_known) {
    std::stable_sort(terms.begin(), terms.end(), [&](int a, int b) {
      return g.spans[static_cast<std::size_t>(a)].start < g.spans[static_cast<std::size_t>(b)].start;
    });
    for (std::size_t i = 1; i < terms.size(); ++i) {
      const Span& prev = g.spans[static_cast<std::size_t>(terms[i - 1])];
      const Span& cur = g.spans[static_cast<std::size_t>(terms[i])];
      if (cur.start < prev.end) {
        throw SyntaxError("overlapping terminal spans", cur.start.line, cur.start.col);
      }
    }
  }
  const int type = g.graph.registries->next_token();
  for (std::size_t i = 1; i < terms.size(); ++i) g.graph.edges.push_back({terms[i - 1], terms[i], type});
  return terms.empty() ? 0 : static_cast<int>(terms.size()) - 1;
}

int split_subtokens(GraphUnderConstruction& g, SubtokenScheme scheme) {
  g.graph.options.scheme = scheme;
  if (scheme == SubtokenScheme::None) return 0;
  const auto& reg = *g.graph.registries;
  auto ident = reg.node_type_id("identifier");
  if (!ident) return 0;
  const int sub_type = reg.subtoken_type();
  const int edge_type = reg.subtoken_of();
  std::map<std::string, int> shared;
  int added = 0;
  const int ast_nodes = g.graph.ast_node_count;
  for (int i = 0; i < ast_nodes; ++i) {
    const HpgNode& node = g.graph.nodes[static_cast<std::size_t>(i)];
    if (node.type_id != *ident || !g.terminal[static_cast<std::size_t>(i)]) continue;
    const auto parts = split_identifier(node.value);
    g.graph.max_parts = std::max(g.graph.max_parts, static_cast<int>(parts.size()));
    std::set<int> linked;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      int sub = -1;
      if (scheme == SubtokenScheme::Shared) {
        auto it = shared.find(parts[p]);
        if (it != shared.end()) sub = it->second;
      }
      if (sub < 0) {
        sub = static_cast<int>(g.graph.nodes.size());
        g.graph.nodes.push_back({sub, sub_type, parts[p], 0});
        g.graph.subtoken_origins.push_back({i, static_cast<int>(p)});
        if (scheme == SubtokenScheme::Shared) shared.emplace(parts[p], sub);
        ++added;
      }
      // A shared node repeated inside one identifier links once.
      if (linked.insert(sub).second) g.graph.edges.push_back({sub, i, edge_type});
    }
  }
  return added;
}

int add_reverse_edges(GraphUnderConstruction& g) {
  const auto& reg = *g.graph.registries;
  const std::size_t forward = g.graph.edges.size();
  g.graph.edges.reserve(forward * 2);
  for (std::size_t i = 0; i < forward; ++i) {
    const HpgEdge e = g.graph.edges[i];
    g.graph.edges.push_back({e.dst, e.src, reg.reverse(e.type_id)});
  }
  return static_cast<int>(forward);
}

namespace {
void timestamps_from_order(Hpg& graph) {
  const std::int64_t ast_nodes = graph.ast_node_count;
  for (int i = 0; i < graph.ast_node_count; ++i) graph.nodes[static_cast<std::size_t>(i)].timestamp = i;
  for (std::size_t k = 0; k < graph.subtoken_origins.size(); ++k) {
    const SubtokenOrigin& o = graph.subtoken_origins[k];
    graph.nodes[static_cast<std::size_t>(graph.ast_node_count) + k].timestamp =
        ast_nodes + static_cast<std::int64_t>(o.identifier) * graph.max_parts + o.part;
  }
}
}  // namespace

void assign_timestamps(GraphUnderConstruction& g) { timestamps_from_order(g.graph); }

Hpg build_graph(const TypedAstNode& ast, std::shared_ptr<const asdl::TypeRegistries> registries,
                const BuildOptions& options) {
  GraphUnderConstruction g = typed_ast_graph(ast, std::move(registries));
  if (options.next_sib) add_next_sib(g);
  if (options.next_token) add_next_token(g);
  split_subtokens(g, options.scheme);
  add_reverse_edges(g);
  assign_timestamps(g);
  g.graph.options = options;
  std::sort(g.graph.edges.begin(), g.graph.edges.end());
  return std::move(g.graph);
}

// ---------------------------------------------------------------------------
// Type erasure
// ---------------------------------------------------------------------------

namespace {

// Length-prefixed so distinct subtrees never share a key.
std::string subtree_key(const std::string& type, const std::string& value, std::vector<std::string> kids) {
  std::sort(kids.begin(), kids.end());
  std::string key = std::to_string(value.size()) + ":" + value + "|" + type + "(";
  for (const auto& k : kids) key += k;
  key += ")";
  return key;
}

Hpg canonical_renumber(const Hpg& in, bool erase_nodes) {
  const auto& reg = *in.registries;
  const int ast_nodes = in.ast_node_count;
  const auto n_ast = static_cast<std::size_t>(ast_nodes);
  std::vector<std::vector<int>> kids(n_ast);
  std::vector<std::vector<int>> subs(n_ast);
  for (const auto& e : in.edges) {
    if (e.src < ast_nodes && e.dst < ast_nodes && reg.is_field_edge(e.type_id)) {
      kids[static_cast<std::size_t>(e.src)].push_back(e.dst);
    } else if (e.src >= ast_nodes && e.dst < ast_nodes) {
      subs[static_cast<std::size_t>(e.dst)].push_back(e.src);
    }
  }
  for (auto& k : kids) std::sort(k.begin(), k.end());
  for (auto& s : subs) std::sort(s.begin(), s.end());

  const bool typeless = erase_nodes || in.node_types_erased;
  std::vector<std::string> keys(n_ast);
  // Pre-order numbering puts every child after its parent.
  for (int v = ast_nodes - 1; v >= 0; --v) {
    const auto& node = in.nodes[static_cast<std::size_t>(v)];
    std::vector<std::string> child_keys;
    for (int c : kids[static_cast<std::size_t>(v)]) child_keys.push_back(keys[static_cast<std::size_t>(c)]);
    const std::string type = typeless ? "_" : reg.node_types()[static_cast<std::size_t>(node.type_id)];
    keys[static_cast<std::size_t>(v)] = subtree_key(type, node.value, std::move(child_keys));
  }

  std::vector<int> order;  // new id -> old id
  order.reserve(in.nodes.size());
  std::vector<int> stack{in.root_id};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    std::vector<int> ks = kids[static_cast<std::size_t>(v)];
    std::stable_sort(ks.begin(), ks.end(), [&](int a, int b) {
      return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
    });
    for (auto it = ks.rbegin(); it != ks.rend(); ++it) stack.push_back(*it);
  }
  if (order.size() != n_ast) throw Error("graph AST edges do not form a tree rooted at the root node");

  std::vector<int> new_id(in.nodes.size(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) new_id[static_cast<std::size_t>(order[i])] = static_cast<int>(i);

  std::vector<SubtokenOrigin> origins;
  const bool shared = in.options.scheme == SubtokenScheme::Shared;
  for (std::size_t pos = 0; pos < n_ast; ++pos) {
    const int old = order[pos];
    const auto& nbrs = subs[static_cast<std::size_t>(old)];
    if (nbrs.empty()) continue;
    auto claim = [&](int sub, int part) {
      if (new_id[static_cast<std::size_t>(sub)] >= 0) return;
      new_id[static_cast<std::size_t>(sub)] = static_cast<int>(order.size());
      order.push_back(sub);
      origins.push_back({static_cast<int>(pos), part});
    };
    if (shared) {
      const auto parts = split_identifier(in.nodes[static_cast<std::size_t>(old)].value);
      for (std::size_t p = 0; p < parts.size(); ++p) {
        for (int sub : nbrs) {
          if (in.nodes[static_cast<std::size_t>(sub)].value == parts[p]) claim(sub, static_cast<int>(p));
        }
      }
    }
    for (std::size_t p = 0; p < nbrs.size(); ++p) claim(nbrs[p], static_cast<int>(p));
  }
  for (std::size_t v = n_ast; v < in.nodes.size(); ++v) {
    if (new_id[v] < 0) {
      new_id[v] = static_cast<int>(order.size());
      order.push_back(static_cast<int>(v));
      origins.push_back(in.subtoken_origins[v - n_ast]);
    }
  }

  Hpg out;
  out.registries = in.registries;
  out.root_id = 0;
  out.ast_node_count = ast_nodes;
  out.options = in.options;
  out.node_types_erased = typeless;
  out.edge_types_erased = true;
  out.max_parts = in.max_parts;
  out.subtoken_origins = std::move(origins);
  out.nodes.reserve(in.nodes.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& src = in.nodes[static_cast<std::size_t>(order[i])];
    out.nodes.push_back({static_cast<int>(i), typeless ? kErasedType : src.type_id, src.value, 0});
  }
  out.edges.reserve(in.edges.size());
  for (const auto& e : in.edges) {
    out.edges.push_back({new_id[static_cast<std::size_t>(e.src)], new_id[static_cast<std::size_t>(e.dst)], kErasedType});
  }
  std::sort(out.edges.begin(), out.edges.end());
  timestamps_from_order(out);
  return out;
}

}  // namespace

Hpg erase_types(const Hpg& graph, bool erase_nodes, bool erase_edges) {
  if (erase_edges && !graph.edge_types_erased) return canonical_renumber(graph, erase_nodes);
  Hpg out = graph;
  if (erase_nodes) {
    for (auto& n : out.nodes) n.type_id = kErasedType;
    out.node_types_erased = true;
  }
  if (erase_edges) {
    for (auto& e : out.edges) e.type_id = kErasedType;
    std::sort(out.edges.begin(), out.edges.end());
    out.edge_types_erased = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Method-name masking
// ---------------------------------------------------------------------------

namespace {
void mask_identifiers(TypedAstNode& n, const std::string& value) {
  if (n.node_type == "identifier" && n.children.empty() && n.value == value) n.value = std::string(kMask);
  for (auto& c : n.children) mask_identifiers(c.node, value);
}
}  // namespace

MaskedGraph mask_method_name(const Hpg& graph, const TypedAstNode& ast) {
  const TypedAstNode* fn = nullptr;
  std::size_t fn_index = 0;
  for (std::size_t i = 0; i < ast.children.size(); ++i) {
    const auto& c = ast.children[i].node;
    if (c.value == "FunctionDef") {
      if (fn != nullptr) throw Error("more than one top-level FunctionDef");
      fn = &c;
      fn_index = i;
    }
  }
  if (fn == nullptr) throw Error("no FunctionDef present");
  const TypedAstNode* name = nullptr;
  for (const auto& c : fn->children) {
    if (c.label == "name") name = &c.node;
  }
  if (name == nullptr) throw Error("FunctionDef has no name field");
  const std::string original = name->value;
  (void)fn_index;

  TypedAstNode masked = ast;
  mask_identifiers(masked, original);
  MaskedGraph out;
  out.target = split_identifier(original);
  out.graph = build_graph(masked, graph.registries, graph.options);
  if (graph.node_types_erased || graph.edge_types_erased)
    out.graph = erase_types(out.graph, graph.node_types_erased, graph.edge_types_erased);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string canonical_serialize(const Hpg& graph) {
  using nlohmann::json;
  const auto& reg = *graph.registries;
  std::ostringstream os;
  auto str = [](const std::string& s) { return json(s).dump(); };
  auto names = [&](const std::vector<std::string>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + str(v[i]);
    return out + "]";
  };
  std::vector<std::string> terminals;
  for (std::size_t i = 0; i < reg.node_type_count(); ++i) {
    if (reg.is_primitive(static_cast<int>(i))) terminals.push_back(reg.node_types()[i]);
  }
  os << "{\"format\":\"hpgkit-graph\",\"version\":1,\n";
  os << "\"registry\":{\"node_types\":" << names(reg.node_types()) << ",\"terminal_types\":" << names(terminals)
     << ",\"edge_types\":" << names(reg.edge_types()) << "},\n";
  os << "\"scheme\":" << str(to_string(graph.options.scheme)) << ",\"erased\":{\"node_types\":"
     << (graph.node_types_erased ? "true" : "false")
     << ",\"edge_types\":" << (graph.edge_types_erased ? "true" : "false") << "},\n";
  os << "\"root\":" << graph.root_id << ",\"ast_nodes\":" << graph.ast_node_count << ",\n";
  os << "\"nodes\":[\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    const std::string type =
        graph.node_types_erased ? "_" : reg.node_types()[static_cast<std::size_t>(n.type_id)];
    os << "{\"id\":" << n.id << ",\"type\":" << str(type) << ",\"value\":" << str(n.value)
       << ",\"timestamp\":" << n.timestamp << "}" << (i + 1 < graph.nodes.size() ? ",\n" : "\n");
  }
  os << "],\n\"edges\":[\n";
  std::vector<HpgEdge> edges = graph.edges;
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    const std::string type =
        graph.edge_types_erased ? "_" : reg.edge_types()[static_cast<std::size_t>(e.type_id)];
    os << "{\"src\":" << e.src << ",\"dst\":" << e.dst << ",\"type\":" << str(type) << "}"
       << (i + 1 < edges.size() ? ",\n" : "\n");
  }
  os << "]}\n";
  return os.str();
}

Hpg parse_graph_dump(std::string_view text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("malformed graph dump: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "hpgkit-graph" || doc.at("version").get<int>() != 1)
      throw Error("unsupported graph dump format");
    const auto& r = doc.at("registry");
    auto node_types = r.at("node_types").get<std::vector<std::string>>();
    auto terminal_types = r.at("terminal_types").get<std::vector<std::string>>();
    auto edge_types = r.at("edge_types").get<std::vector<std::string>>();
    if (node_types.empty() || node_types.back() != asdl::kSubtokenType || edge_types.size() % 2 != 0 ||
        edge_types.size() < 6)
      throw Error("graph dump registry is inconsistent");
    node_types.pop_back();
    std::vector<bool> prim;
    for (const auto& t : node_types)
      prim.push_back(std::find(terminal_types.begin(), terminal_types.end(), t) != terminal_types.end());
    std::vector<std::string> labels(edge_types.begin(),
                                    edge_types.begin() + static_cast<std::ptrdiff_t>(edge_types.size() / 2 - 3));
    auto reg = std::make_shared<asdl::TypeRegistries>(node_types, prim, labels);
    if (reg->edge_types() != edge_types) throw Error("graph dump edge registry is not in canonical order");

    Hpg g;
    g.registries = reg;
    g.options.scheme = parse_scheme(doc.at("scheme").get<std::string>());
    g.node_types_erased = doc.at("erased").at("node_types").get<bool>();
    g.edge_types_erased = doc.at("erased").at("edge_types").get<bool>();
    g.root_id = doc.at("root").get<int>();
    g.ast_node_count = doc.at("ast_nodes").get<int>();
    for (const auto& n : doc.at("nodes")) {
      HpgNode node;
      node.id = n.at("id").get<int>();
      if (node.id != static_cast<int>(g.nodes.size())) throw Error("graph dump node ids are not dense");
      const auto type = n.at("type").get<std::string>();
      if (g.node_types_erased) {
        node.type_id = kErasedType;
      } else {
        auto id = reg->node_type_id(type);
        if (!id) throw Error("graph dump has unknown node type '" + type + "'");
        node.type_id = *id;
      }
      node.value = n.at("value").get<std::string>();
      node.timestamp = n.at("timestamp").get<std::int64_t>();
      g.nodes.push_back(std::move(node));
    }
    const int count = static_cast<int>(g.nodes.size());
    for (const auto& e : doc.at("edges")) {
      HpgEdge edge;
      edge.src = e.at("src").get<int>();
      edge.dst = e.at("dst").get<int>();
      if (edge.src < 0 || edge.src >= count || edge.dst < 0 || edge.dst >= count)
        throw Error("graph dump edge endpoint out of range");
      const auto type = e.at("type").get<std::string>();
      if (g.edge_types_erased) {
        edge.type_id = kErasedType;
      } else {
        auto id = reg->edge_type_id(type);
        if (!id) throw Error("graph dump has unknown edge type '" + type + "'");
        edge.type_id = *id;
      }
      g.edges.push_back(edge);
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed graph dump: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

GraphStats graph_stats(const Hpg& graph) {
  GraphStats s;
  const auto& reg = *graph.registries;
  s.nodes = graph.nodes.size();
  s.edges = graph.edges.size();
  s.ast_nodes = static_cast<std::size_t>(graph.ast_node_count);
  s.subtokens = s.nodes - s.ast_nodes;
  s.node_type_histogram.assign(reg.node_type_count(), 0);
  s.edge_type_histogram.assign(reg.edge_type_count(), 0);
  for (const auto& n : graph.nodes) ++s.node_type_histogram[static_cast<std::size_t>(n.type_id)];
  for (const auto& e : graph.edges) ++s.edge_type_histogram[static_cast<std::size_t>(e.type_id)];
  // Primitive-typed nodes are always leaves; erased graphs report zero.
  if (!graph.node_types_erased) {
    for (int i = 0; i < graph.ast_node_count; ++i) {
      if (reg.is_primitive(graph.nodes[static_cast<std::size_t>(i)].type_id)) ++s.terminals;
    }
  }
  return s;
}

CorpusStats corpus_stats(const std::vector<const Hpg*>& graphs) {
  CorpusStats c;
  c.graphs = graphs.size();
  if (graphs.empty()) return c;
  const auto& reg = *graphs.front()->registries;
  c.node_type_histogram.assign(reg.node_type_count(), 0);
  c.edge_type_histogram.assign(reg.edge_type_count(), 0);
  double nodes = 0;
  double edges = 0;
  for (const Hpg* g : graphs) {
    const GraphStats s = graph_stats(*g);
    nodes += static_cast<double>(s.nodes);
    edges += static_cast<double>(s.edges);
    for (std::size_t i = 0; i < s.node_type_histogram.size() && i < c.node_type_histogram.size(); ++i)
      c.node_type_histogram[i] += s.node_type_histogram[i];
    for (std::size_t i = 0; i < s.edge_type_histogram.size() && i < c.edge_type_histogram.size(); ++i)
      c.edge_type_histogram[i] += s.edge_type_histogram[i];
  }
  c.avg_nodes = nodes / static_cast<double>(graphs.size());
  c.avg_edges = edges / static_cast<double>(graphs.size());
  for (auto h : c.node_type_histogram) c.node_types_used += h > 0 ? 1 : 0;
  for (auto h : c.edge_type_histogram) c.edge_types_used += h > 0 ? 1 : 0;
  return c;
}

}  // namespace hpgkit::hpg
