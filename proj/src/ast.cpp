#include "hpgkit/ast.hpp"

#include <sstream>

namespace hpgkit {

std::size_t TypedAstNode::size() const {
  std::size_t n = 1;
  for (const auto& c : children) n += c.node.size();
  return n;
}

bool operator==(const TypedAstNode& a, const TypedAstNode& b) {
  return a.node_type == b.node_type && a.value == b.value && a.span == b.span &&
         a.children == b.children;
}

bool structurally_equal(const TypedAstNode& a, const TypedAstNode& b) {
  if (a.node_type != b.node_type || a.value != b.value || a.children.size() != b.children.size())
    return false;
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (a.children[i].label != b.children[i].label) return false;
    if (!structurally_equal(a.children[i].node, b.children[i].node)) return false;
  }
  return true;
}

namespace {

using asdl::Diagnostic;
using asdl::Qualifier;
using asdl::Severity;

void check(const TypedAstNode& node, const asdl::AsdlGrammar& g, std::vector<Diagnostic>& out) {
  const asdl::Location loc{node.span.start.line, node.span.start.col};
  auto error = [&](std::string msg) { out.push_back({Severity::Error, std::move(msg), loc}); };

  if (g.is_primitive(node.node_type)) {
    if (!node.children.empty()) error("terminal '" + node.value + "' of type " + node.node_type + " has children");
    return;
  }
  const asdl::CompositeType* type = g.find_composite(node.node_type);
  if (type == nullptr) {
    error("unknown node type '" + node.node_type + "'");
    return;
  }
  const asdl::Constructor* ctor = nullptr;
  for (const auto& c : type->constructors) {
    if (c.name == node.value) ctor = &c;
  }
  if (ctor == nullptr) {
    error("'" + node.value + "' is not a constructor of type " + node.node_type);
    return;
  }

  // Children must appear grouped by field, in field declaration order.
  std::size_t ci = 0;
  for (const auto& field : ctor->fields) {
    std::size_t count = 0;
    while (ci < node.children.size() && node.children[ci].label == field.label) {
      const TypedAstNode& child = node.children[ci].node;
      if (g.is_primitive(field.type_name)) {
        if (!g.is_primitive(child.node_type) || !g.primitive_accepts(field.type_name, child.node_type))
          error("field '" + field.label + "' of " + ctor->name + " expects " + field.type_name +
                ", got " + child.node_type);
      } else if (child.node_type != field.type_name) {
        error("field '" + field.label + "' of " + ctor->name + " expects " + field.type_name +
              ", got " + child.node_type);
      }
      ++count;
      ++ci;
    }
    if (field.qualifier == Qualifier::Single && count != 1) {
      if (count == 0) {
        error("missing Single field '" + field.label + "' in " + ctor->name);
      } else {
        error("Single field '" + field.label + "' in " + ctor->name + " has " + std::to_string(count) +
              " children");
      }
    } else if (field.qualifier == Qualifier::Optional && count > 1) {
      error("Optional field '" + field.label + "' in " + ctor->name + " has " + std::to_string(count) +
            " children");
    }
  }
  for (; ci < node.children.size(); ++ci) {
    const auto& label = node.children[ci].label;
    if (ctor->find_field(label) != nullptr) {
      error("field '" + label + "' of " + ctor->name + " out of declaration order");
    } else {
      error("unknown field '" + label + "' in " + ctor->name);
    }
  }
  for (const auto& c : node.children) check(c.node, g, out);
}

void dump(const TypedAstNode& n, const std::string& label, int depth, std::ostringstream& os) {
  os << std::string(static_cast<std::size_t>(depth) * 2, ' ');
  if (!label.empty()) os << label << ": ";
  os << n.node_type << ' ' << n.value;
  if (n.span.known()) {
    os << " @" << n.span.start.line << ':' << n.span.start.col << '-' << n.span.end.line << ':'
       << n.span.end.col;
  }
  os << '\n';
  for (const auto& c : n.children) dump(c.node, c.label, depth + 1, os);
}

}  // namespace

std::vector<asdl::Diagnostic> validate_against_grammar(const TypedAstNode& ast,
                                                      const asdl::AsdlGrammar& grammar) {
  std::vector<Diagnostic> out;
  check(ast, grammar, out);
  return out;
}

std::string dump_tree(const TypedAstNode& ast) {
  std::ostringstream os;
  dump(ast, "", 0, os);
  return os.str();
}

}  // namespace hpgkit
