#include "hpgkit/asdl.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "hpgkit/error.hpp"

namespace hpgkit::asdl {

const Field* Constructor::find_field(std::string_view label) const {
  for (const auto& f : fields) {
    if (f.label == label) return &f;
  }
  return nullptr;
}

const CompositeType* AsdlGrammar::find_composite(std::string_view name) const {
  for (const auto& t : composite_types) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Constructor* AsdlGrammar::find_constructor(std::string_view name) const {
  for (const auto& t : composite_types) {
    for (const auto& c : t.constructors) {
      if (c.name == name) return &c;
    }
  }
  return nullptr;
}

bool AsdlGrammar::is_primitive(std::string_view name) const {
  return std::find(primitive_types.begin(), primitive_types.end(), name) != primitive_types.end();
}

bool AsdlGrammar::is_composite(std::string_view name) const { return find_composite(name) != nullptr; }

bool AsdlGrammar::primitive_accepts(std::string_view field_type, std::string_view terminal_type) const {
  if (field_type == terminal_type) return true;
  auto it = unions.find(std::string(field_type));
  if (it == unions.end()) return false;
  return std::find(it->second.begin(), it->second.end(), terminal_type) != it->second.end();
}

std::size_t AsdlGrammar::constructor_count() const {
  std::size_t n = 0;
  for (const auto& t : composite_types) n += t.constructors.size();
  return n;
}

bool structurally_equal(const AsdlGrammar& a, const AsdlGrammar& b) {
  if (a.primitive_types != b.primitive_types || a.unions != b.unions) return false;
  if (a.composite_types.size() != b.composite_types.size()) return false;
  for (std::size_t i = 0; i < a.composite_types.size(); ++i) {
    const auto& ta = a.composite_types[i];
    const auto& tb = b.composite_types[i];
    if (ta.name != tb.name || ta.constructors.size() != tb.constructors.size()) return false;
    for (std::size_t j = 0; j < ta.constructors.size(); ++j) {
      const auto& ca = ta.constructors[j];
      const auto& cb = tb.constructors[j];
      if (ca.name != cb.name || ca.owner_type != cb.owner_type || ca.is_product != cb.is_product ||
          ca.fields.size() != cb.fields.size())
        return false;
      for (std::size_t k = 0; k < ca.fields.size(); ++k) {
        const auto& fa = ca.fields[k];
        const auto& fb = cb.fields[k];
        if (fa.type_name != fb.type_name || fa.qualifier != fb.qualifier || fa.label != fb.label)
          return false;
      }
    }
  }
  return true;
}

namespace {

enum class TokKind { Ident, Symbol, Pragma, Newline, End };

struct Tok {
  TokKind kind;
  std::string text;
  Location loc;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Newlines are kept only to terminate pragma lines.
std::vector<Tok> lex(std::string_view text) {
  std::vector<Tok> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      out.push_back({TokKind::Newline, "\n", {line, col}});
      advance(1);
    } else if (c == ' ' || c == '\t' || c == '\r') {
      advance(1);
    } else if (c == '-' && i + 1 < text.size() && text[i + 1] == '-') {
      while (i < text.size() && text[i] != '\n') advance(1);
    } else if (c == '%') {
      Location loc{line, col};
      advance(1);
      std::size_t start = i;
      while (i < text.size() && is_ident_char(text[i])) advance(1);
      if (start == i) throw SyntaxError("expected pragma name after '%'", loc.line, loc.col);
      out.push_back({TokKind::Pragma, std::string(text.substr(start, i - start)), loc});
    } else if (is_ident_start(c)) {
      Location loc{line, col};
      std::size_t start = i;
      while (i < text.size() && is_ident_char(text[i])) advance(1);
      out.push_back({TokKind::Ident, std::string(text.substr(start, i - start)), loc});
    } else if (std::string_view("=|(),?*").find(c) != std::string_view::npos) {
      out.push_back({TokKind::Symbol, std::string(1, c), {line, col}});
      advance(1);
    } else {
      throw SyntaxError(std::string("unexpected character '") + c + "'", line, col);
    }
  }
  out.push_back({TokKind::End, "", {line, col}});
  return out;
}

class GrammarParser {
 public:
  explicit GrammarParser(std::vector<Tok> toks) : toks_(std::move(toks)) {}

  AsdlGrammar parse() {
    AsdlGrammar g;
    skip_newlines();
    while (peek().kind != TokKind::End) {
      if (peek().kind == TokKind::Pragma) {
        parse_pragma(g);
      } else {
        parse_production(g);
      }
      skip_newlines();
    }
    if (g.composite_types.empty()) {
      const Location loc = toks_.back().loc;
      throw SyntaxError("no productions", loc.line, loc.col);
    }
    return g;
  }

 private:
  const Tok& peek() const { return toks_[pos_]; }
  Tok next() { return toks_[pos_++]; }

  void skip_newlines() {
    while (peek().kind == TokKind::Newline) ++pos_;
  }

  // Productions may span lines freely; only pragmas are line-terminated.
  const Tok& peek_sig() {
    skip_newlines();
    return peek();
  }

  [[noreturn]] void fail(const std::string& what, const Tok& t) {
    std::string found = t.kind == TokKind::End ? "end of input"
                        : t.kind == TokKind::Newline ? "newline"
                                                     : "'" + t.text + "'";
    throw SyntaxError(what + ", found " + found, t.loc.line, t.loc.col);
  }

  Tok expect_ident(const char* what) {
    const Tok& t = peek_sig();
    if (t.kind != TokKind::Ident) fail(std::string("expected ") + what, t);
    return next();
  }

  void expect_symbol(char c) {
    const Tok& t = peek_sig();
    if (t.kind != TokKind::Symbol || t.text[0] != c) fail(std::string("expected '") + c + "'", t);
    next();
  }

  bool accept_symbol(char c) {
    const Tok& t = peek_sig();
    if (t.kind == TokKind::Symbol && t.text[0] == c) {
      next();
      return true;
    }
    return false;
  }

  void parse_pragma(AsdlGrammar& g) {
    Tok p = next();
    if (p.text == "primitive") {
      bool any = false;
      while (peek().kind == TokKind::Ident) {
        g.primitive_types.push_back(next().text);
        any = true;
      }
      if (!any) fail("expected primitive type names", peek());
    } else if (p.text == "union") {
      if (peek().kind != TokKind::Ident) fail("expected union name", peek());
      std::string name = next().text;
      if (peek().kind != TokKind::Symbol || peek().text != "=") fail("expected '='", peek());
      next();
      std::vector<std::string> members;
      for (;;) {
        if (peek().kind != TokKind::Ident) fail("expected union member", peek());
        members.push_back(next().text);
        if (peek().kind == TokKind::Symbol && peek().text == "|") {
          next();
          continue;
        }
        break;
      }
      g.unions[name] = std::move(members);
    } else {
      throw SyntaxError("unknown pragma '%" + p.text + "'", p.loc.line, p.loc.col);
    }
    if (peek().kind != TokKind::Newline && peek().kind != TokKind::End)
      fail("expected end of pragma line", peek());
  }

  std::vector<Field> parse_fields() {
    std::vector<Field> fields;
    expect_symbol('(');
    if (accept_symbol(')')) return fields;
    for (;;) {
      Tok type = expect_ident("field type");
      Field f;
      f.type_name = type.text;
      f.loc = type.loc;
      if (accept_symbol('?')) {
        f.qualifier = Qualifier::Optional;
      } else if (accept_symbol('*')) {
        f.qualifier = Qualifier::Sequence;
      }
      f.label = expect_ident("field label").text;
      fields.push_back(std::move(f));
      if (accept_symbol(',')) continue;
      expect_symbol(')');
      break;
    }
    return fields;
  }

  void parse_production(AsdlGrammar& g) {
    Tok name = expect_ident("type name");
    expect_symbol('=');
    CompositeType type;
    type.name = name.text;
    type.loc = name.loc;
    const Tok& first = peek_sig();
    if (first.kind == TokKind::Symbol && first.text == "(") {
      Constructor c;
      c.name = type.name;
      c.owner_type = type.name;
      c.is_product = true;
      c.loc = first.loc;
      c.fields = parse_fields();
      type.constructors.push_back(std::move(c));
    } else {
      for (;;) {
        Tok cname = expect_ident("constructor name");
        Constructor c;
        c.name = cname.text;
        c.owner_type = type.name;
        c.loc = cname.loc;
        const Tok& t = peek_sig();
        if (t.kind == TokKind::Symbol && t.text == "(") c.fields = parse_fields();
        type.constructors.push_back(std::move(c));
        if (!accept_symbol('|')) break;
      }
    }
    g.composite_types.push_back(std::move(type));
  }

  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
};

const std::set<std::string, std::less<>>& reserved_labels() {
  static const std::set<std::string, std::less<>> names = {
      std::string(kNextSib), std::string(kNextToken), std::string(kLastToken),
      std::string(kSubtokenOf)};
  return names;
}

}  // namespace

AsdlGrammar parse_asdl(std::string_view text) {
  AsdlGrammar g = GrammarParser(lex(text)).parse();
  for (const auto& d : validate(g)) {
    if (d.severity == Severity::Error) throw SyntaxError(d.message, d.loc.line, d.loc.col);
  }
  return g;
}

std::vector<Diagnostic> validate(const AsdlGrammar& grammar) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string msg, Location loc) {
    out.push_back({Severity::Error, std::move(msg), loc});
  };
  if (grammar.composite_types.empty()) error("no productions", {});

  std::set<std::string, std::less<>> seen_types;
  for (const auto& p : grammar.primitive_types) {
    if (!seen_types.insert(p).second) error("duplicate type '" + p + "'", {});
  }
  for (const auto& [name, members] : grammar.unions) {
    if (!grammar.is_primitive(name)) error("union '" + name + "' is not a primitive type", {});
    for (const auto& m : members) {
      if (!grammar.is_primitive(m)) error("union member '" + m + "' is not a primitive type", {});
    }
  }
  if (grammar.is_primitive(kSubtokenType)) error("type name 'subtoken' is reserved", {});

  std::set<std::string, std::less<>> ctor_names;
  std::set<std::string, std::less<>> labels;
  for (const auto& t : grammar.composite_types) {
    if (!seen_types.insert(t.name).second) error("duplicate type '" + t.name + "'", t.loc);
    if (t.name == kSubtokenType) error("type name 'subtoken' is reserved", t.loc);
    if (t.constructors.empty()) error("type '" + t.name + "' has no constructors", t.loc);
    for (const auto& c : t.constructors) {
      if (!ctor_names.insert(c.name).second) error("duplicate constructor '" + c.name + "'", c.loc);
      std::set<std::string, std::less<>> local;
      for (const auto& f : c.fields) {
        if (f.label.empty()) {
          error("empty field label in '" + c.name + "'", f.loc);
          continue;
        }
        if (!local.insert(f.label).second)
          error("duplicate field label '" + f.label + "' in '" + c.name + "'", f.loc);
        if (reserved_labels().count(f.label) != 0)
          error("field label '" + f.label + "' is reserved", f.loc);
        labels.insert(f.label);
        if (!grammar.is_primitive(f.type_name) && !grammar.is_composite(f.type_name))
          error("unresolved type '" + f.type_name + "'", f.loc);
      }
    }
  }
  // A label named like another label's reverse would make edge names collide.
  for (const auto& l : labels) {
    if (labels.count(reverse_name(l)) != 0)
      error("field label '" + reverse_name(l) + "' collides with a reverse edge name", {});
  }
  return out;
}

namespace {
const char* qualifier_suffix(Qualifier q) {
  switch (q) {
    case Qualifier::Optional:
      return "?";
    case Qualifier::Sequence:
      return "*";
    case Qualifier::Single:
      break;
  }
  return "";
}

void write_fields(std::ostringstream& os, const std::vector<Field>& fields) {
  os << '(';
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ", ";
    os << fields[i].type_name << qualifier_suffix(fields[i].qualifier) << ' ' << fields[i].label;
  }
  os << ')';
}
}  // namespace

std::string to_text(const AsdlGrammar& grammar) {
  std::ostringstream os;
  if (!grammar.primitive_types.empty()) {
    os << "%primitive";
    for (const auto& p : grammar.primitive_types) os << ' ' << p;
    os << '\n';
  }
  for (const auto& [name, members] : grammar.unions) {
    os << "%union " << name << " =";
    for (std::size_t i = 0; i < members.size(); ++i) os << (i ? " | " : " ") << members[i];
    os << '\n';
  }
  for (const auto& t : grammar.composite_types) {
    os << t.name << " = ";
    for (std::size_t i = 0; i < t.constructors.size(); ++i) {
      const auto& c = t.constructors[i];
      if (i) os << "\n  | ";
      if (c.is_product) {
        write_fields(os, c.fields);
      } else {
        os << c.name;
        if (!c.fields.empty()) write_fields(os, c.fields);
      }
    }
    os << '\n';
  }
  return os.str();
}

std::string reverse_name(std::string_view forward) {
  if (forward == kNextToken) return std::string(kLastToken);
  return std::string(forward) + "_reverse";
}

TypeRegistries::TypeRegistries(std::vector<std::string> node_types, std::vector<bool> primitive_flags,
                               std::vector<std::string> field_labels)
    : node_types_(std::move(node_types)), primitive_(std::move(primitive_flags)) {
  node_types_.emplace_back(kSubtokenType);
  primitive_.push_back(false);
  std::vector<std::string> forward = std::move(field_labels);
  forward.emplace_back(kNextSib);
  forward.emplace_back(kNextToken);
  forward.emplace_back(kSubtokenOf);
  edge_types_ = forward;
  for (const auto& f : forward) edge_types_.push_back(reverse_name(f));
  for (std::size_t i = 0; i < node_types_.size(); ++i) {
    if (!node_ids_.emplace(node_types_[i], static_cast<int>(i)).second)
      throw Error("duplicate node type '" + node_types_[i] + "' in registry");
  }
  for (std::size_t i = 0; i < edge_types_.size(); ++i) {
    if (!edge_ids_.emplace(edge_types_[i], static_cast<int>(i)).second)
      throw Error("duplicate edge type '" + edge_types_[i] + "' in registry");
  }
}

std::optional<int> TypeRegistries::node_type_id(std::string_view name) const {
  auto it = node_ids_.find(name);
  if (it == node_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> TypeRegistries::edge_type_id(std::string_view name) const {
  auto it = edge_ids_.find(name);
  if (it == edge_ids_.end()) return std::nullopt;
  return it->second;
}

int TypeRegistries::reverse(int edge_type) const {
  const int f = static_cast<int>(forward_count());
  return edge_type < f ? edge_type + f : edge_type - f;
}

TypeRegistries build_registries(const AsdlGrammar& grammar) {
  std::vector<std::string> types;
  std::vector<bool> prim;
  for (const auto& t : grammar.composite_types) {
    types.push_back(t.name);
    prim.push_back(false);
  }
  for (const auto& p : grammar.primitive_types) {
    types.push_back(p);
    prim.push_back(true);
  }
  std::vector<std::string> labels;
  std::set<std::string, std::less<>> seen;
  for (const auto& t : grammar.composite_types) {
    for (const auto& c : t.constructors) {
      for (const auto& f : c.fields) {
        if (seen.insert(f.label).second) labels.push_back(f.label);
      }
    }
  }
  return TypeRegistries(std::move(types), std::move(prim), std::move(labels));
}

const AsdlGrammar& minilang_grammar() {
  static const AsdlGrammar g = parse_asdl(minilang_grammar_text());
  return g;
}

}  // namespace hpgkit::asdl
