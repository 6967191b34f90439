#include "hpgkit/minilang.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <sstream>

#include "hpgkit/error.hpp"

namespace hpgkit::minilang {

const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::Name:
      return "Name";
    case TokenKind::Number:
      return "Number";
    case TokenKind::String:
      return "String";
    case TokenKind::Operator:
      return "Operator";
    case TokenKind::Keyword:
      return "Keyword";
    case TokenKind::Newline:
      return "Newline";
    case TokenKind::Indent:
      return "Indent";
    case TokenKind::Dedent:
      return "Dedent";
    case TokenKind::Eof:
      return "Eof";
  }
  return "?";
}

namespace {

constexpr std::array<std::string_view, 8> kKeywords = {"def", "return", "if",  "elif",
                                                       "else", "while", "for", "in"};

bool is_keyword(std::string_view s) {
  return std::find(kKeywords.begin(), kKeywords.end(), s) != kKeywords.end();
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<Token> tokenize(std::string_view source) {
  std::vector<Token> out;
  std::vector<int> indents{0};
  int paren_depth = 0;
  int line_no = 0;
  std::size_t pos = 0;
  int last_line = 1;
  int last_col = 1;

  auto push = [&](TokenKind kind, std::string text, int line, int col, int end_col) {
    out.push_back({kind, std::move(text), line, col, line, end_col});
  };

  while (pos < source.size()) {
    std::size_t eol = source.find('\n', pos);
    if (eol == std::string_view::npos) eol = source.size();
    std::string_view line = source.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    pos = eol + 1;

    std::size_t i = 0;
    if (line.find('\t') != std::string_view::npos) {
      // Tabs are only legal inside string literals; the scanner below rechecks.
      bool in_string = false;
      char quote = 0;
      for (std::size_t k = 0; k < line.size(); ++k) {
        char c = line[k];
        if (in_string) {
          if (c == '\\') {
            ++k;
          } else if (c == quote) {
            in_string = false;
          }
        } else if (c == '#') {
          break;
        } else if (c == '\'' || c == '"') {
          in_string = true;
          quote = c;
        } else if (c == '\t') {
          throw SyntaxError("tab character", line_no, static_cast<int>(k) + 1);
        }
      }
    }

    // Skip blank and comment-only lines entirely.
    std::size_t first = line.find_first_not_of(' ');
    if (first == std::string_view::npos || line[first] == '#') continue;

    if (paren_depth == 0) {
      int width = static_cast<int>(first);
      if (width > indents.back()) {
        indents.push_back(width);
        push(TokenKind::Indent, "", line_no, 1, width + 1);
      } else {
        while (width < indents.back()) {
          indents.pop_back();
          push(TokenKind::Dedent, "", line_no, 1, width + 1);
        }
        if (width != indents.back()) throw SyntaxError("inconsistent dedent", line_no, width + 1);
      }
    }
    i = first;

    while (i < line.size()) {
      char c = line[i];
      const int col = static_cast<int>(i) + 1;
      if (c == ' ') {
        ++i;
      } else if (c == '#') {
        break;
      } else if (ident_start(c)) {
        std::size_t start = i;
        while (i < line.size() && ident_char(line[i])) ++i;
        std::string text(line.substr(start, i - start));
        push(is_keyword(text) ? TokenKind::Keyword : TokenKind::Name, text, line_no, col,
             static_cast<int>(i) + 1);
      } else if (digit(c)) {
        std::size_t start = i;
        while (i < line.size() && digit(line[i])) ++i;
        if (i + 1 < line.size() && line[i] == '.' && digit(line[i + 1])) {
          ++i;
          while (i < line.size() && digit(line[i])) ++i;
        }
        if (i < line.size() && ident_char(line[i]))
          throw SyntaxError("malformed number", line_no, static_cast<int>(i) + 1);
        push(TokenKind::Number, std::string(line.substr(start, i - start)), line_no, col,
             static_cast<int>(i) + 1);
      } else if (c == '\'' || c == '"') {
        std::string text;
        std::size_t k = i + 1;
        bool closed = false;
        while (k < line.size()) {
          if (line[k] == '\\' && k + 1 < line.size()) {
            text.push_back(line[k + 1]);
            k += 2;
          } else if (line[k] == c) {
            closed = true;
            ++k;
            break;
          } else {
            text.push_back(line[k++]);
          }
        }
        if (!closed) throw SyntaxError("unterminated string", line_no, col);
        push(TokenKind::String, text, line_no, col, static_cast<int>(k) + 1);
        i = k;
      } else {
        std::string_view two = line.substr(i, 2);
        if (two == "==" || two == "!=") {
          push(TokenKind::Operator, std::string(two), line_no, col, col + 2);
          i += 2;
        } else if (std::string_view("+-*/<>=(),:").find(c) != std::string_view::npos) {
          if (c == '(') ++paren_depth;
          if (c == ')') {
            if (paren_depth == 0) throw SyntaxError("unbalanced ')'", line_no, col);
            --paren_depth;
          }
          push(TokenKind::Operator, std::string(1, c), line_no, col, col + 1);
          ++i;
        } else {
          throw SyntaxError(std::string("unexpected character '") + c + "'", line_no, col);
        }
      }
    }
    last_line = line_no;
    last_col = static_cast<int>(line.size()) + 1;
    if (paren_depth == 0) push(TokenKind::Newline, "", line_no, last_col, last_col);
  }
  if (paren_depth != 0) throw SyntaxError("unclosed '('", last_line, last_col);
  const int eof_line = line_no + 1;
  while (indents.size() > 1) {
    indents.pop_back();
    push(TokenKind::Dedent, "", eof_line, 1, 1);
  }
  push(TokenKind::Eof, "", eof_line, 1, 1);
  return out;
}

std::string format_tokens(const std::vector<Token>& tokens) {
  std::ostringstream os;
  for (const auto& t : tokens) {
    os << to_string(t.kind);
    if (!t.text.empty()) os << ' ' << t.text;
    os << ' ' << t.line << ':' << t.col << '\n';
  }
  return os.str();
}

namespace {

class Parser {
 public:
  Parser(std::vector<Token> toks, const asdl::AsdlGrammar& g) : toks_(std::move(toks)), g_(g) {}

  TypedAstNode parse_module() {
    std::vector<AstChild> body;
    while (peek().kind != TokenKind::Eof) body.push_back({"body", statement()});
    Span span{{1, 1}, {1, 1}};
    if (!body.empty()) span = {body.front().node.span.start, body.back().node.span.end};
    return make("Module", std::move(body), span);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() { return toks_[pos_++]; }

  bool is_op(std::string_view text, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == TokenKind::Operator && t.text == text;
  }
  bool is_kw(std::string_view text) const {
    return peek().kind == TokenKind::Keyword && peek().text == text;
  }

  [[noreturn]] void fail(std::initializer_list<std::string_view> expected) const {
    const Token& t = peek();
    std::string msg = "syntax error: expected ";
    bool firstp = true;
    std::set<std::string_view> sorted(expected.begin(), expected.end());
    msg += sorted.size() > 1 ? "one of {" : "";
    for (auto e : sorted) {
      if (!firstp) msg += ", ";
      msg += e;
      firstp = false;
    }
    msg += sorted.size() > 1 ? "}" : "";
    msg += ", found ";
    msg += to_string(t.kind);
    if (!t.text.empty()) msg += " '" + t.text + "'";
    throw SyntaxError(msg, t.line, t.col);
  }

  const Token& expect_op(std::string_view text) {
    if (!is_op(text)) fail({"'" + std::string(text) + "'"});
    return next();
  }
  const Token& expect_kind(TokenKind kind, std::string_view what) {
    if (peek().kind != kind) fail({what});
    return next();
  }

  static Span tok_span(const Token& t) { return {{t.line, t.col}, {t.end_line, t.end_col}}; }

  TypedAstNode make(std::string_view ctor_name, std::vector<AstChild> children, Span span) const {
    const asdl::Constructor* ctor = g_.find_constructor(ctor_name);
    if (ctor == nullptr) throw Error("grammar lacks MiniLang constructor '" + std::string(ctor_name) + "'");
    TypedAstNode n;
    n.node_type = ctor->owner_type;
    n.value = ctor->name;
    n.span = span;
    // Order children by field declaration; stable within a field.
    std::stable_sort(children.begin(), children.end(), [&](const AstChild& a, const AstChild& b) {
      return field_index(*ctor, a.label) < field_index(*ctor, b.label);
    });
    n.children = std::move(children);
    return n;
  }

  static std::size_t field_index(const asdl::Constructor& c, const std::string& label) {
    for (std::size_t i = 0; i < c.fields.size(); ++i) {
      if (c.fields[i].label == label) return i;
    }
    return c.fields.size();
  }

  TypedAstNode identifier(const Token& t) const {
    TypedAstNode n;
    n.node_type = "identifier";
    n.value = t.text;
    n.span = tok_span(t);
    return n;
  }

  std::vector<AstChild> block(std::string_view label, SourcePos& end) {
    expect_kind(TokenKind::Newline, "Newline");
    expect_kind(TokenKind::Indent, "Indent");
    std::vector<AstChild> out;
    while (peek().kind != TokenKind::Dedent && peek().kind != TokenKind::Eof) {
      out.push_back({std::string(label), statement()});
    }
    expect_kind(TokenKind::Dedent, "Dedent");
    if (out.empty()) fail({"statement"});
    end = out.back().node.span.end;
    return out;
  }

  TypedAstNode statement() {
    const Token& t = peek();
    if (t.kind == TokenKind::Keyword) {
      if (t.text == "def") return function_def();
      if (t.text == "return") return return_stmt();
      if (t.text == "if") return if_stmt();
      if (t.text == "while") return while_stmt();
      if (t.text == "for") return for_stmt();
    }
    return simple_stmt();
  }

  TypedAstNode function_def() {
    const Token start = next();
    const Token name = expect_kind(TokenKind::Name, "Name");
    std::vector<AstChild> children;
    children.push_back({"name", identifier(name)});
    expect_op("(");
    if (!is_op(")")) {
      for (;;) {
        const Token arg = expect_kind(TokenKind::Name, "Name");
        std::vector<AstChild> inner;
        inner.push_back({"arg", identifier(arg)});
        children.push_back({"args", make("arg", std::move(inner), tok_span(arg))});
        if (is_op(",")) {
          next();
          continue;
        }
        break;
      }
    }
    expect_op(")");
    expect_op(":");
    SourcePos end;
    auto body = block("body", end);
    for (auto& b : body) children.push_back(std::move(b));
    return make("FunctionDef", std::move(children), {{start.line, start.col}, end});
  }

  SourcePos end_simple(SourcePos end) {
    expect_kind(TokenKind::Newline, "Newline");
    return end;
  }

  TypedAstNode return_stmt() {
    const Token start = next();
    std::vector<AstChild> children;
    SourcePos end{start.end_line, start.end_col};
    if (peek().kind != TokenKind::Newline) {
      TypedAstNode value = expression();
      end = value.span.end;
      children.push_back({"value", std::move(value)});
    }
    end_simple(end);
    return make("Return", std::move(children), {{start.line, start.col}, end});
  }

  TypedAstNode if_stmt() {
    const Token start = next();  // `if` or `elif`
    std::vector<AstChild> children;
    children.push_back({"test", expression()});
    expect_op(":");
    SourcePos end;
    for (auto& b : block("body", end)) children.push_back(std::move(b));
    if (is_kw("elif")) {
      TypedAstNode nested = if_stmt();
      end = nested.span.end;
      children.push_back({"orelse", std::move(nested)});
    } else if (is_kw("else")) {
      next();
      expect_op(":");
      for (auto& b : block("orelse", end)) children.push_back(std::move(b));
    }
    return make("If", std::move(children), {{start.line, start.col}, end});
  }

  TypedAstNode while_stmt() {
    const Token start = next();
    std::vector<AstChild> children;
    children.push_back({"test", expression()});
    expect_op(":");
    SourcePos end;
    for (auto& b : block("body", end)) children.push_back(std::move(b));
    return make("While", std::move(children), {{start.line, start.col}, end});
  }

  TypedAstNode for_stmt() {
    const Token start = next();
    std::vector<AstChild> children;
    children.push_back({"target", expression()});
    if (!is_kw("in")) fail({"'in'"});
    next();
    children.push_back({"iter", expression()});
    expect_op(":");
    SourcePos end;
    for (auto& b : block("body", end)) children.push_back(std::move(b));
    return make("For", std::move(children), {{start.line, start.col}, end});
  }

  TypedAstNode simple_stmt() {
    TypedAstNode first = expression();
    const SourcePos start = first.span.start;
    if (is_op("=")) {
      next();
      TypedAstNode value = expression();
      const SourcePos end = value.span.end;
      std::vector<AstChild> children;
      children.push_back({"target", std::move(first)});
      children.push_back({"value", std::move(value)});
      end_simple(end);
      return make("Assign", std::move(children), {start, end});
    }
    const SourcePos end = first.span.end;
    std::vector<AstChild> children;
    children.push_back({"value", std::move(first)});
    end_simple(end);
    return make("Expr", std::move(children), {start, end});
  }

  TypedAstNode expression() { return comparison(); }

  TypedAstNode binary(TypedAstNode left, std::string_view ctor, std::string_view op_ctor,
                      const Token& op, TypedAstNode right) {
    const Span span{left.span.start, right.span.end};
    std::vector<AstChild> children;
    children.push_back({"left", std::move(left)});
    children.push_back({"op", make(op_ctor, {}, tok_span(op))});
    children.push_back({"right", std::move(right)});
    return make(ctor, std::move(children), span);
  }

  static const char* cmp_ctor(const Token& t) {
    if (t.kind != TokenKind::Operator) return nullptr;
    if (t.text == "<") return "Lt";
    if (t.text == ">") return "Gt";
    if (t.text == "==") return "Eq";
    if (t.text == "!=") return "NotEq";
    return nullptr;
  }

  TypedAstNode comparison() {
    TypedAstNode left = additive();
    while (const char* ctor = cmp_ctor(peek())) {
      const Token op = next();
      left = binary(std::move(left), "Compare", ctor, op, additive());
    }
    return left;
  }

  TypedAstNode additive() {
    TypedAstNode left = term();
    while (is_op("+") || is_op("-")) {
      const Token op = next();
      left = binary(std::move(left), "BinOp", op.text == "+" ? "Add" : "Sub", op, term());
    }
    return left;
  }

  TypedAstNode term() {
    TypedAstNode left = call();
    while (is_op("*") || is_op("/")) {
      const Token op = next();
      left = binary(std::move(left), "BinOp", op.text == "*" ? "Mult" : "Div", op, call());
    }
    return left;
  }

  TypedAstNode call() {
    TypedAstNode callee = atom();
    while (is_op("(")) {
      next();
      std::vector<AstChild> children;
      const SourcePos start = callee.span.start;
      children.push_back({"func", std::move(callee)});
      if (!is_op(")")) {
        for (;;) {
          children.push_back({"args", expression()});
          if (is_op(",")) {
            next();
            continue;
          }
          break;
        }
      }
      const Token close = expect_op(")");
      callee = make("Call", std::move(children), {start, {close.end_line, close.end_col}});
    }
    return callee;
  }

  TypedAstNode atom() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::Name: {
        const Token name = next();
        std::vector<AstChild> children;
        children.push_back({"id", identifier(name)});
        return make("Name", std::move(children), tok_span(name));
      }
      case TokenKind::Number:
      case TokenKind::String: {
        const Token lit = next();
        TypedAstNode terminal;
        terminal.node_type = lit.kind == TokenKind::Number ? "int" : "string";
        terminal.value = lit.text;
        terminal.span = tok_span(lit);
        std::vector<AstChild> children;
        children.push_back({"value", std::move(terminal)});
        return make("Constant", std::move(children), tok_span(lit));
      }
      case TokenKind::Operator:
        if (t.text == "(") {
          next();
          TypedAstNode inner = expression();
          expect_op(")");
          return inner;
        }
        break;
      default:
        break;
    }
    fail({"Name", "Number", "String", "'('"});
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const asdl::AsdlGrammar& g_;
};

}  // namespace

TypedAstNode parse_source(std::string_view source, const asdl::AsdlGrammar& grammar) {
  return Parser(tokenize(source), grammar).parse_module();
}

TypedAstNode parse_source(std::string_view source) {
  return parse_source(source, asdl::minilang_grammar());
}

}  // namespace hpgkit::minilang
