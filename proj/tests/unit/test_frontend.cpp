#include <filesystem>
#include <functional>

#include "common.hpp"
#include "doctest.h"
#include "hpgkit/ast_io.hpp"
#include "hpgkit/corpus.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/minilang.hpp"

using namespace hpgkit;
using namespace hpgkit::minilang;

namespace {

std::vector<std::string> fixture_names() {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::directory_iterator(source_path("tests/fixtures"))) {
    if (e.path().extension() == ".mini") out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

const TypedAstNode& child(const TypedAstNode& n, std::size_t i) { return n.children.at(i).node; }

void walk(const TypedAstNode& n, const std::function<void(const TypedAstNode&)>& f) {
  f(n);
  for (const auto& c : n.children) walk(c.node, f);
}

}  // namespace

TEST_CASE("tokenize: return x") {
  const auto t = tokenize("return x");
  REQUIRE(t.size() == 4);
  CHECK(t[0].kind == TokenKind::Keyword);
  CHECK(t[0].text == "return");
  CHECK(t[1].kind == TokenKind::Name);
  CHECK(t[1].text == "x");
  CHECK(t[2].kind == TokenKind::Newline);
  CHECK(t[3].kind == TokenKind::Eof);
}

TEST_CASE("tokenize: indentation is balanced") {
  const auto t = tokenize("if a:\n    if b:\n        x = 1\n    y = 2\nz = 3\n");
  int indent = 0, dedent = 0;
  for (const auto& k : t) {
    indent += k.kind == TokenKind::Indent;
    dedent += k.kind == TokenKind::Dedent;
  }
  CHECK(indent == 2);
  CHECK(dedent == 2);
}

TEST_CASE("tokenize: trailing dedents at end of file") {
  const auto t = tokenize("while a:\n  while b:\n    x = 1");
  REQUIRE(t.size() >= 3);
  CHECK(t[t.size() - 1].kind == TokenKind::Eof);
  CHECK(t[t.size() - 2].kind == TokenKind::Dedent);
  CHECK(t[t.size() - 3].kind == TokenKind::Dedent);
}

TEST_CASE("tokenize: errors") {
  CHECK_THROWS_WITH_AS(tokenize("if a:\n\tx = 1\n"), doctest::Contains("tab character"), SyntaxError);
  CHECK_THROWS_WITH_AS(tokenize("if a:\n    x = 1\n  y = 2\n"), doctest::Contains("inconsistent dedent"), SyntaxError);
  CHECK_THROWS_WITH_AS(tokenize("x = \"abc\n"), doctest::Contains("unterminated string"), SyntaxError);
}

TEST_CASE("tokenize: comments, blank lines, parentheses") {
  const auto a = tokenize("x = f(a,\n      b)  # note\n\n# alone\ny = 2\n");
  const auto b = tokenize("x = f(a, b)\ny = 2\n");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].kind == b[i].kind);
    CHECK(a[i].text == b[i].text);
  }
}

TEST_CASE("tokenize: fib golden") {
  CHECK(format_tokens(tokenize(fixture("fib.mini"))) == read_file(source_path("tests/golden/fib.tokens")));
}

TEST_CASE("parse: a - b") {
  const TypedAstNode root = parse_source("a-b");
  CHECK(root.node_type == "mod");
  REQUIRE(root.children.size() == 1);
  const auto& stmt = child(root, 0);
  CHECK(stmt.value == "Expr");
  const auto& bin = child(stmt, 0);
  CHECK(bin.node_type == "expr");
  CHECK(bin.value == "BinOp");
  REQUIRE(bin.children.size() == 3);
  CHECK(bin.children[0].label == "left");
  CHECK(child(bin, 0).value == "Name");
  CHECK(child(child(bin, 0), 0).value == "a");
  CHECK(bin.children[1].label == "op");
  CHECK(child(bin, 1).node_type == "operator");
  CHECK(child(bin, 1).value == "Sub");
  CHECK(child(bin, 1).is_leaf());
  CHECK(bin.children[2].label == "right");
  CHECK(child(child(bin, 2), 0).value == "b");
}

TEST_CASE("parse: def f(): return 0") {
  const TypedAstNode root = parse_source("def f():\n    return 0");
  const auto& fn = child(root, 0);
  CHECK(fn.value == "FunctionDef");
  REQUIRE(fn.children.size() == 2);
  CHECK(fn.children[0].label == "name");
  CHECK(child(fn, 0).node_type == "identifier");
  CHECK(child(fn, 0).value == "f");
  CHECK(fn.children[1].label == "body");
  const auto& ret = child(fn, 1);
  CHECK(ret.value == "Return");
  CHECK(child(ret, 0).value == "Constant");
  CHECK(child(child(ret, 0), 0).node_type == "int");
  CHECK(child(child(ret, 0), 0).value == "0");
}

TEST_CASE("parse: precedence and associativity") {
  // a - b - c == (a - b) - c; a + b * c == a + (b * c); x < a + b compares last.
  const auto& e1 = child(child(parse_source("a - b - c"), 0), 0);
  CHECK(child(e1, 0).value == "BinOp");
  CHECK(child(e1, 2).value == "Name");
  const auto& e2 = child(child(parse_source("a + b * c"), 0), 0);
  CHECK(child(e2, 1).value == "Add");
  CHECK(child(e2, 2).value == "BinOp");
  CHECK(child(child(e2, 2), 1).value == "Mult");
  const auto& e3 = child(child(parse_source("x < a + b"), 0), 0);
  CHECK(e3.value == "Compare");
  CHECK(child(e3, 2).value == "BinOp");
  const auto& e4 = child(child(parse_source("(a - b) * c"), 0), 0);
  CHECK(child(e4, 1).value == "Mult");
  CHECK(child(e4, 0).value == "BinOp");
}

TEST_CASE("parse: constants keep their kind and text") {
  const auto& v = child(child(child(parse_source("x = \"07\""), 0), 1), 0);
  CHECK(v.node_type == "string");
  const auto& n = child(child(child(parse_source("x = 007"), 0), 1), 0);
  CHECK(n.node_type == "int");
  CHECK(n.value == "007");
}

TEST_CASE("parse: elif nests an If in orelse") {
  const auto& top = child(child(parse_source(fixture("elif_chain.mini")), 0), 2);
  CHECK(top.value == "If");
  REQUIRE(top.children.back().label == "orelse");
  CHECK(top.children.back().node.value == "If");
}

TEST_CASE("parse: syntax errors list expected tokens") {
  try {
    parse_source("def (x):\n    return 0\n");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.col() == 5);
    CHECK(std::string(e.what()).find("expected") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_source("x = -1"), SyntaxError);
  // Newlines inside brackets are joined, so this fails at end of input.
  CHECK_THROWS_AS(parse_source("def f(:\n    return 0\n"), SyntaxError);
  CHECK_THROWS_AS(parse_source("if x\n    y = 1\n"), SyntaxError);
}

TEST_CASE("parse: every fixture matches its golden tree and validates") {
  const auto names = fixture_names();
  CHECK(names.size() == 20);
  for (const auto& name : names) {
    CAPTURE(name);
    const TypedAstNode ast = parse_source(fixture(name));
    CHECK(validate_against_grammar(ast, asdl::minilang_grammar()).empty());
    const std::string stem = std::filesystem::path(name).stem().string();
    const std::string golden = read_file(source_path("tests/golden/ast/" + stem + ".json"));
    CHECK(export_ast(ast, asdl::minilang_grammar().primitive_types) + "\n" == golden);
  }
}

TEST_CASE("parse: span containment and terminal/leaf/primitive agreement") {
  const auto& g = asdl::minilang_grammar();
  for (const auto& name : fixture_names()) {
    CAPTURE(name);
    walk(parse_source(fixture(name)), [&](const TypedAstNode& n) {
      CHECK(n.span.known());
      for (const auto& c : n.children) CHECK(n.span.contains(c.node.span));
      const bool primitive = g.is_primitive(n.node_type) || n.node_type == "int" || n.node_type == "string";
      if (primitive) CHECK(n.is_leaf());
      if (!n.is_leaf()) CHECK_FALSE(primitive);
    });
  }
}

TEST_CASE("parse: generated programs conform to the grammar") {
  std::size_t n = 0;
  corpus::ClassificationOptions co;
  co.per_class = 25;
  for (const auto& e : corpus::gen_classification_corpus(3, co).examples) {
    CHECK(validate_against_grammar(parse_source(*e.source), asdl::minilang_grammar()).empty());
    ++n;
  }
  for (const auto& e : corpus::gen_operand_order_corpus(3, 50).examples) {
    CHECK(validate_against_grammar(parse_source(*e.source), asdl::minilang_grammar()).empty());
    ++n;
  }
  corpus::NamingOptions no;
  no.n = 50;
  for (const auto& e : corpus::gen_naming_corpus(3, no).examples) {
    CHECK(validate_against_grammar(parse_source(*e.source), asdl::minilang_grammar()).empty());
    ++n;
  }
  CHECK(n == 200);
}

TEST_CASE("validate_against_grammar: missing field and terminal with children") {
  TypedAstNode root = parse_source("if a:\n    b = 1\n");
  TypedAstNode no_test = root;
  auto& ifs = no_test.children[0].node;
  ifs.children.erase(ifs.children.begin());
  const auto d = validate_against_grammar(no_test, asdl::minilang_grammar());
  REQUIRE_FALSE(d.empty());
  CHECK(d[0].message.find("missing Single field") != std::string::npos);

  TypedAstNode bad_leaf = parse_source("b");
  auto& id = bad_leaf.children[0].node.children[0].node.children[0].node;
  REQUIRE(id.node_type == "identifier");
  id.children.push_back({"x", parse_source("c")});
  CHECK_FALSE(validate_against_grammar(bad_leaf, asdl::minilang_grammar()).empty());
}

TEST_CASE("external AST: a-b document equals the parsed tree") {
  const std::string doc = R"({"root":{"node_type":"mod","value":"Module","children":[{"label":"body","node":
    {"node_type":"stmt","value":"Expr","children":[{"label":"value","node":
    {"node_type":"expr","value":"BinOp","children":[
      {"label":"left","node":{"node_type":"expr","value":"Name","children":[{"label":"id","node":{"node_type":"identifier","value":"a","children":[]}}]}},
      {"label":"op","node":{"node_type":"operator","value":"Sub","children":[]}},
      {"label":"right","node":{"node_type":"expr","value":"Name","children":[{"label":"id","node":{"node_type":"identifier","value":"b","children":[]}}]}}
    ]}}]}}]}})";
  const ExternalAst ext = ingest_external_ast(doc, &asdl::minilang_grammar());
  CHECK(structurally_equal(ext.root, parse_source("a-b")));
}

TEST_CASE("external AST: two children under a Single field is rejected") {
  const std::string doc = R"({"root":{"node_type":"expr","value":"Name","children":[
      {"label":"id","node":{"node_type":"identifier","value":"a","children":[]}},
      {"label":"id","node":{"node_type":"identifier","value":"b","children":[]}}]}})";
  CHECK_THROWS_AS(ingest_external_ast(doc, &asdl::minilang_grammar()), Error);
  // Without a grammar the same document is accepted.
  CHECK_NOTHROW(ingest_external_ast(doc));
}

TEST_CASE("external AST: malformed documents") {
  CHECK_THROWS_AS(ingest_external_ast("{"), Error);
  CHECK_THROWS_AS(ingest_external_ast(R"({"root":{"value":"x","children":[]}})"), Error);
  CHECK_THROWS_AS(ingest_external_ast(R"({"root":{"node_type":"t","value":"x","children":[{"node":{}}]}})"), Error);
  CHECK_THROWS_AS(ingest_external_ast(R"([1,2])"), Error);
}

TEST_CASE("external AST: round trip of every fixture") {
  for (const auto& name : fixture_names()) {
    CAPTURE(name);
    const TypedAstNode ast = parse_source(fixture(name));
    const ExternalAst back = ingest_external_ast(export_ast(ast, asdl::minilang_grammar().primitive_types));
    CHECK(back.root == ast);
    CHECK(back.primitive_types == asdl::minilang_grammar().primitive_types);
  }
}

TEST_CASE("external AST: registries built on the fly") {
  const std::string doc = R"({"root":{"node_type":"Prog","value":"Prog","children":[
      {"label":"items","node":{"node_type":"Tok","value":"x","children":[]}},
      {"label":"items","node":{"node_type":"Call","value":"Call","children":[
        {"label":"callee","node":{"node_type":"Tok","value":"f","children":[]}}]}}]}})";
  const ExternalAst ext = ingest_external_ast(doc);
  const asdl::TypeRegistries r = registries_from_ast(ext);
  CHECK(r.node_types() == std::vector<std::string>{"Prog", "Tok", "Call", "subtoken"});
  CHECK(r.is_primitive(*r.node_type_id("Tok")));
  CHECK_FALSE(r.is_primitive(*r.node_type_id("Call")));
  CHECK(r.edge_types()[0] == "items");
  CHECK(r.edge_types()[1] == "callee");
  CHECK(r.forward_count() == 5);
}
