#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "hpgkit/asdl.hpp"
#include "hpgkit/ast.hpp"

namespace hpgkit::minilang {

enum class TokenKind { Name, Number, String, Operator, Keyword, Newline, Indent, Dedent, Eof };

const char* to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  int line = 0;  // 1-based
  int col = 0;   // 1-based
  int end_line = 0;
  int end_col = 0;  // one past the last character

  friend bool operator==(const Token& a, const Token& b) {
    return a.kind == b.kind && a.text == b.text && a.line == b.line && a.col == b.col;
  }
};

/// Splits MiniLang source into tokens. Indentation (spaces only) becomes
/// Indent/Dedent tokens; `#` comments and blank lines are dropped; newlines
/// inside parentheses are ignored.
std::vector<Token> tokenize(std::string_view source);

/// One token per line, `KIND text line:col`, used by golden files.
std::string format_tokens(const std::vector<Token>& tokens);

/// Parses MiniLang source into a TypedAst rooted at `mod`. Node types,
/// constructor names and field labels are taken from `grammar`, which must
/// define the MiniLang constructors.
TypedAstNode parse_source(std::string_view source, const asdl::AsdlGrammar& grammar);

/// Convenience overload using the bundled grammar.
TypedAstNode parse_source(std::string_view source);

}  // namespace hpgkit::minilang
