#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace hpgkit::corpus {

/// One corpus record. Exactly one of `source` / `ast` is set; classification
/// records carry `label`, naming records `target`.
struct Example {
  std::string id;
  std::optional<std::string> source;
  std::optional<nlohmann::json> ast;
  std::optional<int> label;
  std::optional<std::vector<std::string>> target;
  std::string split;  // train | valid | test
};

struct Corpus {
  std::vector<Example> examples;

  std::vector<const Example*> split(const std::string& name) const;
};

nlohmann::json to_json(const Example& e);
Example example_from_json(const nlohmann::json& j);

/// Line-delimited records; blank lines are skipped.
Corpus read_corpus(const std::string& path);
std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const std::string& path, const Corpus& corpus);

/// Checks split tags and that ids are unique.
void validate_corpus(const Corpus& corpus);

struct SplitFractions {
  double valid = 0.1;
  double test = 0.2;
};

/// Four structural classes of function: 0 straight-line (no live loop, no
/// else branch), 1 single loop, 2 nested loop, 3 conditional with else.
///
/// Besides the plain forms the generator mixes in look-alikes that only the
/// graph's typing or sibling order tells apart:
///  - a one-armed `if` with a two-statement body (class 0) beside an
///    `if`/`else` with one statement per arm (class 3);
///  - `while 0:` (int literal, falsy, never runs; class 0) beside `while "0":`
///    (non-empty string, truthy; class 1);
///  - a loop placed after a `return` (unreachable; class 0) beside a loop
///    placed before it (class 1).
/// Split sizes are exact per class.
struct ClassificationOptions {
  std::size_t per_class = 600;
  double lure_fraction = 0.3;
  SplitFractions splits;
};
Corpus gen_classification_corpus(std::uint64_t seed, const ClassificationOptions& options = {});

/// Twin pairs differing only in operand order of one key expression. Label 0
/// when the operand drawn from the first identifier pool comes first. Both
/// twins of a pair share a split.
Corpus gen_operand_order_corpus(std::uint64_t seed, std::size_t n, SplitFractions splits = {});

/// Functions whose name follows from the body: get_X, add_X_Y, set_X, max_X_Y,
/// loop_X. X and Y are fresh pseudo-words, so most target subtokens only occur
/// in the body. `distractors` adds unused parameters.
struct NamingOptions {
  std::size_t n = 1000;
  bool distractors = true;
  SplitFractions splits;
};
Corpus gen_naming_corpus(std::uint64_t seed, const NamingOptions& options = {});

inline const std::vector<std::string>& naming_template_words() {
  static const std::vector<std::string> words{"get", "add", "set", "max", "loop"};
  return words;
}

/// Fraction of target subtokens (over the given split, or all when empty)
/// that are not template words.
double oov_target_fraction(const Corpus& corpus, const std::string& split = "");

}  // namespace hpgkit::corpus
