#include "hpgkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hpgkit/error.hpp"
#include "hpgkit/hpg.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/numeric.hpp"

namespace hpgkit::corpus {

using nlohmann::json;

std::vector<const Example*> Corpus::split(const std::string& name) const {
  std::vector<const Example*> out;
  for (const auto& e : examples) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

json to_json(const Example& e) {
  json j;
  j["id"] = e.id;
  if (e.source) j["source"] = *e.source;
  if (e.ast) j["ast"] = *e.ast;
  if (e.label) j["label"] = *e.label;
  if (e.target) j["target_subtokens"] = *e.target;
  j["split"] = e.split;
  return j;
}

Example example_from_json(const json& j) {
  if (!j.is_object()) throw Error("corpus record is not an object");
  Example e;
  try {
    e.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    if (j.contains("source")) e.source = j.at("source").get<std::string>();
    if (j.contains("ast")) e.ast = j.at("ast");
    if (j.contains("label")) e.label = j.at("label").get<int>();
    if (j.contains("target_subtokens")) e.target = j.at("target_subtokens").get<std::vector<std::string>>();
    e.split = j.at("split").get<std::string>();
  } catch (const json::exception& ex) {
    throw Error(std::string("malformed corpus record: ") + ex.what());
  }
  if (e.source.has_value() == e.ast.has_value())
    throw Error("corpus record '" + e.id + "' must have exactly one of 'source' or 'ast'");
  return e;
}

Corpus read_corpus(const std::string& path) {
  Corpus c;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(path)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      c.examples.push_back(example_from_json(json::parse(line)));
    } catch (const json::parse_error& ex) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  validate_corpus(c);
  return c;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& e : corpus.examples) out += to_json(e).dump() + "\n";
  return out;
}

void write_corpus(const std::string& path, const Corpus& corpus) { write_file_atomic(path, serialize_corpus(corpus)); }

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& e : corpus.examples) {
    if (e.split != "train" && e.split != "valid" && e.split != "test")
      throw Error("record '" + e.id + "' has unknown split '" + e.split + "'");
    if (!ids.insert(e.id).second) throw Error("duplicate record id '" + e.id + "'");
  }
}

namespace {

std::string pick(num::Rng& rng, const std::vector<std::string>& v) { return v[rng.index(v.size())]; }

std::string split_for(num::Rng& rng, const SplitFractions& f) {
  const double u = rng.uniform();
  if (u < f.test) return "test";
  if (u < f.test + f.valid) return "valid";
  return "train";
}

// Emits indented MiniLang lines.
class Writer {
 public:
  void line(int depth, const std::string& text) { out_ << std::string(static_cast<std::size_t>(depth) * 4, ' ') << text << "\n"; }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

const std::vector<std::string> kVars{"count", "total", "value", "item",  "index", "acc",   "step",  "limit",
                                     "data",  "buf",   "res",   "tmp",   "num",   "key",   "size",  "pos",
                                     "cur",   "prev",  "last",  "first", "score", "rate",  "delta", "width",
                                     "height", "sumVal", "maxLen", "rowIdx", "colIdx", "nodeId"};
const std::vector<std::string> kFuncs{"compute", "update", "process", "handle", "run",   "apply",
                                      "build",   "scan",   "measure", "reduce", "check", "render"};
const std::vector<std::string> kArith{"+", "-", "*", "/"};
const std::vector<std::string> kCmp{"<", ">", "==", "!="};

class ClassGen {
 public:
  explicit ClassGen(num::Rng& rng) : rng_(rng) {}

  std::string var() { return pick(rng_, kVars); }
  std::string atom() { return rng_.uniform() < 0.7 ? var() : std::to_string(rng_.index(10)); }

  std::string simple() {
    switch (rng_.index(4)) {
      case 0:
        return var() + " = " + atom() + " " + pick(rng_, kArith) + " " + atom();
      case 1:
        return "print(" + var() + ")";
      case 2: {
        const std::string v = var();
        return v + " = " + v + " + " + std::to_string(1 + rng_.index(3));
      }
      default:
        return var() + " = " + atom();
    }
  }

  std::string cond() { return var() + " " + pick(rng_, kCmp) + " " + atom(); }

  void simples(Writer& w, int depth, std::size_t lo, std::size_t hi) {
    const std::size_t n = lo + rng_.index(hi - lo + 1);
    for (std::size_t i = 0; i < n; ++i) w.line(depth, simple());
  }

  std::string loop_header() {
    if (rng_.uniform() < 0.5) return "for " + var() + " in " + var() + ":";
    return "while " + cond() + ":";
  }

  void header(Writer& w) {
    std::string args;
    const std::size_t n = rng_.index(3);
    for (std::size_t i = 0; i < n; ++i) args += (i ? ", " : "") + var();
    w.line(0, "def " + pick(rng_, kFuncs) + "(" + args + "):");
  }

  void maybe_return(Writer& w) {
    if (rng_.uniform() < 0.5) w.line(1, "return " + var());
  }

  std::string straight(bool lure) {
    Writer w;
    header(w);
    simples(w, 1, lure ? 0 : 2, lure ? 2 : 4);
    if (lure) {
      switch (rng_.index(3)) {
        case 0:  // one-armed if, two statements
          w.line(1, "if " + cond() + ":");
          w.line(2, simple());
          w.line(2, simple());
          simples(w, 1, 0, 1);
          maybe_return(w);
          break;
        case 1:  // dead loop on an int literal
          w.line(1, "while 0:");
          simples(w, 2, 1, 2);
          simples(w, 1, 0, 1);
          maybe_return(w);
          break;
        default:  // loop after a return
          w.line(1, "return " + var());
          w.line(1, loop_header());
          simples(w, 2, 1, 2);
          simples(w, 1, 0, 2);
          break;
      }
    } else {
      maybe_return(w);
    }
    return w.str();
  }

  std::string single_loop(bool lure) {
    Writer w;
    header(w);
    simples(w, 1, 0, 2);
    if (lure && rng_.uniform() < 0.5) {
      w.line(1, "while \"0\":");
      simples(w, 2, 1, 2);
      simples(w, 1, 0, 1);
      maybe_return(w);
    } else if (lure) {
      w.line(1, loop_header());
      simples(w, 2, 1, 2);
      w.line(1, "return " + var());
      simples(w, 1, 0, 2);
    } else {
      w.line(1, loop_header());
      simples(w, 2, 1, 3);
      simples(w, 1, 0, 2);
      maybe_return(w);
    }
    return w.str();
  }

  std::string nested_loop() {
    Writer w;
    header(w);
    simples(w, 1, 0, 2);
    w.line(1, loop_header());
    simples(w, 2, 0, 1);
    w.line(2, loop_header());
    simples(w, 3, 1, 2);
    simples(w, 2, 0, 1);
    simples(w, 1, 0, 1);
    maybe_return(w);
    return w.str();
  }

  std::string if_else(bool lure) {
    Writer w;
    header(w);
    if (lure) {
      // Mirrors the one-armed lure of the straight-line class.
      simples(w, 1, 0, 2);
      w.line(1, "if " + cond() + ":");
      w.line(2, simple());
      w.line(1, "else:");
      w.line(2, simple());
      simples(w, 1, 0, 1);
      maybe_return(w);
    } else {
      simples(w, 1, 0, 2);
      w.line(1, "if " + cond() + ":");
      simples(w, 2, 1, 2);
      w.line(1, "else:");
      simples(w, 2, 1, 2);
      simples(w, 1, 0, 2);
      maybe_return(w);
    }
    return w.str();
  }

 private:
  num::Rng& rng_;
};

}  // namespace

Corpus gen_classification_corpus(std::uint64_t seed, const ClassificationOptions& o) {
  num::Rng rng(seed);
  ClassGen g(rng);
  // Exact per-class split sizes, positions shuffled within each class.
  std::vector<std::vector<std::string>> splits(4);
  const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(o.per_class) * o.splits.test));
  const auto n_valid = static_cast<std::size_t>(std::lround(static_cast<double>(o.per_class) * o.splits.valid));
  for (auto& s : splits) {
    for (std::size_t i = 0; i < o.per_class; ++i)
      s.push_back(i < n_test ? "test" : i < n_test + n_valid ? "valid" : "train");
    rng.shuffle(s);
  }
  Corpus c;
  for (std::size_t i = 0; i < o.per_class; ++i) {
    for (int label = 0; label < 4; ++label) {
      const bool lure = rng.uniform() < o.lure_fraction;
      Example e;
      switch (label) {
        case 0:
          e.source = g.straight(lure);
          break;
        case 1:
          e.source = g.single_loop(lure);
          break;
        case 2:
          e.source = g.nested_loop();
          break;
        default:
          e.source = g.if_else(lure);
          break;
      }
      e.label = label;
      e.id = "cls-" + std::to_string(i * 4 + static_cast<std::size_t>(label));
      e.split = splits[static_cast<std::size_t>(label)][i];
      c.examples.push_back(std::move(e));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Operand order
// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kPoolA{"srcNode", "baseVal", "startIdx", "headPtr", "firstItem", "originPt",
                                      "lowMark", "inCount"};
const std::vector<std::string> kPoolB{"dstNode", "offsetVal", "stopIdx", "tailPtr", "secondItem", "targetPt",
                                      "highMark", "outCount"};
const std::vector<std::string> kKeyOps{"-", "/", "<", ">"};

void bare_returns(Writer& w, int depth, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) w.line(depth, "return");
}
}  // namespace

Corpus gen_operand_order_corpus(std::uint64_t seed, std::size_t n, SplitFractions splits) {
  num::Rng rng(seed);
  Corpus c;
  for (std::size_t pair = 0; pair < n / 2; ++pair) {
    const std::string a = pick(rng, kPoolA);
    const std::string b = pick(rng, kPoolB);
    const std::string op = pick(rng, kKeyOps);
    const std::size_t kind = rng.index(4);
    const std::size_t before = rng.index(3);
    const std::size_t after = rng.index(3);
    const std::size_t inner = 1 + rng.index(2);
    const std::string split = split_for(rng, splits);
    for (int label = 0; label < 2; ++label) {
      const std::string key = label == 0 ? a + " " + op + " " + b : b + " " + op + " " + a;
      Writer w;
      bare_returns(w, 0, before);
      switch (kind) {
        case 0:
          w.line(0, key);
          break;
        case 1:
          w.line(0, "return " + key);
          break;
        case 2:
          w.line(0, "if " + key + ":");
          bare_returns(w, 1, inner);
          w.line(0, "else:");
          bare_returns(w, 1, 1);
          break;
        default:
          w.line(0, "while " + key + ":");
          bare_returns(w, 1, inner);
          break;
      }
      bare_returns(w, 0, after);
      Example e;
      e.id = "ord-" + std::to_string(pair) + (label == 0 ? "a" : "b");
      e.source = w.str();
      e.label = label;
      e.split = split;
      c.examples.push_back(std::move(e));
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Naming
// ---------------------------------------------------------------------------

namespace {
const std::vector<std::string> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch"};
const std::vector<std::string> kVowels{"a", "e", "i", "o", "u"};

std::string pseudo_word(num::Rng& rng) {
  const std::size_t syllables = 2 + rng.index(2);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) w += pick(rng, kOnsets) + pick(rng, kVowels);
  return w;
}

struct Phrase {
  std::vector<std::string> words;
  std::string camel() const {
    std::string s = words[0];
    for (std::size_t i = 1; i < words.size(); ++i) {
      std::string w = words[i];
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      s += w;
    }
    return s;
  }
  std::string snake() const {
    std::string s = words[0];
    for (std::size_t i = 1; i < words.size(); ++i) s += "_" + words[i];
    return s;
  }
};

Phrase phrase(num::Rng& rng, std::set<std::string>& used) {
  Phrase p;
  const std::size_t n = 1 + rng.index(2);
  while (p.words.size() < n) {
    std::string w = pseudo_word(rng);
    const auto& tmpl = naming_template_words();
    if (std::find(tmpl.begin(), tmpl.end(), w) != tmpl.end() || used.count(w)) continue;
    used.insert(w);
    p.words.push_back(w);
  }
  return p;
}
}  // namespace

Corpus gen_naming_corpus(std::uint64_t seed, const NamingOptions& o) {
  num::Rng rng(seed);
  Corpus c;
  // Pseudo-words are never reused, so no body word reaches a vocabulary built
  // with a count threshold above one.
  std::set<std::string> used;
  for (std::size_t i = 0; i < o.n; ++i) {
    const std::size_t tmpl = rng.index(5);
    const Phrase x = phrase(rng, used);
    const Phrase y = phrase(rng, used);
    std::vector<std::string> params;
    if (o.distractors) {
      const std::size_t k = rng.index(3);
      for (std::size_t j = 0; j < k; ++j) params.push_back(phrase(rng, used).camel());
    }
    const bool x_param = rng.uniform() < 0.5;
    std::string name;
    std::vector<std::string> body;
    switch (tmpl) {
      case 0:
        name = "get_" + x.snake();
        body = {"return " + x.camel()};
        break;
      case 1:
        name = "add_" + x.snake() + "_" + y.snake();
        body = {"return " + x.camel() + " + " + y.camel()};
        break;
      case 2:
        name = "set_" + x.snake();
        params.insert(params.begin(), "value");
        body = {x.camel() + " = value"};
        break;
      case 3:
        name = "max_" + x.snake() + "_" + y.snake();
        body = {"if " + x.camel() + " > " + y.camel() + ":", "    return " + x.camel(), "else:",
                "    return " + y.camel()};
        break;
      default:
        name = "loop_" + x.snake();
        body = {"for item in " + x.camel() + ":", "    print(item)"};
        break;
    }
    if (x_param && tmpl != 2) params.insert(params.begin() + static_cast<std::ptrdiff_t>(rng.index(params.size() + 1)), x.camel());
    Writer w;
    std::string args;
    for (std::size_t j = 0; j < params.size(); ++j) args += (j ? ", " : "") + params[j];
    w.line(0, "def " + name + "(" + args + "):");
    for (const auto& l : body) w.line(1, l);
    Example e;
    e.id = "name-" + std::to_string(i);
    e.source = w.str();
    e.target = hpg::split_identifier(name);
    e.split = split_for(rng, o.splits);
    c.examples.push_back(std::move(e));
  }
  return c;
}

double oov_target_fraction(const Corpus& corpus, const std::string& split) {
  const auto& tmpl = naming_template_words();
  std::size_t total = 0, oov = 0;
  for (const auto& e : corpus.examples) {
    if (!e.target || (!split.empty() && e.split != split)) continue;
    for (const auto& w : *e.target) {
      ++total;
      if (std::find(tmpl.begin(), tmpl.end(), w) == tmpl.end()) ++oov;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(oov) / static_cast<double>(total);
}

}  // namespace hpgkit::corpus
