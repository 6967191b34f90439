#include "hpgkit/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "hpgkit/asdl.hpp"
#include "hpgkit/corpus.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/heads.hpp"
#include "hpgkit/hgt.hpp"
#include "hpgkit/hpg.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/minilang.hpp"

namespace hpgkit::suite {

namespace fs = std::filesystem;
using num::Tensor;
using num::Var;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

Var rand_var(num::Rng& rng, num::Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data) x = rng.uniform(-scale, scale);
  return num::parameter(std::move(t));
}

Tensor rand_tensor(num::Rng& rng, num::Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data) x = rng.uniform(-scale, scale);
  return t;
}

// Weighted sum with fixed random weights, so no op's output is reduced to a
// constant.
Var probe(const Var& y, const Tensor& w) { return num::sum(num::mul(y, num::constant(w))); }

std::shared_ptr<const asdl::TypeRegistries> minilang_registries() {
  static const auto reg =
      std::make_shared<const asdl::TypeRegistries>(asdl::build_registries(asdl::minilang_grammar()));
  return reg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

GradcheckReport run_gradcheck_suite(std::uint64_t seed, int op_seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport rep;
  auto add = [&](num::GradcheckResult r) {
    rep.max_rel_error = std::max(rep.max_rel_error, r.max_rel_error);
    rep.passed = rep.passed && r.passed;
    rep.results.push_back(std::move(r));
  };
  using Fn = std::function<Var()>;
  for (int s = 0; s < op_seeds; ++s) {
    num::Rng rng(train::derive_seed(seed, static_cast<std::uint64_t>(100 + s)));
    const std::string tag = "[" + std::to_string(s) + "]";
    auto check = [&](const std::string& name, const std::vector<Var>& inputs, num::Shape out_shape, Fn f) {
      Tensor w = rand_tensor(rng, std::move(out_shape));
      add(num::gradcheck(name + tag, [f, w] { return probe(f(), w); }, inputs));
    };
    Var a = rand_var(rng, {3, 4}), b = rand_var(rng, {4, 2}), c = rand_var(rng, {3, 4});
    Var row = rand_var(rng, {4}), col = rand_var(rng, {3, 1});
    check("matmul", {a, b}, {3, 2}, [=] { return num::matmul(a, b); });
    check("add", {a, c}, {3, 4}, [=] { return num::add(a, c); });
    check("sub", {a, c}, {3, 4}, [=] { return num::sub(a, c); });
    check("mul", {a, c}, {3, 4}, [=] { return num::mul(a, c); });
    check("scale", {a}, {3, 4}, [=] { return num::scale(a, -1.7); });
    check("affine", {a}, {3, 4}, [=] { return num::affine(a, 0.3, 2.0); });
    check("add_row", {a, row}, {3, 4}, [=] { return num::add_row(a, row); });
    check("mul_col", {a, col}, {3, 4}, [=] { return num::mul_col(a, col); });
    check("concat0", {a, c}, {6, 4}, [=] { return num::concat({a, c}, 0); });
    check("concat1", {a, c}, {3, 8}, [=] { return num::concat({a, c}, 1); });
    check("slice0", {a}, {2, 4}, [=] { return num::slice(a, 0, 1, 3); });
    check("slice1", {a}, {3, 2}, [=] { return num::slice(a, 1, 1, 3); });
    check("transpose", {a}, {4, 3}, [=] { return num::transpose(a); });
    check("gather_rows", {a}, {4, 4}, [=] { return num::gather_rows(a, {2, 0, 2, 1}); });
    check("scatter_add_rows", {a}, {2, 4}, [=] { return num::scatter_add_rows(a, {1, 0, 1}, 2); });
    check("sigmoid", {a}, {3, 4}, [=] { return num::sigmoid(a); });
    check("gelu", {a}, {3, 4}, [=] { return num::gelu(a); });
    check("softmax_rows", {a}, {3, 4}, [=] { return num::softmax_rows(a); });
    Var sc = rand_var(rng, {5, 2}, 2.0);
    const std::vector<int> seg{0, 1, 0, 2, 1};
    check("segment_softmax", {sc}, {5, 2}, [=] { return num::segment_softmax(sc, seg, 3); });
    {
      Var out = num::segment_softmax(sc, seg, 3);
      for (std::size_t h = 0; h < 2; ++h) {
        std::vector<double> sums(3, 0.0);
        for (std::size_t r = 0; r < 5; ++r) sums[static_cast<std::size_t>(seg[r])] += out->value(r, h);
        for (double v : sums) rep.max_softmax_deviation = std::max(rep.max_softmax_deviation, std::abs(v - 1.0));
      }
    }
    const std::uint64_t dseed = rng.next();
    check("dropout", {a}, {3, 4}, [=] {
      num::Rng r(dseed);
      return num::dropout(a, 0.4, true, r);
    });
    Var g = rand_var(rng, {4}), be = rand_var(rng, {4});
    check("layer_norm", {a, g, be}, {3, 4}, [=] { return num::layer_norm(a, g, be); });
    add(num::gradcheck("sum" + tag, [=] { return num::sum(num::mul(a, a)); }, {a}));
    add(num::gradcheck("mean" + tag, [=] { return num::mean(num::mul(a, c)); }, {a, c}));
    add(num::gradcheck("cross_entropy" + tag, [=] { return num::cross_entropy(a, {1, 3, 0}); }, {a}));
    Var pr = rand_var(rng, {3, 4});
    add(num::gradcheck("nll_prob" + tag, [=] { return num::nll_prob(num::softmax_rows(pr), {2, 0, 1}); }, {pr}));
    Var tw = rand_var(rng, {2, 4, 3}), tb = rand_var(rng, {2, 3});
    check("typed_linear", {a, tw, tb}, {3, 3}, [=] { return num::typed_linear(a, {1, 0, 1}, tw, tb); });
    Var bw = rand_var(rng, {3, 2, 2});
    check("typed_block_matmul", {a, bw}, {3, 4}, [=] { return num::typed_block_matmul(a, {2, 0, 1}, bw, 2); });
    check("head_dot", {a, c}, {3, 2}, [=] { return num::head_dot(a, c, 2); });
    Var al = rand_var(rng, {3, 2});
    check("head_scale", {al, a}, {3, 4}, [=] { return num::head_scale(al, a, 2); });
  }

  // End-to-end: 2-layer HGT on generated programs with pooling + classifier,
  // and with the pointer decoder.
  {
    num::Rng rng(train::derive_seed(seed, 200));
    const auto reg = minilang_registries();
    std::vector<hpg::Hpg> graphs;
    for (const char* src : {"def f(aB, c):\n    while aB < c:\n        aB = aB + \"s\"\n    return aB\n",
                            "x_y = 1\nif x_y > 2:\n    print(x_y)\nelse:\n    z = 3\n"}) {
      graphs.push_back(hpg::build_graph(minilang::parse_source(src), reg));
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& g : graphs) {
      for (const auto& n : g.nodes) ++counts[n.value];
    }
    const Vocab vocab = Vocab::build(counts, 1, {kUnk});
    model::HgtConfig cfg{2, 2, 8, 8, 0.0, static_cast<int>(vocab.size()), 1 << 20};
    num::ParamStore store;
    model::HgtParams enc = model::init_hgt_params(store, cfg, reg->node_type_count(), reg->edge_type_count(), rng);
    model::ClassifierConfig ccfg;
    ccfg.classes = 3;
    model::ClassifierParams cls = model::init_classifier(store, ccfg, 8, rng);
    // Non-trivial mu so its gradient path is exercised away from 1.
    for (const auto& l : enc.layers) {
      for (auto& x : l.mu->value.data) x = rng.uniform(0.5, 1.5);
    }
    const model::GraphBatch batch = model::make_batch({&graphs[0], &graphs[1]}, vocab);
    auto cls_loss = [&] {
      num::Rng r(1);
      model::Encoded e = model::encode(batch, enc, cfg, false, r);
      return num::cross_entropy(model::classify(model::global_attention_pool(e.states, batch, cls.pool), cls), {2, 0});
    };
    add(num::gradcheck("hgt+pool+classifier", cls_loss, store.params(), 24));

    num::ParamStore dstore;
    model::HgtParams denc = model::init_hgt_params(dstore, cfg, reg->node_type_count(), reg->edge_type_count(), rng);
    model::DecoderConfig dcfg{2, 2, 8, 16, 4};
    const Vocab out_vocab({kUnk, kBos, kEos, "f", "get"});
    model::DecoderParams dec = model::init_decoder(dstore, dcfg, out_vocab.size(), rng);
    auto dec_loss = [&] {
      num::Rng r(1);
      model::Encoded e = model::encode(batch, denc, cfg, false, r);
      model::DecoderMemory mem;
      mem.states = num::gather_rows(e.states, e.subtoken_nodes[0]);
      for (int id : e.subtoken_nodes[0]) mem.values.push_back(batch.value[static_cast<std::size_t>(id)]);
      model::ExtendedVocab ext = model::extend_vocab(out_vocab, mem.values);
      model::TeacherForcing tf = model::teacher_forcing({"get", "a", "c"}, out_vocab, ext, true);
      return num::nll_prob(model::decode_step(dec, dcfg, out_vocab, mem, tf.inputs, true, false, 0.0, r, tf.words).prob,
                           tf.targets);
    };
    add(num::gradcheck("hgt+pointer-decoder", dec_loss, dstore.params(), 24));
  }
  rep.passed = rep.passed && rep.max_softmax_deviation <= 1e-6;
  rep.seconds = seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Graph invariants
// ---------------------------------------------------------------------------

std::size_t check_graph(const hpg::Hpg& g, const std::string& tag, std::vector<std::string>& failures) {
  const auto& reg = *g.registries;
  std::size_t checks = 0;
  auto fail = [&](const std::string& what) { failures.push_back(tag + ": " + what); };

  // Reverse-edge perfect matching.
  ++checks;
  {
    std::multiset<std::tuple<int, int, int>> fwd, rev;
    for (const auto& e : g.edges) {
      if (e.src < 0 || e.dst < 0 || static_cast<std::size_t>(e.src) >= g.nodes.size() ||
          static_cast<std::size_t>(e.dst) >= g.nodes.size()) {
        fail("edge endpoint out of range");
        continue;
      }
      if (reg.is_forward(e.type_id)) {
        fwd.insert({e.src, e.dst, e.type_id});
      } else {
        rev.insert({e.dst, e.src, reg.reverse(e.type_id)});
      }
    }
    if (fwd != rev) fail("reverse edges are not a perfect matching of forward edges");
  }

  // NextToken: one simple path through exactly the terminals.
  ++checks;
  {
    std::vector<int> terminals;
    for (int i = 0; i < g.ast_node_count; ++i) {
      const auto& n = g.nodes[static_cast<std::size_t>(i)];
      if (reg.is_primitive(n.type_id)) terminals.push_back(i);
    }
    std::map<int, int> next, indeg;
    bool ok = true;
    for (const auto& e : g.edges) {
      if (e.type_id != reg.next_token()) continue;
      if (next.count(e.src)) ok = false;
      next[e.src] = e.dst;
      ++indeg[e.dst];
    }
    const std::set<int> term_set(terminals.begin(), terminals.end());
    for (const auto& [s, d] : next) ok = ok && term_set.count(s) && term_set.count(d);
    for (const auto& [v, k] : indeg) ok = ok && k == 1;
    if (terminals.size() <= 1) {
      ok = ok && next.empty();
    } else {
      ok = ok && next.size() == terminals.size() - 1;
      int start = -1;
      for (int t : terminals) {
        if (!indeg.count(t)) {
          if (start >= 0) ok = false;
          start = t;
        }
      }
      std::size_t visited = 0;
      std::set<int> seen;
      for (int v = start; v >= 0 && seen.insert(v).second;) {
        ++visited;
        auto it = next.find(v);
        v = it == next.end() ? -1 : it->second;
      }
      ok = ok && visited == terminals.size();
    }
    if (!ok) fail("NextToken edges do not form one simple path over the terminals");
  }

  // AST timestamps are a permutation of 0..A-1.
  ++checks;
  {
    std::vector<bool> hit(static_cast<std::size_t>(g.ast_node_count), false);
    bool ok = true;
    for (int i = 0; i < g.ast_node_count; ++i) {
      const auto t = g.nodes[static_cast<std::size_t>(i)].timestamp;
      if (t < 0 || t >= g.ast_node_count || hit[static_cast<std::size_t>(t)]) {
        ok = false;
        break;
      }
      hit[static_cast<std::size_t>(t)] = true;
    }
    if (!ok) fail("AST timestamps are not a permutation of 0..A-1");
  }

  // Type ids inside the registry.
  ++checks;
  for (const auto& n : g.nodes) {
    if (n.type_id < 0 || static_cast<std::size_t>(n.type_id) >= reg.node_type_count()) {
      fail("node type id outside the registry");
      break;
    }
  }
  return checks;
}

namespace {

std::vector<std::string> generated_programs(std::uint64_t seed, std::size_t n) {
  std::vector<std::string> out;
  corpus::ClassificationOptions co;
  co.per_class = (n * 6 / 10 + 3) / 4;
  for (const auto& e : corpus::gen_classification_corpus(train::derive_seed(seed, 10), co).examples)
    out.push_back(*e.source);
  for (const auto& e : corpus::gen_operand_order_corpus(train::derive_seed(seed, 11), n / 5 + 1).examples)
    out.push_back(*e.source);
  corpus::NamingOptions no;
  no.n = n / 5 + 1;
  for (const auto& e : corpus::gen_naming_corpus(train::derive_seed(seed, 12), no).examples)
    out.push_back(*e.source);
  out.resize(std::min(out.size(), n));
  return out;
}

}  // namespace

InvariantReport run_invariant_suite(std::uint64_t seed, std::size_t programs) {
  InvariantReport rep;
  const auto reg = minilang_registries();
  const auto& grammar = asdl::minilang_grammar();
  const auto sources = generated_programs(seed, programs);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string tag = "program " + std::to_string(i);
    ++rep.programs;
    try {
      const TypedAstNode ast = minilang::parse_source(sources[i]);
      ++rep.checks;
      if (!validate_against_grammar(ast, grammar).empty()) rep.failures.push_back(tag + ": grammar conformance");
      std::size_t sub[2] = {0, 0};
      int k = 0;
      for (auto scheme : {hpg::SubtokenScheme::Shared, hpg::SubtokenScheme::Independent}) {
        hpg::BuildOptions o;
        o.scheme = scheme;
        const hpg::Hpg g = hpg::build_graph(ast, reg, o);
        rep.checks += check_graph(g, tag + " (" + hpg::to_string(scheme) + ")", rep.failures);
        sub[k++] = g.nodes.size() - static_cast<std::size_t>(g.ast_node_count);
      }
      ++rep.checks;
      if (sub[0] > sub[1]) rep.failures.push_back(tag + ": shared subtoken count exceeds independent");
    } catch (const std::exception& e) {
      rep.failures.push_back(tag + ": " + e.what());
    }
  }
  if (rep.programs < programs) rep.failures.push_back("generators produced fewer programs than requested");
  return rep;
}

// ---------------------------------------------------------------------------
// Selftest artifacts
// ---------------------------------------------------------------------------

std::vector<std::string> write_selftest_artifacts(std::uint64_t seed, const std::string& out_dir) {
  std::vector<std::string> written;
  fs::create_directories(fs::path(out_dir) / "graphs");
  const auto reg = minilang_registries();
  const auto sources = generated_programs(seed, 24);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const TypedAstNode ast = minilang::parse_source(sources[i]);
    for (auto scheme : {hpg::SubtokenScheme::None, hpg::SubtokenScheme::Shared, hpg::SubtokenScheme::Independent}) {
      hpg::BuildOptions o;
      o.scheme = scheme;
      const hpg::Hpg g = hpg::build_graph(ast, reg, o);
      const std::string base = (fs::path(out_dir) / "graphs" / ("p" + std::to_string(i))).string();
      write_file_atomic(base + "." + hpg::to_string(scheme) + ".hpg", hpg::canonical_serialize(g));
      written.push_back(base + "." + hpg::to_string(scheme) + ".hpg");
      if (scheme == hpg::SubtokenScheme::Shared) {
        write_file_atomic(base + ".erased.hpg", hpg::canonical_serialize(hpg::erase_types(g, true, true)));
        written.push_back(base + ".erased.hpg");
      }
    }
  }

  train::TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.optimizer.lr = 1e-3;
  cfg.encoder = {2, 2, 16, 32, 0.1, 0, 1 << 20};
  cfg.decoder = {1, 2, 16, 32, 6};
  corpus::ClassificationOptions co;
  co.per_class = 10;
  train::TrainOptions opt;
  opt.metrics_path = (fs::path(out_dir) / "metrics_classification.jsonl").string();
  train::train_classification(corpus::gen_classification_corpus(train::derive_seed(seed, 20), co), cfg, opt);
  written.push_back(opt.metrics_path);

  corpus::NamingOptions no;
  no.n = 40;
  opt.metrics_path = (fs::path(out_dir) / "metrics_naming.jsonl").string();
  train::train_naming(corpus::gen_naming_corpus(train::derive_seed(seed, 21), no), cfg, opt);
  written.push_back(opt.metrics_path);
  return written;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

train::TrainConfig operand_order_config(std::uint64_t seed) {
  train::TrainConfig c;
  c.seed = seed;
  c.epochs = 12;
  c.batch_size = 16;
  c.optimizer.lr = 1e-3;
  return c;
}

train::TrainConfig classification_config(std::uint64_t seed) {
  train::TrainConfig c;
  c.seed = seed;
  c.epochs = 12;
  c.batch_size = 16;
  c.optimizer.lr = 1e-3;
  return c;
}

train::TrainConfig naming_config(std::uint64_t seed) {
  train::TrainConfig c;
  c.seed = seed;
  c.epochs = 30;
  c.batch_size = 16;
  c.optimizer.lr = 1e-3;
  return c;
}

namespace {

struct RunOutcome {
  double test_metric = 0.0;
  double seconds = 0.0;
  train::TrainResult result;
};

RunOutcome timed_run(const std::function<train::TrainResult()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome o;
  o.result = f();
  o.seconds = seconds_since(t0);
  o.test_metric = o.result.test.metric;
  return o;
}

void say(const SuiteOptions& o, const std::string& msg) {
  if (o.log) o.log(msg);
}

corpus::Corpus operand_corpus(std::uint64_t seed) {
  return corpus::gen_operand_order_corpus(train::derive_seed(seed, 30), 1000);
}

corpus::Corpus classification_corpus(std::uint64_t seed) {
  return corpus::gen_classification_corpus(train::derive_seed(seed, 31));
}

corpus::Corpus naming_corpus(std::uint64_t seed) {
  corpus::NamingOptions no;
  no.n = 1200;
  return corpus::gen_naming_corpus(train::derive_seed(seed, 32), no);
}

CriterionResult ambiguity(const SuiteOptions& o) {
  CriterionResult r{1, "ambiguity: erased twins identical, typed twins differ", false, "", 0};
  const corpus::Corpus c = corpus::gen_operand_order_corpus(train::derive_seed(o.seed, 1), 600);
  const auto reg = minilang_registries();
  std::size_t pairs = 0, bad = 0;
  for (std::size_t i = 0; i + 1 < c.examples.size(); i += 2) {
    const hpg::Hpg a = hpg::build_graph(minilang::parse_source(*c.examples[i].source), reg);
    const hpg::Hpg b = hpg::build_graph(minilang::parse_source(*c.examples[i + 1].source), reg);
    const bool typed_differ = hpg::canonical_serialize(a) != hpg::canonical_serialize(b);
    const bool erased_equal = hpg::canonical_serialize(hpg::erase_types(a, true, true)) ==
                              hpg::canonical_serialize(hpg::erase_types(b, true, true));
    ++pairs;
    if (!typed_differ || !erased_equal) ++bad;
  }
  r.passed = pairs >= 200 && bad == 0;
  r.detail = std::to_string(pairs) + " pairs, " + std::to_string(bad) + " violations";
  return r;
}

CriterionResult edge_type_ablation(const SuiteOptions& o) {
  CriterionResult r{2, "edge-type ablation on operand order", false, "", 0};
  double sum_full = 0.0;
  bool erased_exact = true, twins_identical = true, time_ok = true;
  std::ostringstream d;
  for (auto seed : o.seeds) {
    const corpus::Corpus c = operand_corpus(seed);
    train::TrainConfig full = operand_order_config(seed);
    RunOutcome f = timed_run([&] { return train::train_classification(c, full); });
    train::TrainConfig erased = full;
    erased.ablation.erase_node_types = erased.ablation.erase_edge_types = true;
    const train::Prepared prep = train::prepare(c, erased, train::Task::Classification);
    RunOutcome e = timed_run([&] { return train::train_model(prep, erased, train::Task::Classification); });
    // Twins are adjacent in the test split.
    const auto& logits = e.result.test.logits;
    for (std::size_t i = 0; i + 1 < prep.test.size(); i += 2) {
      if (logits[i] != logits[i + 1]) twins_identical = false;
    }
    sum_full += f.test_metric;
    erased_exact = erased_exact && e.test_metric == 0.5;
    time_ok = time_ok && f.seconds <= 600.0;
    d << "seed " << seed << ": typed " << fmt(f.test_metric) << " (" << fmt(f.seconds, 0) << "s), erased "
      << fmt(e.test_metric) << "; ";
    say(o, "criterion 2 seed " + std::to_string(seed) + ": typed " + fmt(f.test_metric) + " erased " +
               fmt(e.test_metric));
  }
  const double mean_full = sum_full / static_cast<double>(o.seeds.size());
  r.passed = erased_exact && twins_identical && time_ok && mean_full >= 0.95;
  d << "mean typed " << fmt(mean_full) << (twins_identical ? ", twin logits identical" : ", twin logits differ");
  r.detail = d.str();
  return r;
}

struct ClassificationRuns {
  std::vector<double> full, erase_nodes, erase_edges, no_sib, no_token;
  bool done = false;
};

ClassificationRuns& classification_runs(const SuiteOptions& o) {
  static ClassificationRuns runs;
  if (runs.done) return runs;
  for (auto seed : o.seeds) {
    const corpus::Corpus c = classification_corpus(seed);
    auto run = [&](const char* name, const std::function<void(train::TrainConfig&)>& tweak) {
      train::TrainConfig cfg = classification_config(seed);
      tweak(cfg);
      const double acc = train::train_classification(c, cfg).test.metric;
      say(o, std::string("classification seed ") + std::to_string(seed) + " " + name + ": " + fmt(acc));
      return acc;
    };
    runs.full.push_back(run("full", [](auto&) {}));
    runs.erase_nodes.push_back(run("erase-node-types", [](auto& c) { c.ablation.erase_node_types = true; }));
    runs.erase_edges.push_back(run("erase-edge-types", [](auto& c) { c.ablation.erase_edge_types = true; }));
    runs.no_sib.push_back(run("no-nextsib", [](auto& c) { c.ablation.no_next_sib = true; }));
    runs.no_token.push_back(run("no-nexttoken", [](auto& c) { c.ablation.no_next_token = true; }));
  }
  runs.done = true;
  return runs;
}

std::string series(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "/" : "") + fmt(v[i]);
  return s;
}

std::size_t strictly_lower(const std::vector<double>& ablated, const std::vector<double>& full) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < full.size(); ++i) n += ablated[i] < full[i] ? 1 : 0;
  return n;
}

CriterionResult heterogeneity_ablation(const SuiteOptions& o) {
  CriterionResult r{3, "heterogeneity ablation on classification", false, "", 0};
  const auto& runs = classification_runs(o);
  bool full_ok = true;
  for (double a : runs.full) full_ok = full_ok && a >= 0.95;
  const std::size_t ln = strictly_lower(runs.erase_nodes, runs.full);
  const std::size_t le = strictly_lower(runs.erase_edges, runs.full);
  r.passed = full_ok && ln >= 2 && le >= 2;
  r.detail = "full " + series(runs.full) + "; erase-nodes " + series(runs.erase_nodes) + " (lower on " +
             std::to_string(ln) + "); erase-edges " + series(runs.erase_edges) + " (lower on " + std::to_string(le) +
             ")";
  return r;
}

CriterionResult crafted_edge_ablation(const SuiteOptions& o) {
  CriterionResult r{4, "crafted-edge ablation on classification", false, "", 0};
  const auto& runs = classification_runs(o);
  auto within = [&](const std::vector<double>& ab) {
    for (std::size_t i = 0; i < ab.size(); ++i) {
      if (ab[i] > runs.full[i] + 0.01) return false;
    }
    return true;
  };
  const std::size_t ls = strictly_lower(runs.no_sib, runs.full);
  const std::size_t lt = strictly_lower(runs.no_token, runs.full);
  r.passed = within(runs.no_sib) && within(runs.no_token) && ls >= 2 && lt >= 2;
  r.detail = "full " + series(runs.full) + "; no-nextsib " + series(runs.no_sib) + " (lower on " +
             std::to_string(ls) + "); no-nexttoken " + series(runs.no_token) + " (lower on " + std::to_string(lt) +
             ")";
  return r;
}

struct NamingRuns {
  std::vector<double> full, no_copy, all_nodes, full_seconds;
  double oov = 0.0;
  bool done = false;
};

NamingRuns& naming_runs(const SuiteOptions& o) {
  static NamingRuns runs;
  if (runs.done) return runs;
  double oov = 1.0;
  for (auto seed : o.seeds) {
    const corpus::Corpus c = naming_corpus(seed);
    oov = std::min(oov, corpus::oov_target_fraction(c, "test"));
    auto run = [&](const char* name, const std::function<void(train::TrainConfig&)>& tweak, double* secs) {
      train::TrainConfig cfg = naming_config(seed);
      tweak(cfg);
      RunOutcome out = timed_run([&] { return train::train_naming(c, cfg); });
      if (secs) *secs = out.seconds;
      say(o, std::string("naming seed ") + std::to_string(seed) + " " + name + ": F1 " + fmt(out.test_metric) + " (" +
                 fmt(out.seconds, 0) + "s)");
      return out.test_metric;
    };
    double secs = 0.0;
    runs.full.push_back(run("full", [](auto&) {}, &secs));
    runs.full_seconds.push_back(secs);
    runs.no_copy.push_back(run("no-copy", [](auto& c) { c.ablation.no_copy = true; }, nullptr));
    runs.all_nodes.push_back(run("decode-all-nodes", [](auto& c) { c.ablation.decode_all_nodes = true; }, nullptr));
  }
  runs.oov = oov;
  runs.done = true;
  return runs;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

CriterionResult pointer_necessity(const SuiteOptions& o) {
  CriterionResult r{5, "pointer necessity on naming", false, "", 0};
  const auto& runs = naming_runs(o);
  bool time_ok = true;
  for (double s : runs.full_seconds) time_ok = time_ok && s <= 900.0;
  const double f = mean(runs.full), nc = mean(runs.no_copy);
  r.passed = runs.oov >= 0.5 && time_ok && f >= 0.80 && f - nc >= 0.15;
  r.detail = "OOV " + fmt(runs.oov) + "; full F1 " + series(runs.full) + " (mean " + fmt(f) + "); no-copy " +
             series(runs.no_copy) + " (mean " + fmt(nc) + ")";
  return r;
}

CriterionResult decoding_strategy(const SuiteOptions& o) {
  CriterionResult r{6, "decode over all nodes vs subtoken nodes", false, "", 0};
  const auto& runs = naming_runs(o);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < runs.full.size(); ++i) ok += runs.all_nodes[i] <= runs.full[i] ? 1 : 0;
  r.passed = ok >= 2;
  r.detail = "subtoken " + series(runs.full) + "; all-nodes " + series(runs.all_nodes) + " (not higher on " +
             std::to_string(ok) + ")";
  return r;
}

CriterionResult metric_oracle(const SuiteOptions&) {
  CriterionResult r{7, "subtoken P/R/F1 worked example", false, "", 0};
  const model::Prf p = model::subtoken_prf({"train", "model"}, {"train", "graph", "model"});
  r.passed = p.precision == 1.0 && std::abs(p.recall - 2.0 / 3.0) <= 1e-9 && std::abs(p.f1 - 0.8) <= 1e-9 &&
             std::abs(p.recall - 0.6667) <= 1e-4;
  r.detail = "P " + fmt(p.precision, 10) + " R " + fmt(p.recall, 10) + " F1 " + fmt(p.f1, 10);
  return r;
}

CriterionResult numeric_suite(const SuiteOptions& o) {
  CriterionResult r{8, "finite-difference gradient suite", false, "", 0};
  const GradcheckReport g = run_gradcheck_suite(o.seed);
  std::string worst;
  for (const auto& x : g.results) {
    if (!x.passed) worst += " " + x.name;
  }
  r.passed = g.passed && g.max_rel_error < 1e-4 && g.seconds < 120.0;
  r.detail = std::to_string(g.results.size()) + " checks, max rel error " + sci(g.max_rel_error) +
             ", max segment-sum deviation " + sci(g.max_softmax_deviation) + ", " +
             fmt(g.seconds, 1) + "s" + (worst.empty() ? "" : ", failing:" + worst);
  return r;
}

CriterionResult invariant_suite(const SuiteOptions& o) {
  CriterionResult r{9, "graph invariants over 1000 programs", false, "", 0};
  const InvariantReport rep = run_invariant_suite(o.seed, 1000);
  r.passed = rep.programs == 1000 && rep.failures.empty();
  r.detail = std::to_string(rep.programs) + " programs, " + std::to_string(rep.checks) + " checks, " +
             std::to_string(rep.failures.size()) + " failures" +
             (rep.failures.empty() ? "" : " (first: " + rep.failures.front() + ")");
  return r;
}

CriterionResult determinism(const SuiteOptions& o) {
  CriterionResult r{10, "selftest determinism", false, "", 0};
  if (o.cli_path.empty()) {
    r.detail = "no CLI binary configured";
    return r;
  }
  const fs::path base = fs::path(o.work_dir) / "determinism";
  fs::remove_all(base);
  std::vector<std::map<std::string, std::string>> snapshots;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = base / ("run" + std::to_string(run));
    const std::string cmd = "\"" + o.cli_path + "\" selftest --seed " + std::to_string(o.seed) + " --out \"" +
                            dir.string() + "\" > \"" + (base / ("run" + std::to_string(run) + ".log")).string() +
                            "\" 2>&1";
    fs::create_directories(base);
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      r.detail = "selftest run " + std::to_string(run) + " exited with status " + std::to_string(rc);
      return r;
    }
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
    }
    snapshots.push_back(std::move(files));
  }
  std::size_t metrics = 0, graphs = 0;
  for (const auto& [name, _] : snapshots[0]) {
    metrics += name.find("metrics") != std::string::npos ? 1 : 0;
    graphs += name.find(".hpg") != std::string::npos ? 1 : 0;
  }
  r.passed = snapshots[0] == snapshots[1] && metrics >= 1 && graphs >= 1;
  r.detail = std::to_string(snapshots[0].size()) + " files (" + std::to_string(metrics) + " metrics logs, " +
             std::to_string(graphs) + " graph dumps), " + (snapshots[0] == snapshots[1] ? "identical" : "DIFFERENT");
  return r;
}

}  // namespace

CriterionResult run_criterion(int id, const SuiteOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    switch (id) {
      case 1:
        r = ambiguity(o);
        break;
      case 2:
        r = edge_type_ablation(o);
        break;
      case 3:
        r = heterogeneity_ablation(o);
        break;
      case 4:
        r = crafted_edge_ablation(o);
        break;
      case 5:
        r = pointer_necessity(o);
        break;
      case 6:
        r = decoding_strategy(o);
        break;
      case 7:
        r = metric_oracle(o);
        break;
      case 8:
        r = numeric_suite(o);
        break;
      case 9:
        r = invariant_suite(o);
        break;
      case 10:
        r = determinism(o);
        break;
      default:
        throw Error("no criterion " + std::to_string(id));
    }
  } catch (const std::exception& e) {
    r.id = id;
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::string format_result(const CriterionResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + " criterion " + std::to_string(r.id) + " " + r.name + ": " +
         r.detail + " [" + fmt(r.seconds, 1) + "s]";
}

}  // namespace hpgkit::suite
