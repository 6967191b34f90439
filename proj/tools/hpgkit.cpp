// hpgkit command-line entry point.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "CLI11.hpp"
#include "hpgkit/asdl.hpp"
#include "hpgkit/ast_io.hpp"
#include "hpgkit/corpus.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/hpg.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/minilang.hpp"
#include "hpgkit/suite.hpp"
#include "hpgkit/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hpgkit;
using nlohmann::json;

namespace {

struct GraphFlags {
  std::string scheme = "shared";
  bool erase_nodes = false;
  bool erase_edges = false;
  bool no_next_sib = false;
  bool no_next_token = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--scheme", scheme, "Subtoken scheme")
        ->check(CLI::IsMember({"none", "shared", "independent"}))
        ->capture_default_str();
    cmd->add_flag("--erase-node-types", erase_nodes, "Collapse all node types to one");
    cmd->add_flag("--erase-edge-types", erase_edges, "Collapse all edge types to one");
    cmd->add_flag("--no-nextsib", no_next_sib, "Omit NextSib edges");
    cmd->add_flag("--no-nexttoken", no_next_token, "Omit NextToken edges");
  }

  hpg::BuildOptions build_options() const {
    hpg::BuildOptions o;
    o.scheme = hpg::parse_scheme(scheme);
    o.next_sib = !no_next_sib;
    o.next_token = !no_next_token;
    return o;
  }
};

// A tree read from a MiniLang source file or an external AST document.
struct LoadedTree {
  ExternalAst tree;
  std::shared_ptr<const asdl::TypeRegistries> registries;
};

bool is_ast_document(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  return ext == ".json" || ext == ".ast";
}

std::shared_ptr<const asdl::TypeRegistries> minilang_registries() {
  static const auto reg =
      std::make_shared<const asdl::TypeRegistries>(asdl::build_registries(asdl::minilang_grammar()));
  return reg;
}

LoadedTree load_tree(const std::string& path) {
  const std::string text = read_file(path);
  try {
    if (is_ast_document(path)) {
      LoadedTree t{ingest_external_ast(text), nullptr};
      t.registries = std::make_shared<const asdl::TypeRegistries>(registries_from_ast(t.tree));
      return t;
    }
    return {{minilang::parse_source(text), asdl::minilang_grammar().primitive_types}, minilang_registries()};
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

hpg::Hpg graph_of(const LoadedTree& t, const GraphFlags& f) {
  hpg::Hpg g = hpg::build_graph(t.tree.root, t.registries, f.build_options());
  if (f.erase_nodes || f.erase_edges) g = hpg::erase_types(g, f.erase_nodes, f.erase_edges);
  return g;
}

// Runs fn(i) for i in [0, n) over worker_count() threads; the first error is
// rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = std::min<unsigned>(worker_count(), static_cast<unsigned>(std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < workers; ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

std::string hist_table(const std::vector<std::string>& names, const std::vector<std::size_t>& counts) {
  std::ostringstream o;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    char line[128];
    std::snprintf(line, sizeof line, "  %-28s %10zu\n", i < names.size() ? names[i].c_str() : "?", counts[i]);
    o << line;
  }
  return o.str();
}

// ---------------------------------------------------------------------------
// Training flags
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string corpus;
  std::string config;
  std::string checkpoint;
  std::string metrics;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<std::string> scheme;
  bool full_scale = false;
  train::Ablation ablation;

  void attach(CLI::App* cmd, bool naming) {
    cmd->add_option("--corpus", corpus, "Corpus JSONL file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", config, "Training config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--checkpoint", checkpoint, "Where to write the trained model");
    cmd->add_option("--metrics", metrics, "Metrics log (JSONL)");
    cmd->add_option("--seed", seed, "Seed");
    cmd->add_option("--epochs", epochs, "Epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", batch_size, "Batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", lr, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--scheme", scheme, "Subtoken scheme")->check(CLI::IsMember({"none", "shared", "independent"}));
    cmd->add_flag("--full-scale", full_scale, "8 layers, 8 heads, d_model 256");
    cmd->add_flag("--erase-node-types", ablation.erase_node_types, "Collapse all node types to one");
    cmd->add_flag("--erase-edge-types", ablation.erase_edge_types, "Collapse all edge types to one");
    cmd->add_flag("--no-nextsib", ablation.no_next_sib, "Omit NextSib edges");
    cmd->add_flag("--no-nexttoken", ablation.no_next_token, "Omit NextToken edges");
    if (naming) {
      cmd->add_flag("--decode-all-nodes", ablation.decode_all_nodes, "Decoder memory is every node");
      cmd->add_flag("--no-copy", ablation.no_copy, "Disable the copy mechanism");
    }
  }

  train::TrainConfig resolve() const {
    train::TrainConfig c = full_scale ? train::TrainConfig::full_scale() : train::TrainConfig{};
    if (!config.empty()) {
      json j;
      try {
        j = json::parse(read_file(config));
      } catch (const json::parse_error& e) {
        throw Error(config + ": " + e.what());
      }
      c = train::TrainConfig::from_json(j);
    }
    if (seed) c.seed = *seed;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.optimizer.lr = *lr;
    if (scheme) c.scheme = hpg::parse_scheme(*scheme);
    auto& a = c.ablation;
    a.erase_node_types = a.erase_node_types || ablation.erase_node_types;
    a.erase_edge_types = a.erase_edge_types || ablation.erase_edge_types;
    a.no_next_sib = a.no_next_sib || ablation.no_next_sib;
    a.no_next_token = a.no_next_token || ablation.no_next_token;
    a.decode_all_nodes = a.decode_all_nodes || ablation.decode_all_nodes;
    a.no_copy = a.no_copy || ablation.no_copy;
    c.validate();
    return c;
  }
};

json eval_json(const train::EvalResult& r, train::Task task) {
  json j{{"loss", r.loss}, {"metric", r.metric}};
  if (task == train::Task::Naming) {
    j["precision"] = r.prf.precision;
    j["recall"] = r.prf.recall;
    j["f1"] = r.prf.f1;
  }
  return j;
}

int run_training(const TrainFlags& f, train::Task task) {
  const train::TrainConfig cfg = f.resolve();
  const corpus::Corpus c = corpus::read_corpus(f.corpus);
  corpus::validate_corpus(c);
  train::TrainOptions opt;
  opt.metrics_path = f.metrics;
  opt.checkpoint_path = f.checkpoint;
  opt.on_record = [](const train::MetricRecord& r) { std::cerr << r.to_json().dump() << "\n"; };
  const train::TrainResult res = task == train::Task::Classification ? train::train_classification(c, cfg, opt)
                                                                      : train::train_naming(c, cfg, opt);
  json out{{"task", train::to_string(task)},
           {"best_valid_metric", res.best_valid_metric},
           {"test", eval_json(res.test, task)},
           {"config_hash", res.model->manifest()["config_hash"]}};
  std::cout << out.dump() << "\n";
  return 0;
}

json prediction_json(const train::Model& m, const train::Sample& s, const train::EvalResult& r, std::size_t i) {
  json j{{"id", s.id}};
  if (m.task == train::Task::Classification) {
    j["prediction"] = r.predictions[i];
    j["label"] = s.label;
    j["logits"] = r.logits[i];
  } else {
    j["prediction"] = r.generated[i];
    j["target"] = s.target;
    const model::Prf prf = model::subtoken_prf(r.generated[i], s.target);
    j["precision"] = prf.precision;
    j["recall"] = prf.recall;
    j["f1"] = prf.f1;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_grammar_check(const std::string& path, bool show_registries) {
  const std::string text = path.empty() ? std::string(asdl::minilang_grammar_text()) : read_file(path);
  asdl::AsdlGrammar g;
  try {
    g = asdl::parse_asdl(text);
  } catch (const SyntaxError& e) {
    std::cerr << (path.empty() ? "<builtin>" : path) << ": " << e.what() << "\n";
    return 1;
  }
  int errors = 0;
  for (const auto& d : asdl::validate(g)) {
    const bool err = d.severity == asdl::Severity::Error;
    errors += err ? 1 : 0;
    std::cerr << (err ? "error: " : "warning: ") << d.message << " at " << d.loc.line << ":" << d.loc.col << "\n";
  }
  if (errors) return 1;
  const asdl::TypeRegistries reg = asdl::build_registries(g);
  std::cout << "ok: " << g.composite_types.size() << " composite types, " << g.constructor_count()
            << " constructors, " << reg.node_type_count() << " node types, " << reg.edge_type_count()
            << " edge types\n";
  if (show_registries) {
    std::cout << "node types:\n";
    for (std::size_t i = 0; i < reg.node_types().size(); ++i)
      std::cout << "  " << i << " " << reg.node_types()[i] << (reg.is_primitive(static_cast<int>(i)) ? " *" : "")
                << "\n";
    std::cout << "edge types:\n";
    for (std::size_t i = 0; i < reg.edge_types().size(); ++i) std::cout << "  " << i << " " << reg.edge_types()[i] << "\n";
  }
  return 0;
}

int cmd_parse(const std::string& path, const std::string& out, bool tokens, bool tree) {
  const std::string text = read_file(path);
  try {
    if (tokens) {
      emit(out, minilang::format_tokens(minilang::tokenize(text)));
      return 0;
    }
    const TypedAstNode ast = minilang::parse_source(text);
    emit(out, tree ? dump_tree(ast) : export_ast(ast, asdl::minilang_grammar().primitive_types) + "\n");
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
  return 0;
}

int cmd_check(const std::vector<std::string>& files) {
  int bad = 0;
  for (const auto& f : files) {
    try {
      const std::string text = read_file(f);
      std::vector<asdl::Diagnostic> diags;
      if (is_ast_document(f)) {
        diags = validate_against_grammar(ingest_external_ast(text).root, asdl::minilang_grammar());
      } else {
        diags = validate_against_grammar(minilang::parse_source(text), asdl::minilang_grammar());
      }
      for (const auto& d : diags) std::cerr << f << ": " << d.message << "\n";
      if (!diags.empty()) {
        ++bad;
      } else {
        std::cout << f << ": ok\n";
      }
    } catch (const Error& e) {
      std::cerr << f << ": " << e.what() << "\n";
      ++bad;
    }
  }
  return bad ? 1 : 0;
}

int cmd_build_graph(const std::vector<std::string>& files, const GraphFlags& flags, const std::string& out,
                    const std::string& out_dir) {
  if (!out.empty() && files.size() != 1) throw CLI::ValidationError("-o", "needs exactly one input file");
  if (!out_dir.empty()) fs::create_directories(out_dir);
  std::vector<std::string> targets(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    fs::path p = fs::path(files[i]).replace_extension(".hpg");
    if (!out_dir.empty()) p = fs::path(out_dir) / p.filename();
    targets[i] = out.empty() ? p.string() : out;
  }
  parallel_for(files.size(), [&](std::size_t i) {
    const std::string text = hpg::canonical_serialize(graph_of(load_tree(files[i]), flags));
    if (targets[i] == "-") {
      static std::mutex mu;
      std::lock_guard<std::mutex> lock(mu);
      std::cout << text;
    } else {
      write_file_atomic(targets[i], text);
    }
  });
  if (out != "-") {
    for (const auto& t : targets) std::cerr << "wrote " << t << "\n";
  }
  return 0;
}

int cmd_stats(const std::vector<std::string>& files, const std::string& corpus_path, const GraphFlags& flags,
              const std::string& json_out) {
  std::vector<hpg::Hpg> graphs;
  std::shared_ptr<const asdl::TypeRegistries> reg;
  if (!corpus_path.empty()) {
    const corpus::Corpus c = corpus::read_corpus(corpus_path);
    train::TrainConfig cfg;
    cfg.scheme = hpg::parse_scheme(flags.scheme);
    cfg.ablation.erase_node_types = flags.erase_nodes;
    cfg.ablation.erase_edge_types = flags.erase_edges;
    cfg.ablation.no_next_sib = flags.no_next_sib;
    cfg.ablation.no_next_token = flags.no_next_token;
    bool labelled = true;
    for (const auto& e : c.examples) labelled = labelled && e.label.has_value();
    train::Prepared p = train::prepare(c, cfg, labelled ? train::Task::Classification : train::Task::Naming);
    reg = p.registries;
    for (auto* part : {&p.train, &p.valid, &p.test}) {
      for (auto& s : *part) graphs.push_back(std::move(s.graph));
    }
  }
  graphs.resize(graphs.size() + files.size());
  const std::size_t base = graphs.size() - files.size();
  parallel_for(files.size(), [&](std::size_t i) { graphs[base + i] = graph_of(load_tree(files[i]), flags); });
  if (graphs.empty()) throw CLI::ValidationError("stats", "no inputs");
  for (const auto& g : graphs) {
    if (!reg) reg = g.registries;
    if (*g.registries != *reg) throw Error("inputs were built with different type registries");
  }
  std::vector<const hpg::Hpg*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  const hpg::CorpusStats s = hpg::corpus_stats(ptrs);

  char line[256];
  std::snprintf(line, sizeof line, "%-10s %12s %12s %12s %12s\n", "graphs", "avg nodes", "avg edges", "node types",
                "edge types");
  std::cout << line;
  std::snprintf(line, sizeof line, "%-10zu %12.2f %12.2f %12zu %12zu\n", s.graphs, s.avg_nodes, s.avg_edges,
                s.node_types_used, s.edge_types_used);
  std::cout << line << "node types:\n"
            << hist_table(reg->node_types(), s.node_type_histogram) << "edge types:\n"
            << hist_table(reg->edge_types(), s.edge_type_histogram);
  json rec{{"graphs", s.graphs},
           {"avg_nodes", s.avg_nodes},
           {"avg_edges", s.avg_edges},
           {"node_types_used", s.node_types_used},
           {"edge_types_used", s.edge_types_used},
           {"node_type_histogram", json::object()},
           {"edge_type_histogram", json::object()}};
  for (std::size_t i = 0; i < s.node_type_histogram.size(); ++i)
    rec["node_type_histogram"][reg->node_types()[i]] = s.node_type_histogram[i];
  for (std::size_t i = 0; i < s.edge_type_histogram.size(); ++i)
    rec["edge_type_histogram"][reg->edge_types()[i]] = s.edge_type_histogram[i];
  if (!json_out.empty()) write_file_atomic(json_out, rec.dump(2) + "\n");
  std::cout << rec.dump() << "\n";
  return 0;
}

int cmd_gen_corpus(const std::string& task, std::uint64_t seed, std::size_t n, const std::string& out) {
  corpus::Corpus c;
  if (task == "classification") {
    corpus::ClassificationOptions o;
    if (n) o.per_class = n;
    c = corpus::gen_classification_corpus(seed, o);
  } else if (task == "operand-order") {
    c = corpus::gen_operand_order_corpus(seed, n ? n : 1000);
  } else {
    corpus::NamingOptions o;
    if (n) o.n = n;
    c = corpus::gen_naming_corpus(seed, o);
  }
  emit(out, corpus::serialize_corpus(c));
  if (!out.empty() && out != "-") std::cerr << "wrote " << c.examples.size() << " records to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus_path, const std::string& split,
             const std::string& predictions) {
  const auto m = train::load_model(checkpoint);
  const corpus::Corpus c = corpus::read_corpus(corpus_path);
  const train::Prepared p = train::prepare(c, m->config, m->task, m->registries);
  const auto& samples = p.split(split);
  if (samples.empty()) throw Error("split '" + split + "' is empty");
  const train::EvalResult r = train::evaluate(*m, samples);
  if (!predictions.empty()) {
    std::string text;
    for (std::size_t i = 0; i < samples.size(); ++i) text += prediction_json(*m, samples[i], r, i).dump() + "\n";
    write_file_atomic(predictions, text);
  }
  json out = eval_json(r, m->task);
  out["split"] = split;
  out["examples"] = samples.size();
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::vector<std::string>& files) {
  const auto m = train::load_model(checkpoint);
  corpus::Corpus c;
  for (const auto& f : files) {
    corpus::Example e;
    e.id = f;
    e.split = "test";
    const std::string text = read_file(f);
    if (is_ast_document(f)) {
      e.ast = json::parse(text);
    } else {
      e.source = text;
    }
    if (m->task == train::Task::Classification) e.label = 0;
    c.examples.push_back(std::move(e));
  }
  const train::Prepared p = train::prepare(c, m->config, m->task, m->registries);
  const train::EvalResult r = train::evaluate(*m, p.test);
  for (std::size_t i = 0; i < p.test.size(); ++i) {
    json j{{"file", p.test[i].id}};
    if (m->task == train::Task::Classification) {
      j["class"] = r.predictions[i];
      j["logits"] = r.logits[i];
    } else {
      j["name"] = r.generated[i];
    }
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int op_seeds, bool verbose) {
  const suite::GradcheckReport rep = suite::run_gradcheck_suite(seed, op_seeds);
  for (const auto& r : rep.results) {
    if (verbose || !r.passed)
      std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << " rel " << r.max_rel_error << " abs " << r.max_abs_error
                << " (" << r.checked << " entries)\n";
  }
  std::cout << (rep.passed ? "passed" : "FAILED") << ": " << rep.results.size()
            << " checks, max relative error " << rep.max_rel_error << ", max segment-sum deviation "
            << rep.max_softmax_deviation << ", " << rep.seconds << "s\n";
  return rep.passed && rep.max_rel_error < 1e-4 ? 0 : 1;
}

std::string self_path() {
  std::error_code ec;
  const fs::path p = fs::read_symlink("/proc/self/exe", ec);
  return ec ? std::string() : p.string();
}

int cmd_selftest(std::uint64_t seed, const std::string& out, bool full, const std::vector<int>& criteria) {
  for (const auto& p : suite::write_selftest_artifacts(seed, out)) std::cerr << "wrote " << p << "\n";
  std::vector<int> ids = criteria;
  if (full && ids.empty()) {
    for (int i = 1; i <= suite::kCriteria; ++i) ids.push_back(i);
  }
  if (ids.empty()) return 0;
  suite::SuiteOptions o;
  o.seed = seed;
  o.cli_path = self_path();
  o.work_dir = (fs::temp_directory_path() / ("hpgkit-selftest-" + std::to_string(::getpid()))).string();
  o.log = [](const std::string& m) { std::cerr << m << "\n"; };
  fs::create_directories(o.work_dir);
  int failed = 0;
  for (int id : ids) {
    const suite::CriterionResult r = suite::run_criterion(id, o);
    failed += r.passed ? 0 : 1;
    std::cout << suite::format_result(r) << std::endl;
  }
  fs::remove_all(o.work_dir);
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hpgkit: heterogeneous program graphs and HGT models for MiniLang"};
  app.require_subcommand(1);
  app.allow_extras(false);

  std::string grammar_file;
  bool show_registries = false;
  auto* grammar_check = app.add_subcommand("grammar-check", "Parse and validate an ASDL grammar");
  grammar_check->add_option("grammar", grammar_file, "ASDL file (default: built-in MiniLang grammar)")
      ->check(CLI::ExistingFile);
  grammar_check->add_flag("--registries", show_registries, "Print node and edge type registries");

  std::string parse_file, parse_out;
  bool parse_tokens = false, parse_tree = false;
  auto* parse = app.add_subcommand("parse", "Parse MiniLang source into an external AST document");
  parse->add_option("file", parse_file, "MiniLang source")->required()->check(CLI::ExistingFile);
  parse->add_option("-o,--output", parse_out, "Output file (default: stdout)");
  auto* tok_flag = parse->add_flag("--tokens", parse_tokens, "Print the token stream instead");
  parse->add_flag("--tree", parse_tree, "Print an indented tree instead")->excludes(tok_flag);

  std::vector<std::string> check_files;
  auto* check = app.add_subcommand("check", "Validate sources or AST documents against the MiniLang grammar");
  check->add_option("files", check_files, "Inputs")->required()->check(CLI::ExistingFile);

  std::vector<std::string> bg_files;
  std::string bg_out, bg_dir;
  GraphFlags bg_flags;
  auto* build_graph = app.add_subcommand("build-graph", "Build canonical graph dumps");
  build_graph->add_option("files", bg_files, "Sources (.mini) or AST documents (.json)")
      ->required()
      ->check(CLI::ExistingFile);
  build_graph->add_option("-o,--output", bg_out, "Output file for a single input ('-' for stdout)");
  build_graph->add_option("--out-dir", bg_dir, "Directory for outputs (default: next to each input)");
  bg_flags.attach(build_graph);

  std::vector<std::string> st_files;
  std::string st_corpus, st_json;
  GraphFlags st_flags;
  auto* stats = app.add_subcommand("stats", "Graph statistics over files or a corpus");
  stats->add_option("files", st_files, "Sources or AST documents")->check(CLI::ExistingFile);
  stats->add_option("--corpus", st_corpus, "Corpus JSONL file")->check(CLI::ExistingFile);
  stats->add_option("--json", st_json, "Also write the machine-readable record here");
  st_flags.attach(stats);

  std::string gc_task, gc_out;
  std::uint64_t gc_seed = 1;
  std::size_t gc_n = 0;
  auto* gen_corpus = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen_corpus->add_option("--task", gc_task, "Corpus kind")
      ->required()
      ->check(CLI::IsMember({"classification", "operand-order", "naming"}));
  gen_corpus->add_option("--seed", gc_seed, "Seed")->capture_default_str();
  gen_corpus->add_option("-n", gc_n, "Examples per class (classification) or total examples");
  gen_corpus->add_option("-o,--output", gc_out, "Output JSONL (default: stdout)");

  TrainFlags tc_flags, tn_flags;
  auto* train_classify = app.add_subcommand("train-classify", "Train a graph classifier");
  tc_flags.attach(train_classify, false);
  auto* train_name = app.add_subcommand("train-name", "Train a method-name decoder");
  tn_flags.attach(train_name, true);

  std::string ev_ckpt, ev_corpus, ev_split = "test", ev_pred;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  eval->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", ev_corpus, "Corpus JSONL file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", ev_split, "Split")->check(CLI::IsMember({"train", "valid", "test"}))->capture_default_str();
  eval->add_option("--predictions", ev_pred, "Write per-example predictions (JSONL)");

  std::string pr_ckpt;
  std::vector<std::string> pr_files;
  auto* predict = app.add_subcommand("predict", "Predict for source files or AST documents");
  predict->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("files", pr_files, "Inputs")->required()->check(CLI::ExistingFile);

  std::uint64_t gr_seed = 7;
  int gr_op_seeds = 5;
  bool gr_verbose = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--seed", gr_seed, "Seed")->capture_default_str();
  gradcheck->add_option("--op-seeds", gr_op_seeds, "Random draws per op")->check(CLI::PositiveNumber)->capture_default_str();
  gradcheck->add_flag("-v,--verbose", gr_verbose, "Print every check");

  std::uint64_t sf_seed = 7;
  std::string sf_out = "selftest-out";
  bool sf_full = false;
  std::vector<int> sf_criteria;
  auto* selftest = app.add_subcommand("selftest", "Write deterministic artifacts; --full runs every acceptance check");
  selftest->add_option("--seed", sf_seed, "Seed")->capture_default_str();
  selftest->add_option("--out", sf_out, "Artifact directory")->capture_default_str();
  selftest->add_flag("--full", sf_full, "Run all acceptance criteria");
  selftest->add_option("--criteria", sf_criteria, "Run only these criteria (1-10)")
      ->delimiter(',')
      ->check(CLI::Range(1, suite::kCriteria));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*grammar_check) return cmd_grammar_check(grammar_file, show_registries);
    if (*parse) return cmd_parse(parse_file, parse_out, parse_tokens, parse_tree);
    if (*check) return cmd_check(check_files);
    if (*build_graph) return cmd_build_graph(bg_files, bg_flags, bg_out, bg_dir);
    if (*stats) return cmd_stats(st_files, st_corpus, st_flags, st_json);
    if (*gen_corpus) return cmd_gen_corpus(gc_task, gc_seed, gc_n, gc_out);
    if (*train_classify) return run_training(tc_flags, train::Task::Classification);
    if (*train_name) return run_training(tn_flags, train::Task::Naming);
    if (*eval) return cmd_eval(ev_ckpt, ev_corpus, ev_split, ev_pred);
    if (*predict) return cmd_predict(pr_ckpt, pr_files);
    if (*gradcheck) return cmd_gradcheck(gr_seed, gr_op_seeds, gr_verbose);
    if (*selftest) return cmd_selftest(sf_seed, sf_out, sf_full, sf_criteria);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
