#include "hpgkit/train.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <thread>

#include "hpgkit/ast_io.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/minilang.hpp"

namespace hpgkit::train {

using nlohmann::json;
using num::Tensor;
using num::Var;

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void adamw_step(const std::vector<Var>& params, AdamWState& state, const AdamWConfig& cfg) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = params[i]->grad;
    for (double x : g.data) {
      if (!std::isfinite(x)) throw Error("non-finite gradient in parameter " + std::to_string(i) +
                                         " at optimizer step " + std::to_string(state.step + 1));
    }
  }
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.emplace_back(p->value.shape);
      state.v.emplace_back(p->value.shape);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i]->value;
    const Tensor& g = params[i]->grad;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    const bool has_grad = g.size() == p.size();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = has_grad ? g.data[k] : 0.0;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      p.data[k] -= cfg.lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * p.data[k]);
    }
  }
}

double clip_grad_norm(const std::vector<Var>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double x : p->grad.data) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (const auto& p : params) {
      for (double& x : p->grad.data) x *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const char* to_string(Task task) { return task == Task::Classification ? "classification" : "naming"; }

Task parse_task(const std::string& text) {
  if (text == "classification") return Task::Classification;
  if (text == "naming") return Task::Naming;
  throw Error("unknown task '" + text + "'");
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.encoder.layers = 8;
  c.encoder.heads = 8;
  c.encoder.d_model = 256;
  c.encoder.hidden = 1024;
  c.encoder.dropout = 0.2;
  c.decoder.d_model = 256;
  c.decoder.ffn = 1024;
  return c;
}

void TrainConfig::validate() const {
  if (!(optimizer.lr > 0.0)) throw Error("config: lr must be > 0");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (eval_interval < 0) throw Error("config: eval_interval must be >= 0");
  if (!(clip_norm > 0.0)) throw Error("config: clip_norm must be > 0");
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0 || optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0)
    throw Error("config: betas must be in [0, 1)");
  if (optimizer.weight_decay < 0.0) throw Error("config: weight_decay must be >= 0");
  encoder.validate();
  decoder.validate();
  if (decoder.d_model != encoder.d_model) throw Error("config: decoder d_model must equal encoder d_model");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw Error("config: " + where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error("config: unknown " + where + " key '" + it.key() + "'");
  }
}

json ablation_json(const Ablation& a) {
  return {{"erase_node_types", a.erase_node_types}, {"erase_edge_types", a.erase_edge_types},
          {"no_next_sib", a.no_next_sib},           {"no_next_token", a.no_next_token},
          {"decode_all_nodes", a.decode_all_nodes}, {"no_copy", a.no_copy}};
}

}  // namespace

json TrainConfig::to_json() const {
  return {{"version", kVersion},
          {"optimizer",
           {{"lr", optimizer.lr},
            {"beta1", optimizer.beta1},
            {"beta2", optimizer.beta2},
            {"eps", optimizer.eps},
            {"weight_decay", optimizer.weight_decay}}},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"eval_interval", eval_interval},
          {"clip_norm", clip_norm},
          {"encoder", encoder.to_json()},
          {"decoder", decoder.to_json()},
          {"classifier", classifier.to_json()},
          {"scheme", hpg::to_string(scheme)},
          {"ablation", ablation_json(ablation)},
          {"input_min_count", input_min_count},
          {"output_min_count", output_min_count}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"version", "optimizer", "batch_size", "epochs", "seed", "eval_interval", "clip_norm", "encoder",
                  "decoder", "classifier", "scheme", "ablation", "input_min_count", "output_min_count"},
                 "top-level");
  TrainConfig c;
  try {
    if (j.contains("version") && j.at("version").get<int>() != kVersion)
      throw Error("config: unsupported version " + j.at("version").dump());
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      reject_unknown(o, {"lr", "beta1", "beta2", "eps", "weight_decay"}, "optimizer");
      c.optimizer.lr = o.value("lr", c.optimizer.lr);
      c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
      c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
      c.optimizer.eps = o.value("eps", c.optimizer.eps);
      c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("encoder")) {
      json base = c.encoder.to_json();
      reject_unknown(j.at("encoder"), {"layers", "heads", "d_model", "hidden", "dropout", "vocab_size", "max_timestamp"},
                     "encoder");
      base.update(j.at("encoder"));
      c.encoder = model::HgtConfig::from_json(base);
    }
    if (j.contains("decoder")) {
      json base = c.decoder.to_json();
      reject_unknown(j.at("decoder"), {"layers", "heads", "d_model", "ffn", "max_len"}, "decoder");
      base.update(j.at("decoder"));
      c.decoder = model::DecoderConfig::from_json(base);
    }
    if (j.contains("classifier")) {
      json base = c.classifier.to_json();
      reject_unknown(j.at("classifier"), {"hidden", "classes"}, "classifier");
      base.update(j.at("classifier"));
      c.classifier = model::ClassifierConfig::from_json(base);
    }
    if (j.contains("scheme")) c.scheme = hpg::parse_scheme(j.at("scheme").get<std::string>());
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      reject_unknown(a,
                     {"erase_node_types", "erase_edge_types", "no_next_sib", "no_next_token", "decode_all_nodes",
                      "no_copy"},
                     "ablation");
      c.ablation.erase_node_types = a.value("erase_node_types", false);
      c.ablation.erase_edge_types = a.value("erase_edge_types", false);
      c.ablation.no_next_sib = a.value("no_next_sib", false);
      c.ablation.no_next_token = a.value("no_next_token", false);
      c.ablation.decode_all_nodes = a.value("decode_all_nodes", false);
      c.ablation.no_copy = a.value("no_copy", false);
    }
    c.input_min_count = j.value("input_min_count", c.input_min_count);
    c.output_min_count = j.value("output_min_count", c.output_min_count);
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t TrainConfig::hash() const { return num::fnv1a(to_json().dump()); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

const std::vector<Sample>& Prepared::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "valid") return valid;
  if (name == "test") return test;
  throw Error("unknown split '" + name + "'");
}

namespace {

ExternalAst record_tree(const corpus::Example& e) {
  try {
    if (e.source) return {minilang::parse_source(*e.source), asdl::minilang_grammar().primitive_types};
    return ast_from_json(*e.ast);
  } catch (const Error& ex) {
    throw Error("record '" + e.id + "': " + ex.what());
  }
}

}  // namespace

std::shared_ptr<const asdl::TypeRegistries> corpus_registries(const corpus::Corpus& corpus) {
  bool all_source = true;
  for (const auto& e : corpus.examples) all_source = all_source && e.source.has_value();
  if (all_source) return std::make_shared<asdl::TypeRegistries>(asdl::build_registries(asdl::minilang_grammar()));
  std::vector<ExternalAst> trees;
  trees.reserve(corpus.examples.size());
  for (const auto& e : corpus.examples) trees.push_back(record_tree(e));
  std::vector<const ExternalAst*> ptrs;
  for (const auto& t : trees) ptrs.push_back(&t);
  return std::make_shared<asdl::TypeRegistries>(registries_from_asts(ptrs));
}

Prepared prepare(const corpus::Corpus& corpus, const TrainConfig& cfg, Task task,
                 std::shared_ptr<const asdl::TypeRegistries> registries) {
  Prepared out;
  out.registries = registries ? std::move(registries) : corpus_registries(corpus);
  hpg::BuildOptions opts;
  opts.scheme = cfg.scheme;
  opts.next_sib = !cfg.ablation.no_next_sib;
  opts.next_token = !cfg.ablation.no_next_token;
  const bool erase = cfg.ablation.erase_node_types || cfg.ablation.erase_edge_types;
  for (const auto& e : corpus.examples) {
    Sample s;
    s.id = e.id;
    const ExternalAst tree = record_tree(e);
    try {
      s.graph = hpg::build_graph(tree.root, out.registries, opts);
      if (erase) s.graph = hpg::erase_types(s.graph, cfg.ablation.erase_node_types, cfg.ablation.erase_edge_types);
      if (task == Task::Naming) {
        hpg::MaskedGraph m = hpg::mask_method_name(s.graph, tree.root);
        s.graph = std::move(m.graph);
        s.target = e.target ? *e.target : m.target;
      } else {
        if (!e.label) throw Error("classification record has no label");
        if (*e.label < 0) throw Error("negative label");
        s.label = *e.label;
      }
    } catch (const Error& ex) {
      throw Error("record '" + e.id + "': " + ex.what());
    }
    if (e.split == "train") {
      out.train.push_back(std::move(s));
    } else if (e.split == "valid") {
      out.valid.push_back(std::move(s));
    } else {
      out.test.push_back(std::move(s));
    }
  }
  return out;
}

Vocab build_input_vocab(const std::vector<Sample>& samples, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    for (const auto& n : s.graph.nodes) ++counts[n.value];
  }
  return Vocab::build(counts, min_count, {kUnk});
}

Vocab build_output_vocab(const std::vector<Sample>& samples, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    for (const auto& w : s.target) ++counts[w];
  }
  return Vocab::build(counts, min_count, {kUnk, kBos, kEos});
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

json registries_json(const asdl::TypeRegistries& reg) {
  std::vector<std::string> types(reg.node_types().begin(), reg.node_types().end() - 1);
  std::vector<bool> prim;
  for (std::size_t i = 0; i + 1 < reg.node_type_count(); ++i) prim.push_back(reg.is_primitive(static_cast<int>(i)));
  std::vector<std::string> labels(reg.edge_types().begin(),
                                  reg.edge_types().begin() + static_cast<std::ptrdiff_t>(reg.field_label_count()));
  return {{"node_types", types}, {"primitive", prim}, {"field_labels", labels}};
}

std::shared_ptr<const asdl::TypeRegistries> registries_from_json(const json& j) {
  return std::make_shared<asdl::TypeRegistries>(j.at("node_types").get<std::vector<std::string>>(),
                                                j.at("primitive").get<std::vector<bool>>(),
                                                j.at("field_labels").get<std::vector<std::string>>());
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

json Model::manifest() const {
  json j{{"format", "hpgkit-model"},
         {"task", to_string(task)},
         {"config", config.to_json()},
         {"config_hash", hex(config.hash())},
         {"registries", registries_json(*registries)},
         {"input_vocab", input_vocab.to_json()}};
  if (task == Task::Naming) {
    j["output_vocab"] = output_vocab.to_json();
  } else {
    j["classes"] = classes;
  }
  return j;
}

void init_model(Model& m, std::uint64_t seed) {
  num::Rng rng(derive_seed(seed, 1));
  m.config.encoder.vocab_size = static_cast<int>(m.input_vocab.size());
  m.config.classifier.classes = m.task == Task::Classification ? m.classes : m.config.classifier.classes;
  m.encoder = model::init_hgt_params(m.store, m.config.encoder, m.registries->node_type_count(),
                                     m.registries->edge_type_count(), rng);
  if (m.task == Task::Classification) {
    m.classifier = model::init_classifier(m.store, m.config.classifier, static_cast<std::size_t>(m.config.encoder.d_model),
                                          rng);
  } else {
    m.decoder = model::init_decoder(m.store, m.config.decoder, m.output_vocab.size(), rng);
  }
}

void save_model(const std::string& checkpoint, const Model& model, std::optional<double> valid_metric) {
  json j = model.manifest();
  j["valid_metric"] = valid_metric ? json(*valid_metric) : json(nullptr);
  num::save_checkpoint(checkpoint, model.store, j.dump());
}

std::unique_ptr<Model> load_model(const std::string& checkpoint) {
  json j;
  try {
    j = json::parse(num::read_checkpoint_manifest(checkpoint));
  } catch (const json::exception& e) {
    throw Error(checkpoint + ": bad manifest: " + e.what());
  }
  auto m = std::make_unique<Model>();
  try {
    if (j.value("format", "") != "hpgkit-model") throw Error("not a model checkpoint");
    m->task = parse_task(j.at("task").get<std::string>());
    m->config = TrainConfig::from_json(j.at("config"));
    if (hex(m->config.hash()) != j.at("config_hash").get<std::string>())
      throw Error("config hash does not match the stored config");
    m->registries = registries_from_json(j.at("registries"));
    m->input_vocab = Vocab::from_json(j.at("input_vocab"));
    if (m->task == Task::Naming) {
      m->output_vocab = Vocab::from_json(j.at("output_vocab"));
    } else {
      m->classes = j.at("classes").get<int>();
    }
  } catch (const json::exception& e) {
    throw Error(checkpoint + ": bad manifest: " + e.what());
  }
  init_model(*m, 0);
  num::load_checkpoint(checkpoint, m->store);
  return m;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

namespace {

model::GraphBatch batch_of(const std::vector<const Sample*>& samples, const Vocab& vocab) {
  std::vector<const hpg::Hpg*> graphs;
  graphs.reserve(samples.size());
  for (const auto* s : samples) graphs.push_back(&s->graph);
  return model::make_batch(graphs, vocab);
}

Var class_logits(const Model& m, const model::GraphBatch& b, bool train, num::Rng& rng) {
  model::Encoded enc = model::encode(b, m.encoder, m.config.encoder, train, rng);
  Var pooled = model::global_attention_pool(enc.states, b, m.classifier.pool);
  return model::classify(pooled, m.classifier);
}

model::DecoderMemory memory_for(const Model& m, const model::Encoded& enc, const model::GraphBatch& b,
                                std::size_t g) {
  const auto& ids = m.config.ablation.decode_all_nodes ? enc.all_nodes[g] : enc.subtoken_nodes[g];
  model::DecoderMemory mem;
  if (ids.empty()) {
    mem.states = num::constant(Tensor({0, static_cast<std::size_t>(m.config.encoder.d_model)}));
    return mem;
  }
  mem.states = num::gather_rows(enc.states, ids);
  for (int id : ids) mem.values.push_back(b.value[static_cast<std::size_t>(id)]);
  return mem;
}

bool copy_on(const Model& m) { return !m.config.ablation.no_copy; }

struct NamingPass {
  std::vector<Var> losses;  // per sample, mean over target positions
  std::vector<model::DecoderMemory> memories;
};

NamingPass naming_losses(const Model& m, const std::vector<const Sample*>& samples, const model::GraphBatch& b,
                         bool train, num::Rng& rng) {
  NamingPass out;
  model::Encoded enc = model::encode(b, m.encoder, m.config.encoder, train, rng);
  for (std::size_t g = 0; g < samples.size(); ++g) {
    model::DecoderMemory mem = memory_for(m, enc, b, g);
    const bool copy = copy_on(m) && !mem.values.empty();
    model::ExtendedVocab ext = model::extend_vocab(m.output_vocab, copy ? mem.values : std::vector<std::string>{});
    model::TeacherForcing tf = model::teacher_forcing(samples[g]->target, m.output_vocab, ext, copy);
    model::DecodeOutput o = model::decode_step(m.decoder, m.config.decoder, m.output_vocab, mem, tf.inputs, copy,
                                               train, m.config.encoder.dropout, rng, tf.words);
    out.losses.push_back(num::nll_prob(o.prob, tf.targets));
    out.memories.push_back(std::move(mem));
  }
  return out;
}

Var batch_loss(const Model& m, const std::vector<const Sample*>& samples, bool train, num::Rng& rng) {
  model::GraphBatch b = batch_of(samples, m.input_vocab);
  if (m.task == Task::Classification) {
    std::vector<int> labels;
    for (const auto* s : samples) labels.push_back(s->label);
    return num::cross_entropy(class_logits(m, b, train, rng), labels);
  }
  NamingPass p = naming_losses(m, samples, b, train, rng);
  Var total = p.losses[0];
  for (std::size_t i = 1; i < p.losses.size(); ++i) total = num::add(total, p.losses[i]);
  return num::scale(total, 1.0 / static_cast<double>(p.losses.size()));
}

struct SampleEval {
  double loss = 0.0;
  int prediction = -1;
  std::vector<double> logits;
  std::vector<std::string> generated;
  model::Prf prf;
};

std::vector<SampleEval> eval_batch(const Model& m, const std::vector<const Sample*>& samples) {
  num::NoGradGuard guard;
  num::Rng rng(0);
  model::GraphBatch b = batch_of(samples, m.input_vocab);
  std::vector<SampleEval> out(samples.size());
  if (m.task == Task::Classification) {
    Var logits = class_logits(m, b, false, rng);
    const std::size_t c = logits->value.dim(1);
    for (std::size_t r = 0; r < samples.size(); ++r) {
      const double* row = logits->value.data.data() + r * c;
      double mx = row[0];
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (row[k] > mx) {
          mx = row[k];
          best = k;
        }
      }
      double z = 0.0;
      for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
      const auto label = static_cast<std::size_t>(samples[r]->label);
      out[r].loss = label < c ? std::log(z) + mx - row[label] : std::numeric_limits<double>::infinity();
      out[r].prediction = static_cast<int>(best);
      out[r].logits.assign(row, row + c);
    }
    return out;
  }
  NamingPass p = naming_losses(m, samples, b, false, rng);
  for (std::size_t g = 0; g < samples.size(); ++g) {
    out[g].loss = p.losses[g]->value.data[0];
    out[g].generated = model::generate(m.decoder, m.config.decoder, m.output_vocab, p.memories[g],
                                       copy_on(m) && !p.memories[g].values.empty());
    out[g].prf = model::subtoken_prf(out[g].generated, samples[g]->target);
  }
  return out;
}

}  // namespace

EvalResult evaluate(const Model& m, const std::vector<Sample>& samples, std::size_t batch_size) {
  EvalResult r;
  if (samples.empty()) return r;
  if (batch_size == 0) batch_size = 1;
  const std::size_t batches = (samples.size() + batch_size - 1) / batch_size;
  std::vector<std::vector<SampleEval>> results(batches);
  std::vector<std::string> errors(batches);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < batches; i = next++) {
      std::vector<const Sample*> chunk;
      for (std::size_t k = i * batch_size; k < std::min(samples.size(), (i + 1) * batch_size); ++k)
        chunk.push_back(&samples[k]);
      try {
        results[i] = eval_batch(m, chunk);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(worker_count(), batches);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(e);
  }
  double loss = 0.0, correct = 0.0, p = 0.0, rc = 0.0, f = 0.0;
  std::size_t k = 0;
  for (const auto& batch : results) {
    for (const auto& s : batch) {
      loss += s.loss;
      if (m.task == Task::Classification) {
        correct += s.prediction == samples[k].label ? 1.0 : 0.0;
        r.predictions.push_back(s.prediction);
        r.logits.push_back(s.logits);
      } else {
        p += s.prf.precision;
        rc += s.prf.recall;
        f += s.prf.f1;
        r.generated.push_back(s.generated);
      }
      ++k;
    }
  }
  const double n = static_cast<double>(samples.size());
  r.loss = loss / n;
  if (m.task == Task::Classification) {
    r.metric = correct / n;
  } else {
    r.prf = {p / n, rc / n, f / n};
    r.metric = r.prf.f1;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

json MetricRecord::to_json() const {
  auto num_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"step", step}, {"split", split}, {"loss", num_or_null(loss)},
          {"metric", metric ? num_or_null(*metric) : json(nullptr)}};
}

std::string serialize_metrics(const std::vector<MetricRecord>& history) {
  std::string out;
  for (const auto& r : history) out += r.to_json().dump() + "\n";
  return out;
}

TrainResult train_model(const Prepared& data, const TrainConfig& cfg, Task task, const TrainOptions& options) {
  cfg.validate();
  if (data.train.empty()) throw Error("no training examples");
  TrainResult result;
  result.model = std::make_unique<Model>();
  Model& m = *result.model;
  m.task = task;
  m.config = cfg;
  m.registries = data.registries;
  m.input_vocab = build_input_vocab(data.train, cfg.input_min_count);
  if (task == Task::Naming) {
    m.output_vocab = build_output_vocab(data.train, cfg.output_min_count);
  } else {
    int max_label = 1;
    for (const auto* split : {&data.train, &data.valid, &data.test}) {
      for (const auto& s : *split) max_label = std::max(max_label, s.label);
    }
    m.classes = max_label + 1;
  }
  init_model(m, cfg.seed);

  num::Rng shuffle_rng(derive_seed(cfg.seed, 2));
  num::Rng dropout_rng(derive_seed(cfg.seed, 3));
  AdamWState opt;

  auto record = [&](MetricRecord r) {
    if (options.on_record) options.on_record(r);
    result.history.push_back(std::move(r));
    if (!options.metrics_path.empty()) write_file_atomic(options.metrics_path, serialize_metrics(result.history));
  };

  double best = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params;
  std::size_t step = 0;
  double running = 0.0;
  std::size_t running_n = 0;

  auto validate_now = [&] {
    if (running_n > 0) record({step, "train", running / static_cast<double>(running_n), std::nullopt});
    running = 0.0;
    running_n = 0;
    if (data.valid.empty()) return;
    EvalResult v = evaluate(m, data.valid);
    record({step, "valid", v.loss, v.metric});
    // Ties on the metric go to the lower validation loss.
    if (v.metric > best || (v.metric == best && v.loss < best_loss)) {
      best = v.metric;
      best_loss = v.loss;
      best_params.clear();
      for (const auto& p : m.store.params()) best_params.push_back(p->value);
    }
  };

  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const Sample*> chunk;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) chunk.push_back(&data.train[order[k]]);
      m.store.zero_grad();
      Var loss = batch_loss(m, chunk, true, dropout_rng);
      const double lv = loss->value.data[0];
      if (!std::isfinite(lv)) throw Error("training diverged: non-finite loss at step " + std::to_string(step + 1));
      num::backward(loss);
      clip_grad_norm(m.store.params(), cfg.clip_norm);
      adamw_step(m.store.params(), opt, cfg.optimizer);
      ++step;
      running += lv;
      ++running_n;
      if (cfg.eval_interval > 0 && step % static_cast<std::size_t>(cfg.eval_interval) == 0) validate_now();
    }
    if (cfg.eval_interval == 0) validate_now();
  }
  if (running_n > 0 || result.history.empty()) validate_now();

  if (!best_params.empty()) {
    for (std::size_t i = 0; i < best_params.size(); ++i) m.store.params()[i]->value = best_params[i];
    result.best_valid_metric = best;
  } else {
    result.best_valid_metric = std::numeric_limits<double>::quiet_NaN();
  }
  result.test = evaluate(m, data.test);
  if (!data.test.empty()) record({step, "test", result.test.loss, result.test.metric});
  if (!options.checkpoint_path.empty()) {
    save_model(options.checkpoint_path, m,
               std::isfinite(result.best_valid_metric) ? std::optional<double>(result.best_valid_metric)
                                                       : std::nullopt);
  }
  return result;
}

TrainResult train_classification(const corpus::Corpus& corpus, const TrainConfig& cfg, const TrainOptions& options) {
  return train_model(prepare(corpus, cfg, Task::Classification), cfg, Task::Classification, options);
}

TrainResult train_naming(const corpus::Corpus& corpus, const TrainConfig& cfg, const TrainOptions& options) {
  return train_model(prepare(corpus, cfg, Task::Naming), cfg, Task::Naming, options);
}

}  // namespace hpgkit::train
