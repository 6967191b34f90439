#include <cmath>
#include <filesystem>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "hpgkit/corpus.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/train.hpp"

using namespace hpgkit;
using namespace hpgkit::train;
using num::Tensor;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.optimizer.lr = 1e-3;
  c.encoder = {2, 2, 16, 32, 0.1, 0, 1 << 20};
  c.decoder = {1, 2, 16, 32, 6};
  c.input_min_count = 1;
  c.output_min_count = 1;
  return c;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("adamw: one and two steps") {
  const auto g = golden_json("numeric_values.json");
  num::Var p = num::parameter(Tensor({1}, 0.5));
  AdamWState st;
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  p->ensure_grad().data[0] = 1.0;
  adamw_step({p}, st, cfg);
  CHECK(p->value.data[0] == doctest::Approx(g["adamw_one_step"].get<double>()).epsilon(1e-14));
  p->grad.data[0] = -0.5;
  adamw_step({p}, st, cfg);
  CHECK(p->value.data[0] == doctest::Approx(g["adamw_two_steps"].get<double>()).epsilon(1e-14));
  CHECK(st.step == 2);
}

TEST_CASE("adamw: zero gradient only decays") {
  num::Var p = num::parameter(Tensor({2}, std::vector<double>{2.0, -4.0}));
  p->ensure_grad();
  AdamWState st;
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  adamw_step({p}, st, cfg);
  CHECK(p->value.data[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  CHECK(p->value.data[1] == doctest::Approx(-4.0 + 0.1 * 0.5 * 4.0));
  cfg.weight_decay = 0.0;
  const auto before = p->value.data;
  adamw_step({p}, st, cfg);
  CHECK(p->value.data == before);
}

TEST_CASE("adamw: non-finite gradient leaves parameters alone") {
  num::Var a = num::parameter(Tensor({1}, 1.0));
  num::Var b = num::parameter(Tensor({1}, 1.0));
  a->ensure_grad().data[0] = 1.0;
  b->ensure_grad().data[0] = std::nan("");
  AdamWState st;
  CHECK_THROWS_AS(adamw_step({a, b}, st, {}), Error);
  CHECK(a->value.data[0] == 1.0);
}

TEST_CASE("clip_grad_norm") {
  num::Var a = num::parameter(Tensor({2}));
  a->ensure_grad().data = {3.0, 4.0};
  CHECK(clip_grad_norm({a}, 10.0) == doctest::Approx(5.0));
  CHECK(a->grad.data == std::vector<double>{3.0, 4.0});
  CHECK(clip_grad_norm({a}, 1.0) == doctest::Approx(5.0));
  CHECK(a->grad.data[0] == doctest::Approx(0.6));
  CHECK(a->grad.data[1] == doctest::Approx(0.8));
}

TEST_CASE("config: json round trip, hash, unknown keys") {
  TrainConfig c = tiny_config();
  c.ablation.no_next_token = true;
  c.scheme = hpg::SubtokenScheme::Independent;
  const TrainConfig d = TrainConfig::from_json(c.to_json());
  CHECK(d.to_json() == c.to_json());
  CHECK(d.hash() == c.hash());
  d.validate();
  TrainConfig e = c;
  e.seed = 99;
  CHECK(e.hash() != c.hash());

  nlohmann::json j = c.to_json();
  j["learning_rate_typo"] = 1;
  CHECK_THROWS_AS(TrainConfig::from_json(j), Error);
  CHECK(TrainConfig::from_json(nlohmann::json::object()).to_json() == TrainConfig().to_json());
  const TrainConfig full = TrainConfig::full_scale();
  CHECK(full.encoder.layers == 8);
  CHECK(full.encoder.heads == 8);
  CHECK(full.encoder.d_model == 256);
  TrainConfig bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("derive_seed: distinct, deterministic streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t k = 0; k < 20; ++k) seen.insert(derive_seed(s, k));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}

TEST_CASE("classification corpus: deterministic and balanced") {
  corpus::ClassificationOptions o;
  o.per_class = 20;
  const corpus::Corpus a = corpus::gen_classification_corpus(3, o);
  CHECK(corpus::serialize_corpus(a) == corpus::serialize_corpus(corpus::gen_classification_corpus(3, o)));
  CHECK(corpus::serialize_corpus(a) != corpus::serialize_corpus(corpus::gen_classification_corpus(4, o)));
  corpus::validate_corpus(a);
  std::map<std::string, std::map<int, int>> counts;
  for (const auto& e : a.examples) ++counts[e.split][*e.label];
  for (const auto& [split, per] : counts) {
    CHECK(per.size() == 4);
    for (const auto& [label, n] : per) CHECK(n == per.begin()->second);
  }
  CHECK(counts["train"][0] + counts["valid"][0] + counts["test"][0] == 20);
}

TEST_CASE("operand-order corpus: twins identical once types are erased") {
  const corpus::Corpus c = corpus::gen_operand_order_corpus(5, 40);
  REQUIRE(c.examples.size() == 40);
  TrainConfig cfg = tiny_config();
  cfg.ablation.erase_node_types = cfg.ablation.erase_edge_types = true;
  const Prepared p = prepare(c, cfg, Task::Classification);
  std::vector<const Sample*> all;
  for (const auto* s : {&p.train, &p.valid, &p.test})
    for (const auto& x : *s) all.push_back(&x);
  REQUIRE(all.size() == 40);
  TrainConfig typed = tiny_config();
  const Prepared q = prepare(c, typed, Task::Classification);
  std::size_t typed_differ = 0;
  for (std::size_t split = 0; split < 3; ++split) {
    const auto& es = split == 0 ? p.train : split == 1 ? p.valid : p.test;
    const auto& ts = split == 0 ? q.train : split == 1 ? q.valid : q.test;
    REQUIRE(es.size() % 2 == 0);
    for (std::size_t i = 0; i + 1 < es.size(); i += 2) {
      CHECK(es[i].label != es[i + 1].label);
      CHECK(hpg::canonical_serialize(es[i].graph) == hpg::canonical_serialize(es[i + 1].graph));
      typed_differ += hpg::canonical_serialize(ts[i].graph) != hpg::canonical_serialize(ts[i + 1].graph);
    }
  }
  CHECK(typed_differ == 20);
}

TEST_CASE("naming corpus: OOV share and copyable targets") {
  corpus::NamingOptions o;
  o.n = 100;
  const corpus::Corpus c = corpus::gen_naming_corpus(6, o);
  corpus::validate_corpus(c);
  CHECK(corpus::oov_target_fraction(c, "test") >= 0.5);
  const auto& words = corpus::naming_template_words();
  for (const auto& e : c.examples) {
    REQUIRE(e.target);
    REQUIRE(e.source);
    for (const auto& w : *e.target) {
      const bool templ = std::find(words.begin(), words.end(), w) != words.end();
      CHECK((templ || e.source->find(w) != std::string::npos));
    }
  }
}

TEST_CASE("corpus file round trip and validation") {
  corpus::ClassificationOptions o;
  o.per_class = 3;
  const corpus::Corpus c = corpus::gen_classification_corpus(1, o);
  const std::string path = temp_path("hpgkit_corpus_test.jsonl");
  corpus::write_corpus(path, c);
  CHECK(corpus::serialize_corpus(corpus::read_corpus(path)) == corpus::serialize_corpus(c));
  corpus::Corpus dup = c;
  dup.examples.push_back(dup.examples.front());
  CHECK_THROWS_AS(corpus::validate_corpus(dup), Error);
  corpus::Corpus bad = c;
  bad.examples.front().split = "dev";
  CHECK_THROWS_AS(corpus::validate_corpus(bad), Error);
  std::filesystem::remove(path);
}

TEST_CASE("tiny classification training: deterministic, checkpoint round trip") {
  corpus::ClassificationOptions o;
  o.per_class = 10;
  const corpus::Corpus c = corpus::gen_classification_corpus(2, o);
  const TrainConfig cfg = tiny_config();
  const std::string metrics = temp_path("hpgkit_metrics_test.jsonl");
  const std::string ckpt = temp_path("hpgkit_model_test.ckpt");
  TrainOptions opt;
  opt.metrics_path = metrics;
  opt.checkpoint_path = ckpt;
  const TrainResult a = train_classification(c, cfg, opt);
  const std::string metrics_text = read_file(metrics);
  const TrainResult b = train_classification(c, cfg);
  CHECK(serialize_metrics(a.history) == serialize_metrics(b.history));
  CHECK(serialize_metrics(a.history) == metrics_text);
  CHECK(a.test.logits == b.test.logits);
  CHECK(a.test.metric >= 0.0);
  CHECK(a.test.metric <= 1.0);
  for (const auto& line : read_lines(metrics)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("split"));
    CHECK(j.contains("loss"));
  }

  const auto loaded = load_model(ckpt);
  const Prepared p = prepare(c, cfg, Task::Classification);
  const EvalResult e1 = evaluate(*a.model, p.test, 32);
  const EvalResult e2 = evaluate(*loaded, p.test, 32);
  CHECK(e1.predictions == e2.predictions);
  CHECK(e1.logits == e2.logits);
  // Batch size does not change results.
  const EvalResult e3 = evaluate(*a.model, p.test, 3);
  CHECK(e3.predictions == e1.predictions);
  for (std::size_t i = 0; i < e1.logits.size(); ++i)
    for (std::size_t j = 0; j < e1.logits[i].size(); ++j) CHECK(std::abs(e3.logits[i][j] - e1.logits[i][j]) <= 1e-12);
  std::filesystem::remove(metrics);
  std::filesystem::remove(ckpt);
}

TEST_CASE("tiny naming training runs and reports F1") {
  corpus::NamingOptions o;
  o.n = 40;
  const corpus::Corpus c = corpus::gen_naming_corpus(3, o);
  const TrainResult r = train_naming(c, tiny_config());
  CHECK(r.test.generated.size() == c.split("test").size());
  CHECK(r.test.metric >= 0.0);
  CHECK(r.test.metric <= 1.0);
  const EvalResult e = evaluate(*r.model, prepare(c, r.model->config, Task::Naming).test, 5);
  CHECK(e.generated == r.test.generated);
}

TEST_CASE("load_model: missing file") { CHECK_THROWS_AS(load_model(temp_path("hpgkit_no_such.ckpt")), Error); }
