#include <cmath>
#include <numeric>

#include "common.hpp"
#include "doctest.h"
#include "hpgkit/asdl.hpp"
#include "hpgkit/error.hpp"
#include "hpgkit/hgt.hpp"
#include "hpgkit/hpg.hpp"
#include "hpgkit/minilang.hpp"

using namespace hpgkit;
using namespace hpgkit::model;
using num::Tensor;

namespace {

// Three nodes of one type; edges 1->0 (type 0) and 2->0 (type 1).
GraphBatch star_batch() {
  GraphBatch b;
  b.num_nodes = 3;
  b.num_graphs = 1;
  b.node_types = 1;
  b.edge_types = 2;
  b.node_type = {0, 0, 0};
  b.value_id = {0, 0, 0};
  b.value = {"", "", ""};
  b.timestamp = {0, 1, 2};
  b.graph_of_node = {0, 0, 0};
  b.node_offset = {0, 3};
  b.src = {1, 2};
  b.dst = {0, 0};
  b.edge_type = {0, 1};
  b.meta = {0, 1};
  b.has_incoming = {1.0, 0.0, 0.0};
  b.subtoken_nodes = {{}};
  return b;
}

Tensor eye_bank(std::size_t banks, std::size_t d) {
  Tensor t({banks, d, d});
  for (std::size_t b = 0; b < banks; ++b)
    for (std::size_t i = 0; i < d; ++i) t.data[(b * d + i) * d + i] = 1.0;
  return t;
}

HgtParams::Layer star_layer() {
  HgtParams::Layer l;
  l.k_w = num::constant(eye_bank(1, 4));
  l.q_w = num::constant(eye_bank(1, 4));
  l.m_w = num::constant(eye_bank(1, 4));
  l.c_w = num::constant(eye_bank(1, 4));
  l.k_b = l.q_b = l.m_b = l.c_b = num::constant(Tensor({1, 4}));
  l.w_msg = num::constant(eye_bank(2, 2));
  Tensor att = eye_bank(2, 2);
  att.data[4] = 0.0;
  att.data[5] = 1.0;
  att.data[6] = 1.0;
  att.data[7] = 0.0;
  l.w_att = num::constant(att);
  l.mu = num::constant(Tensor({2, 2}, 1.0));
  return l;
}

num::Var star_h() {
  return num::constant(Tensor({3, 4}, std::vector<double>{0.1, -0.2, 0.3, 0.05, 0.5, 0.1, -0.3, 0.2, -0.4, 0.25,
                                                           0.15, -0.1}));
}

HgtConfig star_config() {
  HgtConfig c;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 4;
  c.hidden = 4;
  c.dropout = 0.0;
  c.vocab_size = 1;
  return c;
}

std::shared_ptr<const asdl::TypeRegistries> reg() {
  static const auto r = std::make_shared<const asdl::TypeRegistries>(asdl::build_registries(asdl::minilang_grammar()));
  return r;
}

hpg::Hpg build(const std::string& src) { return hpg::build_graph(minilang::parse_source(src), reg(), {}); }

Vocab vocab_of(const std::vector<const hpg::Hpg*>& gs) {
  std::map<std::string, std::size_t> counts;
  for (const auto* g : gs)
    for (const auto& n : g->nodes) ++counts[n.value];
  return Vocab::build(counts, 1, {kUnk});
}

}  // namespace

TEST_CASE("positional encoding values") {
  const auto g = golden_json("numeric_values.json");
  const Tensor a = positional_encoding({1}, 4);
  const auto ea = g["pe_t1_d4"].get<std::vector<double>>();
  for (std::size_t j = 0; j < 4; ++j) CHECK(a.data[j] == doctest::Approx(ea[j]).epsilon(1e-12));
  const Tensor b = positional_encoding({0, 7}, 6);
  const auto eb = g["pe_t7_d6"].get<std::vector<double>>();
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(b(0, j) == (j % 2 == 0 ? 0.0 : 1.0));
    CHECK(b(1, j) == doctest::Approx(eb[j]).epsilon(1e-12));
  }
}

TEST_CASE("hgt layer on a three-node star") {
  const auto g = golden_json("numeric_values.json");
  const GraphBatch b = star_batch();
  num::Rng rng(1);
  const num::Var out = hgt_layer(star_h(), b, star_layer(), star_config(), false, rng);
  const auto expect = g["hgt_star_out"].get<std::vector<std::vector<double>>>();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(out->value(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-12));
  // Nodes 1 and 2 have no incoming edges and pass through unchanged.
  CHECK(out->value(1, 0) == 0.5);
  CHECK(out->value(2, 3) == -0.1);
}

TEST_CASE("hgt layer: the only in-edge gets weight one") {
  GraphBatch b = star_batch();
  b.src = {1};
  b.dst = {0};
  b.edge_type = {1};
  b.meta = {1};
  num::Rng rng(1);
  const num::Var out = hgt_layer(star_h(), b, star_layer(), star_config(), false, rng);
  // agg = m_1 exactly, so row 0 = h0 + GELU(h1).
  const num::Var h1 = num::gelu(num::constant(Tensor({4}, std::vector<double>{0.5, 0.1, -0.3, 0.2})));
  const std::vector<double> h0{0.1, -0.2, 0.3, 0.05};
  for (std::size_t j = 0; j < 4; ++j) CHECK(out->value(0, j) == doctest::Approx(h0[j] + h1->value.data[j]));
}

TEST_CASE("hgt layer: no edges is the identity") {
  GraphBatch b = star_batch();
  b.src.clear();
  b.dst.clear();
  b.edge_type.clear();
  b.meta.clear();
  b.has_incoming = {0, 0, 0};
  num::Rng rng(1);
  CHECK(hgt_layer(star_h(), b, star_layer(), star_config(), false, rng)->value.data == star_h()->value.data);
}

TEST_CASE("hgt layer: prior mu scales the logits") {
  HgtParams::Layer l = star_layer();
  l.mu = num::constant(Tensor({2, 2}, 0.0));
  num::Rng rng(1);
  const num::Var out = hgt_layer(star_h(), star_batch(), l, star_config(), false, rng);
  // Uniform attention: agg = (h1 + h2) / 2.
  const num::Var avg =
      num::gelu(num::constant(Tensor({4}, std::vector<double>{0.05, 0.175, -0.075, 0.05})));
  const std::vector<double> h0{0.1, -0.2, 0.3, 0.05};
  for (std::size_t j = 0; j < 4; ++j) CHECK(out->value(0, j) == doctest::Approx(h0[j] + avg->value.data[j]));
}

TEST_CASE("zero layers with zero embedding gives the positional encoding") {
  const hpg::Hpg g = build("def f(a):\n    return a + 1\n");
  const Vocab v = vocab_of({&g});
  const GraphBatch b = make_batch({&g}, v);
  HgtConfig cfg = star_config();
  cfg.layers = 0;
  cfg.d_model = 8;
  cfg.vocab_size = static_cast<int>(v.size());
  HgtParams p;
  p.embed = num::constant(Tensor({v.size(), 8}));
  num::Rng rng(1);
  const Encoded e = encode(b, p, cfg, false, rng);
  CHECK(e.states->value.data == positional_encoding(b.timestamp, 8).data);
}

TEST_CASE("make_batch: disjoint union") {
  const hpg::Hpg a = build("def f(a):\n    return a\n");
  const hpg::Hpg c = build("def g(xVal):\n    print(xVal)\n");
  const Vocab v = vocab_of({&a, &c});
  const GraphBatch b = make_batch({&a, &c}, v);
  CHECK(b.num_graphs == 2);
  CHECK(b.num_nodes == a.nodes.size() + c.nodes.size());
  CHECK(b.node_offset == std::vector<int>{0, static_cast<int>(a.nodes.size()), static_cast<int>(b.num_nodes)});
  CHECK(b.src.size() == a.edges.size() + c.edges.size());
  for (std::size_t e = 0; e < b.src.size(); ++e) {
    CHECK(b.graph_of_node[static_cast<std::size_t>(b.src[e])] == b.graph_of_node[static_cast<std::size_t>(b.dst[e])]);
    const int T = static_cast<int>(b.node_types), R = static_cast<int>(b.edge_types);
    CHECK(b.meta[e] == (b.node_type[static_cast<std::size_t>(b.src[e])] * R + b.edge_type[e]) * T +
                           b.node_type[static_cast<std::size_t>(b.dst[e])]);
  }
  for (int id : b.subtoken_nodes[1]) CHECK(id >= b.node_offset[1]);
}

TEST_CASE("encoder is permutation equivariant") {
  const hpg::Hpg g = build("def f(a, bVal):\n    if a > bVal:\n        return a\n    return bVal\n");
  const Vocab v = vocab_of({&g});
  const GraphBatch b = make_batch({&g}, v);
  HgtConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 8;
  cfg.hidden = 16;
  cfg.dropout = 0.0;
  cfg.vocab_size = static_cast<int>(v.size());
  num::ParamStore store;
  num::Rng rng(11);
  const HgtParams p = init_hgt_params(store, cfg, b.node_types, b.edge_types, rng);
  // Random non-unit priors make the check sensitive to edge bookkeeping.
  for (auto& layer : p.layers)
    for (auto& x : layer.mu->value.data) x = rng.uniform(0.5, 1.5);

  const std::size_t n = b.num_nodes;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  num::Rng prng(3);
  prng.shuffle(perm);  // old id i goes to perm[i]
  GraphBatch q = b;
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(perm[i]);
    q.node_type[j] = b.node_type[i];
    q.value_id[j] = b.value_id[i];
    q.value[j] = b.value[i];
    q.timestamp[j] = b.timestamp[i];
    q.has_incoming[j] = b.has_incoming[i];
  }
  for (std::size_t e = 0; e < b.src.size(); ++e) {
    q.src[e] = perm[static_cast<std::size_t>(b.src[e])];
    q.dst[e] = perm[static_cast<std::size_t>(b.dst[e])];
  }
  num::Rng r1(1), r2(1);
  const Encoded e1 = encode(b, p, cfg, false, r1);
  const Encoded e2 = encode(q, p, cfg, false, r2);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      worst = std::max(worst, std::abs(e1.states->value(i, j) - e2.states->value(static_cast<std::size_t>(perm[i]), j)));
  CHECK(worst < 1e-9);
}

TEST_CASE("encoder rejects timestamps outside the encoding range") {
  const hpg::Hpg g = build("def f():\n    return 1\n");
  const Vocab v = vocab_of({&g});
  GraphBatch b = make_batch({&g}, v);
  HgtConfig cfg = star_config();
  cfg.vocab_size = static_cast<int>(v.size());
  cfg.max_timestamp = 3;
  num::ParamStore store;
  num::Rng rng(1);
  const HgtParams p = init_hgt_params(store, cfg, b.node_types, b.edge_types, rng);
  CHECK_THROWS_AS(encode(b, p, cfg, false, rng), Error);
}

TEST_CASE("config validation") {
  HgtConfig c = star_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = star_config();
  CHECK(HgtConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("global attention pooling values") {
  const auto golden = golden_json("numeric_values.json")["pool_3node"].get<std::vector<double>>();
  GraphBatch b;
  b.num_nodes = 3;
  b.num_graphs = 1;
  b.graph_of_node = {0, 0, 0};
  b.node_offset = {0, 3};
  PoolParams p;
  p.gate_w = num::constant(Tensor({2, 2}, std::vector<double>{0.2, -0.1, 0.4, 0.3}));
  p.gate_b = num::constant(Tensor({2}, std::vector<double>{0.05, -0.2}));
  p.value_w = num::constant(Tensor({2, 2}, std::vector<double>{1.0, 0.5, -0.5, 0.25}));
  p.value_b = num::constant(Tensor({2}, std::vector<double>{0.1, 0.0}));
  const num::Var hs = num::constant(Tensor({3, 2}, std::vector<double>{1.0, -1.0, 0.5, 2.0, -0.3, 0.7}));
  const num::Var out = global_attention_pool(hs, b, p);
  CHECK(out->value.data[0] == doctest::Approx(golden[0]).epsilon(1e-12));
  CHECK(out->value.data[1] == doctest::Approx(golden[1]).epsilon(1e-12));

  // A saturated gate turns pooling into a plain sum of values.
  p.gate_b = num::constant(Tensor({2}, 60.0));
  const num::Var sat = global_attention_pool(hs, b, p);
  CHECK(sat->value.data[0] == doctest::Approx(1.0 + 0.5 - 0.3 - (-1.0 + 2.0 + 0.7) * 0.5 + 0.3));

  b.node_offset = {0, 3, 3};
  b.num_graphs = 2;
  CHECK_THROWS_AS(global_attention_pool(hs, b, p), Error);
}

namespace {

struct Setup {
  Vocab vocab;
  HgtConfig cfg;
  num::ParamStore store;
  HgtParams params;
};

// Random parameters for graphs over the MiniLang registries.
std::unique_ptr<Setup> random_setup(std::uint64_t seed) {
  auto s = std::make_unique<Setup>();
  s->vocab = Vocab({kUnk, "Module", "Expr", "BinOp", "Sub", "Name", "a", "b"});
  s->cfg.layers = 2;
  s->cfg.heads = 2;
  s->cfg.d_model = 8;
  s->cfg.hidden = 16;
  s->cfg.dropout = 0.0;
  s->cfg.vocab_size = static_cast<int>(s->vocab.size());
  num::Rng rng(seed);
  s->params = init_hgt_params(s->store, s->cfg, reg()->node_types().size(), reg()->edge_types().size(), rng);
  for (auto& layer : s->params.layers)
    for (auto& x : layer.mu->value.data) x = rng.uniform(0.5, 1.5);
  return s;
}

Tensor encode_graph(const hpg::Hpg& g, const Setup& s) {
  num::Rng rng(1);
  return encode(make_batch({&g}, s.vocab), s.params, s.cfg, false, rng).states->value;
}

double max_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("same value at different timestamps differs by the encoding difference") {
  const num::Var embed = num::constant(Tensor({2, 4}, std::vector<double>{0.3, -0.1, 0.2, 0.7, 0, 0, 0, 0}));
  HgtParams p;
  p.embed = embed;
  GraphBatch b = star_batch();
  b.value_id = {0, 0, 1};
  b.timestamp = {3, 9, 0};
  const num::Var h = init_features(b, p, 4);
  const Tensor pe = positional_encoding({3, 9}, 4);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(h->value(1, j) - h->value(0, j) == doctest::Approx(pe(1, j) - pe(0, j)).epsilon(1e-12));
}

TEST_CASE("zeroed C banks make every layer the identity") {
  auto s = random_setup(4);
  const hpg::Hpg g = build(fixture("a_minus_b.mini"));
  for (auto& layer : s->params.layers) {
    std::fill(layer.c_w->value.data.begin(), layer.c_w->value.data.end(), 0.0);
    std::fill(layer.c_b->value.data.begin(), layer.c_b->value.data.end(), 0.0);
  }
  const GraphBatch b = make_batch({&g}, s->vocab);
  const Tensor h0 = init_features(b, s->params, 8)->value;
  CHECK(encode_graph(g, *s).data == h0.data);
}

TEST_CASE("encoder is sensitive to edge types and blind to erased operand order") {
  auto s = random_setup(8);
  const hpg::Hpg ab = build(fixture("a_minus_b.mini"));
  const hpg::Hpg ba = build(fixture("b_minus_a.mini"));
  hpg::Hpg swapped = ab;
  const int left = *reg()->edge_type_id("left"), right = *reg()->edge_type_id("right");
  const int left_r = *reg()->edge_type_id("left_reverse"), right_r = *reg()->edge_type_id("right_reverse");
  for (auto& e : swapped.edges) {
    if (e.type_id == left) e.type_id = right;
    else if (e.type_id == right) e.type_id = left;
    else if (e.type_id == left_r) e.type_id = right_r;
    else if (e.type_id == right_r) e.type_id = left_r;
  }
  CHECK(max_diff(encode_graph(ab, *s), encode_graph(swapped, *s)) > 1e-6);

  const hpg::Hpg eab = hpg::erase_types(ab, true, true);
  const hpg::Hpg eba = hpg::erase_types(ba, true, true);
  auto se = std::make_unique<Setup>();
  se->vocab = s->vocab;
  se->cfg = s->cfg;
  num::Rng rng(8);
  se->params = init_hgt_params(se->store, se->cfg, eab.registries->node_types().size(),
                               eab.registries->edge_types().size(), rng);
  CHECK(encode_graph(eab, *se).data == encode_graph(eba, *se).data);
}

TEST_CASE("mu scaling with a single meta relation per target") {
  // Both in-edges of node 0 share meta relation 0. Scaling that mu acts as a
  // softmax temperature, so alpha is unchanged when the raw scores tie.
  GraphBatch b = star_batch();
  b.edge_type = {0, 0};
  b.meta = {0, 0};
  HgtParams::Layer l = star_layer();
  num::Var h = star_h();
  for (std::size_t j = 0; j < 4; ++j) h->value(2, j) = h->value(1, j);
  num::Rng rng(1);
  const Tensor base = hgt_layer(h, b, l, star_config(), false, rng)->value;
  l.mu->value.data = {3.0, 3.0, 1.0, 1.0};
  CHECK(max_diff(base, hgt_layer(h, b, l, star_config(), false, rng)->value) < 1e-15);
  // A single in-edge keeps alpha = 1 under any scaling.
  GraphBatch one = b;
  one.src = {1};
  one.dst = {0};
  one.edge_type = {0};
  one.meta = {0};
  l.mu->value.data = {1.0, 1.0, 1.0, 1.0};
  const Tensor o1 = hgt_layer(star_h(), one, l, star_config(), false, rng)->value;
  l.mu->value.data = {7.0, 0.2, 1.0, 1.0};
  CHECK(max_diff(o1, hgt_layer(star_h(), one, l, star_config(), false, rng)->value) < 1e-15);
  // With two distinct meta relations the ratio of mu values matters.
  l.mu->value.data = {1.0, 1.0, 1.0, 1.0};
  const Tensor two = hgt_layer(star_h(), star_batch(), l, star_config(), false, rng)->value;
  l.mu->value.data = {3.0, 3.0, 1.0, 1.0};
  CHECK(max_diff(two, hgt_layer(star_h(), star_batch(), l, star_config(), false, rng)->value) > 1e-6);
}

TEST_CASE("every encoder parameter bank receives gradient") {
  auto s = random_setup(5);
  const hpg::Hpg g = build(fixture("calls.mini"));
  const GraphBatch b = make_batch({&g}, s->vocab);
  num::Rng rng(2);
  Tensor w({b.num_nodes, 8});
  for (auto& x : w.data) x = rng.uniform(-1, 1);
  const Encoded e = encode(b, s->params, s->cfg, false, rng);
  num::backward(num::sum(num::mul(e.states, num::constant(w))));
  for (std::size_t i = 0; i < s->store.params().size(); ++i) {
    const auto& p = s->store.params()[i];
    double mag = 0;
    for (double x : p->grad.data) mag += std::abs(x);
    INFO(s->store.names()[i]);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("pooling a duplicated graph doubles the output") {
  num::Rng rng(3);
  num::ParamStore store;
  const PoolParams p = init_pool_params(store, 3, rng);
  Tensor hs({2, 3});
  for (auto& x : hs.data) x = rng.uniform(-1, 1);
  Tensor twice({4, 3});
  for (std::size_t i = 0; i < 6; ++i) twice.data[i] = twice.data[i + 6] = hs.data[i];
  GraphBatch one;
  one.num_nodes = 2;
  one.num_graphs = 1;
  one.graph_of_node = {0, 0};
  one.node_offset = {0, 2};
  GraphBatch two = one;
  two.num_nodes = 4;
  two.graph_of_node = {0, 0, 0, 0};
  two.node_offset = {0, 4};
  const Tensor a = global_attention_pool(num::constant(hs), one, p)->value;
  const Tensor b = global_attention_pool(num::constant(twice), two, p)->value;
  for (std::size_t j = 0; j < 3; ++j) CHECK(b.data[j] == doctest::Approx(2.0 * a.data[j]).epsilon(1e-12));
}

TEST_CASE("unknown type ids are rejected") {
  auto s = random_setup(1);
  GraphBatch b = star_batch();
  b.node_type = {0, 0, 99};
  num::Rng rng(1);
  CHECK_THROWS_AS(hgt_layer(star_h(), b, s->params.layers[0], s->cfg, false, rng), Error);
}
