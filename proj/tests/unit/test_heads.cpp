#include <cmath>

#include "doctest.h"
#include "hpgkit/error.hpp"
#include "hpgkit/heads.hpp"

using namespace hpgkit;
using namespace hpgkit::model;
using num::Tensor;

namespace {

Vocab small_vocab() { return Vocab({kUnk, kBos, kEos, "get", "name", "x"}); }

DecoderConfig small_decoder() { return DecoderConfig{1, 2, 8, 16, 5}; }

DecoderMemory random_memory(num::Rng& rng, std::vector<std::string> values) {
  Tensor t({values.size(), 8});
  for (auto& x : t.data) x = rng.uniform(-1, 1);
  return {num::constant(t), std::move(values)};
}

}  // namespace

TEST_CASE("subtoken_prf: worked example") {
  const Prf p = subtoken_prf({"train", "model"}, {"train", "graph", "model"});
  CHECK(p.precision == 1.0);
  CHECK(std::abs(p.recall - 2.0 / 3.0) <= 1e-12);
  CHECK(std::abs(p.f1 - 0.8) <= 1e-12);
}

TEST_CASE("subtoken_prf: edge cases") {
  const Prf both = subtoken_prf({}, {});
  CHECK(both.precision == 1.0);
  CHECK(both.recall == 1.0);
  CHECK(both.f1 == 1.0);
  CHECK(subtoken_prf({}, {"a"}).f1 == 0.0);
  CHECK(subtoken_prf({"a"}, {}).precision == 0.0);
  CHECK(subtoken_prf({"a"}, {"b"}).f1 == 0.0);
  // Case-insensitive sets.
  CHECK(subtoken_prf({"Get", "get"}, {"GET"}).f1 == 1.0);
  const Prf p = subtoken_prf({"a", "b", "c", "d"}, {"a", "e"});
  CHECK(p.precision == 0.25);
  CHECK(p.recall == 0.5);
  CHECK(p.f1 == doctest::Approx(2.0 * p.precision * p.recall / (p.precision + p.recall)));
}

TEST_CASE("accuracy") {
  CHECK(accuracy({1, 0, 1, 1}, {1, 1, 1, 0}) == 0.5);
  CHECK(accuracy({}, {}) == 0.0);
  CHECK_THROWS_AS(accuracy({1}, {1, 0}), Error);
}

TEST_CASE("extend_vocab: columns for known and unknown values") {
  const Vocab v = small_vocab();
  const ExtendedVocab e = extend_vocab(v, {"get", "user", "x", "user"});
  CHECK(e.base == v.size());
  CHECK(e.extra == std::vector<std::string>{"user"});
  CHECK(e.column_of == std::vector<int>{3, 6, 5, 6});
  CHECK(e.size() == 7);
  CHECK(e.word(6, v) == "user");
  CHECK(e.id("user", v) == 6);
  CHECK(e.id("get", v) == 3);
}

TEST_CASE("copy_mixture: p_copy zero returns the vocabulary distribution") {
  const num::Var pv = num::constant(Tensor({1, 3}, std::vector<double>{0.5, 0.3, 0.2}));
  const num::Var att = num::constant(Tensor({1, 2}, std::vector<double>{0.6, 0.4}));
  const num::Var out = copy_mixture(pv, att, num::constant(Tensor({1, 1}, 0.0)), {1, 3}, 4);
  CHECK(out->value.data == std::vector<double>{0.5, 0.3, 0.2, 0.0});
}

TEST_CASE("copy_mixture: singleton memory with p_copy one") {
  const num::Var pv = num::constant(Tensor({1, 3}, std::vector<double>{0.5, 0.3, 0.2}));
  const num::Var att = num::constant(Tensor({1, 1}, 1.0));
  const num::Var out = copy_mixture(pv, att, num::constant(Tensor({1, 1}, 1.0)), {3}, 4);
  CHECK(out->value.data == std::vector<double>{0.0, 0.0, 0.0, 1.0});
}

TEST_CASE("copy_mixture: two positions with the same value") {
  // P_vocab(x) = 0.1, a = [0.3, 0.7] both on x, p_copy = 0.5.
  const num::Var pv = num::constant(Tensor({1, 2}, std::vector<double>{0.9, 0.1}));
  const num::Var att = num::constant(Tensor({1, 2}, std::vector<double>{0.3, 0.7}));
  const num::Var out = copy_mixture(pv, att, num::constant(Tensor({1, 1}, 0.5)), {1, 1}, 2);
  CHECK(out->value.data[1] == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(out->value.data[0] + out->value.data[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("copy_mixture: mass conservation") {
  num::Rng rng(4);
  Tensor pv({3, 5}), att({3, 4}), pc({3, 1});
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0, t = 0;
    for (std::size_t j = 0; j < 5; ++j) s += pv(r, j) = rng.uniform();
    for (std::size_t j = 0; j < 5; ++j) pv(r, j) /= s;
    for (std::size_t j = 0; j < 4; ++j) t += att(r, j) = rng.uniform();
    for (std::size_t j = 0; j < 4; ++j) att(r, j) /= t;
    pc(r, 0) = rng.uniform();
  }
  const std::vector<int> cols{0, 5, 6, 5};
  const num::Var out = copy_mixture(num::constant(pv), num::constant(att), num::constant(pc), cols, 7);
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0, copied = 0;
    for (std::size_t j = 0; j < 7; ++j) total += out->value(r, j);
    copied = out->value(r, 5) + out->value(r, 6);
    CHECK(std::abs(total - 1.0) <= 1e-9);
    CHECK(std::abs(copied - pc(r, 0) * (att(r, 1) + att(r, 2) + att(r, 3))) <= 1e-9);
  }
}

TEST_CASE("decode_step: rows are distributions; copy off without memory") {
  const Vocab v = small_vocab();
  const DecoderConfig cfg = small_decoder();
  num::ParamStore store;
  num::Rng rng(2);
  const DecoderParams p = init_decoder(store, cfg, v.size(), rng);
  const DecoderMemory mem = random_memory(rng, {"get", "user", "name"});
  const std::vector<int> inputs{v.id(kBos), v.id("get"), v.id(kUnk)};
  const DecodeOutput out = decode_step(p, cfg, v, mem, inputs, true, false, 0.0, rng);
  CHECK(out.prob->value.rows() == 3);
  CHECK(out.prob->value.cols() == v.size() + 1);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < out.prob->value.cols(); ++j) s += out.prob->value(r, j);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  REQUIRE(out.p_copy);
  REQUIRE(out.attention);

  const DecodeOutput off = decode_step(p, cfg, v, mem, inputs, false, false, 0.0, rng);
  CHECK_FALSE(off.p_copy);
  CHECK(off.prob->value.cols() == v.size());
  const DecoderMemory empty{num::constant(Tensor({0, 8})), {}};
  const DecodeOutput none = decode_step(p, cfg, v, empty, inputs, true, false, 0.0, rng);
  CHECK_FALSE(none.p_copy);
  CHECK(none.prob->value.cols() == v.size());
}

TEST_CASE("teacher_forcing: inputs shift right, OOV targets use the copy column") {
  const Vocab v = small_vocab();
  const ExtendedVocab e = extend_vocab(v, {"get", "user"});
  const TeacherForcing tf = teacher_forcing({"get", "user"}, v, e, true);
  CHECK(tf.inputs == std::vector<int>{v.id(kBos), v.id("get"), v.id(kUnk)});
  CHECK(tf.targets == std::vector<int>{v.id("get"), e.id("user", v), v.id(kEos)});
  CHECK(tf.words == std::vector<std::string>{"", "get", "user"});
  const TeacherForcing nc = teacher_forcing({"get", "user"}, v, e, false);
  CHECK(nc.targets == std::vector<int>{v.id("get"), v.id(kUnk), v.id(kEos)});
}

TEST_CASE("generate: deterministic and capped at max_len") {
  const Vocab v = small_vocab();
  DecoderConfig cfg = small_decoder();
  cfg.max_len = 3;
  num::ParamStore store;
  num::Rng rng(5);
  const DecoderParams p = init_decoder(store, cfg, v.size(), rng);
  // Push the output layer towards "x" so EOS never wins.
  const auto x = static_cast<std::size_t>(v.id("x"));
  for (std::size_t r = 0; r < p.out_w->value.rows(); ++r) p.out_w->value(r, x) = 0.0;
  p.out_b->value.data[x] = 50.0;
  const DecoderMemory mem = random_memory(rng, {"zz"});
  const auto a = generate(p, cfg, v, mem, false);
  const auto b = generate(p, cfg, v, mem, false);
  CHECK(a == b);
  CHECK(a == std::vector<std::string>{"x", "x", "x"});
}

TEST_CASE("generate: a copied out-of-vocabulary word") {
  const Vocab v = small_vocab();
  const DecoderConfig cfg = small_decoder();
  num::ParamStore store;
  num::Rng rng(6);
  const DecoderParams p = init_decoder(store, cfg, v.size(), rng);
  // Force p_copy to 1.
  for (auto& w : p.copy_w->value.data) w = 0.0;
  p.copy_b->value.data[0] = 60.0;
  const DecoderMemory mem = random_memory(rng, {"widget"});
  const auto words = generate(p, cfg, v, mem, true);
  CHECK(words == std::vector<std::string>(static_cast<std::size_t>(cfg.max_len), "widget"));
}

TEST_CASE("classifier: zero weights give a uniform distribution") {
  num::ParamStore store;
  num::Rng rng(1);
  ClassifierConfig cfg{{6}, 3};
  const ClassifierParams p = init_classifier(store, cfg, 4, rng);
  for (const auto& w : p.w) std::fill(w->value.data.begin(), w->value.data.end(), 0.0);
  const num::Var x = num::constant(Tensor({2, 4}, std::vector<double>{1, 2, 3, 4, -1, 0, 5, 2}));
  const num::Var probs = num::softmax_rows(classify(x, p));
  for (double q : probs->value.data) CHECK(q == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("decoder config validation") {
  DecoderConfig c = small_decoder();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_decoder();
  CHECK(DecoderConfig::from_json(c.to_json()).to_json() == c.to_json());
  ClassifierConfig k{{8, 4}, 2};
  CHECK(ClassifierConfig::from_json(k.to_json()).to_json() == k.to_json());
}

TEST_CASE("decode_step: selective read only affects positions whose word is in memory") {
  const Vocab v = small_vocab();
  const DecoderConfig cfg = small_decoder();
  num::ParamStore store;
  num::Rng rng(7);
  const DecoderParams p = init_decoder(store, cfg, v.size(), rng);
  const DecoderMemory mem = random_memory(rng, {"get", "user"});
  const std::vector<int> inputs{v.id(kBos), v.id(kUnk), v.id("name")};
  const Tensor plain = decode_step(p, cfg, v, mem, inputs, true, false, 0.0, rng).prob->value;
  const Tensor miss = decode_step(p, cfg, v, mem, inputs, true, false, 0.0, rng, {"", "zzz", "name"}).prob->value;
  CHECK(miss.data == plain.data);
  const Tensor hit = decode_step(p, cfg, v, mem, inputs, true, false, 0.0, rng, {"", "user", "name"}).prob->value;
  // Causal self-attention: row 0 cannot see position 1.
  for (std::size_t j = 0; j < hit.cols(); ++j) CHECK(hit(0, j) == doctest::Approx(plain(0, j)).epsilon(1e-12));
  double diff = 0;
  for (std::size_t j = 0; j < hit.cols(); ++j) diff += std::abs(hit(1, j) - plain(1, j));
  CHECK(diff > 1e-9);
  CHECK_THROWS_AS(decode_step(p, cfg, v, mem, inputs, true, false, 0.0, rng, {"", "user"}), Error);
}
