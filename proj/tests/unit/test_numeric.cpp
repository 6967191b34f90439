#include <cmath>
#include <filesystem>

#include "common.hpp"
#include "doctest.h"
#include "hpgkit/error.hpp"
#include "hpgkit/io.hpp"
#include "hpgkit/numeric.hpp"

using namespace hpgkit;
using namespace hpgkit::num;

namespace {

Var rand_param(Rng& rng, Shape s) {
  Tensor t(std::move(s));
  for (auto& x : t.data) x = rng.uniform(-1, 1);
  return parameter(std::move(t));
}

}  // namespace

TEST_CASE("tensor: shape and data length") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("matmul: identity and shape errors") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Tensor x({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(matmul(constant(eye), constant(x))->value.data == x.data);
  try {
    matmul(constant(Tensor({2, 3})), constant(Tensor({2, 3})));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(constant(Tensor({2, 3})), constant(Tensor({3, 2}))), ShapeError);
}

TEST_CASE("segment_softmax: closed-form values") {
  const auto golden = golden_json("numeric_values.json")["segment_softmax"].get<std::vector<double>>();
  Var s = constant(Tensor({3, 1}, std::vector<double>{std::log(2.0), 0.0, 5.0}));
  const Var out = segment_softmax(s, {0, 0, 1}, 2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out->value.data[i] == doctest::Approx(golden[i]).epsilon(1e-12));
  const Var half = segment_softmax(constant(Tensor({2, 1}, 0.0)), {0, 0}, 1);
  CHECK(half->value.data == std::vector<double>{0.5, 0.5});
  CHECK(segment_softmax(constant(Tensor({1, 1}, 3.7)), {0}, 1)->value.data[0] == 1.0);
  CHECK(segment_softmax(constant(Tensor({0, 2})), {}, 4)->value.size() == 0);
  // Large scores stay finite.
  const Var big = segment_softmax(constant(Tensor({2, 1}, std::vector<double>{1000.0, 999.0})), {0, 0}, 1);
  CHECK(std::isfinite(big->value.data[0]));
  CHECK(big->value.data[0] + big->value.data[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(segment_softmax(constant(Tensor({2, 1})), {0, 3}, 2), Error);
}

TEST_CASE("segment_softmax: sums to one over random segments") {
  Rng rng(5);
  Tensor t({50, 3});
  for (auto& x : t.data) x = rng.uniform(-20, 20);
  std::vector<int> seg(50);
  for (auto& s : seg) s = static_cast<int>(rng.index(7));
  const Var out = segment_softmax(constant(t), seg, 7);
  for (std::size_t h = 0; h < 3; ++h) {
    std::vector<double> sums(7, 0.0);
    std::vector<bool> used(7, false);
    for (std::size_t r = 0; r < 50; ++r) {
      CHECK(out->value(r, h) >= 0.0);
      sums[static_cast<std::size_t>(seg[r])] += out->value(r, h);
      used[static_cast<std::size_t>(seg[r])] = true;
    }
    for (std::size_t s = 0; s < 7; ++s) {
      if (used[s]) CHECK(std::abs(sums[s] - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("backward: sum gives ones; reuse accumulates") {
  Var x = parameter(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4}));
  backward(sum(x));
  CHECK(x->grad.data == std::vector<double>{1, 1, 1, 1});
  Var y = parameter(Tensor({1}, std::vector<double>{3.0}));
  backward(sum(add(y, mul(y, y))));  // d/dy (y + y^2) = 1 + 2y
  CHECK(y->grad.data[0] == doctest::Approx(7.0));
  CHECK_THROWS_AS(backward(x), Error);
  Var c = constant(Tensor({1}, 2.0));
  backward(sum(mul(y, c)));
  CHECK(c->grad.size() == 0);
}

TEST_CASE("NoGradGuard records nothing") {
  Var x = parameter(Tensor({1}, 1.0));
  Var y;
  {
    NoGradGuard g;
    y = mul(x, x);
  }
  CHECK(y->parents.empty());
  CHECK_FALSE(y->requires_grad);
}

TEST_CASE("dropout: identity at p=0 and in eval") {
  Rng rng(1);
  Var x = rand_param(rng, {4, 5});
  CHECK(dropout(x, 0.0, true, rng)->value.data == x->value.data);
  CHECK(dropout(x, 0.7, false, rng)->value.data == x->value.data);
  const Var d = dropout(x, 0.5, true, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < d->value.size(); ++i) {
    if (d->value.data[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(d->value.data[i] == doctest::Approx(2.0 * x->value.data[i]));
    }
  }
  CHECK(zeros > 0);
  CHECK(zeros < 20);
}

TEST_CASE("gradcheck: x W at random inputs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Var x = rand_param(rng, {3, 4});
    Var w = rand_param(rng, {4, 5});
    Var r = constant(rand_param(rng, {3, 5})->value);
    const GradcheckResult res = gradcheck("xW", [&] { return sum(mul(matmul(x, w), r)); }, {x, w});
    CHECK(res.passed);
    CHECK(res.max_rel_error < 1e-4);
    CHECK(res.checked == 32);
  }
}

TEST_CASE("gradcheck: detects a wrong gradient") {
  Rng rng(2);
  Var x = rand_param(rng, {2, 2});
  // A loss assembled from a constant copy has no gradient path to x.
  auto bad = [&] {
    Var y = constant(x->value);
    return add(sum(mul(y, y)), scale(sum(x), 0.0));
  };
  CHECK_FALSE(gradcheck("bad", bad, {x}).passed);
}

TEST_CASE("cross_entropy and nll_prob") {
  Var logits = constant(Tensor({2, 3}, std::vector<double>{0, 0, 0, 1, 2, 3}));
  const double l = cross_entropy(logits, {1, 2})->value.data[0];
  const double expect = (std::log(3.0) + (std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3.0)) / 2.0;
  CHECK(l == doctest::Approx(expect).epsilon(1e-12));
  Var prob = constant(Tensor({1, 2}, std::vector<double>{0.25, 0.75}));
  CHECK(nll_prob(prob, {1})->value.data[0] == doctest::Approx(-std::log(0.75)));
  CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), Error);
  CHECK_THROWS_AS(cross_entropy(logits, {0}), Error);
}

TEST_CASE("layer_norm and softmax_rows") {
  Var x = constant(Tensor({1, 4}, std::vector<double>{1, 2, 3, 4}));
  const Var y = layer_norm(x, constant(Tensor({4}, 1.0)), constant(Tensor({4}, 0.0)));
  double m = 0, v = 0;
  for (double a : y->value.data) m += a / 4;
  for (double a : y->value.data) v += (a - m) * (a - m) / 4;
  CHECK(m == doctest::Approx(0.0));
  CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
  const Var p = softmax_rows(x);
  double s = 0;
  for (double a : p->value.data) s += a;
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("gelu and sigmoid values") {
  const Var g = gelu(constant(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0})));
  CHECK(g->value.data[0] == doctest::Approx(-0.15865525393145707).epsilon(1e-12));
  CHECK(g->value.data[1] == 0.0);
  CHECK(g->value.data[2] == doctest::Approx(1.9544997361036416).epsilon(1e-12));
  CHECK(sigmoid(constant(Tensor({1}, 0.0)))->value.data[0] == 0.5);
}

TEST_CASE("param store and initializers") {
  ParamStore s;
  Rng rng(3);
  s.add("a", xavier_uniform(rng, {4, 6}, 4, 6));
  s.add("b", normal_tensor(rng, {100}, 0.02));
  CHECK_THROWS_AS(s.add("a", Tensor({1})), Error);
  CHECK_THROWS_AS(s.get("c"), Error);
  CHECK(s.scalar_count() == 124);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double x : s.get("a")->value.data) CHECK(std::abs(x) <= bound);
}

TEST_CASE("checkpoint round trip") {
  const std::string path = (std::filesystem::temp_directory_path() / "hpgkit_ckpt_test.bin").string();
  ParamStore s;
  Rng rng(4);
  s.add("enc.w", xavier_uniform(rng, {3, 5}, 3, 5));
  s.add("enc.b", Tensor({5}, 0.25));
  save_checkpoint(path, s, R"({"hello":1})");
  ParamStore t;
  t.add("enc.w", Tensor({3, 5}));
  t.add("enc.b", Tensor({5}));
  CHECK(load_checkpoint(path, t) == R"({"hello":1})");
  CHECK(t.get("enc.w")->value.data == s.get("enc.w")->value.data);
  CHECK(t.get("enc.b")->value.data == s.get("enc.b")->value.data);
  CHECK(read_checkpoint_manifest(path) == R"({"hello":1})");

  ParamStore wrong;
  wrong.add("enc.w", Tensor({5, 3}));
  wrong.add("enc.b", Tensor({5}));
  CHECK_THROWS_AS(load_checkpoint(path, wrong), Error);
  ParamStore missing;
  missing.add("enc.w", Tensor({3, 5}));
  CHECK_THROWS_AS(load_checkpoint(path, missing), Error);

  std::string bytes = read_file(path);
  write_file_atomic(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(path, t), Error);
  write_file_atomic(path, "XXXX" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint(path, t), Error);
  std::filesystem::remove(path);
}

TEST_CASE("fnv1a is the standard 64-bit hash") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("rng is deterministic") {
  Rng a(9), b(9);
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
  Rng c(9);
  std::vector<int> v{1, 2, 3, 4, 5}, w = v;
  Rng d(9);
  c.shuffle(v);
  d.shuffle(w);
  CHECK(v == w);
}
