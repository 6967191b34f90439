#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace hpgkit::num {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  // Product of all dimensions after the first.
  std::size_t cols() const;

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
};

/// Deterministic generator: raw mt19937_64 output mapped by fixed formulas so
/// streams do not depend on the standard library's distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);
  std::size_t index(std::size_t n);  // [0, n)
  std::uint64_t next() { return engine_(); }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Reverse-mode tape
// ---------------------------------------------------------------------------

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
  const Shape& shape() const { return value.shape; }
};

/// While alive, ops on this thread record no backward rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor t);
Var parameter(Tensor t);

/// Accumulates d(loss)/d(x) into every tracked leaf reachable from `loss`.
void backward(const Var& loss);

// Elementwise / structural
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var affine(const Var& a, double s, double shift);  // s*a + shift
Var add_row(const Var& a, const Var& row);          // a[m x n] + row[n]
Var mul_col(const Var& a, const Var& col);          // a[m x n] * col[m x 1]
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& a, int axis, std::size_t begin, std::size_t end);
Var transpose(const Var& a);

// Indexing
Var gather_rows(const Var& table, const std::vector<int>& ids);
inline Var embedding_lookup(const Var& table, const std::vector<int>& ids) { return gather_rows(table, ids); }
Var scatter_add_rows(const Var& x, const std::vector<int>& ids, std::size_t out_rows);

// Nonlinearities
Var sigmoid(const Var& a);
Var gelu(const Var& a);
Var softmax_rows(const Var& a);
/// Softmax of every column of `scores` [E x h] within groups of rows sharing
/// a segment id, stabilized by the per-segment maximum.
Var segment_softmax(const Var& scores, const std::vector<int>& segments, std::size_t segment_count);
Var dropout(const Var& a, double p, bool train, Rng& rng);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

// Reductions and losses
Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, const std::vector<int>& targets);
/// Mean over rows of -log max(prob[target], 1e-12).
Var nll_prob(const Var& prob, const std::vector<int>& targets);

// Type-indexed kernels
/// Row r uses bank types[r]: y = x W[t] + b[t], W [T x din x dout], b [T x dout].
Var typed_linear(const Var& x, const std::vector<int>& types, const Var& w, const Var& b);
/// Multiplies each of the `heads` column blocks of row r by W[types[r]]
/// ([R x dh x dh]); the same matrix serves all heads.
Var typed_block_matmul(const Var& x, const std::vector<int>& types, const Var& w, std::size_t heads);
/// Per-head row dot products of a and b ([E x d] each) -> [E x heads].
Var head_dot(const Var& a, const Var& b, std::size_t heads);
/// Scales head block i of row r of m [E x d] by alpha(r, i).
Var head_scale(const Var& alpha, const Var& m, std::size_t heads);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Var>& params() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::string> names_;
  std::vector<Var> params_;
};

Tensor xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);
Tensor normal_tensor(Rng& rng, Shape shape, double stddev);

/// Binary checkpoint: magic, version, a caller-supplied JSON manifest, then
/// (name, shape, little-endian f64 values) entries.
void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& manifest_json);
/// Loads values into an existing store whose names and shapes must match.
/// Returns the manifest text.
std::string load_checkpoint(const std::string& path, ParamStore& store);
std::string read_checkpoint_manifest(const std::string& path);

std::uint64_t fnv1a(const std::string& text);

// ---------------------------------------------------------------------------
// Finite-difference checking
// ---------------------------------------------------------------------------

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

/// Compares analytic and central-difference (five-point) gradients of `loss_fn` with
/// respect to each input. At most `max_elements` entries per input are
/// probed (evenly spaced). An entry passes when
/// |a - n| <= abs_tol + rel_tol * max(|a|, |n|). max_rel_error is taken over
/// entries with max(|a|, |n|) > 1e-6.
GradcheckResult gradcheck(const std::string& name, const std::function<Var()>& loss_fn,
                          const std::vector<Var>& inputs, std::size_t max_elements = 64,
                          double eps = 1e-4, double rel_tol = 1e-4, double abs_tol = 1e-7);

}  // namespace hpgkit::num
