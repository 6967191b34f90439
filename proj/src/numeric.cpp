#include "hpgkit/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "hpgkit/error.hpp"

namespace hpgkit::num {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

namespace {
std::size_t product(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(product(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != product(shape))
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
}

std::size_t Tensor::cols() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

// ---------------------------------------------------------------------------

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * r * std::cos(theta);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error("Rng::index on empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

// ---------------------------------------------------------------------------

Tensor& Node::ensure_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape, 0.0);
  return grad;
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return n;
}

Var parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return n;
}

namespace {
thread_local bool grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }
NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

namespace {

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!grad_enabled) return n;
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p->requires_grad;
  if (tracked) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
  }
  return n;
}

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_2d(const char* op, const Shape& s) {
  if (s.size() != 2) throw ShapeError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(s));
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void backward(const Var& loss) {
  if (loss->value.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss->shape()));
  if (!loss->requires_grad) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->parents.empty() && seen.insert(p).second) stack.push_back({p, 0});
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  loss->ensure_grad().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      n->backward_fn(*n);
    }
  }
  // Release intermediate buffers; leaves keep their gradients.
  for (Node* n : order) {
    if (n != loss.get()) n->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------
// Elementwise / structural
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_2d("matmul", a->shape());
  require_2d("matmul", b->shape());
  const std::size_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  if (b->value.dim(0) != k) mismatch("matmul", a->shape(), b->shape());
  Tensor out({m, n});
  gemm_nn(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
  return make(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    if (A.requires_grad) gemm_nt(self.grad.data.data(), B.value.data.data(), A.grad.data.data(), m, n, k);
    if (B.requires_grad) gemm_tn(A.value.data.data(), self.grad.data.data(), B.grad.data.data(), m, k, n);
  });
}

Var add(const Var& a, const Var& b) {
  if (a->shape() != b->shape()) mismatch("add", a->shape(), b->shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad.data[i] += self.grad.data[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  if (a->shape() != b->shape()) mismatch("sub", a->shape(), b->shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad.data[i] += self.grad.data[i];
      if (B.requires_grad) B.grad.data[i] -= self.grad.data[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (a->shape() != b->shape()) mismatch("mul", a->shape(), b->shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b->value.data[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (A.requires_grad) A.grad.data[i] += self.grad.data[i] * B.value.data[i];
      if (B.requires_grad) B.grad.data[i] += self.grad.data[i] * A.value.data[i];
    }
  });
}

Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

Var affine(const Var& a, double s, double shift) {
  Tensor out = a->value;
  for (auto& v : out.data) v = s * v + shift;
  return make(std::move(out), {a}, [s](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad.data[i] += s * self.grad.data[i];
  });
}

Var add_row(const Var& a, const Var& row) {
  require_2d("add_row", a->shape());
  const std::size_t m = a->value.dim(0), n = a->value.dim(1);
  if (row->value.size() != n) mismatch("add_row", a->shape(), row->shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += row->value.data[j];
  return make(std::move(out), {a, row}, [m, n](Node& self) {
    Node& A = *self.parents[0];
    Node& R = *self.parents[1];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad.data[i * n + j];
        if (A.requires_grad) A.grad.data[i * n + j] += g;
        if (R.requires_grad) R.grad.data[j] += g;
      }
  });
}

Var mul_col(const Var& a, const Var& col) {
  require_2d("mul_col", a->shape());
  const std::size_t m = a->value.dim(0), n = a->value.dim(1);
  if (col->value.size() != m) mismatch("mul_col", a->shape(), col->shape());
  Tensor out = a->value;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] *= col->value.data[i];
  return make(std::move(out), {a, col}, [m, n](Node& self) {
    Node& A = *self.parents[0];
    Node& C = *self.parents[1];
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = self.grad.data[i * n + j];
        if (A.requires_grad) A.grad.data[i * n + j] += g * C.value.data[i];
        acc += g * A.value.data[i * n + j];
      }
      if (C.requires_grad) C.grad.data[i] += acc;
    }
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  for (const auto& p : parts) require_2d("concat", p->shape());
  const std::size_t rows0 = parts[0]->value.dim(0), cols0 = parts[0]->value.dim(1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (axis == 0 && p->value.dim(1) != cols0) mismatch("concat", parts[0]->shape(), p->shape());
    if (axis == 1 && p->value.dim(0) != rows0) mismatch("concat", parts[0]->shape(), p->shape());
    total += p->value.dim(axis == 0 ? 0 : 1);
  }
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tensor out(axis == 0 ? Shape{total, cols0} : Shape{rows0, total});
  const std::size_t oc = out.dim(1);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t r = p->value.dim(0), c = p->value.dim(1);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (axis == 0) out.data[(off + i) * oc + j] = p->value.data[i * c + j];
        else out.data[i * oc + off + j] = p->value.data[i * c + j];
      }
    off += axis == 0 ? r : c;
  }
  return make(std::move(out), parts, [axis, oc](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t r = p->value.dim(0), c = p->value.dim(1);
      if (p->requires_grad) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            p->grad.data[i * c + j] +=
                axis == 0 ? self.grad.data[(off + i) * oc + j] : self.grad.data[i * oc + off + j];
          }
      }
      off += axis == 0 ? r : c;
    }
  });
}

Var slice(const Var& a, int axis, std::size_t begin, std::size_t end) {
  require_2d("slice", a->shape());
  const std::size_t r = a->value.dim(0), c = a->value.dim(1);
  const std::size_t extent = axis == 0 ? r : c;
  if (begin > end || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of bounds for " +
                     shape_str(a->shape()));
  const std::size_t orows = axis == 0 ? end - begin : r;
  const std::size_t ocols = axis == 0 ? c : end - begin;
  Tensor out({orows, ocols});
  for (std::size_t i = 0; i < orows; ++i)
    for (std::size_t j = 0; j < ocols; ++j)
      out.data[i * ocols + j] = axis == 0 ? a->value.data[(begin + i) * c + j] : a->value.data[i * c + begin + j];
  return make(std::move(out), {a}, [axis, begin, c, orows, ocols](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < orows; ++i)
      for (std::size_t j = 0; j < ocols; ++j) {
        const std::size_t src = axis == 0 ? (begin + i) * c + j : i * c + begin + j;
        A.grad.data[src] += self.grad.data[i * ocols + j];
      }
  });
}

Var transpose(const Var& a) {
  require_2d("transpose", a->shape());
  const std::size_t r = a->value.dim(0), c = a->value.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = a->value.data[i * c + j];
  return make(std::move(out), {a}, [r, c](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) A.grad.data[i * c + j] += self.grad.data[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

Var gather_rows(const Var& table, const std::vector<int>& ids) {
  const std::size_t rows = table->value.rows(), d = table->value.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows)
      throw ShapeError("gather_rows: index " + std::to_string(ids[i]) + " out of range for " +
                       shape_str(table->shape()));
    std::copy_n(table->value.data.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return make(std::move(out), {table}, [ids, d](Node& self) {
    Node& T = *self.parents[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) T.grad.data[static_cast<std::size_t>(ids[i]) * d + j] += self.grad.data[i * d + j];
  });
}

Var scatter_add_rows(const Var& x, const std::vector<int>& ids, std::size_t out_rows) {
  require_2d("scatter_add_rows", x->shape());
  const std::size_t d = x->value.dim(1);
  if (ids.size() != x->value.dim(0))
    throw ShapeError("scatter_add_rows: " + std::to_string(ids.size()) + " indices for " + shape_str(x->shape()));
  Tensor out({out_rows, d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= out_rows)
      throw ShapeError("scatter_add_rows: index " + std::to_string(ids[i]) + " out of range");
    for (std::size_t j = 0; j < d; ++j) out.data[static_cast<std::size_t>(ids[i]) * d + j] += x->value.data[i * d + j];
  }
  return make(std::move(out), {x}, [ids, d](Node& self) {
    Node& X = *self.parents[0];
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) X.grad.data[i * d + j] += self.grad.data[static_cast<std::size_t>(ids[i]) * d + j];
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

Var sigmoid(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return make(std::move(out), {a}, [](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value.data[i];
      A.grad.data[i] += self.grad.data[i] * s * (1.0 - s);
    }
  });
}

Var gelu(const Var& a) {
  Tensor out = a->value;
  for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
  return make(std::move(out), {a}, [](Node& self) {
    Node& A = *self.parents[0];
    const double inv_sqrt_2pi = 0.5 * M_2_SQRTPI * M_SQRT1_2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = A.value.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      A.grad.data[i] += self.grad.data[i] * (cdf + x * pdf);
    }
  });
}

Var softmax_rows(const Var& a) {
  require_2d("softmax_rows", a->shape());
  const std::size_t r = a->value.dim(0), c = a->value.dim(1);
  if (c == 0) throw ShapeError("softmax over empty segment");
  Tensor out = a->value;
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (row[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) row[j] /= s;
  }
  return make(std::move(out), {a}, [r, c](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data.data() + i * c;
      const double* g = self.grad.data.data() + i * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < c; ++j) A.grad.data[i * c + j] += y[j] * (g[j] - dot);
    }
  });
}

Var segment_softmax(const Var& scores, const std::vector<int>& segments, std::size_t segment_count) {
  require_2d("segment_softmax", scores->shape());
  const std::size_t e = scores->value.dim(0), h = scores->value.dim(1);
  if (segments.size() != e)
    throw ShapeError("segment_softmax: " + std::to_string(segments.size()) + " segment ids for " +
                     shape_str(scores->shape()));
  for (int s : segments) {
    if (s < 0 || static_cast<std::size_t>(s) >= segment_count) throw ShapeError("segment_softmax: segment id out of range");
  }
  Tensor out = scores->value;
  std::vector<double> mx(segment_count * h, -std::numeric_limits<double>::infinity());
  std::vector<double> total(segment_count * h, 0.0);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      double& m = mx[static_cast<std::size_t>(segments[i]) * h + j];
      m = std::max(m, out.data[i * h + j]);
    }
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      const std::size_t s = static_cast<std::size_t>(segments[i]) * h + j;
      out.data[i * h + j] = std::exp(out.data[i * h + j] - mx[s]);
      total[s] += out.data[i * h + j];
    }
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < h; ++j) out.data[i * h + j] /= total[static_cast<std::size_t>(segments[i]) * h + j];
  return make(std::move(out), {scores}, [segments, segment_count, e, h](Node& self) {
    Node& S = *self.parents[0];
    std::vector<double> dot(segment_count * h, 0.0);
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < h; ++j)
        dot[static_cast<std::size_t>(segments[i]) * h + j] += self.value.data[i * h + j] * self.grad.data[i * h + j];
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        const double y = self.value.data[i * h + j];
        S.grad.data[i * h + j] += y * (self.grad.data[i * h + j] - dot[static_cast<std::size_t>(segments[i]) * h + j]);
      }
  });
}

Var dropout(const Var& a, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return a;
  if (p >= 1.0) throw Error("dropout rate must be < 1");
  std::vector<double> mask(a->value.size());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask[i];
  return make(std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    Node& A = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad.data[i] += self.grad.data[i] * mask[i];
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_2d("layer_norm", x->shape());
  const std::size_t r = x->value.dim(0), c = x->value.dim(1);
  if (gamma->value.size() != c) mismatch("layer_norm", x->shape(), gamma->shape());
  if (beta->value.size() != c) mismatch("layer_norm", x->shape(), beta->shape());
  Tensor out({r, c});
  std::vector<double> xhat(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x->value.data.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      out.data[i * c + j] = xhat[i * c + j] * gamma->value.data[j] + beta->value.data[j];
    }
  }
  return make(std::move(out), {x, gamma, beta}, [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    Node& X = *self.parents[0];
    Node& G = *self.parents[1];
    Node& B = *self.parents[2];
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = self.grad.data.data() + i * c;
      double sum_gx = 0.0, sum_g = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double gh = g[j] * G.value.data[j];
        sum_g += gh;
        sum_gx += gh * xhat[i * c + j];
        if (G.requires_grad) G.grad.data[j] += g[j] * xhat[i * c + j];
        if (B.requires_grad) B.grad.data[j] += g[j];
      }
      if (!X.requires_grad) continue;
      const double n = static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j) {
        const double gh = g[j] * G.value.data[j];
        X.grad.data[i * c + j] += inv_std[i] * (gh - sum_g / n - xhat[i * c + j] * sum_gx / n);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  return make(Tensor({1}, s), {a}, [](Node& self) {
    Node& A = *self.parents[0];
    for (auto& g : A.grad.data) g += self.grad.data[0];
  });
}

Var mean(const Var& a) {
  if (a->value.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a->value.size()));
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets) {
  require_2d("cross_entropy", logits->shape());
  const std::size_t r = logits->value.dim(0), c = logits->value.dim(1);
  if (targets.size() != r || r == 0)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + shape_str(logits->shape()));
  std::vector<double> prob(r * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) throw ShapeError("cross_entropy: target out of range");
    const double* row = logits->value.data.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (prob[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] /= s;
    loss -= row[targets[i]] - mx - std::log(s);
  }
  loss /= static_cast<double>(r);
  return make(Tensor({1}, loss), {logits}, [r, c, targets, prob = std::move(prob)](Node& self) {
    Node& L = *self.parents[0];
    const double g = self.grad.data[0] / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double y = static_cast<int>(j) == targets[i] ? 1.0 : 0.0;
        L.grad.data[i * c + j] += g * (prob[i * c + j] - y);
      }
  });
}

Var nll_prob(const Var& prob, const std::vector<int>& targets) {
  require_2d("nll_prob", prob->shape());
  const std::size_t r = prob->value.dim(0), c = prob->value.dim(1);
  if (targets.size() != r || r == 0)
    throw ShapeError("nll_prob: " + std::to_string(targets.size()) + " targets for " + shape_str(prob->shape()));
  constexpr double kFloor = 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) throw ShapeError("nll_prob: target out of range");
    loss -= std::log(std::max(prob->value.data[i * c + static_cast<std::size_t>(targets[i])], kFloor));
  }
  loss /= static_cast<double>(r);
  return make(Tensor({1}, loss), {prob}, [r, c, targets](Node& self) {
    Node& P = *self.parents[0];
    const double g = self.grad.data[0] / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t k = i * c + static_cast<std::size_t>(targets[i]);
      const double p = P.value.data[k];
      if (p > kFloor) P.grad.data[k] -= g / p;
    }
  });
}

// ---------------------------------------------------------------------------
// Type-indexed kernels
// ---------------------------------------------------------------------------

Var typed_linear(const Var& x, const std::vector<int>& types, const Var& w, const Var& b) {
  require_2d("typed_linear", x->shape());
  if (w->shape().size() != 3) throw ShapeError("typed_linear: weight bank must be 3-d, got " + shape_str(w->shape()));
  const std::size_t n = x->value.dim(0), din = x->value.dim(1);
  const std::size_t banks = w->value.dim(0), dout = w->value.dim(2);
  if (w->value.dim(1) != din) mismatch("typed_linear", x->shape(), w->shape());
  if (b->value.size() != banks * dout) mismatch("typed_linear", w->shape(), b->shape());
  if (types.size() != n) throw ShapeError("typed_linear: " + std::to_string(types.size()) + " type ids for " + shape_str(x->shape()));
  for (int t : types) {
    if (t < 0 || static_cast<std::size_t>(t) >= banks)
      throw Error("typed_linear: unknown type id " + std::to_string(t) + " (bank has " + std::to_string(banks) + ")");
  }
  Tensor out({n, dout});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = static_cast<std::size_t>(types[i]);
    std::copy_n(b->value.data.begin() + static_cast<std::ptrdiff_t>(t * dout), dout,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * dout));
    gemm_nn(x->value.data.data() + i * din, w->value.data.data() + t * din * dout, out.data.data() + i * dout, 1, din, dout);
  }
  return make(std::move(out), {x, w, b}, [types, n, din, dout](Node& self) {
    Node& X = *self.parents[0];
    Node& W = *self.parents[1];
    Node& B = *self.parents[2];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = static_cast<std::size_t>(types[i]);
      const double* g = self.grad.data.data() + i * dout;
      if (X.requires_grad) gemm_nt(g, W.value.data.data() + t * din * dout, X.grad.data.data() + i * din, 1, dout, din);
      if (W.requires_grad) gemm_tn(X.value.data.data() + i * din, g, W.grad.data.data() + t * din * dout, 1, din, dout);
      if (B.requires_grad)
        for (std::size_t j = 0; j < dout; ++j) B.grad.data[t * dout + j] += g[j];
    }
  });
}

Var typed_block_matmul(const Var& x, const std::vector<int>& types, const Var& w, std::size_t heads) {
  require_2d("typed_block_matmul", x->shape());
  if (w->shape().size() != 3) throw ShapeError("typed_block_matmul: bank must be 3-d, got " + shape_str(w->shape()));
  const std::size_t e = x->value.dim(0), d = x->value.dim(1);
  const std::size_t banks = w->value.dim(0), dh = w->value.dim(1);
  if (w->value.dim(2) != dh || heads * dh != d) mismatch("typed_block_matmul", x->shape(), w->shape());
  if (types.size() != e) throw ShapeError("typed_block_matmul: type id count does not match rows");
  for (int t : types) {
    if (t < 0 || static_cast<std::size_t>(t) >= banks) throw Error("typed_block_matmul: unknown type id " + std::to_string(t));
  }
  Tensor out({e, d});
  for (std::size_t i = 0; i < e; ++i) {
    const double* wt = w->value.data.data() + static_cast<std::size_t>(types[i]) * dh * dh;
    for (std::size_t hd = 0; hd < heads; ++hd)
      gemm_nn(x->value.data.data() + i * d + hd * dh, wt, out.data.data() + i * d + hd * dh, 1, dh, dh);
  }
  return make(std::move(out), {x, w}, [types, e, d, dh, heads](Node& self) {
    Node& X = *self.parents[0];
    Node& W = *self.parents[1];
    for (std::size_t i = 0; i < e; ++i) {
      const std::size_t off = static_cast<std::size_t>(types[i]) * dh * dh;
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const double* g = self.grad.data.data() + i * d + hd * dh;
        if (X.requires_grad) gemm_nt(g, W.value.data.data() + off, X.grad.data.data() + i * d + hd * dh, 1, dh, dh);
        if (W.requires_grad) gemm_tn(X.value.data.data() + i * d + hd * dh, g, W.grad.data.data() + off, 1, dh, dh);
      }
    }
  });
}

Var head_dot(const Var& a, const Var& b, std::size_t heads) {
  require_2d("head_dot", a->shape());
  if (a->shape() != b->shape()) mismatch("head_dot", a->shape(), b->shape());
  const std::size_t e = a->value.dim(0), d = a->value.dim(1);
  if (heads == 0 || d % heads != 0) throw ShapeError("head_dot: width " + std::to_string(d) + " not divisible by heads");
  const std::size_t dh = d / heads;
  Tensor out({e, heads});
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t hd = 0; hd < heads; ++hd) {
      double s = 0.0;
      for (std::size_t j = 0; j < dh; ++j) s += a->value.data[i * d + hd * dh + j] * b->value.data[i * d + hd * dh + j];
      out.data[i * heads + hd] = s;
    }
  return make(std::move(out), {a, b}, [e, d, dh, heads](Node& self) {
    Node& A = *self.parents[0];
    Node& B = *self.parents[1];
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const double g = self.grad.data[i * heads + hd];
        for (std::size_t j = 0; j < dh; ++j) {
          const std::size_t k = i * d + hd * dh + j;
          if (A.requires_grad) A.grad.data[k] += g * B.value.data[k];
          if (B.requires_grad) B.grad.data[k] += g * A.value.data[k];
        }
      }
  });
}

Var head_scale(const Var& alpha, const Var& m, std::size_t heads) {
  require_2d("head_scale", alpha->shape());
  require_2d("head_scale", m->shape());
  const std::size_t e = m->value.dim(0), d = m->value.dim(1);
  if (alpha->value.dim(0) != e || alpha->value.dim(1) != heads || d % heads != 0)
    mismatch("head_scale", alpha->shape(), m->shape());
  const std::size_t dh = d / heads;
  Tensor out = m->value;
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < d; ++j) out.data[i * d + j] *= alpha->value.data[i * heads + j / dh];
  return make(std::move(out), {alpha, m}, [e, d, dh, heads](Node& self) {
    Node& Al = *self.parents[0];
    Node& M = *self.parents[1];
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double g = self.grad.data[i * d + j];
        if (M.requires_grad) M.grad.data[i * d + j] += g * Al.value.data[i * heads + j / dh];
        if (Al.requires_grad) Al.grad.data[i * heads + j / dh] += g * M.value.data[i * d + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

Var ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  auto v = parameter(std::move(init));
  names_.push_back(name);
  params_.push_back(v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return params_[i];
  }
  throw Error("unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) {
    if (p->grad.size() == p->value.size()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    else p->grad = Tensor(p->value.shape, 0.0);
  }
}

Tensor xavier_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

Tensor normal_tensor(Rng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

GradcheckResult gradcheck(const std::string& name, const std::function<Var()>& loss_fn,
                          const std::vector<Var>& inputs, std::size_t max_elements, double eps, double rel_tol,
                          double abs_tol) {
  GradcheckResult res;
  res.name = name;
  for (auto& in : inputs) {
    in->requires_grad = true;
    in->grad = Tensor(in->value.shape, 0.0);
  }
  Var loss = loss_fn();
  backward(loss);
  for (auto& in : inputs) {
    const std::size_t n = in->value.size();
    if (n == 0) continue;
    const std::size_t step = std::max<std::size_t>(1, n / std::max<std::size_t>(1, max_elements));
    for (std::size_t k = 0; k < n; k += step) {
      const double orig = in->value.data[k];
      auto at = [&](double delta) {
        in->value.data[k] = orig + delta;
        return loss_fn()->value.data[0];
      };
      // Fourth-order central stencil.
      const double numeric = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      in->value.data[k] = orig;
      const double analytic = in->grad.data[k];
      const double diff = std::abs(numeric - analytic);
      const double mag = std::max(std::abs(numeric), std::abs(analytic));
      res.max_abs_error = std::max(res.max_abs_error, diff);
      // Entries whose gradient is below finite-difference resolution only get
      // the absolute test.
      if (mag > 1e-6) res.max_rel_error = std::max(res.max_rel_error, diff / mag);
      if (diff > abs_tol + rel_tol * mag) res.passed = false;
      ++res.checked;
    }
  }
  return res;
}

}  // namespace hpgkit::num
