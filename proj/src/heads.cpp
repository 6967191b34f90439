#include "hpgkit/heads.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "hpgkit/error.hpp"

namespace hpgkit::model {

using num::Tensor;
using num::Var;

void DecoderConfig::validate() const {
  if (layers < 0) throw Error("config: decoder layers must be >= 0");
  if (heads < 1 || d_model % heads != 0) throw Error("config: decoder d_model must be divisible by heads");
  if (ffn < 1) throw Error("config: decoder ffn must be positive");
  if (max_len < 1) throw Error("config: decoder max_len must be >= 1");
}

nlohmann::json DecoderConfig::to_json() const {
  return {{"layers", layers}, {"heads", heads}, {"d_model", d_model}, {"ffn", ffn}, {"max_len", max_len}};
}

DecoderConfig DecoderConfig::from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "layers" && k != "heads" && k != "d_model" && k != "ffn" && k != "max_len")
      throw Error("config: unknown decoder key '" + k + "'");
  }
  DecoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.ffn = j.value("ffn", c.ffn);
  c.max_len = j.value("max_len", c.max_len);
  c.validate();
  return c;
}

nlohmann::json ClassifierConfig::to_json() const { return {{"hidden", hidden}, {"classes", classes}}; }

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "hidden" && it.key() != "classes") throw Error("config: unknown classifier key '" + it.key() + "'");
  }
  ClassifierConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.classes = j.value("classes", c.classes);
  if (c.classes < 2) throw Error("config: classifier needs at least 2 classes");
  return c;
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

namespace {
std::vector<std::size_t> mlp_widths(const ClassifierConfig& cfg, std::size_t d) {
  std::vector<std::size_t> w{d};
  if (cfg.hidden.empty()) {
    w.push_back(d);
  } else {
    for (int h : cfg.hidden) w.push_back(static_cast<std::size_t>(h));
  }
  w.push_back(static_cast<std::size_t>(cfg.classes));
  return w;
}
}  // namespace

ClassifierParams init_classifier(num::ParamStore& store, const ClassifierConfig& cfg, std::size_t d,
                                 num::Rng& rng) {
  if (cfg.classes < 2) throw Error("classifier needs at least 2 classes");
  init_pool_params(store, d, rng);
  const auto w = mlp_widths(cfg, d);
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    store.add("cls.mlp" + std::to_string(i) + ".w", num::xavier_uniform(rng, {w[i], w[i + 1]}, w[i], w[i + 1]));
    store.add("cls.mlp" + std::to_string(i) + ".b", Tensor({w[i + 1]}));
  }
  return bind_classifier(store, cfg);
}

ClassifierParams bind_classifier(const num::ParamStore& store, const ClassifierConfig& cfg) {
  ClassifierParams p;
  p.pool = bind_pool_params(store);
  const std::size_t layers = (cfg.hidden.empty() ? 1 : cfg.hidden.size()) + 1;
  for (std::size_t i = 0; i < layers; ++i) {
    p.w.push_back(store.get("cls.mlp" + std::to_string(i) + ".w"));
    p.b.push_back(store.get("cls.mlp" + std::to_string(i) + ".b"));
  }
  return p;
}

Var classify(const Var& graph_vectors, const ClassifierParams& p) {
  Var x = graph_vectors;
  for (std::size_t i = 0; i < p.w.size(); ++i) {
    x = linear(x, p.w[i], p.b[i]);
    if (i + 1 < p.w.size()) x = num::gelu(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

namespace {

std::string dname(std::size_t k, const std::string& what) { return "dec.l" + std::to_string(k) + "." + what; }

void add_linear(num::ParamStore& store, const std::string& name, std::size_t in, std::size_t out, num::Rng& rng) {
  store.add(name + ".w", num::xavier_uniform(rng, {in, out}, in, out));
  store.add(name + ".b", Tensor({out}));
}

void add_norm(num::ParamStore& store, const std::string& name, std::size_t d) {
  store.add(name + ".g", Tensor({d}, 1.0));
  store.add(name + ".b", Tensor({d}));
}

DecoderParams::Attn bind_attn(const num::ParamStore& s, const std::string& n) {
  return {s.get(n + ".q.w"), s.get(n + ".q.b"), s.get(n + ".k.w"), s.get(n + ".k.b"),
          s.get(n + ".v.w"), s.get(n + ".v.b"), s.get(n + ".o.w"), s.get(n + ".o.b")};
}

void add_attn(num::ParamStore& store, const std::string& n, std::size_t d, num::Rng& rng) {
  for (const char* part : {".q", ".k", ".v", ".o"}) add_linear(store, n + part, d, d, rng);
}

Var multi_head_attention(const Var& xq, const Var& xkv, const DecoderParams::Attn& a, std::size_t heads, bool causal) {
  Var q = linear(xq, a.wq, a.bq);
  Var k = linear(xkv, a.wk, a.bk);
  Var v = linear(xkv, a.wv, a.bv);
  const std::size_t lq = xq->value.dim(0), lk = xkv->value.dim(0), d = xq->value.dim(1);
  const std::size_t dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Var mask;
  if (causal) {
    Tensor m({lq, lk});
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t j = i + 1; j < lk; ++j) m.data[i * lk + j] = -1e9;
    mask = num::constant(std::move(m));
  }
  std::vector<Var> outs;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Var qh = num::slice(q, 1, hd * dh, (hd + 1) * dh);
    Var kh = num::slice(k, 1, hd * dh, (hd + 1) * dh);
    Var vh = num::slice(v, 1, hd * dh, (hd + 1) * dh);
    Var s = num::scale(num::matmul(qh, num::transpose(kh)), inv);
    if (causal) s = num::add(s, mask);
    outs.push_back(num::matmul(num::softmax_rows(s), vh));
  }
  return linear(heads == 1 ? outs[0] : num::concat(outs, 1), a.wo, a.bo);
}

}  // namespace

DecoderParams init_decoder(num::ParamStore& store, const DecoderConfig& cfg, std::size_t vocab_size, num::Rng& rng) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto f = static_cast<std::size_t>(cfg.ffn);
  store.add("dec.embed", num::normal_tensor(rng, {vocab_size, d}, 0.02));
  for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.layers); ++k) {
    add_norm(store, dname(k, "ln1"), d);
    add_attn(store, dname(k, "self"), d, rng);
    add_norm(store, dname(k, "ln2"), d);
    add_attn(store, dname(k, "cross"), d, rng);
    add_norm(store, dname(k, "ln3"), d);
    add_linear(store, dname(k, "ff1"), d, f, rng);
    add_linear(store, dname(k, "ff2"), f, d, rng);
  }
  add_norm(store, "dec.lnf", d);
  add_linear(store, "dec.out", d, vocab_size, rng);
  store.add("dec.ptr.q", num::xavier_uniform(rng, {d, d}, d, d));
  store.add("dec.ptr.k", num::xavier_uniform(rng, {d, d}, d, d));
  add_linear(store, "dec.copy", d, 1, rng);
  store.add("dec.sel.w", num::xavier_uniform(rng, {d, d}, d, d));
  return bind_decoder(store, cfg);
}

DecoderParams bind_decoder(const num::ParamStore& s, const DecoderConfig& cfg) {
  DecoderParams p;
  p.embed = s.get("dec.embed");
  for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.layers); ++k) {
    DecoderParams::Layer l;
    l.ln1_g = s.get(dname(k, "ln1.g"));
    l.ln1_b = s.get(dname(k, "ln1.b"));
    l.ln2_g = s.get(dname(k, "ln2.g"));
    l.ln2_b = s.get(dname(k, "ln2.b"));
    l.ln3_g = s.get(dname(k, "ln3.g"));
    l.ln3_b = s.get(dname(k, "ln3.b"));
    l.self_attn = bind_attn(s, dname(k, "self"));
    l.cross_attn = bind_attn(s, dname(k, "cross"));
    l.ff1_w = s.get(dname(k, "ff1.w"));
    l.ff1_b = s.get(dname(k, "ff1.b"));
    l.ff2_w = s.get(dname(k, "ff2.w"));
    l.ff2_b = s.get(dname(k, "ff2.b"));
    p.layers.push_back(std::move(l));
  }
  p.lnf_g = s.get("dec.lnf.g");
  p.lnf_b = s.get("dec.lnf.b");
  p.out_w = s.get("dec.out.w");
  p.out_b = s.get("dec.out.b");
  p.ptr_q = s.get("dec.ptr.q");
  p.ptr_k = s.get("dec.ptr.k");
  p.copy_w = s.get("dec.copy.w");
  p.copy_b = s.get("dec.copy.b");
  p.sel_w = s.get("dec.sel.w");
  return p;
}

int ExtendedVocab::id(const std::string& word, const Vocab& vocab) const {
  if (auto f = vocab.find(word)) return *f;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    if (extra[i] == word) return static_cast<int>(base + i);
  }
  return vocab.id(kUnk);
}

std::string ExtendedVocab::word(int id, const Vocab& vocab) const {
  if (id < 0) throw Error("negative vocabulary id");
  if (static_cast<std::size_t>(id) < base) return vocab.token(id);
  return extra.at(static_cast<std::size_t>(id) - base);
}

ExtendedVocab extend_vocab(const Vocab& vocab, const std::vector<std::string>& memory_values) {
  ExtendedVocab ext;
  ext.base = vocab.size();
  for (const auto& v : memory_values) {
    if (v.empty()) {
      ext.column_of.push_back(vocab.id(kUnk));
      continue;
    }
    if (auto f = vocab.find(v)) {
      ext.column_of.push_back(*f);
      continue;
    }
    auto it = std::find(ext.extra.begin(), ext.extra.end(), v);
    if (it == ext.extra.end()) {
      ext.extra.push_back(v);
      it = ext.extra.end() - 1;
    }
    ext.column_of.push_back(static_cast<int>(ext.base + static_cast<std::size_t>(it - ext.extra.begin())));
  }
  return ext;
}

Var copy_mixture(const Var& p_vocab, const Var& attention, const Var& p_copy, const std::vector<int>& column_of,
                 std::size_t extended_size) {
  const std::size_t l = p_vocab->value.dim(0), v = p_vocab->value.dim(1), n = attention->value.dim(1);
  if (column_of.size() != n) throw ShapeError("copy_mixture: column map does not match attention width");
  if (extended_size < v) throw ShapeError("copy_mixture: extended vocabulary smaller than base");
  Tensor onehot({n, extended_size});
  for (std::size_t i = 0; i < n; ++i) onehot.data[i * extended_size + static_cast<std::size_t>(column_of[i])] = 1.0;
  Var padded = p_vocab;
  if (extended_size > v) padded = num::concat({p_vocab, num::constant(Tensor({l, extended_size - v}))}, 1);
  Var copied = num::matmul(attention, num::constant(std::move(onehot)));
  Var gen = num::mul_col(padded, num::affine(p_copy, -1.0, 1.0));
  return num::add(gen, num::mul_col(copied, p_copy));
}

DecodeOutput decode_step(const DecoderParams& p, const DecoderConfig& cfg, const Vocab& vocab,
                         const DecoderMemory& memory, const std::vector<int>& inputs, bool copy, bool train,
                         double dropout, num::Rng& rng, const std::vector<std::string>& input_words) {
  if (inputs.empty()) throw Error("decoder needs at least one input token");
  if (!input_words.empty() && input_words.size() != inputs.size())
    throw Error("decoder: " + std::to_string(input_words.size()) + " input words for " + std::to_string(inputs.size()) +
                " inputs");
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const bool has_memory = memory.states && memory.states->value.dim(0) > 0;
  std::vector<std::int64_t> pos(inputs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int64_t>(i);
  Var x = num::add(num::embedding_lookup(p.embed, inputs), num::constant(positional_encoding(pos, d)));
  if (copy && has_memory && !input_words.empty()) {
    const std::size_t n = memory.values.size();
    Tensor sel({inputs.size(), n});
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < n; ++i) hits += !input_words[t].empty() && memory.values[i] == input_words[t];
      for (std::size_t i = 0; i < n && hits; ++i)
        if (memory.values[i] == input_words[t]) sel(t, i) = 1.0 / static_cast<double>(hits);
    }
    x = num::add(x, num::matmul(num::matmul(num::constant(sel), memory.states), p.sel_w));
  }
  x = num::dropout(x, dropout, train, rng);
  for (const auto& l : p.layers) {
    Var n1 = num::layer_norm(x, l.ln1_g, l.ln1_b);
    Var a = multi_head_attention(n1, n1, l.self_attn, heads, true);
    x = num::add(x, num::dropout(a, dropout, train, rng));
    if (has_memory) {
      Var c = multi_head_attention(num::layer_norm(x, l.ln2_g, l.ln2_b), memory.states, l.cross_attn, heads, false);
      x = num::add(x, num::dropout(c, dropout, train, rng));
    }
    Var f = linear(num::gelu(linear(num::layer_norm(x, l.ln3_g, l.ln3_b), l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
    x = num::add(x, num::dropout(f, dropout, train, rng));
  }
  x = num::layer_norm(x, p.lnf_g, p.lnf_b);
  Var p_vocab = num::softmax_rows(linear(x, p.out_w, p.out_b));

  DecodeOutput out;
  if (!copy || !has_memory) {
    out.ext.base = vocab.size();
    out.prob = p_vocab;
    return out;
  }
  out.ext = extend_vocab(vocab, memory.values);
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Var scores = num::scale(num::matmul(num::matmul(x, p.ptr_q), num::transpose(num::matmul(memory.states, p.ptr_k))), inv);
  out.attention = num::softmax_rows(scores);
  Var context = num::matmul(out.attention, memory.states);
  out.p_copy = num::sigmoid(linear(context, p.copy_w, p.copy_b));
  out.prob = copy_mixture(p_vocab, out.attention, out.p_copy, out.ext.column_of, out.ext.size());
  return out;
}

TeacherForcing teacher_forcing(const std::vector<std::string>& target, const Vocab& vocab, const ExtendedVocab& ext,
                               bool copy) {
  TeacherForcing tf;
  tf.inputs.push_back(vocab.id(kBos));
  tf.words.emplace_back();
  for (const auto& w : target) {
    tf.inputs.push_back(vocab.id(w));
    tf.words.push_back(w);
    tf.targets.push_back(copy ? ext.id(w, vocab) : vocab.id(w));
  }
  tf.targets.push_back(vocab.id(kEos));
  // The last input would only predict past EOS.
  tf.inputs.resize(tf.targets.size());
  tf.words.resize(tf.targets.size());
  return tf;
}

std::vector<std::string> generate(const DecoderParams& params, const DecoderConfig& cfg, const Vocab& vocab,
                                  const DecoderMemory& memory, bool copy) {
  num::Rng unused(0);
  std::vector<int> inputs{vocab.id(kBos)};
  std::vector<std::string> words{""};
  std::vector<std::string> out;
  const int eos = vocab.id(kEos);
  for (int step = 0; step < cfg.max_len; ++step) {
    DecodeOutput o = decode_step(params, cfg, vocab, memory, inputs, copy, false, 0.0, unused, words);
    const std::size_t cols = o.prob->value.dim(1);
    const double* row = o.prob->value.data.data() + (inputs.size() - 1) * cols;
    const auto best = static_cast<int>(std::max_element(row, row + cols) - row);
    if (best == eos) break;
    const std::string word = o.ext.word(best, vocab);
    out.push_back(word);
    inputs.push_back(vocab.id(word));
    words.push_back(word);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {
std::set<std::string> folded(const std::vector<std::string>& words) {
  std::set<std::string> s;
  for (auto w : words) {
    for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    s.insert(w);
  }
  return s;
}
}  // namespace

Prf subtoken_prf(const std::vector<std::string>& prediction, const std::vector<std::string>& target) {
  const auto pred = folded(prediction);
  const auto gold = folded(target);
  if (pred.empty() && gold.empty()) return {1.0, 1.0, 1.0};
  if (pred.empty() || gold.empty()) return {0.0, 0.0, 0.0};
  std::size_t hit = 0;
  for (const auto& w : pred) hit += gold.count(w);
  Prf r;
  r.precision = static_cast<double>(hit) / static_cast<double>(pred.size());
  r.recall = static_cast<double>(hit) / static_cast<double>(gold.size());
  r.f1 = hit == 0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw Error("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

}  // namespace hpgkit::model
