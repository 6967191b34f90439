#include "hpgkit/hgt.hpp"

#include <cmath>

#include "hpgkit/error.hpp"

namespace hpgkit::model {

using num::Tensor;
using num::Var;

void HgtConfig::validate() const {
  if (layers < 0) throw Error("config: layers must be >= 0");
  if (heads < 1 || d_model < 1) throw Error("config: heads and d_model must be positive");
  if (d_model % heads != 0)
    throw Error("config: d_model " + std::to_string(d_model) + " is not divisible by heads " + std::to_string(heads));
  if (dropout < 0.0 || dropout >= 1.0) throw Error("config: dropout must be in [0, 1)");
  if (hidden < 1) throw Error("config: hidden must be positive");
  if (max_timestamp < 0) throw Error("config: max_timestamp must be >= 0");
}

nlohmann::json HgtConfig::to_json() const {
  return {{"layers", layers}, {"heads", heads},           {"d_model", d_model},
          {"hidden", hidden}, {"dropout", dropout},       {"vocab_size", vocab_size},
          {"max_timestamp", max_timestamp}};
}

HgtConfig HgtConfig::from_json(const nlohmann::json& j) {
  static const char* known[] = {"layers", "heads", "d_model", "hidden", "dropout", "vocab_size", "max_timestamp"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw Error("config: unknown encoder key '" + it.key() + "'");
  }
  HgtConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.d_model = j.value("d_model", c.d_model);
  c.hidden = j.value("hidden", c.hidden);
  c.dropout = j.value("dropout", c.dropout);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_timestamp = j.value("max_timestamp", c.max_timestamp);
  c.validate();
  return c;
}

GraphBatch make_batch(const std::vector<const hpg::Hpg*>& graphs, const Vocab& values) {
  GraphBatch b;
  b.num_graphs = graphs.size();
  if (graphs.empty()) return b;
  const auto& reg = *graphs.front()->registries;
  b.node_types = reg.node_type_count();
  b.edge_types = reg.edge_type_count();
  const auto T = static_cast<int>(b.node_types);
  const auto R = static_cast<int>(b.edge_types);
  for (const auto* g : graphs) {
    if (!(*g->registries == reg)) throw Error("batch mixes graphs built from different registries");
    const int off = static_cast<int>(b.num_nodes);
    const int gid = static_cast<int>(b.node_offset.size());
    b.node_offset.push_back(off);
    b.subtoken_nodes.emplace_back();
    for (const auto& n : g->nodes) {
      b.node_type.push_back(n.type_id);
      b.value_id.push_back(values.id(n.value));
      b.value.push_back(n.value);
      b.timestamp.push_back(n.timestamp);
      b.graph_of_node.push_back(gid);
      if (g->is_subtoken(n.id)) b.subtoken_nodes.back().push_back(off + n.id);
    }
    b.num_nodes += g->nodes.size();
    for (const auto& e : g->edges) {
      b.src.push_back(off + e.src);
      b.dst.push_back(off + e.dst);
      b.edge_type.push_back(e.type_id);
    }
  }
  b.node_offset.push_back(static_cast<int>(b.num_nodes));
  b.has_incoming.assign(b.num_nodes, 0.0);
  b.meta.reserve(b.src.size());
  for (std::size_t i = 0; i < b.src.size(); ++i) {
    const int ts = b.node_type[static_cast<std::size_t>(b.src[i])];
    const int tt = b.node_type[static_cast<std::size_t>(b.dst[i])];
    if (ts < 0 || ts >= T || tt < 0 || tt >= T || b.edge_type[i] < 0 || b.edge_type[i] >= R)
      throw Error("edge type or node type id outside the registry");
    b.meta.push_back((ts * R + b.edge_type[i]) * T + tt);
    b.has_incoming[static_cast<std::size_t>(b.dst[i])] = 1.0;
  }
  return b;
}

Tensor positional_encoding(const std::vector<std::int64_t>& timestamps, std::size_t d_model) {
  Tensor pe({timestamps.size(), d_model});
  for (std::size_t r = 0; r < timestamps.size(); ++r) {
    const double t = static_cast<double>(timestamps[r]);
    for (std::size_t j = 0; j < d_model; ++j) {
      const double i2 = static_cast<double>(j - j % 2);
      const double angle = t / std::pow(10000.0, i2 / static_cast<double>(d_model));
      pe.data[r * d_model + j] = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {
std::string layer_name(const std::string& prefix, std::size_t k, const char* what) {
  return prefix + ".l" + std::to_string(k) + "." + what;
}

// A type-indexed bank whose output columns split into `heads` blocks, each a
// separate d -> d/heads map.
Tensor head_bank(num::Rng& rng, std::size_t banks, std::size_t d, std::size_t heads) {
  return num::xavier_uniform(rng, {banks, d, d}, d, d / heads);
}
}  // namespace

HgtParams init_hgt_params(num::ParamStore& store, const HgtConfig& cfg, std::size_t node_types,
                          std::size_t edge_types, num::Rng& rng, const std::string& prefix) {
  cfg.validate();
  if (cfg.vocab_size < 1) throw Error("config: vocab_size must be set before initialization");
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto h = static_cast<std::size_t>(cfg.heads);
  const std::size_t dh = d / h;
  const std::size_t T = node_types, R = edge_types;
  store.add(prefix + ".embed", num::normal_tensor(rng, {static_cast<std::size_t>(cfg.vocab_size), d}, 0.02));
  for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.layers); ++k) {
    store.add(layer_name(prefix, k, "M.w"), head_bank(rng, T, d, h));
    store.add(layer_name(prefix, k, "M.b"), Tensor({T, d}));
    store.add(layer_name(prefix, k, "K.w"), head_bank(rng, T, d, h));
    store.add(layer_name(prefix, k, "K.b"), Tensor({T, d}));
    store.add(layer_name(prefix, k, "Q.w"), head_bank(rng, T, d, h));
    store.add(layer_name(prefix, k, "Q.b"), Tensor({T, d}));
    store.add(layer_name(prefix, k, "W_msg"), num::xavier_uniform(rng, {R, dh, dh}, dh, dh));
    store.add(layer_name(prefix, k, "W_att"), num::xavier_uniform(rng, {R, dh, dh}, dh, dh));
    store.add(layer_name(prefix, k, "mu"), Tensor({T * R * T, h}, 1.0));
    store.add(layer_name(prefix, k, "C.w"), num::xavier_uniform(rng, {T, d, d}, d, d));
    store.add(layer_name(prefix, k, "C.b"), Tensor({T, d}));
  }
  return bind_hgt_params(store, cfg, prefix);
}

HgtParams bind_hgt_params(const num::ParamStore& store, const HgtConfig& cfg, const std::string& prefix) {
  HgtParams p;
  p.embed = store.get(prefix + ".embed");
  for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.layers); ++k) {
    HgtParams::Layer l;
    l.m_w = store.get(layer_name(prefix, k, "M.w"));
    l.m_b = store.get(layer_name(prefix, k, "M.b"));
    l.k_w = store.get(layer_name(prefix, k, "K.w"));
    l.k_b = store.get(layer_name(prefix, k, "K.b"));
    l.q_w = store.get(layer_name(prefix, k, "Q.w"));
    l.q_b = store.get(layer_name(prefix, k, "Q.b"));
    l.w_msg = store.get(layer_name(prefix, k, "W_msg"));
    l.w_att = store.get(layer_name(prefix, k, "W_att"));
    l.mu = store.get(layer_name(prefix, k, "mu"));
    l.c_w = store.get(layer_name(prefix, k, "C.w"));
    l.c_b = store.get(layer_name(prefix, k, "C.b"));
    p.layers.push_back(std::move(l));
  }
  return p;
}

Var init_features(const GraphBatch& batch, const HgtParams& params, std::size_t d_model) {
  Var emb = num::embedding_lookup(params.embed, batch.value_id);
  return num::add(emb, num::constant(positional_encoding(batch.timestamp, d_model)));
}

Var hgt_layer(const Var& h, const GraphBatch& batch, const HgtParams::Layer& layer, const HgtConfig& cfg, bool train,
              num::Rng& rng) {
  if (batch.src.empty()) return h;
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));
  const std::size_t n = batch.num_nodes;

  Var k = num::typed_linear(h, batch.node_type, layer.k_w, layer.k_b);
  Var q = num::typed_linear(h, batch.node_type, layer.q_w, layer.q_b);
  Var m = num::typed_linear(h, batch.node_type, layer.m_w, layer.m_b);

  Var k_e = num::typed_block_matmul(num::gather_rows(k, batch.src), batch.edge_type, layer.w_att, heads);
  Var score = num::head_dot(k_e, num::gather_rows(q, batch.dst), heads);
  score = num::scale(num::mul(score, num::gather_rows(layer.mu, batch.meta)), inv_sqrt_dh);
  Var alpha = num::segment_softmax(score, batch.dst, n);
  alpha = num::dropout(alpha, cfg.dropout, train, rng);

  Var msg = num::typed_block_matmul(num::gather_rows(m, batch.src), batch.edge_type, layer.w_msg, heads);
  Var agg = num::scatter_add_rows(num::head_scale(alpha, msg, heads), batch.dst, n);

  Var upd = num::gelu(num::typed_linear(agg, batch.node_type, layer.c_w, layer.c_b));
  upd = num::mul_col(upd, num::constant(Tensor({n, 1}, batch.has_incoming)));
  upd = num::dropout(upd, cfg.dropout, train, rng);
  return num::add(h, upd);
}

Encoded encode(const GraphBatch& batch, const HgtParams& params, const HgtConfig& cfg, bool train, num::Rng& rng) {
  for (auto t : batch.timestamp) {
    if (t < 0 || t > cfg.max_timestamp)
      throw Error("timestamp " + std::to_string(t) + " outside [0, max_timestamp=" +
                  std::to_string(cfg.max_timestamp) + "]");
  }
  Encoded out;
  Var h = init_features(batch, params, static_cast<std::size_t>(cfg.d_model));
  for (const auto& layer : params.layers) h = hgt_layer(h, batch, layer, cfg, train, rng);
  out.states = h;
  out.subtoken_nodes = batch.subtoken_nodes;
  for (std::size_t g = 0; g < batch.num_graphs; ++g) {
    std::vector<int> ids;
    for (int v = batch.node_offset[g]; v < batch.node_offset[g + 1]; ++v) ids.push_back(v);
    out.all_nodes.push_back(std::move(ids));
  }
  return out;
}

Var linear(const Var& x, const Var& w, const Var& b) { return num::add_row(num::matmul(x, w), b); }

PoolParams init_pool_params(num::ParamStore& store, std::size_t d, num::Rng& rng, const std::string& prefix) {
  store.add(prefix + ".gate.w", num::xavier_uniform(rng, {d, d}, d, d));
  store.add(prefix + ".gate.b", Tensor({d}));
  store.add(prefix + ".value.w", num::xavier_uniform(rng, {d, d}, d, d));
  store.add(prefix + ".value.b", Tensor({d}));
  return bind_pool_params(store, prefix);
}

PoolParams bind_pool_params(const num::ParamStore& store, const std::string& prefix) {
  return {store.get(prefix + ".gate.w"), store.get(prefix + ".gate.b"), store.get(prefix + ".value.w"),
          store.get(prefix + ".value.b")};
}

Var global_attention_pool(const Var& states, const GraphBatch& batch, const PoolParams& p) {
  for (std::size_t g = 0; g < batch.num_graphs; ++g) {
    if (batch.node_offset[g] == batch.node_offset[g + 1]) throw Error("global attention pooling over an empty graph");
  }
  if (batch.num_graphs == 0) throw Error("global attention pooling over an empty batch");
  Var gate = num::sigmoid(linear(states, p.gate_w, p.gate_b));
  Var val = linear(states, p.value_w, p.value_b);
  return num::scatter_add_rows(num::mul(gate, val), batch.graph_of_node, batch.num_graphs);
}

}  // namespace hpgkit::model
