#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hpgkit/hpg.hpp"
#include "hpgkit/numeric.hpp"
#include "hpgkit/vocab.hpp"
#include "json.hpp"

namespace hpgkit::model {

struct HgtConfig {
  int layers = 8;
  int heads = 8;
  int d_model = 256;
  int hidden = 1024;
  double dropout = 0.2;
  int vocab_size = 0;
  std::int64_t max_timestamp = 1 << 20;

  int head_dim() const { return d_model / heads; }
  void validate() const;
  nlohmann::json to_json() const;
  static HgtConfig from_json(const nlohmann::json& j);
};

/// Several graphs merged into one disjoint union. Node ids of graph g occupy
/// [node_offset[g], node_offset[g+1]).
struct GraphBatch {
  std::size_t num_nodes = 0;
  std::size_t num_graphs = 0;
  std::size_t node_types = 0;
  std::size_t edge_types = 0;
  std::vector<int> node_type;
  std::vector<int> value_id;
  std::vector<std::string> value;
  std::vector<std::int64_t> timestamp;
  std::vector<int> graph_of_node;
  std::vector<int> node_offset;
  std::vector<int> src, dst, edge_type;
  std::vector<int> meta;  // (type(src) * R + edge type) * T + type(dst)
  std::vector<double> has_incoming;
  std::vector<std::vector<int>> subtoken_nodes;  // per graph, batch ids
};

GraphBatch make_batch(const std::vector<const hpg::Hpg*>& graphs, const Vocab& values);

/// Sinusoidal encoding: PE(t, 2i) = sin(t / 10000^(2i/d)), PE(t, 2i+1) = cos(...).
num::Tensor positional_encoding(const std::vector<std::int64_t>& timestamps, std::size_t d_model);

/// Handles to the encoder parameters held in a ParamStore.
struct HgtParams {
  num::Var embed;
  struct Layer {
    num::Var m_w, m_b, k_w, k_b, q_w, q_b, c_w, c_b;
    num::Var w_msg, w_att;  // [R x dh x dh]
    num::Var mu;            // [T*R*T x heads]
  };
  std::vector<Layer> layers;
};

HgtParams init_hgt_params(num::ParamStore& store, const HgtConfig& cfg, std::size_t node_types,
                          std::size_t edge_types, num::Rng& rng, const std::string& prefix = "enc");
HgtParams bind_hgt_params(const num::ParamStore& store, const HgtConfig& cfg, const std::string& prefix = "enc");

num::Var init_features(const GraphBatch& batch, const HgtParams& params, std::size_t d_model);

num::Var hgt_layer(const num::Var& h, const GraphBatch& batch, const HgtParams::Layer& layer, const HgtConfig& cfg,
                   bool train, num::Rng& rng);

struct Encoded {
  num::Var states;                               // [N x d]
  std::vector<std::vector<int>> subtoken_nodes;  // per graph
  std::vector<std::vector<int>> all_nodes;       // per graph
};

Encoded encode(const GraphBatch& batch, const HgtParams& params, const HgtConfig& cfg, bool train, num::Rng& rng);

struct PoolParams {
  num::Var gate_w, gate_b, value_w, value_b;
};

PoolParams init_pool_params(num::ParamStore& store, std::size_t d_model, num::Rng& rng,
                            const std::string& prefix = "pool");
PoolParams bind_pool_params(const num::ParamStore& store, const std::string& prefix = "pool");

/// out_g = sum over nodes v of g of sigmoid(gate(h_v)) * value(h_v); [G x d].
num::Var global_attention_pool(const num::Var& states, const GraphBatch& batch, const PoolParams& params);

/// x W + b for a plain 2-d weight.
num::Var linear(const num::Var& x, const num::Var& w, const num::Var& b);

}  // namespace hpgkit::model
