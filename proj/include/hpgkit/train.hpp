#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hpgkit/corpus.hpp"
#include "hpgkit/heads.hpp"
#include "hpgkit/hgt.hpp"
#include "hpgkit/hpg.hpp"
#include "hpgkit/numeric.hpp"
#include "hpgkit/vocab.hpp"
#include "json.hpp"

namespace hpgkit::train {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  std::size_t step = 0;
  std::vector<num::Tensor> m, v;
};

/// One AdamW update with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
/// Throws on a non-finite gradient before touching any parameter.
void adamw_step(const std::vector<num::Var>& params, AdamWState& state, const AdamWConfig& cfg);

/// Rescales gradients so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
double clip_grad_norm(const std::vector<num::Var>& params, double max_norm);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct Ablation {
  bool erase_node_types = false;
  bool erase_edge_types = false;
  bool no_next_sib = false;
  bool no_next_token = false;
  bool decode_all_nodes = false;
  bool no_copy = false;
};

enum class Task { Classification, Naming };
const char* to_string(Task task);
Task parse_task(const std::string& text);

struct TrainConfig {
  static constexpr int kVersion = 1;

  AdamWConfig optimizer;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  // Optimizer steps between validations; 0 validates once per epoch.
  int eval_interval = 0;
  double clip_norm = 1.0;
  model::HgtConfig encoder{2, 4, 64, 256, 0.1, 0, 1 << 20};
  model::DecoderConfig decoder{2, 4, 64, 256, 8};
  model::ClassifierConfig classifier;
  hpg::SubtokenScheme scheme = hpg::SubtokenScheme::Shared;
  Ablation ablation;
  std::size_t input_min_count = 2;
  std::size_t output_min_count = 2;

  /// Defaults are desk scale: 2 layers, 4 heads, d_model 64. This switches
  /// to 8 layers, 8 heads, d_model 256.
  static TrainConfig full_scale();

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

struct Sample {
  std::string id;
  hpg::Hpg graph;
  int label = -1;
  std::vector<std::string> target;
};

struct Prepared {
  std::shared_ptr<const asdl::TypeRegistries> registries;
  std::vector<Sample> train, valid, test;

  const std::vector<Sample>& split(const std::string& name) const;
};

/// Registries for a corpus: the MiniLang grammar's when every record is
/// source text, otherwise the union over all trees.
std::shared_ptr<const asdl::TypeRegistries> corpus_registries(const corpus::Corpus& corpus);

/// Builds every record's graph with the configured scheme, crafted edges and
/// erasure. Naming records get their method name masked.
Prepared prepare(const corpus::Corpus& corpus, const TrainConfig& cfg, Task task,
                 std::shared_ptr<const asdl::TypeRegistries> registries = nullptr);

Vocab build_input_vocab(const std::vector<Sample>& samples, std::size_t min_count);
Vocab build_output_vocab(const std::vector<Sample>& samples, std::size_t min_count);

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model {
  Task task = Task::Classification;
  TrainConfig config;
  std::shared_ptr<const asdl::TypeRegistries> registries;
  Vocab input_vocab;
  Vocab output_vocab;
  int classes = 0;

  num::ParamStore store;
  model::HgtParams encoder;
  model::ClassifierParams classifier;
  model::DecoderParams decoder;

  /// Everything needed to rebuild the model around a checkpoint.
  nlohmann::json manifest() const;
};

/// Allocates and initializes parameters from `model.config`.
void init_model(Model& model, std::uint64_t seed);
/// Rebuilds a model from a checkpoint file.
std::unique_ptr<Model> load_model(const std::string& checkpoint);
void save_model(const std::string& checkpoint, const Model& model, std::optional<double> valid_metric);

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

struct MetricRecord {
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  std::optional<double> metric;

  nlohmann::json to_json() const;
};

std::string serialize_metrics(const std::vector<MetricRecord>& history);

struct EvalResult {
  double loss = 0.0;
  // Accuracy for classification, mean subtoken F1 for naming.
  double metric = 0.0;
  model::Prf prf;
  std::vector<int> predictions;
  std::vector<std::vector<std::string>> generated;
  // Classification logits, one row per sample.
  std::vector<std::vector<double>> logits;
};

/// No-grad evaluation in batches of `batch_size`; results do not depend on
/// the batch size. Batches are spread over worker_count() threads.
EvalResult evaluate(const Model& model, const std::vector<Sample>& samples, std::size_t batch_size = 32);

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<MetricRecord> history;
  double best_valid_metric = 0.0;
  EvalResult test;
};

struct TrainOptions {
  std::string metrics_path;     // empty: keep in memory only
  std::string checkpoint_path;  // empty: no checkpoint
  std::function<void(const MetricRecord&)> on_record;
};

/// Cross-entropy training with per-interval validation; the parameters with
/// the best validation metric are restored before the test evaluation.
TrainResult train_model(const Prepared& data, const TrainConfig& cfg, Task task, const TrainOptions& options = {});

TrainResult train_classification(const corpus::Corpus& corpus, const TrainConfig& cfg,
                                 const TrainOptions& options = {});
TrainResult train_naming(const corpus::Corpus& corpus, const TrainConfig& cfg, const TrainOptions& options = {});

/// Seed for an independent random stream derived from `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace hpgkit::train
