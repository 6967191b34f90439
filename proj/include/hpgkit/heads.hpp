#pragma once

#include <string>
#include <vector>

#include "hpgkit/hgt.hpp"
#include "hpgkit/numeric.hpp"
#include "hpgkit/vocab.hpp"
#include "json.hpp"

namespace hpgkit::model {

struct DecoderConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 256;
  int ffn = 1024;
  int max_len = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static DecoderConfig from_json(const nlohmann::json& j);
};

struct ClassifierConfig {
  std::vector<int> hidden;  // empty means {d_model}
  int classes = 2;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

struct ClassifierParams {
  PoolParams pool;
  std::vector<num::Var> w, b;
};

ClassifierParams init_classifier(num::ParamStore& store, const ClassifierConfig& cfg, std::size_t d_model,
                                 num::Rng& rng);
ClassifierParams bind_classifier(const num::ParamStore& store, const ClassifierConfig& cfg);

/// MLP with GELU hidden activations over pooled graph vectors [G x d].
num::Var classify(const num::Var& graph_vectors, const ClassifierParams& params);

// ---------------------------------------------------------------------------
// Pointer decoder
// ---------------------------------------------------------------------------

struct DecoderParams {
  num::Var embed;
  struct Attn {
    num::Var wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Layer {
    num::Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    Attn self_attn, cross_attn;
    num::Var ff1_w, ff1_b, ff2_w, ff2_b;
  };
  std::vector<Layer> layers;
  num::Var lnf_g, lnf_b, out_w, out_b;
  num::Var ptr_q, ptr_k, copy_w, copy_b;
  num::Var sel_w;  // selective read of the memory positions matching the previous word
};

DecoderParams init_decoder(num::ParamStore& store, const DecoderConfig& cfg, std::size_t vocab_size, num::Rng& rng);
DecoderParams bind_decoder(const num::ParamStore& store, const DecoderConfig& cfg);

/// Memory the decoder attends to: node states plus the node values that a
/// copy would emit.
struct DecoderMemory {
  num::Var states;  // [n x d]
  std::vector<std::string> values;
};

/// The vocabulary extended by the copyable memory values it lacks. Memory
/// position i contributes its attention mass to column `column_of[i]`.
struct ExtendedVocab {
  std::vector<std::string> extra;
  std::vector<int> column_of;
  std::size_t base = 0;

  std::size_t size() const { return base + extra.size(); }
  int id(const std::string& word, const Vocab& vocab) const;
  std::string word(int id, const Vocab& vocab) const;
};

ExtendedVocab extend_vocab(const Vocab& vocab, const std::vector<std::string>& memory_values);

/// Prob = (1 - p_copy) * [P_vocab, 0] + p_copy * (attention summed per column).
num::Var copy_mixture(const num::Var& p_vocab, const num::Var& attention, const num::Var& p_copy,
                      const std::vector<int>& column_of, std::size_t extended_size);

struct DecodeOutput {
  num::Var prob;       // [L x |extended|]
  num::Var p_copy;     // [L x 1], or null when copying is off
  num::Var attention;  // [L x n], or null
  ExtendedVocab ext;
};

/// One teacher-forced pass over `inputs` (ids in `vocab`, starting with BOS).
/// Copying is disabled when `copy` is false or the memory is empty.
/// With copying on, input position t also receives the mean state of the
/// memory positions whose value equals `input_words[t]`, so a copied word
/// that fed back as UNK is still identifiable.
DecodeOutput decode_step(const DecoderParams& params, const DecoderConfig& cfg, const Vocab& vocab,
                         const DecoderMemory& memory, const std::vector<int>& inputs, bool copy, bool train,
                         double dropout, num::Rng& rng, const std::vector<std::string>& input_words = {});

/// Decoder input ids and mixture targets for a target subtoken sequence:
/// inputs = BOS y1..yn, targets = y1..yn EOS. Out-of-vocabulary words feed
/// back as UNK; as targets they use the memory column when copyable.
struct TeacherForcing {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<std::string> words;  // the input words; BOS is ""
};
TeacherForcing teacher_forcing(const std::vector<std::string>& target, const Vocab& vocab, const ExtendedVocab& ext,
                               bool copy);

/// Greedy decoding from BOS until EOS or cfg.max_len words.
std::vector<std::string> generate(const DecoderParams& params, const DecoderConfig& cfg, const Vocab& vocab,
                                  const DecoderMemory& memory, bool copy);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Case-insensitive set precision/recall/F1 of predicted against target
/// subtokens.
Prf subtoken_prf(const std::vector<std::string>& prediction, const std::vector<std::string>& target);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

}  // namespace hpgkit::model
