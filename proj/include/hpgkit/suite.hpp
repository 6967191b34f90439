#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hpgkit/numeric.hpp"
#include "hpgkit/train.hpp"

namespace hpgkit::suite {

struct GradcheckReport {
  std::vector<num::GradcheckResult> results;
  double max_rel_error = 0.0;
  double max_softmax_deviation = 0.0;  // |segment sum - 1|
  bool passed = true;
  double seconds = 0.0;
};

/// Finite-difference checks of every differentiable op over several seeds,
/// plus end-to-end HGT + pooling + classifier and HGT + pointer decoder
/// losses with 2-layer encoders.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, int op_seeds = 5);

struct InvariantReport {
  std::size_t programs = 0;
  std::size_t checks = 0;
  std::vector<std::string> failures;
};

/// Graph invariants over `programs` generated MiniLang programs: grammar
/// conformance, reverse-edge perfect matching, NextToken simple path, AST
/// timestamp permutation, shared <= independent subtoken count.
InvariantReport run_invariant_suite(std::uint64_t seed, std::size_t programs = 1000);

/// Invariant checks on one graph; appends messages to `failures`.
std::size_t check_graph(const hpg::Hpg& g, const std::string& tag, std::vector<std::string>& failures);

/// Writes graph dumps and short training metric logs under `out_dir`.
/// Identical seeds give byte-identical files. Returns the paths written.
std::vector<std::string> write_selftest_artifacts(std::uint64_t seed, const std::string& out_dir);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 7;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string work_dir = ".";
  // Binary used by the determinism criterion to run `selftest` twice.
  std::string cli_path;
  std::function<void(const std::string&)> log;
};

inline constexpr int kCriteria = 10;

/// Training configurations used by the experiment criteria.
train::TrainConfig operand_order_config(std::uint64_t seed);
train::TrainConfig classification_config(std::uint64_t seed);
train::TrainConfig naming_config(std::uint64_t seed);

CriterionResult run_criterion(int id, const SuiteOptions& options);
std::string format_result(const CriterionResult& r);

}  // namespace hpgkit::suite
