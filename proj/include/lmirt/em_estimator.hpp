#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmirt/data.hpp"
#include "lmirt/markov_likelihood.hpp"
#include "lmirt/params.hpp"
#include "lmirt/random.hpp"

namespace lmirt {

struct FitOptions {
  int n_starts = 10;
  std::uint64_t seed = 1;
  double tol = 1e-8;          // relative log-likelihood change
  int max_iter = 5000;
  double inner_tol = 1e-10;   // Newton step size for logistic sub-problems
  int inner_max = 50;
  int alternations = 10;      // 2PL (beta, gamma) / Xi rounds per M-step
  double cap = 50.0;          // bound on |logistic parameter|
  int workers = 1;
  // Extra starting points tried after the random ones.
  std::vector<ParamSet> warm_starts;
};

std::vector<std::string> check_options(const FitOptions& opts);

struct PosteriorSet {
  std::vector<ForwardBackwardResult> subjects;
};

struct EStepResult {
  PosteriorSet posteriors;
  double loglik = 0.0;
};

EStepResult e_step(const Dataset& data, const ParamSet& params, const ModelSpec& spec);

// Expected complete-data log-likelihood Q(params | posteriors).
double expected_complete_loglik(const PosteriorSet& post, const Dataset& data, const ParamSet& params,
                                const ModelSpec& spec);

struct TransitionUpdate {
  std::vector<Eigen::MatrixXd> pi;
  std::vector<std::string> flags;
};

TransitionUpdate m_step_transitions(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                                    const ChainParams& current);

struct InitialUpdate {
  Eigen::MatrixXd phi;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> flags;
};

InitialUpdate m_step_initial(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                             const Eigen::MatrixXd& phi, const FitOptions& opts = {});
// Same problem on explicit weights (n x k) and design rows (n x p_eff).
InitialUpdate fit_initial_logit(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& design,
                                const Eigen::MatrixXd& phi, const FitOptions& opts = {});

// Posterior-weighted success and trial counts per (item, state).
struct ItemStats {
  Eigen::MatrixXd successes;  // J x k
  Eigen::MatrixXd weights;    // J x k
};

ItemStats item_stats(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec);

// Item part of Q: sum over cells of S log(lambda) + (N - S) log(1 - lambda).
double expected_item_loglik(const ItemStats& stats, const ItemParams& item, const AbilitySupport& support,
                            const ModelSpec& spec);

struct ItemUpdate {
  ItemParams item;
  AbilitySupport support;
  std::vector<std::string> flags;
};

ItemUpdate m_step_items(const ItemStats& stats, const ModelSpec& spec, const ItemParams& item,
                        const AbilitySupport& support, const FitOptions& opts = {});
ItemUpdate m_step_items(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                        const ItemParams& item, const AbilitySupport& support, const FitOptions& opts = {});

ParamSet random_start(const Dataset& data, const ModelSpec& spec, Rng& rng);

struct EmRun {
  ParamSet params;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::vector<double> trace;  // log-likelihood at every E-step
  std::vector<std::string> warnings;
};

EmRun run_em(const Dataset& data, const ModelSpec& spec, ParamSet start, const FitOptions& opts);

class EstimationFailure : public std::runtime_error {
 public:
  explicit EstimationFailure(const std::string& what) : std::runtime_error(what) {}
};

struct FitResult {
  ParamSet params;  // canonical state order
  double loglik = 0.0;
  int g = 0;
  int n_iter = 0;
  bool converged = false;
  int best_start = 0;
  // Final log-likelihood of every start, -inf for degenerate ones.
  std::vector<double> start_logliks;
  std::vector<double> trace;  // of the best start
  std::vector<std::string> warnings;
};

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opts);

}  // namespace lmirt
