#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmirt/model_spec.hpp"
#include "lmirt/response_model.hpp"

namespace lmirt {

struct ChainParams {
  // (k-1) x p_eff coefficients of the baseline-category logit for the
  // initial state; row c-1 belongs to state c, state 0 is the baseline.
  Eigen::MatrixXd phi;
  // One k x k row-stochastic matrix per equality class.
  std::vector<Eigen::MatrixXd> pi;
};

struct ParamSet {
  ItemParams item;
  AbilitySupport support;
  ChainParams chain;
};

// Transition matrix in force for the step into an occasion of regime r.
const Eigen::MatrixXd& transition_for_regime(const ParamSet& params, const ModelSpec& spec, int regime);

// Neutral parameter point of the right shapes: xi = 0, beta = 0, gamma = 1,
// lambda = 0.5, phi = 0, identity-constrained classes = I, others uniform.
ParamSet zero_params(const ModelSpec& spec);

// Structural violations (shapes, stochastic rows, fixed references, identity
// classes). Empty when the point is admissible for the spec.
std::vector<std::string> check_params(const ParamSet& params, const ModelSpec& spec);

// Relabel states so that new state c is old state order[c].
ParamSet permute_states(const ParamSet& params, const std::vector<int>& order);

// State order sorting by ascending ability on dimension 1 (for the
// unconstrained table, mean logit over items measuring dimension 1).
std::vector<int> canonical_state_order(const ParamSet& params, const ModelSpec& spec);
ParamSet canonical_order(const ParamSet& params, const ModelSpec& spec);

}  // namespace lmirt
