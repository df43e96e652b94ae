#pragma once

#include <Eigen/Dense>

#include "lmirt/model_spec.hpp"

namespace lmirt {

struct ItemParams {
  Eigen::VectorXd beta;    // difficulty per item type (logit units)
  Eigen::VectorXd gamma;   // discriminant per item type
  Eigen::MatrixXd lambda;  // J x k success probabilities (unconstrained mode only)
};

struct AbilitySupport {
  Eigen::MatrixXd xi;  // k x s_eff ability values, one row per latent state
};

struct LogProbPair {
  double log_success;  // log lambda
  double log_failure;  // log (1 - lambda)
};

// Numerically stable log(sigmoid(x)).
double log_sigmoid(double x);
double sigmoid(double x);

// logit of the success probability for item j in state c (1PL/2PL modes).
double item_logit(int j, int c, const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec);

double success_prob(int j, int c, const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec);

// Both log lambda and log(1 - lambda), accurate for |logit| up to the cap.
LogProbPair log_success_prob(int j, int c, const ItemParams& item, const AbilitySupport& support,
                             const ModelSpec& spec);
LogProbPair log_success_prob_from_logit(double logit);

double bernoulli_prob(int y, double lambda);

// J x k grids of log lambda and log(1 - lambda).
struct EmissionTable {
  Eigen::MatrixXd log_success;
  Eigen::MatrixXd log_failure;
};
EmissionTable emission_table(const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec);
Eigen::MatrixXd success_grid(const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec);

}  // namespace lmirt
