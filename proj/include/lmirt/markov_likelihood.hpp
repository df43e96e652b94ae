#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmirt/data.hpp"
#include "lmirt/params.hpp"

namespace lmirt {

// Raised when a response sequence has probability zero under the parameters.
class DegenerateLikelihood : public std::runtime_error {
 public:
  explicit DegenerateLikelihood(const std::string& what) : std::runtime_error(what) {}
};

// Baseline-category logit probabilities; phi has k-1 rows, state 0 is the baseline.
Eigen::VectorXd initial_probs(const Eigen::VectorXd& x, const Eigen::MatrixXd& phi);

// Per-call cache of what every subject needs: the emission log-table and the
// regime -> transition matrix lookup. Holds references; keep params alive.
class LikelihoodContext {
 public:
  LikelihoodContext(const ParamSet& params, const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const ParamSet& params() const { return params_; }
  const Eigen::MatrixXd& transition(int regime) const { return params_.chain.pi[class_of_[regime]]; }
  double log_emission(const Trial& trial, int state) const {
    return trial.response ? emission_.log_success(trial.item, state) : emission_.log_failure(trial.item, state);
  }

 private:
  const ParamSet& params_;
  const ModelSpec& spec_;
  EmissionTable emission_;
  std::vector<int> class_of_;
};

struct ForwardResult {
  double log_manifest = 0.0;
  Eigen::MatrixXd alpha;      // T x k, row t = P(C_t | y_1..y_t)
  Eigen::VectorXd log_scale;  // log of each step's normaliser; sums to log_manifest
};

struct ForwardBackwardResult {
  double log_manifest = 0.0;
  Eigen::MatrixXd state_post;  // T x k
  // Row t-1 holds P(C_{t-1}=c, C_t=d | y) at column c*k + d, for t = 1..T-1.
  Eigen::MatrixXd trans_post;

  int k() const { return static_cast<int>(state_post.cols()); }
  double trans(int t, int c, int d) const { return trans_post(t - 1, c * k() + d); }
  Eigen::MatrixXd transition(int t) const;
};

ForwardResult forward(const SubjectRecord& subject, const LikelihoodContext& ctx);
ForwardResult forward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec);

ForwardBackwardResult forward_backward(const SubjectRecord& subject, const LikelihoodContext& ctx);
ForwardBackwardResult forward_backward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec);

double log_likelihood(const Dataset& data, const ParamSet& params, const ModelSpec& spec);

}  // namespace lmirt
