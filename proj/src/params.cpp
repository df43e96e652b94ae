#include "lmirt/params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lmirt {

const Eigen::MatrixXd& transition_for_regime(const ParamSet& params, const ModelSpec& spec, int regime) {
  // Small linear scan; the class table is tiny and this keeps ParamSet free of spec copies.
  const auto& classes = spec.constraints.equality_classes;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (int r : classes[c])
      if (r == regime) return params.chain.pi[c];
  throw std::out_of_range("regime " + std::to_string(regime + 1) + " has no equality class");
}

ParamSet zero_params(const ModelSpec& spec) {
  const int k = spec.k;
  const int J = spec.items.J;
  ParamSet out;
  out.item.beta = Eigen::VectorXd::Zero(J);
  out.item.gamma = Eigen::VectorXd::Ones(J);
  out.item.lambda = Eigen::MatrixXd::Constant(J, k, 0.5);
  out.support.xi = Eigen::MatrixXd::Zero(k, effective_dims(spec));
  out.chain.phi = Eigen::MatrixXd::Zero(k - 1, effective_covariates(spec));
  const auto identity = identity_class_flags(spec);
  for (bool is_identity : identity) {
    out.chain.pi.push_back(is_identity ? Eigen::MatrixXd::Identity(k, k).eval()
                                       : Eigen::MatrixXd::Constant(k, k, 1.0 / k));
  }
  return out;
}

std::vector<std::string> check_params(const ParamSet& params, const ModelSpec& spec) {
  std::vector<std::string> errors;
  const int k = spec.k;
  const int J = spec.items.J;
  if (params.item.beta.size() != J || params.item.gamma.size() != J) errors.push_back("item vectors must have length J");
  if (params.support.xi.rows() != k || params.support.xi.cols() != effective_dims(spec))
    errors.push_back("ability support must be k x s_eff");
  if (params.chain.phi.rows() != k - 1 || params.chain.phi.cols() != effective_covariates(spec))
    errors.push_back("phi must be (k-1) x p_eff");
  if (params.chain.pi.size() != spec.constraints.equality_classes.size())
    errors.push_back("one transition matrix per equality class required");
  if (!errors.empty()) return errors;

  if (spec.items.mode == ItemMode::Unconstrained) {
    if (params.item.lambda.rows() != J || params.item.lambda.cols() != k) {
      errors.push_back("lambda table must be J x k");
    } else if ((params.item.lambda.array() < 0.0).any() || (params.item.lambda.array() > 1.0).any()) {
      errors.push_back("lambda entries must lie in [0,1]");
    }
  } else {
    for (int j : effective_reference_items(spec)) {
      if (params.item.beta(j) != 0.0) errors.push_back("reference item " + std::to_string(j + 1) + " must have beta = 0");
      if (spec.items.mode == ItemMode::TwoPL && params.item.gamma(j) != 1.0)
        errors.push_back("reference item " + std::to_string(j + 1) + " must have gamma = 1");
    }
  }

  const auto identity = identity_class_flags(spec);
  for (std::size_t c = 0; c < params.chain.pi.size(); ++c) {
    const auto& m = params.chain.pi[c];
    if (m.rows() != k || m.cols() != k) {
      errors.push_back("transition matrix " + std::to_string(c + 1) + " must be k x k");
      continue;
    }
    if ((m.array() < 0.0).any() || (m.array() > 1.0).any())
      errors.push_back("transition matrix " + std::to_string(c + 1) + " has entries outside [0,1]");
    for (int r = 0; r < k; ++r)
      if (std::abs(m.row(r).sum() - 1.0) > 1e-12)
        errors.push_back("transition matrix " + std::to_string(c + 1) + " row " + std::to_string(r + 1) +
                         " does not sum to 1");
    if (identity[c] && !m.isIdentity(0.0))
      errors.push_back("transition matrix " + std::to_string(c + 1) + " is constrained to the identity");
  }
  return errors;
}

ParamSet permute_states(const ParamSet& params, const std::vector<int>& order) {
  const int k = static_cast<int>(order.size());
  ParamSet out = params;
  if (params.support.xi.rows() == k)
    for (int c = 0; c < k; ++c) out.support.xi.row(c) = params.support.xi.row(order[c]);
  if (params.item.lambda.cols() == k)
    for (int c = 0; c < k; ++c) out.item.lambda.col(c) = params.item.lambda.col(order[c]);
  for (std::size_t m = 0; m < params.chain.pi.size(); ++m)
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < k; ++d) out.chain.pi[m](c, d) = params.chain.pi[m](order[c], order[d]);

  // Baseline-category logits: rebuild the full k-row linear predictor, then
  // re-express it relative to the new baseline state.
  const int p = static_cast<int>(params.chain.phi.cols());
  Eigen::MatrixXd full = Eigen::MatrixXd::Zero(k, p);
  if (k > 1) full.bottomRows(k - 1) = params.chain.phi;
  for (int c = 1; c < k; ++c) out.chain.phi.row(c - 1) = full.row(order[c]) - full.row(order[0]);
  return out;
}

std::vector<int> canonical_state_order(const ParamSet& params, const ModelSpec& spec) {
  const int k = spec.k;
  std::vector<double> key(k, 0.0);
  if (spec.items.mode == ItemMode::Unconstrained) {
    for (int c = 0; c < k; ++c) {
      double sum = 0.0;
      int count = 0;
      for (int j = 0; j < spec.items.J; ++j) {
        if (spec.items.dim_of[j] != 0) continue;
        const double lam = std::clamp(params.item.lambda(j, c), 1e-300, 1.0 - 1e-16);
        sum += std::log(lam) - std::log1p(-lam);
        ++count;
      }
      key[c] = count ? sum / count : 0.0;
    }
  } else {
    for (int c = 0; c < k; ++c) key[c] = params.support.xi(c, 0);
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&key](int a, int b) { return key[a] < key[b]; });
  return order;
}

ParamSet canonical_order(const ParamSet& params, const ModelSpec& spec) {
  return permute_states(params, canonical_state_order(params, spec));
}

}  // namespace lmirt
