#pragma once
// Shared test fixtures and independent oracles.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmirt/data.hpp"
#include "lmirt/model_spec.hpp"
#include "lmirt/params.hpp"
#include "lmirt/random.hpp"
#include "lmirt/response_model.hpp"

namespace oracle {

using lmirt::ModelSpec;
using lmirt::ParamSet;
using lmirt::SubjectRecord;

// Plain success probability written out from the model definition, no shared helpers.
inline double naive_lambda(const ParamSet& p, const ModelSpec& spec, int j, int c) {
  if (spec.items.mode == lmirt::ItemMode::Unconstrained) return p.item.lambda(j, c);
  const int col = spec.constraints.unidimensional ? 0 : spec.items.dim_of[j];
  const double g = spec.items.mode == lmirt::ItemMode::TwoPL ? p.item.gamma(j) : 1.0;
  const long double eta = static_cast<long double>(g) * (p.support.xi(c, col) - p.item.beta(j));
  return static_cast<double>(1.0L / (1.0L + std::exp(-eta)));
}

inline Eigen::VectorXd naive_initial(const Eigen::VectorXd& x, const Eigen::MatrixXd& phi) {
  const int k = static_cast<int>(phi.rows()) + 1;
  Eigen::VectorXd e(k);
  e(0) = 1.0;
  for (int c = 1; c < k; ++c) e(c) = std::exp(phi.row(c - 1).dot(x));
  return e / e.sum();
}

// Brute force over all k^T latent paths, in long double.
struct Enumeration {
  long double manifest = 0.0L;
  Eigen::MatrixXd state_post;               // T x k
  std::vector<Eigen::MatrixXd> trans_post;  // index t-1 for the step into t
};

inline Enumeration enumerate_paths(const SubjectRecord& s, const ParamSet& p, const ModelSpec& spec) {
  const int k = spec.k;
  const int T = static_cast<int>(s.trials.size());
  Eigen::VectorXd x = s.x;
  if (spec.constraints.covariate_free_init) x = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd pi0 = naive_initial(x, p.chain.phi);
  const auto class_of = lmirt::class_of_regime(spec);

  std::vector<long double> joint_state(static_cast<std::size_t>(T) * k, 0.0L);
  std::vector<long double> joint_trans(static_cast<std::size_t>(std::max(T - 1, 0)) * k * k, 0.0L);
  std::vector<int> path(T, 0);
  long double total = 0.0L;
  long double n_paths = std::pow(static_cast<long double>(k), T);
  for (long long code = 0; code < static_cast<long long>(n_paths); ++code) {
    long long rest = code;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rest % k);
      rest /= k;
    }
    long double w = pi0(path[0]);
    for (int t = 0; t < T; ++t) {
      if (t > 0) w *= p.chain.pi[class_of[s.trials[t].regime]](path[t - 1], path[t]);
      const double lam = naive_lambda(p, spec, s.trials[t].item, path[t]);
      w *= s.trials[t].response ? lam : 1.0 - lam;
    }
    total += w;
    for (int t = 0; t < T; ++t) joint_state[static_cast<std::size_t>(t) * k + path[t]] += w;
    for (int t = 1; t < T; ++t)
      joint_trans[(static_cast<std::size_t>(t - 1) * k + path[t - 1]) * k + path[t]] += w;
  }
  Enumeration out;
  out.manifest = total;
  out.state_post.resize(T, k);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < k; ++c) out.state_post(t, c) = static_cast<double>(joint_state[static_cast<std::size_t>(t) * k + c] / total);
  for (int t = 1; t < T; ++t) {
    Eigen::MatrixXd m(k, k);
    for (int c = 0; c < k; ++c)
      for (int d = 0; d < k; ++d)
        m(c, d) = static_cast<double>(joint_trans[(static_cast<std::size_t>(t - 1) * k + c) * k + d] / total);
    out.trans_post.push_back(m);
  }
  return out;
}

inline Eigen::MatrixXd random_stochastic(int k, lmirt::Rng& rng, double diag_boost = 0.0) {
  Eigen::MatrixXd P(k, k);
  for (int c = 0; c < k; ++c) {
    for (int d = 0; d < k; ++d) P(c, d) = rng.uniform(0.05, 1.0) + (c == d ? diag_boost : 0.0);
    P.row(c) /= P.row(c).sum();
  }
  return P;
}

// Parameters of the right shapes drawn at random for any valid spec.
inline ParamSet random_params(const ModelSpec& spec, lmirt::Rng& rng, double ability_scale = 2.0) {
  ParamSet p = lmirt::zero_params(spec);
  const auto identity = lmirt::identity_class_flags(spec);
  for (std::size_t m = 0; m < p.chain.pi.size(); ++m)
    if (!identity[m]) p.chain.pi[m] = random_stochastic(spec.k, rng, 1.0);
  for (Eigen::Index i = 0; i < p.chain.phi.size(); ++i) p.chain.phi(i) = rng.uniform(-1.0, 1.0);
  for (Eigen::Index i = 0; i < p.item.lambda.size(); ++i) p.item.lambda(i) = rng.uniform(0.05, 0.95);
  for (Eigen::Index i = 0; i < p.support.xi.size(); ++i) p.support.xi(i) = ability_scale * rng.normal();
  for (int j = 0; j < spec.items.J; ++j) {
    if (spec.items.mode == lmirt::ItemMode::Unconstrained || lmirt::is_reference_item(spec, j)) continue;
    p.item.beta(j) = rng.normal();
    if (spec.items.mode == lmirt::ItemMode::TwoPL) p.item.gamma(j) = rng.uniform(0.3, 2.0);
  }
  return p;
}

inline SubjectRecord random_subject(const ModelSpec& spec, int T, lmirt::Rng& rng, const std::string& id = "s") {
  SubjectRecord s;
  s.id = id;
  s.x = Eigen::VectorXd::Ones(spec.p);
  for (int q = 1; q < spec.p; ++q) s.x(q) = rng.uniform(-1.0, 1.0);
  for (int t = 0; t < T; ++t)
    s.trials.push_back({rng.integer(spec.items.J), t == 0 ? -1 : rng.integer(spec.regimes), rng.bernoulli(0.5) ? 1 : 0});
  return s;
}

// Small specs used throughout.
inline ModelSpec unconstrained_spec(int k, int J, int regimes, int p) {
  ModelSpec s;
  s.k = k;
  s.s = 1;
  s.items.J = J;
  s.items.dim_of.assign(J, 0);
  s.items.mode = lmirt::ItemMode::Unconstrained;
  s.regimes = regimes;
  s.constraints = lmirt::ConstraintSet::singletons(regimes);
  s.p = p;
  return s;
}

inline ModelSpec two_dim_spec(lmirt::ItemMode mode, int k, int regimes, int p) {
  ModelSpec s;
  s.k = k;
  s.s = 2;
  s.items.J = 4;
  s.items.dim_of = {0, 0, 1, 1};
  s.items.mode = mode;
  if (mode != lmirt::ItemMode::Unconstrained) s.items.reference_item = {0, 2};
  s.regimes = regimes;
  s.constraints = lmirt::ConstraintSet::singletons(regimes);
  s.p = p;
  return s;
}

// The four paired transition classes of the benchmark design.
inline lmirt::ConstraintSet paired_classes() {
  lmirt::ConstraintSet c;
  c.equality_classes = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  return c;
}

// Equality classes over 8 regimes with the listed 0-based pairs merged.
inline lmirt::ConstraintSet merged(const std::vector<std::pair<int, int>>& pairs) {
  lmirt::ConstraintSet c;
  std::vector<bool> used(8, false);
  std::vector<std::vector<int>> classes;
  for (int r = 0; r < 8; ++r) {
    if (used[r]) continue;
    std::vector<int> cls{r};
    used[r] = true;
    for (const auto& [a, b] : pairs)
      if (a == r && !used[b]) {
        cls.push_back(b);
        used[b] = true;
      }
    classes.push_back(cls);
  }
  c.equality_classes = classes;
  return c;
}

}  // namespace oracle
