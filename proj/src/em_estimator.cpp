#include "lmirt/em_estimator.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "lmirt/model_spec.hpp"

namespace lmirt {

std::vector<std::string> check_options(const FitOptions& opts) {
  std::vector<std::string> errors;
  if (opts.n_starts < 1 && opts.warm_starts.empty()) errors.push_back("n_starts must be at least 1");
  if (!(opts.tol > 0.0)) errors.push_back("tol must be positive");
  if (opts.max_iter < 0) errors.push_back("max_iter must be non-negative");
  if (opts.inner_max < 1) errors.push_back("inner_max must be at least 1");
  if (!(opts.cap > 0.0)) errors.push_back("cap must be positive");
  return errors;
}

// ---------------------------------------------------------------------------
// E-step

EStepResult e_step(const Dataset& data, const ParamSet& params, const ModelSpec& spec) {
  const LikelihoodContext ctx(params, spec);
  EStepResult out;
  out.posteriors.subjects.reserve(data.n());
  for (const auto& s : data.subjects) {
    out.posteriors.subjects.push_back(forward_backward(s, ctx));
    out.loglik += out.posteriors.subjects.back().log_manifest;
  }
  return out;
}

namespace {

double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

}  // namespace

double expected_complete_loglik(const PosteriorSet& post, const Dataset& data, const ParamSet& params,
                                const ModelSpec& spec) {
  const LikelihoodContext ctx(params, spec);
  const int k = spec.k;
  double q = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& s = data.subjects[i];
    const auto& fb = post.subjects[i];
    const Eigen::VectorXd pi0 = initial_probs(design_vector(s, spec), params.chain.phi);
    for (int c = 0; c < k; ++c) q += xlogy(fb.state_post(0, c), pi0(c));
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      for (int c = 0; c < k; ++c) {
        const double w = fb.state_post(t, c);
        if (w != 0.0) q += w * ctx.log_emission(s.trials[t], c);
      }
      if (t == 0) continue;
      const auto& P = ctx.transition(s.trials[t].regime);
      for (int c = 0; c < k; ++c)
        for (int d = 0; d < k; ++d) q += xlogy(fb.trans(static_cast<int>(t), c, d), P(c, d));
    }
  }
  return q;
}

// ---------------------------------------------------------------------------
// Transitions: closed-form ratio of expected transition counts.

TransitionUpdate m_step_transitions(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                                    const ChainParams& current) {
  const int k = spec.k;
  const auto class_of = class_of_regime(spec);
  const auto identity = identity_class_flags(spec);
  const std::size_t n_classes = spec.constraints.equality_classes.size();

  std::vector<Eigen::MatrixXd> counts(n_classes, Eigen::MatrixXd::Zero(k, k));
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& trials = data.subjects[i].trials;
    const auto& fb = post.subjects[i];
    for (std::size_t t = 1; t < trials.size(); ++t) {
      Eigen::MatrixXd& m = counts[class_of[trials[t].regime]];
      for (int c = 0; c < k; ++c)
        for (int d = 0; d < k; ++d) m(c, d) += fb.trans(static_cast<int>(t), c, d);
    }
  }

  TransitionUpdate out;
  out.pi = current.pi;
  for (std::size_t m = 0; m < n_classes; ++m) {
    if (identity[m]) continue;
    for (int c = 0; c < k; ++c) {
      const double occupancy = counts[m].row(c).sum();
      if (!(occupancy > 0.0)) {
        out.flags.push_back("transition class " + std::to_string(m + 1) + " row " + std::to_string(c + 1) +
                            ": no expected occupancy, row kept");
        continue;
      }
      out.pi[m].row(c) = counts[m].row(c) / occupancy;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initial probabilities: weighted baseline-category logit by Newton-Raphson.

namespace {

double initial_objective(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, const Eigen::MatrixXd& phi) {
  double f = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const Eigen::VectorXd p = initial_probs(X.row(i).transpose(), phi);
    for (Eigen::Index c = 0; c < W.cols(); ++c) f += xlogy(W(i, c), p(c));
  }
  return f;
}

}  // namespace

InitialUpdate fit_initial_logit(const Eigen::MatrixXd& W, const Eigen::MatrixXd& X, const Eigen::MatrixXd& phi0,
                                const FitOptions& opts) {
  const Eigen::Index k = W.cols();
  const Eigen::Index p = X.cols();
  const Eigen::Index m = (k - 1) * p;
  InitialUpdate out;
  out.phi = phi0;
  if (m == 0) return out;

  auto unpack = [&](const Eigen::VectorXd& theta) {
    Eigen::MatrixXd phi(k - 1, p);
    for (Eigen::Index c = 0; c < k - 1; ++c) phi.row(c) = theta.segment(c * p, p).transpose();
    return phi;
  };
  Eigen::VectorXd theta(m);
  for (Eigen::Index c = 0; c < k - 1; ++c) theta.segment(c * p, p) = phi0.row(c).transpose();

  double f = initial_objective(W, X, out.phi);
  out.converged = false;
  bool halted = false;
  for (int it = 0; it < opts.inner_max; ++it) {
    out.iterations = it + 1;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(m, m);
    const Eigen::MatrixXd phi = unpack(theta);
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      const Eigen::VectorXd pr = initial_probs(x, phi);
      const double total = W.row(i).sum();
      const Eigen::MatrixXd xx = x * x.transpose();
      for (Eigen::Index c = 1; c < k; ++c) {
        grad.segment((c - 1) * p, p) += (W(i, c) - total * pr(c)) * x;
        for (Eigen::Index d = 1; d < k; ++d) {
          const double v = total * pr(c) * ((c == d ? 1.0 : 0.0) - pr(d));
          info.block((c - 1) * p, (d - 1) * p, p, p) += v * xx;
        }
      }
    }
    const double ridge = 1e-10 * std::max(1.0, info.diagonal().maxCoeff());
    info.diagonal().array() += ridge;
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) step = grad;
    // Newton decrement: twice the predicted gain of a full step.
    const double decrement = grad.dot(step);

    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    double fc = f;
    // Inside the quadratic region the objective cannot resolve the gain; take full steps.
    const bool local = decrement <= 1e-9 * (1.0 + std::abs(f));
    for (int h = 0; h < 60; ++h, scale *= 0.5) {
      cand = (theta + scale * step).cwiseMax(-opts.cap).cwiseMin(opts.cap);
      if (local) {
        fc = f;
        accepted = true;
        break;
      }
      fc = initial_objective(W, X, unpack(cand));
      if (fc >= f) {
        accepted = true;
        break;
      }
    }
    if (scale < 1.0) halted = true;
    if (!accepted) {
      out.converged = true;  // no ascent direction left at working precision
      break;
    }
    const double delta = (cand - theta).cwiseAbs().maxCoeff();
    theta = cand;
    f = local ? initial_objective(W, X, unpack(theta)) : fc;
    if (delta < opts.inner_tol || decrement <= 1e-18 * (1.0 + std::abs(f))) {
      out.converged = true;
      break;
    }
  }
  out.phi = unpack(theta);
  if (!out.converged) out.flags.push_back("initial-probability Newton did not converge; step-halved iterate kept");
  if (halted && !out.converged) out.flags.push_back("initial-probability Newton used step halving");
  if ((theta.array().abs() >= opts.cap).any()) out.flags.push_back("initial-probability coefficient at cap");
  return out;
}

InitialUpdate m_step_initial(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                             const Eigen::MatrixXd& phi, const FitOptions& opts) {
  const int k = spec.k;
  const int p = effective_covariates(spec);
  Eigen::MatrixXd W(data.n(), k);
  Eigen::MatrixXd X(data.n(), p);
  for (std::size_t i = 0; i < data.n(); ++i) {
    W.row(i) = post.subjects[i].state_post.row(0);
    X.row(i) = design_vector(data.subjects[i], spec).transpose();
  }
  return fit_initial_logit(W, X, phi, opts);
}

// ---------------------------------------------------------------------------
// Item parameters.

ItemStats item_stats(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec) {
  ItemStats st{Eigen::MatrixXd::Zero(spec.items.J, spec.k), Eigen::MatrixXd::Zero(spec.items.J, spec.k)};
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto& trials = data.subjects[i].trials;
    const auto& w = post.subjects[i].state_post;
    for (std::size_t t = 0; t < trials.size(); ++t) {
      const int j = trials[t].item;
      st.weights.row(j) += w.row(t);
      if (trials[t].response) st.successes.row(j) += w.row(t);
    }
  }
  return st;
}

namespace {

double cell_loglik(double s, double n, double eta) {
  double v = 0.0;
  if (s != 0.0) v += s * log_sigmoid(eta);
  if (n - s != 0.0) v += (n - s) * log_sigmoid(-eta);
  return v;
}

// One weighted binomial cell whose logit is offset + sum coef_i * theta[index_i].
struct Cell {
  double s = 0.0;
  double n = 0.0;
  double offset = 0.0;
  int n_coef = 0;
  std::array<std::pair<int, double>, 2> coef{};
};

double cell_eta(const Cell& cell, const Eigen::VectorXd& theta) {
  double eta = cell.offset;
  for (int a = 0; a < cell.n_coef; ++a) eta += cell.coef[a].second * theta(cell.coef[a].first);
  return eta;
}

double cells_loglik(const std::vector<Cell>& cells, const Eigen::VectorXd& theta) {
  double f = 0.0;
  for (const auto& cell : cells) f += cell_loglik(cell.s, cell.n, cell_eta(cell, theta));
  return f;
}

struct NewtonResult {
  Eigen::VectorXd theta;
  bool converged = false;
};

// Damped Newton ascent on a concave weighted logistic likelihood that is linear
// in theta, with box bounds and step halving so the objective never drops.
NewtonResult logistic_newton(const std::vector<Cell>& cells, Eigen::VectorXd theta, const Eigen::VectorXd& bound,
                             double tol, int max_iter) {
  const Eigen::Index m = theta.size();
  NewtonResult out;
  double f = cells_loglik(cells, theta);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(m, m);
    for (const auto& cell : cells) {
      const double eta = cell_eta(cell, theta);
      const double pr = sigmoid(eta);
      const double r = cell.s - cell.n * pr;
      const double w = cell.n * pr * (1.0 - pr);
      for (int a = 0; a < cell.n_coef; ++a) {
        grad(cell.coef[a].first) += r * cell.coef[a].second;
        for (int b = 0; b < cell.n_coef; ++b)
          info(cell.coef[a].first, cell.coef[b].first) += w * cell.coef[a].second * cell.coef[b].second;
      }
    }
    const double ridge = 1e-10 * std::max(1.0, info.diagonal().maxCoeff());
    info.diagonal().array() += ridge;
    Eigen::VectorXd step = info.ldlt().solve(grad);
    if (!step.allFinite()) step = grad;
    // Newton decrement: twice the predicted gain of a full step.
    const double decrement = grad.dot(step);

    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    double fc = f;
    // Inside the quadratic region the objective cannot resolve the gain; take full steps.
    const bool local = decrement <= 1e-9 * (1.0 + std::abs(f));
    for (int h = 0; h < 60; ++h, scale *= 0.5) {
      cand = (theta + scale * step).cwiseMax(-bound).cwiseMin(bound);
      if (local) {
        fc = f;
        accepted = true;
        break;
      }
      fc = cells_loglik(cells, cand);
      if (fc >= f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double delta = (cand - theta).cwiseAbs().maxCoeff();
    theta = cand;
    f = local ? cells_loglik(cells, theta) : fc;
    if (delta < tol || decrement <= 1e-18 * (1.0 + std::abs(f))) {
      out.converged = true;
      break;
    }
  }
  out.theta = std::move(theta);
  return out;
}

void flag_capped(const Eigen::VectorXd& values, double cap, const std::string& what, std::vector<std::string>& flags) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values(i)) >= cap) {
      flags.push_back("separation: " + what + " at cap");
      return;
    }
}

void update_unconstrained(const ItemStats& st, ItemUpdate& out) {
  constexpr double kFloor = 1e-10;
  bool clamped = false;
  for (Eigen::Index j = 0; j < st.weights.rows(); ++j) {
    for (Eigen::Index c = 0; c < st.weights.cols(); ++c) {
      if (!(st.weights(j, c) > 0.0)) continue;
      double lam = st.successes(j, c) / st.weights(j, c);
      if (lam < kFloor || lam > 1.0 - kFloor) clamped = true;
      out.item.lambda(j, c) = std::clamp(lam, kFloor, 1.0 - kFloor);
    }
  }
  if (clamped) out.flags.push_back("separation: success probability clamped to [1e-10, 1-1e-10]");
}

int xi_index(const ModelSpec& spec, int c, int col) { return c * effective_dims(spec) + col; }

void update_one_pl(const ItemStats& st, const ModelSpec& spec, const FitOptions& opts, ItemUpdate& out) {
  const int k = spec.k;
  const int J = spec.items.J;
  const int s_eff = effective_dims(spec);
  const int n_xi = k * s_eff;

  std::vector<int> beta_index(J, -1);
  int m = n_xi;
  for (int j = 0; j < J; ++j)
    if (!is_reference_item(spec, j)) beta_index[j] = m++;

  Eigen::VectorXd theta(m);
  for (int c = 0; c < k; ++c)
    for (int col = 0; col < s_eff; ++col) theta(xi_index(spec, c, col)) = out.support.xi(c, col);
  for (int j = 0; j < J; ++j)
    if (beta_index[j] >= 0) theta(beta_index[j]) = out.item.beta(j);

  std::vector<Cell> cells;
  for (int j = 0; j < J; ++j) {
    for (int c = 0; c < k; ++c) {
      if (!(st.weights(j, c) > 0.0)) continue;
      Cell cell;
      cell.s = st.successes(j, c);
      cell.n = st.weights(j, c);
      cell.coef[cell.n_coef++] = {xi_index(spec, c, ability_column(spec, j)), 1.0};
      if (beta_index[j] >= 0) cell.coef[cell.n_coef++] = {beta_index[j], -1.0};
      else cell.offset = -out.item.beta(j);
      cells.push_back(cell);
    }
  }
  const Eigen::VectorXd bound = Eigen::VectorXd::Constant(m, opts.cap);
  const auto res = logistic_newton(cells, theta, bound, opts.inner_tol, opts.inner_max);
  if (!res.converged) out.flags.push_back("1PL Newton reached the iteration cap");
  for (int c = 0; c < k; ++c)
    for (int col = 0; col < s_eff; ++col) out.support.xi(c, col) = res.theta(xi_index(spec, c, col));
  for (int j = 0; j < J; ++j)
    if (beta_index[j] >= 0) out.item.beta(j) = res.theta(beta_index[j]);
  flag_capped(res.theta, opts.cap, "1PL parameter", out.flags);
}

double item_q(const ItemStats& st, int j, double gamma, double beta, const Eigen::MatrixXd& xi, int col) {
  double q = 0.0;
  for (Eigen::Index c = 0; c < xi.rows(); ++c) q += cell_loglik(st.successes(j, c), st.weights(j, c), gamma * (xi(c, col) - beta));
  return q;
}

void update_two_pl(const ItemStats& st, const ModelSpec& spec, const FitOptions& opts, ItemUpdate& out) {
  const int k = spec.k;
  const int J = spec.items.J;
  const int s_eff = effective_dims(spec);
  double q_prev = expected_item_loglik(st, out.item, out.support, spec);
  bool newton_capped = false;

  for (int round = 0; round < std::max(1, opts.alternations); ++round) {
    // (beta, gamma) given Xi, item by item, in the concave (a, b) = (gamma, -gamma*beta) chart.
    for (int j = 0; j < J; ++j) {
      if (is_reference_item(spec, j)) continue;
      const int col = ability_column(spec, j);
      std::vector<Cell> cells;
      for (int c = 0; c < k; ++c) {
        if (!(st.weights(j, c) > 0.0)) continue;
        Cell cell;
        cell.s = st.successes(j, c);
        cell.n = st.weights(j, c);
        cell.n_coef = 2;
        cell.coef[0] = {0, out.support.xi(c, col)};
        cell.coef[1] = {1, 1.0};
        cells.push_back(cell);
      }
      if (cells.empty()) continue;
      const double g0 = out.item.gamma(j);
      const double b0 = out.item.beta(j);
      Eigen::Vector2d theta(g0, -g0 * b0);
      const Eigen::Vector2d bound(opts.cap, opts.cap * opts.cap);
      const auto res = logistic_newton(cells, theta, bound, opts.inner_tol, opts.inner_max);
      newton_capped |= !res.converged;
      const double a = res.theta(0);
      if (std::abs(a) < 1e-8) continue;
      const double g1 = std::clamp(a, -opts.cap, opts.cap);
      const double b1 = std::clamp(-res.theta(1) / a, -opts.cap, opts.cap);
      if (item_q(st, j, g1, b1, out.support.xi, col) >= item_q(st, j, g0, b0, out.support.xi, col)) {
        out.item.gamma(j) = g1;
        out.item.beta(j) = b1;
      }
    }

    // Xi given (beta, gamma).
    std::vector<Cell> cells;
    Eigen::VectorXd theta(k * s_eff);
    for (int c = 0; c < k; ++c)
      for (int col = 0; col < s_eff; ++col) theta(xi_index(spec, c, col)) = out.support.xi(c, col);
    for (int j = 0; j < J; ++j) {
      const double g = out.item.gamma(j);
      for (int c = 0; c < k; ++c) {
        if (!(st.weights(j, c) > 0.0)) continue;
        Cell cell;
        cell.s = st.successes(j, c);
        cell.n = st.weights(j, c);
        cell.offset = -g * out.item.beta(j);
        cell.n_coef = 1;
        cell.coef[0] = {xi_index(spec, c, ability_column(spec, j)), g};
        cells.push_back(cell);
      }
    }
    const Eigen::VectorXd bound = Eigen::VectorXd::Constant(theta.size(), opts.cap);
    const auto res = logistic_newton(cells, theta, bound, opts.inner_tol, opts.inner_max);
    newton_capped |= !res.converged;
    for (int c = 0; c < k; ++c)
      for (int col = 0; col < s_eff; ++col) out.support.xi(c, col) = res.theta(xi_index(spec, c, col));

    const double q = expected_item_loglik(st, out.item, out.support, spec);
    const bool done = q - q_prev <= 1e-12 * (1.0 + std::abs(q));
    q_prev = q;
    if (done) break;
  }
  if (newton_capped) out.flags.push_back("2PL Newton reached the iteration cap");
  Eigen::VectorXd all(out.support.xi.size());
  all = Eigen::Map<const Eigen::VectorXd>(out.support.xi.data(), out.support.xi.size());
  flag_capped(all, opts.cap, "ability", out.flags);
  flag_capped(out.item.beta, opts.cap, "difficulty", out.flags);
  flag_capped(out.item.gamma, opts.cap, "discriminant", out.flags);
}

}  // namespace

double expected_item_loglik(const ItemStats& st, const ItemParams& item, const AbilitySupport& support,
                            const ModelSpec& spec) {
  double q = 0.0;
  for (int j = 0; j < spec.items.J; ++j) {
    for (int c = 0; c < spec.k; ++c) {
      const double s = st.successes(j, c);
      const double n = st.weights(j, c);
      if (n == 0.0) continue;
      if (spec.items.mode == ItemMode::Unconstrained) {
        q += xlogy(s, item.lambda(j, c)) + xlogy(n - s, 1.0 - item.lambda(j, c));
      } else {
        q += cell_loglik(s, n, item_logit(j, c, item, support, spec));
      }
    }
  }
  return q;
}

ItemUpdate m_step_items(const ItemStats& stats, const ModelSpec& spec, const ItemParams& item,
                        const AbilitySupport& support, const FitOptions& opts) {
  ItemUpdate out{item, support, {}};
  switch (spec.items.mode) {
    case ItemMode::Unconstrained: update_unconstrained(stats, out); break;
    case ItemMode::OnePL: update_one_pl(stats, spec, opts, out); break;
    case ItemMode::TwoPL: update_two_pl(stats, spec, opts, out); break;
  }
  return out;
}

ItemUpdate m_step_items(const PosteriorSet& post, const Dataset& data, const ModelSpec& spec,
                        const ItemParams& item, const AbilitySupport& support, const FitOptions& opts) {
  return m_step_items(item_stats(post, data, spec), spec, item, support, opts);
}

// ---------------------------------------------------------------------------
// Starting values and the EM loop.

ParamSet random_start(const Dataset& data, const ModelSpec& spec, Rng& rng) {
  const int k = spec.k;
  const int J = spec.items.J;
  ParamSet p = zero_params(spec);

  std::vector<double> grid(k, 0.0);
  for (int c = 0; c < k && k > 1; ++c) grid[c] = -3.0 + 6.0 * c / (k - 1);

  const int s_eff = effective_dims(spec);
  for (int col = 0; col < s_eff; ++col) {
    std::vector<double> g = grid;
    if (col > 0) {
      for (int c = k - 1; c > 0; --c) std::swap(g[c], g[rng.integer(c + 1)]);
    }
    for (int c = 0; c < k; ++c) p.support.xi(c, col) = g[c] + 0.5 * rng.normal();
  }

  const bool two_pl = spec.items.mode == ItemMode::TwoPL;
  for (int j = 0; j < J; ++j) {
    if (spec.items.mode == ItemMode::Unconstrained || is_reference_item(spec, j)) continue;
    p.item.beta(j) = rng.normal();
    if (two_pl) p.item.gamma(j) = rng.uniform(0.5, 1.5);
  }

  if (spec.items.mode == ItemMode::Unconstrained) {
    Eigen::VectorXd hits = Eigen::VectorXd::Zero(J), total = Eigen::VectorXd::Zero(J);
    for (const auto& s : data.subjects)
      for (const auto& t : s.trials) {
        total(t.item) += 1.0;
        hits(t.item) += t.response;
      }
    for (int j = 0; j < J; ++j) {
      const double rate = std::clamp((hits(j) + 0.5) / (total(j) + 1.0), 0.01, 0.99);
      const double base = std::log(rate / (1.0 - rate));
      for (int c = 0; c < k; ++c)
        p.item.lambda(j, c) = std::clamp(sigmoid(base + grid[c] + 0.5 * rng.normal()), 1e-6, 1.0 - 1e-6);
    }
  }

  const auto identity = identity_class_flags(spec);
  for (std::size_t m = 0; m < p.chain.pi.size(); ++m) {
    if (identity[m]) continue;
    Eigen::MatrixXd& P = p.chain.pi[m];
    for (int c = 0; c < k; ++c) {
      for (int d = 0; d < k; ++d) P(c, d) = rng.uniform() + (c == d ? static_cast<double>(k) : 0.0);
      P.row(c) /= P.row(c).sum();
    }
  }
  return p;
}

EmRun run_em(const Dataset& data, const ModelSpec& spec, ParamSet start, const FitOptions& opts) {
  EmRun run;
  run.params = std::move(start);
  std::set<std::string> flags;
  double prev = -std::numeric_limits<double>::infinity();

  for (int it = 0;; ++it) {
    EStepResult e = e_step(data, run.params, spec);
    if (!std::isfinite(e.loglik)) throw DegenerateLikelihood("non-finite log-likelihood");
    run.trace.push_back(e.loglik);
    run.loglik = e.loglik;
    if (it > 0) {
      if (e.loglik < prev - 1e-8) flags.insert("log-likelihood decreased by " + std::to_string(prev - e.loglik));
      if (std::abs(e.loglik - prev) <= opts.tol * std::abs(prev)) {
        run.converged = true;
        break;
      }
    }
    if (it >= opts.max_iter) break;
    prev = e.loglik;

    auto trans = m_step_transitions(e.posteriors, data, spec, run.params.chain);
    auto init = m_step_initial(e.posteriors, data, spec, run.params.chain.phi, opts);
    auto items = m_step_items(e.posteriors, data, spec, run.params.item, run.params.support, opts);
    run.params.chain.pi = std::move(trans.pi);
    run.params.chain.phi = std::move(init.phi);
    run.params.item = std::move(items.item);
    run.params.support = std::move(items.support);
    run.n_iter = it + 1;
    // Empty-row flags are routine for transient states; only keep the others.
    flags.insert(init.flags.begin(), init.flags.end());
    flags.insert(items.flags.begin(), items.flags.end());
  }
  run.warnings.assign(flags.begin(), flags.end());
  return run;
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitOptions& opts) {
  require_valid(spec);
  if (const auto errs = check_options(opts); !errs.empty()) throw std::invalid_argument("invalid fit options: " + errs.front());
  if (const auto errs = check_dataset(data, spec); !errs.empty()) throw std::invalid_argument("data does not conform to model: " + errs.front());
  for (const auto& w : opts.warm_starts)
    if (const auto errs = check_params(w, spec); !errs.empty()) throw std::invalid_argument("invalid warm start: " + errs.front());

  const int n_random = std::max(0, opts.n_starts);
  const int n_total = n_random + static_cast<int>(opts.warm_starts.size());
  std::vector<EmRun> runs(n_total);
  std::vector<std::string> failures(n_total);
  std::vector<bool> ok(n_total, false);

  auto run_one = [&](int idx) {
    try {
      ParamSet start;
      if (idx < n_random) {
        Rng rng(opts.seed, static_cast<std::uint64_t>(idx));
        start = random_start(data, spec, rng);
      } else {
        start = opts.warm_starts[idx - n_random];
      }
      runs[idx] = run_em(data, spec, std::move(start), opts);
      ok[idx] = true;
    } catch (const DegenerateLikelihood& e) {
      failures[idx] = e.what();
    }
  };

  const int workers = std::clamp(opts.workers, 1, std::max(1, n_total));
  if (workers == 1) {
    for (int i = 0; i < n_total; ++i) run_one(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < n_total; i = next++) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  FitResult res;
  res.start_logliks.assign(n_total, -std::numeric_limits<double>::infinity());
  int best = -1;
  for (int i = 0; i < n_total; ++i) {
    if (!ok[i]) continue;
    res.start_logliks[i] = runs[i].loglik;
    if (best < 0 || runs[i].loglik > runs[best].loglik) best = i;
  }
  if (best < 0) throw EstimationFailure("all starts degenerate: " + failures.front());

  EmRun& r = runs[best];
  res.params = canonical_order(r.params, spec);
  res.loglik = r.loglik;
  res.g = count_free_params(spec);
  res.n_iter = r.n_iter;
  res.converged = r.converged;
  res.best_start = best;
  res.trace = std::move(r.trace);
  res.warnings = std::move(r.warnings);
  for (int i = 0; i < n_total; ++i)
    if (!ok[i]) res.warnings.push_back("start " + std::to_string(i + 1) + " degenerate: " + failures[i]);
  if (!res.converged) res.warnings.push_back("best start stopped at max_iter before convergence");
  return res;
}

}  // namespace lmirt
