#include "lmirt/response_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lmirt {

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

void check_indices(int j, int c, const ModelSpec& spec) {
  if (j < 0 || j >= spec.items.J) throw std::out_of_range("item type " + std::to_string(j + 1) + " out of range");
  if (c < 0 || c >= spec.k) throw std::out_of_range("state " + std::to_string(c + 1) + " out of range");
}

}  // namespace

double item_logit(int j, int c, const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec) {
  check_indices(j, c, spec);
  const double xi = support.xi(c, ability_column(spec, j));
  const double gamma = spec.items.mode == ItemMode::TwoPL ? item.gamma(j) : 1.0;
  return gamma * (xi - item.beta(j));
}

double success_prob(int j, int c, const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec) {
  if (spec.items.mode == ItemMode::Unconstrained) {
    check_indices(j, c, spec);
    return item.lambda(j, c);
  }
  return sigmoid(item_logit(j, c, item, support, spec));
}

LogProbPair log_success_prob_from_logit(double logit) { return {log_sigmoid(logit), log_sigmoid(-logit)}; }

LogProbPair log_success_prob(int j, int c, const ItemParams& item, const AbilitySupport& support,
                             const ModelSpec& spec) {
  if (spec.items.mode == ItemMode::Unconstrained) {
    check_indices(j, c, spec);
    const double lam = item.lambda(j, c);
    return {std::log(lam), std::log1p(-lam)};
  }
  return log_success_prob_from_logit(item_logit(j, c, item, support, spec));
}

double bernoulli_prob(int y, double lambda) { return y == 1 ? lambda : 1.0 - lambda; }

EmissionTable emission_table(const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec) {
  EmissionTable table{Eigen::MatrixXd(spec.items.J, spec.k), Eigen::MatrixXd(spec.items.J, spec.k)};
  for (int j = 0; j < spec.items.J; ++j) {
    for (int c = 0; c < spec.k; ++c) {
      const auto lp = log_success_prob(j, c, item, support, spec);
      table.log_success(j, c) = lp.log_success;
      table.log_failure(j, c) = lp.log_failure;
    }
  }
  return table;
}

Eigen::MatrixXd success_grid(const ItemParams& item, const AbilitySupport& support, const ModelSpec& spec) {
  Eigen::MatrixXd grid(spec.items.J, spec.k);
  for (int j = 0; j < spec.items.J; ++j)
    for (int c = 0; c < spec.k; ++c) grid(j, c) = success_prob(j, c, item, support, spec);
  return grid;
}

}  // namespace lmirt
