#include "lmirt/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "lmirt/simulator.hpp"

namespace lmirt {

double bic(double loglik, int g, std::size_t n) { return -2.0 * loglik + g * std::log(static_cast<double>(n)); }

double bic_star(double loglik, int g, std::size_t total_trials) {
  return -2.0 * loglik + g * std::log(static_cast<double>(total_trials));
}

std::vector<ComparisonRow> model_table(const std::vector<LabeledFit>& fits, std::size_t n, std::size_t total_trials) {
  std::vector<ComparisonRow> rows;
  for (const auto& f : fits) {
    ComparisonRow r;
    r.label = f.label;
    r.loglik = f.loglik;
    r.g = f.g;
    r.bic = bic(f.loglik, f.g, n);
    r.bic_star = bic_star(f.loglik, f.g, total_trials);
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.g < b.g; });
  if (rows.empty()) return rows;

  auto argmin = [&rows](auto value, auto in_scope) {
    int best = -1;
    for (int i = 0; i < static_cast<int>(rows.size()); ++i)
      if (in_scope(rows[i]) && (best < 0 || value(rows[i]) < value(rows[best]))) best = i;
    return best;
  };
  auto by_bic = [](const ComparisonRow& r) { return r.bic; };
  auto by_star = [](const ComparisonRow& r) { return r.bic_star; };
  auto all = [](const ComparisonRow&) { return true; };
  rows[argmin(by_bic, all)].bic_min = true;
  rows[argmin(by_star, all)].bic_star_min = true;

  std::vector<int> classes;
  for (const auto& r : rows)
    if (classes.empty() || classes.back() != r.g) classes.push_back(r.g);
  for (int g : classes) {
    auto same_g = [g](const ComparisonRow& r) { return r.g == g; };
    rows[argmin(by_bic, same_g)].bic_min_in_class = true;
    rows[argmin(by_star, same_g)].bic_star_min_in_class = true;
  }
  return rows;
}

double chi_squared_upper(double x, int df) {
  if (df <= 0) return x > 0.0 ? 0.0 : 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

namespace {

int mode_rank(ItemMode m) {
  switch (m) {
    case ItemMode::OnePL: return 0;
    case ItemMode::TwoPL: return 1;
    case ItemMode::Unconstrained: return 2;
  }
  return 0;
}

// Index of the class of `classes` containing regime r, -1 if none.
int class_containing(const std::vector<std::vector<int>>& classes, int r) {
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (std::find(classes[c].begin(), classes[c].end(), r) != classes[c].end()) return static_cast<int>(c);
  return -1;
}

}  // namespace

std::vector<std::string> nesting_violations(const ModelSpec& null_spec, const ModelSpec& alt_spec) {
  std::vector<std::string> v;
  if (null_spec.k != alt_spec.k) v.push_back("state counts differ");
  // An unconstrained table nests any item parameterisation on the same items.
  const bool same_items = alt_spec.items.mode == ItemMode::Unconstrained
                              ? null_spec.items.J == alt_spec.items.J
                              : null_spec.s == alt_spec.s && null_spec.items.J == alt_spec.items.J &&
                                    null_spec.items.dim_of == alt_spec.items.dim_of;
  if (!same_items) v.push_back("item banks differ");
  if (null_spec.regimes != alt_spec.regimes) v.push_back("regime counts differ");
  if (null_spec.p != alt_spec.p) v.push_back("covariate vectors differ");
  if (!v.empty()) return v;

  if (mode_rank(null_spec.items.mode) > mode_rank(alt_spec.items.mode))
    v.push_back("null item parameterisation (" + to_string(null_spec.items.mode) +
                ") is richer than the alternative's (" + to_string(alt_spec.items.mode) + ")");
  if (alt_spec.items.mode != ItemMode::Unconstrained && alt_spec.constraints.unidimensional &&
      !null_spec.constraints.unidimensional)
    v.push_back("alternative is unidimensional but the null is not");
  if (alt_spec.constraints.covariate_free_init && !null_spec.constraints.covariate_free_init)
    v.push_back("alternative drops covariates that the null keeps");

  const auto& null_classes = null_spec.constraints.equality_classes;
  const auto null_identity = identity_class_flags(null_spec);
  const auto alt_identity = identity_class_flags(alt_spec);
  const auto& alt_classes = alt_spec.constraints.equality_classes;
  for (std::size_t m = 0; m < alt_classes.size(); ++m) {
    const int target = class_containing(null_classes, alt_classes[m].front());
    for (int r : alt_classes[m]) {
      if (class_containing(null_classes, r) != target) {
        v.push_back("alternative ties regime " + std::to_string(r + 1) + " to a class the null splits");
        break;
      }
    }
    if (target >= 0 && alt_identity[m] && !null_identity[target])
      v.push_back("alternative fixes a transition class to the identity that the null leaves free");
  }
  return v;
}

bool is_boundary_hypothesis(const ModelSpec& null_spec, const ModelSpec& alt_spec) {
  const auto null_identity = identity_class_flags(null_spec);
  const auto alt_identity = identity_class_flags(alt_spec);
  const auto& alt_classes = alt_spec.constraints.equality_classes;
  for (std::size_t m = 0; m < alt_classes.size(); ++m) {
    const int target = class_containing(null_spec.constraints.equality_classes, alt_classes[m].front());
    if (target >= 0 && null_identity[target] && !alt_identity[m]) return true;
  }
  return false;
}

ParamSet embed_params(const ParamSet& null_params, const ModelSpec& null_spec, const ModelSpec& alt_spec) {
  if (const auto v = nesting_violations(null_spec, alt_spec); !v.empty()) throw NestingError("not nested: " + v.front());
  ParamSet out = zero_params(alt_spec);

  const auto null_class = class_of_regime(null_spec);
  const auto& alt_classes = alt_spec.constraints.equality_classes;
  for (std::size_t m = 0; m < alt_classes.size(); ++m) out.chain.pi[m] = null_params.chain.pi[null_class[alt_classes[m].front()]];

  if (null_spec.constraints.covariate_free_init && !alt_spec.constraints.covariate_free_init) {
    out.chain.phi.setZero();
    out.chain.phi.col(0) = null_params.chain.phi.col(0);
  } else {
    out.chain.phi = null_params.chain.phi;
  }

  if (alt_spec.items.mode == ItemMode::Unconstrained) {
    out.item.lambda = success_grid(null_params.item, null_params.support, null_spec);
    return out;
  }

  const bool null_two_pl = null_spec.items.mode == ItemMode::TwoPL;
  auto gamma_of = [&](int j) { return null_two_pl ? null_params.item.gamma(j) : 1.0; };
  const auto alt_refs = effective_reference_items(alt_spec);
  for (int d = 0; d < effective_dims(alt_spec); ++d) {
    const int r = alt_refs[d];
    const double gr = gamma_of(r);
    if (gr == 0.0) throw NestingError("cannot re-anchor on a reference item with zero discrimination");
    const int col = ability_column(null_spec, r);
    for (int c = 0; c < alt_spec.k; ++c) out.support.xi(c, d) = gr * (null_params.support.xi(c, col) - null_params.item.beta(r));
  }
  for (int j = 0; j < alt_spec.items.J; ++j) {
    const int r = alt_refs[ability_column(alt_spec, j)];
    const double gr = gamma_of(r);
    out.item.gamma(j) = alt_spec.items.mode == ItemMode::TwoPL ? gamma_of(j) / gr : 1.0;
    out.item.beta(j) = gr * (null_params.item.beta(j) - null_params.item.beta(r));
  }
  return out;
}

FitResult fit_alternative(const Dataset& data, const ModelSpec& alt_spec, const FitOptions& opts,
                          const FitResult& null_fit, const ModelSpec& null_spec) {
  FitOptions o = opts;
  o.warm_starts.push_back(embed_params(null_fit.params, null_spec, alt_spec));
  return fit(data, alt_spec, o);
}

LRTestResult lr_test(const Dataset& data, const FitResult& null_fit, const ModelSpec& null_spec,
                     const FitResult& alt_fit, const ModelSpec& alt_spec, bool boundary,
                     const BootstrapOptions& bootstrap) {
  if (const auto v = nesting_violations(null_spec, alt_spec); !v.empty()) throw NestingError("models are not nested: " + v.front());

  constexpr double kSlack = 1e-6;
  LRTestResult res;
  res.boundary = boundary;
  res.D = -2.0 * (null_fit.loglik - alt_fit.loglik);
  if (res.D < -kSlack)
    throw EstimationFailure("negative LR statistic " + std::to_string(res.D) +
                            ": the alternative fit is below the null, multi-start search inadequate");
  if (res.D < 0.0) {
    res.warnings.push_back("LR statistic " + std::to_string(res.D) + " clamped to 0");
    res.D = 0.0;
  }
  res.df = alt_fit.g - null_fit.g;
  res.p_value_chisq = chi_squared_upper(res.D, res.df);

  if (!boundary || bootstrap.replicates <= 0) return res;

  Rng seeds(bootstrap.seed, 0xb005);
  int exceed = 0;
  int valid = 0;
  for (int m = 0; m < bootstrap.replicates; ++m) {
    const std::uint64_t seed = seeds.next_u64();
    try {
      const auto sim = simulate_responses(data, null_fit.params, null_spec, seed);
      FitOptions o = bootstrap.fit;
      o.seed = seed;
      o.warm_starts.clear();
      const FitResult f0 = fit(sim.data, null_spec, o);
      const FitResult f1 = fit_alternative(sim.data, alt_spec, o, f0, null_spec);
      const double d = std::max(0.0, -2.0 * (f0.loglik - f1.loglik));
      res.bootstrap_stats.push_back(d);
      ++valid;
      if (d >= res.D - 1e-9) ++exceed;
    } catch (const EstimationFailure& e) {
      res.warnings.push_back("bootstrap replicate " + std::to_string(m + 1) + " failed: " + e.what());
    }
  }
  if (valid > 0) res.p_value_bootstrap = static_cast<double>(exceed) / valid;
  return res;
}

}  // namespace lmirt
