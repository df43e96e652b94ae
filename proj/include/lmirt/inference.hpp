#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmirt/em_estimator.hpp"

namespace lmirt {

double bic(double loglik, int g, std::size_t n);
double bic_star(double loglik, int g, std::size_t total_trials);

struct ComparisonRow {
  std::string label;
  double loglik = 0.0;
  int g = 0;
  double bic = 0.0;
  double bic_star = 0.0;
  // Minimum among rows sharing the same g.
  bool bic_min_in_class = false;
  bool bic_star_min_in_class = false;
  // Minimum over the whole table.
  bool bic_min = false;
  bool bic_star_min = false;
};

struct LabeledFit {
  std::string label;
  double loglik = 0.0;
  int g = 0;
};

// Rows sorted by g (stable), indices computed and minima marked. Ties go to
// the earlier row so exactly one row is marked per column and class.
std::vector<ComparisonRow> model_table(const std::vector<LabeledFit>& fits, std::size_t n, std::size_t total_trials);

// Upper tail of the chi-squared distribution; df = 0 is a point mass at 0.
double chi_squared_upper(double x, int df);

// Reasons why null_spec is not a sub-model of alt_spec (empty when nested).
std::vector<std::string> nesting_violations(const ModelSpec& null_spec, const ModelSpec& alt_spec);

// True when the null fixes a transition class to the identity that is free
// under the alternative (parameters on the boundary).
bool is_boundary_hypothesis(const ModelSpec& null_spec, const ModelSpec& alt_spec);

// Express a null-model parameter point in the alternative's parameterisation
// with the same likelihood. Requires nesting_violations(...) to be empty.
ParamSet embed_params(const ParamSet& null_params, const ModelSpec& null_spec, const ModelSpec& alt_spec);

struct BootstrapOptions {
  int replicates = 0;  // 0 disables the bootstrap
  std::uint64_t seed = 1;
  FitOptions fit;      // used for every replicate refit
};

struct LRTestResult {
  double D = 0.0;
  int df = 0;
  double p_value_chisq = 1.0;
  std::optional<double> p_value_bootstrap;
  bool boundary = false;
  std::vector<double> bootstrap_stats;
  std::vector<std::string> warnings;
};

class NestingError : public std::invalid_argument {
 public:
  explicit NestingError(const std::string& what) : std::invalid_argument(what) {}
};

// D = -2 (loglik_null - loglik_alt), df = g_alt - g_null. With boundary set and
// replicates > 0, the p-value also comes from a parametric bootstrap that
// simulates from the null fit on the observed design and refits both models.
LRTestResult lr_test(const Dataset& data, const FitResult& null_fit, const ModelSpec& null_spec,
                     const FitResult& alt_fit, const ModelSpec& alt_spec, bool boundary,
                     const BootstrapOptions& bootstrap = {});

// Fits the alternative with the embedded null estimate as an extra start, so
// its log-likelihood is never below the null's.
FitResult fit_alternative(const Dataset& data, const ModelSpec& alt_spec, const FitOptions& opts,
                          const FitResult& null_fit, const ModelSpec& null_spec);

}  // namespace lmirt
