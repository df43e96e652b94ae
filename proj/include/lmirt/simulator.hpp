#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lmirt/data.hpp"
#include "lmirt/params.hpp"

namespace lmirt {

struct TrialSlot {
  int item = 0;
  int regime = -1;  // -1 for the first occasion
};

enum class ArmAssignment { Alternate, RandomHalves };

struct CovariateSpec {
  std::string name;
  double lo = 0.0;  // drawn uniformly on [lo, hi]
  double hi = 1.0;
};

struct DesignPlan {
  int n = 0;
  std::vector<CovariateSpec> covariates;
  std::vector<std::vector<TrialSlot>> arms;  // one ordered trial template per arm
  ArmAssignment assignment = ArmAssignment::RandomHalves;
};

std::vector<std::string> check_plan(const DesignPlan& plan, const ModelSpec& spec);

struct SimulatedDataset {
  Dataset data;
  std::vector<std::vector<int>> paths;  // latent state per subject and occasion
  std::vector<int> arm;                 // empty when responses were simulated on a given design
};

// Each subject draws from its own stream of (seed, subject index), so output is
// independent of generation order.
SimulatedDataset simulate(const ParamSet& params, const ModelSpec& spec, const DesignPlan& plan, std::uint64_t seed);

// New responses and latent paths on an existing design (items, regimes, covariates).
SimulatedDataset simulate_responses(const Dataset& design, const ParamSet& params, const ModelSpec& spec,
                                    std::uint64_t seed);

struct Fixture {
  ModelSpec spec;
  ParamSet params;
  DesignPlan plan;
  std::string provenance;
};

// Three-state, two-dimensional 2PL benchmark with four tied transition
// classes over eight regimes and a two-arm, three-period 132-trial design.
Fixture paper_fixture(int n = 115);

// Intercepts of the initial-state logit whose probabilities, averaged over a
// covariate uniform on [lo, hi], equal target; slopes are held fixed.
Eigen::VectorXd calibrate_intercepts(const Eigen::VectorXd& slopes, const Eigen::VectorXd& target, double lo,
                                     double hi);

}  // namespace lmirt
