#include "lmirt/simulator.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lmirt/markov_likelihood.hpp"
#include "lmirt/random.hpp"

namespace lmirt {

std::vector<std::string> check_plan(const DesignPlan& plan, const ModelSpec& spec) {
  std::vector<std::string> errors;
  if (plan.n < 0) errors.push_back("subject count must be non-negative");
  if (plan.arms.empty()) errors.push_back("at least one arm template is required");
  if (static_cast<int>(plan.covariates.size()) + 1 != spec.p)
    errors.push_back("plan generates " + std::to_string(plan.covariates.size() + 1) +
                     " covariates (with intercept), model expects " + std::to_string(spec.p));
  for (std::size_t a = 0; a < plan.arms.size(); ++a) {
    const auto& arm = plan.arms[a];
    const std::string where = "arm " + std::to_string(a + 1) + ": ";
    if (arm.empty()) errors.push_back(where + "empty template");
    for (std::size_t t = 0; t < arm.size(); ++t) {
      if (arm[t].item < 0 || arm[t].item >= spec.items.J)
        errors.push_back(where + "slot " + std::to_string(t + 1) + " item out of range");
      if (t > 0 && (arm[t].regime < 0 || arm[t].regime >= spec.regimes))
        errors.push_back(where + "slot " + std::to_string(t + 1) + " regime out of range");
    }
  }
  return errors;
}

namespace {

// Draws latent path and responses for one subject whose design is already set.
void draw_subject(SubjectRecord& s, std::vector<int>& path, const LikelihoodContext& ctx, Rng& rng) {
  const ModelSpec& spec = ctx.spec();
  const ParamSet& params = ctx.params();
  path.assign(s.trials.size(), 0);
  const Eigen::VectorXd pi0 = initial_probs(design_vector(s, spec), params.chain.phi);
  for (std::size_t t = 0; t < s.trials.size(); ++t) {
    Trial& tr = s.trials[t];
    const int c = t == 0 ? rng.categorical(pi0) : rng.categorical(ctx.transition(tr.regime).row(path[t - 1]));
    path[t] = c;
    const double lam = std::exp(ctx.log_emission(Trial{tr.item, tr.regime, 1}, c));
    tr.response = rng.bernoulli(lam) ? 1 : 0;
  }
}

}  // namespace

SimulatedDataset simulate(const ParamSet& params, const ModelSpec& spec, const DesignPlan& plan, std::uint64_t seed) {
  require_valid(spec);
  if (const auto errs = check_plan(plan, spec); !errs.empty()) throw std::invalid_argument("design plan: " + errs.front());
  if (const auto errs = check_params(params, spec); !errs.empty()) throw std::invalid_argument("parameters: " + errs.front());

  const int n_arms = static_cast<int>(plan.arms.size());
  SimulatedDataset out;
  out.arm.resize(plan.n);
  if (plan.assignment == ArmAssignment::Alternate) {
    for (int i = 0; i < plan.n; ++i) out.arm[i] = i % n_arms;
  } else {
    std::vector<int> order(plan.n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, 0);
    for (int i = plan.n - 1; i > 0; --i) std::swap(order[i], order[rng.integer(i + 1)]);
    for (int pos = 0; pos < plan.n; ++pos) out.arm[order[pos]] = pos % n_arms;
  }

  for (const auto& cov : plan.covariates) out.data.covariate_names.push_back(cov.name);
  const LikelihoodContext ctx(params, spec);
  out.data.subjects.resize(plan.n);
  out.paths.resize(plan.n);
  const int width = static_cast<int>(std::to_string(std::max(plan.n, 1)).size());
  for (int i = 0; i < plan.n; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    SubjectRecord& s = out.data.subjects[i];
    std::string id = std::to_string(i + 1);
    s.id = "s" + std::string(width - id.size(), '0') + id;
    s.x.resize(spec.p);
    s.x(0) = 1.0;
    for (std::size_t q = 0; q < plan.covariates.size(); ++q)
      s.x(q + 1) = rng.uniform(plan.covariates[q].lo, plan.covariates[q].hi);
    for (const auto& slot : plan.arms[out.arm[i]]) s.trials.push_back(Trial{slot.item, slot.regime, 0});
    s.trials.front().regime = -1;
    draw_subject(s, out.paths[i], ctx, rng);
  }
  return out;
}

SimulatedDataset simulate_responses(const Dataset& design, const ParamSet& params, const ModelSpec& spec,
                                    std::uint64_t seed) {
  const LikelihoodContext ctx(params, spec);
  SimulatedDataset out;
  out.data = design;
  out.paths.resize(design.n());
  for (std::size_t i = 0; i < design.n(); ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i) + 1);
    draw_subject(out.data.subjects[i], out.paths[i], ctx, rng);
  }
  return out;
}

Eigen::VectorXd calibrate_intercepts(const Eigen::VectorXd& slopes, const Eigen::VectorXd& target, double lo,
                                     double hi) {
  const Eigen::Index k = target.size();
  constexpr int kNodes = 4000;
  auto moments = [&](const Eigen::VectorXd& a, Eigen::MatrixXd* jac) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(k);
    if (jac) jac->setZero(k - 1, k - 1);
    Eigen::MatrixXd phi(k - 1, 2);
    phi.col(0) = a;
    phi.col(1) = slopes;
    for (int q = 0; q < kNodes; ++q) {
      const double age = lo + (hi - lo) * (q + 0.5) / kNodes;
      const Eigen::VectorXd pr = initial_probs(Eigen::Vector2d(1.0, age), phi);
      mean += pr / kNodes;
      if (jac)
        for (Eigen::Index c = 1; c < k; ++c)
          for (Eigen::Index d = 1; d < k; ++d) (*jac)(c - 1, d - 1) += pr(c) * ((c == d) - pr(d)) / kNodes;
    }
    return Eigen::VectorXd(target.tail(k - 1) - mean.tail(k - 1));
  };
  // Start from the logit that is exact at the midpoint covariate.
  Eigen::VectorXd a(k - 1);
  for (Eigen::Index c = 1; c < k; ++c) a(c - 1) = std::log(target(c) / target(0)) - slopes(c - 1) * 0.5 * (lo + hi);
  Eigen::MatrixXd jac;
  Eigen::VectorXd resid = moments(a, &jac);
  for (int it = 0; it < 200 && resid.cwiseAbs().maxCoeff() >= 1e-13; ++it) {
    const Eigen::VectorXd step = jac.fullPivLu().solve(resid);
    double scale = 1.0;
    for (int h = 0; h < 40; ++h, scale *= 0.5) {
      const Eigen::VectorXd cand = a + scale * step;
      Eigen::MatrixXd cand_jac;
      const Eigen::VectorXd r = moments(cand, &cand_jac);
      if (r.allFinite() && r.norm() < resid.norm()) {
        a = cand;
        resid = r;
        jac = cand_jac;
        break;
      }
    }
    if (scale < 1e-11) break;
  }
  if (!a.allFinite() || resid.cwiseAbs().maxCoeff() > 1e-8)
    throw std::runtime_error("intercept calibration did not converge");
  return a;
}

namespace {

enum Task { DayNight = 0, AbstractPattern = 1, DccsFaceDown = 2, DccsFaceUp = 3 };

// One arm: three periods of [IC 16][AF 6] | week | [IC 16][AF 6]. The step into
// the first AF trial of a block still uses the IC regime, the first trial of the
// second session uses the week regime and each new period the six-month regime.
std::vector<TrialSlot> arm_template(int ic_first, int af_first, int ic_second, int af_second, int regime_ic,
                                    int regime_af, int regime_week, int regime_period) {
  std::vector<TrialSlot> slots;
  for (int period = 0; period < 3; ++period) {
    for (int session = 0; session < 2; ++session) {
      const int ic = session == 0 ? ic_first : ic_second;
      const int af = session == 0 ? af_first : af_second;
      for (int t = 0; t < 16; ++t) {
        int regime = regime_ic;
        if (t == 0) {
          if (session == 1) regime = regime_week;
          else regime = period == 0 ? -1 : regime_period;
        }
        slots.push_back({ic, regime});
      }
      for (int t = 0; t < 6; ++t) slots.push_back({af, t == 0 ? regime_ic : regime_af});
    }
  }
  return slots;
}

Eigen::MatrixXd row_normalised(Eigen::MatrixXd m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) m.row(r) /= m.row(r).sum();
  return m;
}

}  // namespace

Fixture paper_fixture(int n) {
  Fixture fx;
  ModelSpec& spec = fx.spec;
  spec.k = 3;
  spec.s = 2;
  spec.items.J = 4;
  spec.items.dim_of = {0, 0, 1, 1};
  spec.items.mode = ItemMode::TwoPL;
  spec.items.reference_item = {DayNight, DccsFaceDown};
  spec.regimes = 8;
  spec.constraints.equality_classes = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  spec.p = 2;

  ParamSet& p = fx.params;
  p.support.xi.resize(3, 2);
  p.support.xi << -5.454, 0.145,
                   0.040, -35.145,
                   5.050, 6.176;
  p.item.gamma = Eigen::Vector4d(1.000, 0.610, 1.000, 2.744);
  p.item.beta = Eigen::Vector4d(0.000, -4.880, 0.000, 0.107);
  p.item.lambda = Eigen::MatrixXd::Constant(4, 3, 0.5);

  Eigen::Matrix3d within_ic, within_af, week, six_months;
  within_ic << 0.9809, 0.0191, 0.0000,
               0.0228, 0.9146, 0.0626,
               0.0114, 0.0372, 0.9514;
  within_af << 0.5883, 0.2211, 0.1905,
               0.0049, 0.9951, 0.0000,
               0.0226, 0.0022, 0.9753;
  week << 0.0000, 0.5763, 0.4237,
          0.0609, 0.0000, 0.9391,
          0.0000, 0.0000, 1.0000;
  six_months << 0.3002, 0.6997, 0.0000,
                0.1795, 0.1165, 0.7040,
                0.1221, 0.1362, 0.7416;
  p.chain.pi = {row_normalised(within_ic), row_normalised(within_af), row_normalised(week),
                row_normalised(six_months)};

  constexpr double kAgeLo = 34.0;
  constexpr double kAgeHi = 55.0;
  const Eigen::Vector2d slopes(0.111, 0.361);
  const Eigen::Vector3d average(0.261, 0.360, 0.379);
  const Eigen::VectorXd intercepts = calibrate_intercepts(slopes, average, kAgeLo, kAgeHi);
  p.chain.phi.resize(2, 2);
  p.chain.phi.col(0) = intercepts;
  p.chain.phi.col(1) = slopes;

  DesignPlan& plan = fx.plan;
  plan.n = n;
  plan.covariates = {{"age", kAgeLo, kAgeHi}};
  plan.assignment = ArmAssignment::RandomHalves;
  // Harder tasks first (regimes 1,3,5,7) and easier tasks first (2,4,6,8).
  plan.arms.push_back(arm_template(DayNight, DccsFaceDown, AbstractPattern, DccsFaceUp, 0, 2, 4, 6));
  plan.arms.push_back(arm_template(AbstractPattern, DccsFaceUp, DayNight, DccsFaceDown, 1, 3, 5, 7));

  fx.provenance =
      "abilities, item parameters, transition matrices and age slopes are fixed benchmark values (matrix "
      "rows renormalised to sum to one); intercepts solved so that initial-state "
      "probabilities averaged over age ~ U[34,55] months equal 0.261/0.360/0.379; every subject completes "
      "all 132 trials (no dropout).";
  return fx;
}

}  // namespace lmirt
