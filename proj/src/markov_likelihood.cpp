#include "lmirt/markov_likelihood.hpp"

#include <cmath>
#include <limits>

namespace lmirt {

Eigen::VectorXd initial_probs(const Eigen::VectorXd& x, const Eigen::MatrixXd& phi) {
  const Eigen::Index k = phi.rows() + 1;
  Eigen::VectorXd eta(k);
  eta(0) = 0.0;
  if (k > 1) eta.tail(k - 1) = phi * x;
  const double m = eta.maxCoeff();
  Eigen::VectorXd out = (eta.array() - m).exp();
  return out / out.sum();
}

LikelihoodContext::LikelihoodContext(const ParamSet& params, const ModelSpec& spec)
    : params_(params), spec_(spec), emission_(emission_table(params.item, params.support, spec)),
      class_of_(class_of_regime(spec)) {}

Eigen::MatrixXd ForwardBackwardResult::transition(int t) const {
  const int kk = k();
  Eigen::MatrixXd m(kk, kk);
  for (int c = 0; c < kk; ++c)
    for (int d = 0; d < kk; ++d) m(c, d) = trans(t, c, d);
  return m;
}

namespace {

// Emission vector of occasion t rescaled by its maximum; returns the log of that maximum.
double scaled_emission(const LikelihoodContext& ctx, const Trial& trial, Eigen::VectorXd& out) {
  const int k = ctx.spec().k;
  double m = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c) {
    out(c) = ctx.log_emission(trial, c);
    m = std::max(m, out(c));
  }
  if (!std::isfinite(m)) return m;
  for (int c = 0; c < k; ++c) out(c) = std::exp(out(c) - m);
  return m;
}

[[noreturn]] void degenerate(const SubjectRecord& s, std::size_t t) {
  throw DegenerateLikelihood("subject " + s.id + ": zero probability at occasion " + std::to_string(t + 1));
}

// Forward pass that also keeps the rescaled emissions for the backward pass.
ForwardResult run_forward(const SubjectRecord& subject, const LikelihoodContext& ctx, Eigen::MatrixXd* emissions) {
  const int k = ctx.spec().k;
  const auto T = subject.trials.size();
  ForwardResult res;
  res.alpha.resize(T, k);
  res.log_scale.resize(T);
  if (emissions) emissions->resize(T, k);

  Eigen::VectorXd e(k);
  Eigen::VectorXd step(k);
  const Eigen::VectorXd pi0 = initial_probs(design_vector(subject, ctx.spec()), ctx.params().chain.phi);

  for (std::size_t t = 0; t < T; ++t) {
    const Trial& trial = subject.trials[t];
    const double m = scaled_emission(ctx, trial, e);
    if (!std::isfinite(m)) degenerate(subject, t);
    if (t == 0) {
      step = pi0.cwiseProduct(e);
    } else {
      const Eigen::MatrixXd& P = ctx.transition(trial.regime);
      for (int d = 0; d < k; ++d) {
        double acc = 0.0;
        for (int c = 0; c < k; ++c) acc += res.alpha(t - 1, c) * P(c, d);
        step(d) = acc * e(d);
      }
    }
    const double scale = step.sum();
    if (!(scale > 0.0) || !std::isfinite(scale)) degenerate(subject, t);
    res.alpha.row(t) = step / scale;
    res.log_scale(t) = std::log(scale) + m;
    if (emissions) emissions->row(t) = e / scale;
  }
  res.log_manifest = res.log_scale.sum();
  return res;
}

}  // namespace

ForwardResult forward(const SubjectRecord& subject, const LikelihoodContext& ctx) {
  return run_forward(subject, ctx, nullptr);
}

ForwardResult forward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec) {
  const LikelihoodContext ctx(params, spec);
  return forward(subject, ctx);
}

ForwardBackwardResult forward_backward(const SubjectRecord& subject, const LikelihoodContext& ctx) {
  const int k = ctx.spec().k;
  const auto T = static_cast<Eigen::Index>(subject.trials.size());
  // em(t, c) = emission(t, c) / (max emission at t * step normaliser at t)
  Eigen::MatrixXd em;
  const ForwardResult fw = run_forward(subject, ctx, &em);

  ForwardBackwardResult out;
  out.log_manifest = fw.log_manifest;
  out.state_post.resize(T, k);
  out.trans_post.resize(std::max<Eigen::Index>(T - 1, 0), k * k);

  Eigen::VectorXd beta = Eigen::VectorXd::Ones(k);
  Eigen::VectorXd next(k);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    Eigen::RowVectorXd w = fw.alpha.row(t).cwiseProduct(beta.transpose());
    out.state_post.row(t) = w / w.sum();
    if (t == 0) break;

    const Eigen::MatrixXd& P = ctx.transition(subject.trials[t].regime);
    const Eigen::VectorXd eb = em.row(t).transpose().cwiseProduct(beta);
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      const double a = fw.alpha(t - 1, c);
      for (int d = 0; d < k; ++d) {
        const double v = a * P(c, d) * eb(d);
        out.trans_post(t - 1, c * k + d) = v;
        total += v;
      }
    }
    out.trans_post.row(t - 1) /= total;

    next = P * eb;
    beta = next;
  }
  return out;
}

ForwardBackwardResult forward_backward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec) {
  const LikelihoodContext ctx(params, spec);
  return forward_backward(subject, ctx);
}

double log_likelihood(const Dataset& data, const ParamSet& params, const ModelSpec& spec) {
  const LikelihoodContext ctx(params, spec);
  double total = 0.0;
  for (const auto& s : data.subjects) total += forward(s, ctx).log_manifest;
  return total;
}

}  // namespace lmirt
