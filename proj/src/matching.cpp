#include "dgm/matching.hpp"

#include <cmath>
#include <stdexcept>

#include "dgm/errors.hpp"
#include "dgm/model.hpp"

namespace dgm {

double w2_gaussian_1d(double mu_a, double s_a, double mu_b, double s_b) {
  if (s_a < 0 || s_b < 0) throw std::invalid_argument("standard deviations must be non-negative");
  return (mu_a - mu_b) * (mu_a - mu_b) + (s_a - s_b) * (s_a - s_b);
}

double dynamics_loss(const GaussianMarginalSet& p_s, const GaussianMarginalSet& p_d) {
  if (p_s.mean.rows() != p_d.mean.rows() || p_s.mean.cols() != p_d.mean.cols() || p_s.std.rows() != p_s.mean.rows() ||
      p_s.std.cols() != p_s.mean.cols() || p_d.std.rows() != p_d.mean.rows() || p_d.std.cols() != p_d.mean.cols()) {
    throw ShapeError("marginal sets are indexed differently");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < p_s.mean.rows(); ++i)
    for (Eigen::Index k = 0; k < p_s.mean.cols(); ++k)
      total += w2_gaussian_1d(p_s.mean(i, k), p_s.std(i, k), p_d.mean(i, k), p_d.std(i, k));
  return total;
}

const char* to_string(Divergence d) {
  switch (d) {
    case Divergence::W2: return "w2";
    case Divergence::KLForward: return "kl_forward";
    case Divergence::KLBackward: return "kl_backward";
    case Divergence::KLSymmetric: return "kl_symmetric";
  }
  return "w2";
}

Divergence divergence_from_string(const std::string& s) {
  for (Divergence d : {Divergence::W2, Divergence::KLForward, Divergence::KLBackward, Divergence::KLSymmetric}) {
    if (s == to_string(d)) return d;
  }
  throw std::invalid_argument("unknown divergence '" + s + "'");
}

namespace {
// KL(N(ma, sa^2) || N(mb, sb^2)), summed.
ad::Var gaussian_kl(const ad::Var& ma, const ad::Var& sa, const ad::Var& mb, const ad::Var& sb) {
  const ad::Var sb2 = ad::square(sb);
  const ad::Var ratio = ad::divide(ad::square(sa) + ad::square(ma - mb), sb2);
  return ad::sum(ad::log(sb) - ad::log(sa) + ad::scale(ad::add_scalar(ratio, -1.0), 0.5));
}
}  // namespace

ad::Var marginal_divergence(const ad::Var& mu_s, const ad::Var& sd_s, const ad::Var& mu_d, const ad::Var& sd_d,
                            Divergence div) {
  switch (div) {
    case Divergence::W2: return ad::sum(ad::square(mu_s - mu_d) + ad::square(sd_s - sd_d));
    case Divergence::KLForward: return gaussian_kl(mu_s, sd_s, mu_d, sd_d);
    case Divergence::KLBackward: return gaussian_kl(mu_d, sd_d, mu_s, sd_s);
    case Divergence::KLSymmetric: return gaussian_kl(mu_s, sd_s, mu_d, sd_d) + gaussian_kl(mu_d, sd_d, mu_s, sd_s);
  }
  throw std::logic_error("unreachable divergence");
}

const char* to_string(DecayMode d) { return d == DecayMode::L2 ? "l2" : "decoupled"; }

DecayMode decay_mode_from_string(const std::string& s) {
  if (s == "decoupled") return DecayMode::Decoupled;
  if (s == "l2") return DecayMode::L2;
  throw std::invalid_argument("unknown decay mode '" + s + "'");
}

double weight_decay_penalty(const ParamVector& p, double wd_s, double wd_d) {
  double s = 0.0, d = 0.0;
  for (const Segment& seg : p.layout.segments()) {
    const double sq = p.values.segment(seg.offset, seg.size()).squaredNorm();
    if (seg.group == ParamGroup::SmootherNet) s += sq;
    if (seg.group == ParamGroup::DynamicsNet) d += sq;
  }
  return wd_s * s + wd_d * d;
}

LossEval total_loss(const Model& m, const ad::Var& params, const ObservationSet& obs,
                    const Eigen::MatrixXd& support_points, const LossWeights& w) {
  if (w.lambda < 0) throw std::invalid_argument("lambda must be non-negative");
  ad::Tape& t = *params.tape();
  const SmootherGp gp(m.smoother(), params, m.layout(), obs);
  const ad::Var data = gp.data_nll();
  ad::Var objective = data;
  LossEval out;
  out.breakdown.data_term = data.scalar();
  out.breakdown.lambda_effective = w.lambda;

  if (w.lambda > 0) {
    const SmootherGp::SupportPosterior sp = gp.at_support(support_points);
    std::vector<ad::Var> mu_s, var_s;
    for (const auto& d : sp.derivative) {
      mu_s.push_back(d.mean);
      var_s.push_back(d.var);
    }
    const Dynamics::Output dyn = m.dynamics().forward(params, m.layout(), sp.state_mean);
    const ad::Var sd_s = ad::sqrt_floor(ad::hcat(var_s), kStdFloor * kStdFloor);
    const ad::Var sd_d = ad::sqrt_floor(dyn.var, kStdFloor * kStdFloor);
    const ad::Var match = marginal_divergence(ad::hcat(mu_s), sd_s, dyn.mean, sd_d, w.divergence);
    out.breakdown.wasserstein_term = match.scalar();
    objective = objective + ad::scale(match, w.lambda);
  }

  const ParamVector pv{params.value(), m.layout()};
  out.breakdown.weight_decay_term = weight_decay_penalty(pv, w.wd_s, w.wd_d);
  if (w.decay == DecayMode::L2 && (w.wd_s > 0 || w.wd_d > 0)) {
    const Eigen::MatrixXd coeff =
        w.wd_s * m.layout().mask(ParamGroup::SmootherNet) + w.wd_d * m.layout().mask(ParamGroup::DynamicsNet);
    objective = objective + ad::sum(ad::hadamard(t.constant(coeff), ad::square(params)));
  }
  out.breakdown.total = out.breakdown.data_term + w.lambda * out.breakdown.wasserstein_term +
                        out.breakdown.weight_decay_term;
  out.objective = objective;
  return out;
}

}  // namespace dgm
