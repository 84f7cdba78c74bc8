#include "dgm/nets.hpp"

#include <cmath>
#include <stdexcept>

#include "dgm/errors.hpp"

namespace dgm {

namespace {
std::string weight_name(const std::string& prefix, std::size_t i) { return prefix + ".W" + std::to_string(i); }
std::string bias_name(const std::string& prefix, std::size_t i) { return prefix + ".b" + std::to_string(i); }
}  // namespace

void MlpSpec::check() const {
  if (input < 1 || widths.empty()) throw std::invalid_argument("MLP needs an input width and at least one layer");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("MLP layer widths must be >= 1");
}

void add_mlp_segments(ParamLayout& layout, const std::string& prefix, const MlpSpec& spec, ParamGroup group) {
  spec.check();
  int fan_in = spec.input;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    layout.add(weight_name(prefix, i), fan_in, spec.widths[i], group);
    layout.add(bias_name(prefix, i), 1, spec.widths[i], group);
    fan_in = spec.widths[i];
  }
}

void init_glorot(Eigen::Map<Eigen::MatrixXd> w, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform(-bound, bound);
}

void init_mlp(ParamVector& p, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    init_glorot(p.view(weight_name(prefix, i)), rng);
    p.view(bias_name(prefix, i)).setZero();
  }
}

ad::Var segment(const ad::Var& params, const ParamLayout& layout, const std::string& name) {
  const Segment& s = layout.at(name);
  return ad::reshape_segment(params, s.offset, s.rows, s.cols);
}

ad::Var mlp_forward(const ad::Var& params, const ParamLayout& layout, const std::string& prefix, const MlpSpec& spec,
                    const ad::Var& input) {
  spec.check();
  if (input.cols() != spec.input) throw ShapeError("MLP input width mismatch for '" + prefix + "'");
  ad::Var h = input;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    ad::Var pre = ad::matmul(h, segment(params, layout, weight_name(prefix, i))) +
                  segment(params, layout, bias_name(prefix, i));
    const bool last = i + 1 == spec.widths.size();
    if (!last || spec.output == OutputActivation::Sigmoid) {
      h = ad::sigmoid(pre);
    } else {
      h = spec.output == OutputActivation::SoftplusSquare ? ad::softplus_square(pre) : pre;
    }
  }
  return h;
}

Tangent mlp_forward_tangent(const ad::Var& params, const ParamLayout& layout, const std::string& prefix,
                            const MlpSpec& spec, const ad::Var& input, const ad::Var& input_dot) {
  spec.check();
  if (spec.output == OutputActivation::SoftplusSquare) {
    throw std::invalid_argument("tangent pass supports identity or sigmoid outputs");
  }
  if (input.cols() != spec.input || input_dot.cols() != spec.input) {
    throw ShapeError("MLP input width mismatch for '" + prefix + "'");
  }
  ad::Var h = input;
  ad::Var hd = input_dot;
  for (std::size_t i = 0; i < spec.widths.size(); ++i) {
    ad::Var w = segment(params, layout, weight_name(prefix, i));
    ad::Var pre = ad::matmul(h, w) + segment(params, layout, bias_name(prefix, i));
    ad::Var pre_dot = ad::matmul(hd, w);
    if (i + 1 < spec.widths.size() || spec.output == OutputActivation::Sigmoid) {
      h = ad::sigmoid(pre);
      // sigmoid' = s (1 - s)
      hd = ad::hadamard(ad::hadamard(h, ad::add_scalar(-h, 1.0)), pre_dot);
    } else {
      h = pre;
      hd = pre_dot;
    }
  }
  return {h, hd};
}

Eigen::MatrixXd mlp_forward(const ParamVector& p, const std::string& prefix, const MlpSpec& spec,
                            const Eigen::MatrixXd& input) {
  ad::Tape tape;
  ad::Var params = tape.constant(p.values);
  return mlp_forward(params, p.layout, prefix, spec, tape.constant(input)).value();
}

}  // namespace dgm
