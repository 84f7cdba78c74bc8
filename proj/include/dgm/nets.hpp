#pragma once

#include <string>
#include <vector>

#include "dgm/autodiff.hpp"
#include "dgm/params.hpp"
#include "dgm/rng.hpp"

namespace dgm {

enum class OutputActivation { Identity, Sigmoid, SoftplusSquare };

/// Dense network: hidden layers use the logistic sigmoid, the last layer
/// uses `output`. Weights are stored as (fan_in x fan_out) so that a batch
/// of row inputs maps as X W + b.
struct MlpSpec {
  int input = 0;
  std::vector<int> widths;
  OutputActivation output = OutputActivation::Identity;

  void check() const;
};

/// Registers "<prefix>.W<i>" and "<prefix>.b<i>" for every layer.
void add_mlp_segments(ParamLayout& layout, const std::string& prefix, const MlpSpec& spec, ParamGroup group);

/// Glorot-uniform weights, zero biases.
void init_mlp(ParamVector& p, const std::string& prefix, const MlpSpec& spec, Rng& rng);
void init_glorot(Eigen::Map<Eigen::MatrixXd> w, Rng& rng);

/// Reads a named segment of the flat parameter node.
ad::Var segment(const ad::Var& params, const ParamLayout& layout, const std::string& name);

/// Row-batched forward pass: input is n x spec.input.
ad::Var mlp_forward(const ad::Var& params, const ParamLayout& layout, const std::string& prefix, const MlpSpec& spec,
                    const ad::Var& input);

/// A batch of values with their derivative along one input direction.
struct Tangent {
  ad::Var value;
  ad::Var dot;
};

/// Forward pass propagating the input tangent `input_dot` alongside the value.
/// The output activation must be identity or sigmoid.
Tangent mlp_forward_tangent(const ad::Var& params, const ParamLayout& layout, const std::string& prefix,
                            const MlpSpec& spec, const ad::Var& input, const ad::Var& input_dot);

/// Plain-matrix evaluation for inspection and tests.
Eigen::MatrixXd mlp_forward(const ParamVector& p, const std::string& prefix, const MlpSpec& spec,
                            const Eigen::MatrixXd& input);

}  // namespace dgm
