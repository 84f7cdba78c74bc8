#include "dgm/params.hpp"

#include "dgm/errors.hpp"

namespace dgm {

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::SmootherNet: return "smoother_net";
    case ParamGroup::SmootherHyper: return "smoother_hyper";
    case ParamGroup::DynamicsNet: return "dynamics_net";
    case ParamGroup::DynamicsTheta: return "dynamics_theta";
  }
  return "?";
}

ParamGroup param_group_from_string(const std::string& s) {
  if (s == "smoother_net") return ParamGroup::SmootherNet;
  if (s == "smoother_hyper") return ParamGroup::SmootherHyper;
  if (s == "dynamics_net") return ParamGroup::DynamicsNet;
  if (s == "dynamics_theta") return ParamGroup::DynamicsTheta;
  throw std::invalid_argument("unknown parameter group '" + s + "'");
}

const Segment& ParamLayout::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter segment '" + name + "'");
  if (rows < 0 || cols < 0) throw ShapeError("negative segment shape for '" + name + "'");
  segments_.push_back(Segment{name, size_, rows, cols, group});
  index_[name] = segments_.size() - 1;
  size_ += rows * cols;
  return segments_.back();
}

const Segment& ParamLayout::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter segment '" + name + "'");
  return segments_[it->second];
}

Eigen::VectorXd ParamLayout::mask(ParamGroup group) const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(size_);
  for (const auto& s : segments_) {
    if (s.group == group) m.segment(s.offset, s.size()).setOnes();
  }
  return m;
}

Eigen::Map<const Eigen::MatrixXd> ParamVector::view(const std::string& name) const {
  const Segment& s = layout.at(name);
  return {values.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamVector::view(const std::string& name) {
  const Segment& s = layout.at(name);
  return {values.data() + s.offset, s.rows, s.cols};
}

ParamVector flatten_params(const StructuredParams& params, const ParamLayout& layout) {
  ParamVector out{Eigen::VectorXd::Zero(layout.size()), layout};
  for (const auto& s : layout.segments()) {
    auto it = params.find(s.name);
    if (it == params.end()) throw std::invalid_argument("missing parameter block '" + s.name + "'");
    if (it->second.rows() != s.rows || it->second.cols() != s.cols) {
      throw ShapeError("parameter block '" + s.name + "' has the wrong shape");
    }
    out.view(s.name) = it->second;
  }
  return out;
}

StructuredParams unflatten_params(const ParamVector& p) {
  StructuredParams out;
  for (const auto& s : p.layout.segments()) out[s.name] = p.view(s.name);
  return out;
}

}  // namespace dgm
