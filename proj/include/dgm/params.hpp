#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dgm {

/// Which optimizer treatment a parameter block receives.
enum class ParamGroup {
  SmootherNet,    ///< core, mean head, feature heads (decayed with wd_S)
  SmootherHyper,  ///< log lengthscales, log noise (never decayed)
  DynamicsNet,    ///< dynamics networks and linear factors (decayed with wd_D)
  DynamicsTheta,  ///< known-form vector-field parameters (never decayed)
};

const char* to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct Segment {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  ParamGroup group = ParamGroup::SmootherNet;

  Eigen::Index size() const { return rows * cols; }
  bool operator==(const Segment&) const = default;
};

/// Ordered, disjoint, gap-free description of a flat parameter vector.
class ParamLayout {
 public:
  const Segment& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, ParamGroup group);

  const std::vector<Segment>& segments() const { return segments_; }
  const Segment& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Eigen::Index size() const { return size_; }

  /// 1 for every coordinate in `group`, 0 elsewhere.
  Eigen::VectorXd mask(ParamGroup group) const;

  bool operator==(const ParamLayout& o) const { return segments_ == o.segments_; }

 private:
  std::vector<Segment> segments_;
  std::map<std::string, std::size_t> index_;
  Eigen::Index size_ = 0;
};

/// Named matrices; the structured view of a parameter set.
using StructuredParams = std::map<std::string, Eigen::MatrixXd>;

struct ParamVector {
  Eigen::VectorXd values;
  ParamLayout layout;

  Eigen::Map<const Eigen::MatrixXd> view(const std::string& name) const;
  Eigen::Map<Eigen::MatrixXd> view(const std::string& name);
};

/// Concatenates the blocks of `layout` (column-major) in layout order.
ParamVector flatten_params(const StructuredParams& params, const ParamLayout& layout);
StructuredParams unflatten_params(const ParamVector& p);

}  // namespace dgm
