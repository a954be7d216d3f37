#include "shrinkhs/model.hpp"

#include <algorithm>
#include <sstream>

namespace shrinkhs {

const char* to_string(Variant v) { return v == Variant::kPInc ? "pinc" : "pinc2"; }

Variant variant_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "pinc") return Variant::kPInc;
  if (lower == "pinc2") return Variant::kPInc2;
  throw InvalidInput("unknown variant '" + name + "' (expected pinc or pinc2)");
}

Hyperparams Hyperparams::initial(int num_groups, Variant variant) {
  Hyperparams h;
  h.group_shape = Vector::Constant(num_groups, 1e-3);
  h.group_rate = Vector::Constant(num_groups, 1e-3);
  h.error_shape = 1e-3;
  h.error_rate = 1e-3;
  h.variant = variant;
  h.pooled_tau_sq = Vector::Constant(num_groups, 0.05);
  return h;
}

std::optional<TaskError> validate_task(const RegressionTask& task, int num_groups) {
  std::ostringstream msg;
  msg << "task " << task.index << ": ";
  if (task.y.size() == 0) {
    msg << "empty response";
    return TaskError{TaskErrorKind::kEmptyDesign, msg.str()};
  }
  if (task.x.cols() == 0) {
    msg << "empty design (no columns)";
    return TaskError{TaskErrorKind::kEmptyDesign, msg.str()};
  }
  if (task.x.rows() != task.y.size()) {
    msg << "design has " << task.x.rows() << " rows but response has " << task.y.size();
    return TaskError{TaskErrorKind::kDimensionMismatch, msg.str()};
  }
  if (static_cast<Eigen::Index>(task.groups.size()) != task.x.cols()) {
    msg << "design has " << task.x.cols() << " columns but " << task.groups.size()
        << " group labels";
    return TaskError{TaskErrorKind::kDimensionMismatch, msg.str()};
  }
  for (std::size_t t = 0; t < task.groups.size(); ++t) {
    const int g = task.groups[t];
    if (g < 1 || (num_groups > 0 && g > num_groups)) {
      msg << "group label " << g << " at column " << t + 1 << " outside 1.."
          << (num_groups > 0 ? std::to_string(num_groups) : std::string("G"));
      return TaskError{TaskErrorKind::kLabelOutOfRange, msg.str()};
    }
  }
  if (!task.y.allFinite() || !task.x.allFinite()) {
    msg << "non-finite value in data";
    return TaskError{TaskErrorKind::kNonFinite, msg.str()};
  }
  return std::nullopt;
}

void require_valid(const RegressionTask& task, int num_groups) {
  if (auto err = validate_task(task, num_groups)) throw InvalidInput(err->message);
}

std::vector<int> group_counts(const RegressionTask& task, int num_groups) {
  std::vector<int> counts(num_groups, 0);
  for (int g : task.groups) ++counts.at(g - 1);
  return counts;
}

int infer_num_groups(const std::vector<RegressionTask>& tasks) {
  int g = 0;
  for (const auto& task : tasks)
    for (int label : task.groups) g = std::max(g, label);
  return g;
}

RegressionTask restrict_columns(const RegressionTask& task, const std::vector<int>& keep) {
  RegressionTask out;
  out.index = task.index;
  out.y = task.y;
  out.x.resize(task.x.rows(), static_cast<Eigen::Index>(keep.size()));
  out.groups.reserve(keep.size());
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.x.col(static_cast<Eigen::Index>(j)) = task.x.col(keep[j]);
    out.groups.push_back(task.groups[keep[j]]);
  }
  return out;
}

}  // namespace shrinkhs
