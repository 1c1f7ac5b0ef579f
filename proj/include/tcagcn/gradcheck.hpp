#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tcagcn/tensor.hpp"

namespace tcagcn {

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-8);

/// Max relative error between the tape gradient of scalar f at x and central
/// differences. `x` must be a leaf with requires_grad set; its data is
/// perturbed in place and restored.
double gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

struct GroupError {
    std::string group;
    std::size_t count = 0;
    double max_rel_error = 0.0;
};

/// Checks every coordinate of every named parameter against central
/// differences of `loss`. Parameters sharing `group_of(name)` are reported as
/// one row, in first-appearance order.
std::vector<GroupError> gradcheck_params(const std::function<Tensor()>& loss,
                                         const NamedTensors& params,
                                         const std::function<std::string(const std::string&)>& group_of,
                                         double eps = 1e-5);

}  // namespace tcagcn
