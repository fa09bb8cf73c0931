#pragma once

#include <functional>

#include "minikd/tensor.hpp"

namespace minikd {

/// Compares the reverse-mode gradient of a scalar-valued function against
/// central finite differences, elementwise over `at`. Returns the maximum
/// relative error, with the denominator floored at 1e-8.
///
/// `f` must be pure: it is evaluated once under a tape for the autodiff
/// gradient and then 2*numel times at perturbed points.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                         double step);

/// Same comparison for a function of several parameters (weights of a
/// model). `f` recomputes the loss from the current parameter values;
/// parameters are perturbed in place and restored.
double finite_diff_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                                double step);

}  // namespace minikd
