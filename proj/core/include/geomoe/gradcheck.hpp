#pragma once

#include <functional>
#include <span>

#include "geomoe/tensor.hpp"

namespace geomoe {

// Compares the reverse-mode gradient of a scalar function against central
// finite differences. Returns the max over coordinates of
//   |analytic - difference| / (|analytic| + |difference| + 1e-8).
// A NaN on either side yields +infinity so any threshold check fails.
double check_gradients(const std::function<Tensor(const Tensor&)>& f,
                       const Tensor& x, double h = 1e-5);

// Same oracle for a closure over several leaf tensors (model parameters).
// `f` must rebuild its graph from the current leaf values on every call.
// max_coords_per_leaf > 0 probes an evenly strided coordinate subset of each
// leaf (large parameter tensors would otherwise dominate the runtime).
double check_gradients_multi(const std::function<Tensor()>& f,
                             std::span<Tensor> leaves, double h = 1e-5,
                             std::int64_t max_coords_per_leaf = -1);

}  // namespace geomoe
