#pragma once

#include "hsittt/cube.hpp"

namespace hsittt {

struct LossValue {
  double total = 0.0;
  double l1 = 0.0;
  double sstv = 0.0;
};

// Mean absolute difference over all entries.
template <typename T>
double l1_loss(const Volume<T>& pred, const Volume<T>& target);

// Spatial-spectral total variation of one image: the sum of the mean absolute
// forward differences along height, width and bands. Each directional term is
// averaged over its own element count (a side of length 1 contributes 0); the
// borders are open, no wraparound.
template <typename T>
double sstv_loss(const Volume<T>& pred);

// l1_loss(pred, target) + sstv_loss(pred).
template <typename T>
LossValue total_loss(const Volume<T>& pred, const Volume<T>& target);

// Same value as total_loss; additionally accumulates weight * dL/dpred into
// grad, which must have pred's shape. The subgradient of |x| at 0 is taken
// as 0.
template <typename T>
LossValue total_loss_backward(const Volume<T>& pred, const Volume<T>& target,
                              Volume<T>& grad, double weight = 1.0);

}  // namespace hsittt
