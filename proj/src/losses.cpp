#include "hsittt/losses.hpp"

#include <cmath>

namespace hsittt {

namespace {

template <typename T>
void require_same_shape(const Volume<T>& a, const Volume<T>& b) {
  if (!a.same_shape(b)) throw ValidationError("loss: shape mismatch");
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

// Visits every forward difference along one axis as (lower, upper) flat
// indices. `stride` is the flat distance between neighbours on that axis.
template <typename Fn>
void for_each_difference(std::size_t bands, std::size_t height,
                         std::size_t width, int axis, Fn&& fn) {
  const std::size_t plane = height * width;
  for (std::size_t s = 0; s < bands; ++s) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t i = s * plane + y * width + x;
        if (axis == 0 && y + 1 < height) fn(i, i + width);
        if (axis == 1 && x + 1 < width) fn(i, i + 1);
        if (axis == 2 && s + 1 < bands) fn(i, i + plane);
      }
    }
  }
}

std::size_t difference_count(std::size_t bands, std::size_t height,
                             std::size_t width, int axis) {
  switch (axis) {
    case 0: return bands * (height - 1) * width;
    case 1: return bands * height * (width - 1);
    default: return (bands - 1) * height * width;
  }
}

}  // namespace

template <typename T>
double l1_loss(const Volume<T>& pred, const Volume<T>& target) {
  require_same_shape(pred, target);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    sum += std::abs(static_cast<double>(pred.data[i]) -
                    static_cast<double>(target.data[i]));
  }
  return sum / static_cast<double>(pred.data.size());
}

template <typename T>
double sstv_loss(const Volume<T>& pred) {
  double total = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n =
        difference_count(pred.bands, pred.height, pred.width, axis);
    if (n == 0) continue;
    double sum = 0.0;
    for_each_difference(pred.bands, pred.height, pred.width, axis,
                        [&](std::size_t lo, std::size_t hi) {
                          sum += std::abs(static_cast<double>(pred.data[hi]) -
                                          static_cast<double>(pred.data[lo]));
                        });
    total += sum / static_cast<double>(n);
  }
  return total;
}

template <typename T>
LossValue total_loss(const Volume<T>& pred, const Volume<T>& target) {
  LossValue v;
  v.l1 = l1_loss(pred, target);
  v.sstv = sstv_loss(pred);
  v.total = v.l1 + v.sstv;
  return v;
}

template <typename T>
LossValue total_loss_backward(const Volume<T>& pred, const Volume<T>& target,
                              Volume<T>& grad, double weight) {
  require_same_shape(pred, target);
  require_same_shape(pred, grad);
  const double inv_n = weight / static_cast<double>(pred.data.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = static_cast<double>(pred.data[i]) -
                     static_cast<double>(target.data[i]);
    grad.data[i] += static_cast<T>(sign(d) * inv_n);
  }
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n =
        difference_count(pred.bands, pred.height, pred.width, axis);
    if (n == 0) continue;
    const double scale = weight / static_cast<double>(n);
    for_each_difference(pred.bands, pred.height, pred.width, axis,
                        [&](std::size_t lo, std::size_t hi) {
                          const double g =
                              sign(static_cast<double>(pred.data[hi]) -
                                   static_cast<double>(pred.data[lo])) *
                              scale;
                          grad.data[hi] += static_cast<T>(g);
                          grad.data[lo] -= static_cast<T>(g);
                        });
  }
  return total_loss(pred, target);
}

template double l1_loss(const Volume<float>&, const Volume<float>&);
template double l1_loss(const Volume<double>&, const Volume<double>&);
template double sstv_loss(const Volume<float>&);
template double sstv_loss(const Volume<double>&);
template LossValue total_loss(const Volume<float>&, const Volume<float>&);
template LossValue total_loss(const Volume<double>&, const Volume<double>&);
template LossValue total_loss_backward(const Volume<float>&,
                                       const Volume<float>&, Volume<float>&,
                                       double);
template LossValue total_loss_backward(const Volume<double>&,
                                       const Volume<double>&, Volume<double>&,
                                       double);

}  // namespace hsittt
