#pragma once

#include <span>
#include <vector>

#include "knowdial/tensor.hpp"

namespace knowdial {

/// First/second moment buffers for one fixed parameter list. The step
/// counter advances by one per adam_step call.
struct AdamState {
  explicit AdamState(std::span<const Tensor> params, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8);

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
  double beta1;
  double beta2;
  double eps;
};

// In-place Adam update with bias correction, reading each parameter's
// accumulated gradient.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

// Cosine interpolation from lr_init (epoch 0) down to lr_final (epoch ==
// total_epochs).
double cosine_anneal_lr(int epoch, int total_epochs, double lr_init,
                        double lr_final);

}  // namespace knowdial
