#include "knowdial/optim.hpp"

#include <cmath>
#include <numbers>

namespace knowdial {

AdamState::AdamState(std::span<const Tensor> params, double beta1,
                     double beta2, double eps)
    : beta1(beta1), beta2(beta2), eps(eps) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    v.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (lr <= 0.0) {
    throw NumericsError("adam: learning rate " + std::to_string(lr) +
                        " is not positive");
  }
  if (params.size() != state.m.size()) {
    throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    if (state.m[p].size() != param.values().size()) {
      throw ShapeError("adam: moment buffer size " +
                       std::to_string(state.m[p].size()) +
                       " does not match parameter " +
                       shape_str(param.shape()));
    }
    const std::vector<double>& g = param.grad();
    for (size_t i = 0; i < g.size(); ++i) {
      state.m[p][i] = state.beta1 * state.m[p][i] + (1.0 - state.beta1) * g[i];
      state.v[p][i] =
          state.beta2 * state.v[p][i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = state.m[p][i] / bc1;
      const double vhat = state.v[p][i] / bc2;
      param.values()[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double cosine_anneal_lr(int epoch, int total_epochs, double lr_init,
                        double lr_final) {
  if (total_epochs <= 0 || epoch < 0 || epoch > total_epochs) {
    throw NumericsError("cosine_anneal_lr: epoch " + std::to_string(epoch) +
                        " outside [0, " + std::to_string(total_epochs) + "]");
  }
  if (lr_final <= 0.0 || lr_init < lr_final) {
    throw NumericsError("cosine_anneal_lr: require lr_init >= lr_final > 0");
  }
  const double t = static_cast<double>(epoch) / total_epochs;
  return lr_final +
         (lr_init - lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace knowdial
