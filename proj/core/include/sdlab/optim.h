#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sdlab/param_space.h"

namespace sdlab {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename Real>
struct AdamState {
  std::vector<Real> m;
  std::vector<Real> v;
  long t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, Real(0)), v(n, Real(0)) {}
};

// One decoupled-weight-decay Adam step:
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
// Indices covered by `frozen` keep their moments and receive weight decay
// only. Throws NumericError on a non-finite gradient.
template <typename Real>
void adamw_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
                const AdamHyper& hp, std::span<const IndexRange> frozen = {});

struct NesterovHyper {
  double lr = 0.4;
  double momentum = 0.9;
};

template <typename Real>
struct NesterovState {
  std::vector<Real> v;

  NesterovState() = default;
  explicit NesterovState(std::size_t n) : v(n, Real(0)) {}
};

// Advances the momentum with the averaged outer gradient and returns the
// update direction u = delta + mu * v'.  v' = mu * v + delta.
template <typename Real>
std::vector<Real> nesterov_direction(std::span<const Real> delta, NesterovState<Real>& state,
                                     const NesterovHyper& hp);

// out = base - lr * direction.
template <typename Real>
void apply_outer_direction(std::span<const Real> base, std::span<const Real> direction,
                           const NesterovHyper& hp, std::span<Real> out);

// Convenience: momentum step plus application to a single base.
template <typename Real>
std::vector<Real> nesterov_step(std::span<const Real> base, std::span<const Real> delta,
                                NesterovState<Real>& state, const NesterovHyper& hp);

}  // namespace sdlab
