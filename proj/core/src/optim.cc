#include "sdlab/optim.h"

#include <cmath>
#include <sstream>

#include "sdlab/errors.h"

namespace sdlab {

template <typename Real>
void adamw_step(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state,
                const AdamHyper& hp, std::span<const IndexRange> frozen) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    std::ostringstream os;
    os << "adamw_step: params " << n << ", grads " << grads.size() << ", state "
       << state.m.size() << "/" << state.v.size();
    throw StructuralError(os.str());
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      std::ostringstream os;
      os << "non-finite gradient at index " << i << " on optimizer step " << state.t + 1;
      throw NumericError(os.str());
    }
  }
  state.t += 1;
  const Real b1 = static_cast<Real>(hp.beta1);
  const Real b2 = static_cast<Real>(hp.beta2);
  const Real lr = static_cast<Real>(hp.lr);
  const Real wd = static_cast<Real>(hp.weight_decay);
  const Real eps = static_cast<Real>(hp.eps);
  const Real bc1 = static_cast<Real>(1.0 - std::pow(hp.beta1, static_cast<double>(state.t)));
  const Real bc2 = static_cast<Real>(1.0 - std::pow(hp.beta2, static_cast<double>(state.t)));

  auto update = [&](std::size_t i) {
    state.m[i] = b1 * state.m[i] + (Real(1) - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (Real(1) - b2) * grads[i] * grads[i];
    const Real m_hat = state.m[i] / bc1;
    const Real v_hat = state.v[i] / bc2;
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * params[i]);
  };
  auto decay_only = [&](std::size_t i) { params[i] -= lr * (wd * params[i]); };

  std::size_t i = 0;
  for (const IndexRange& r : frozen) {
    for (; i < r.begin; ++i) update(i);
    for (; i < r.end; ++i) decay_only(i);
  }
  for (; i < n; ++i) update(i);
}

template <typename Real>
std::vector<Real> nesterov_direction(std::span<const Real> delta, NesterovState<Real>& state,
                                     const NesterovHyper& hp) {
  if (state.v.size() != delta.size()) {
    std::ostringstream os;
    os << "nesterov: momentum has " << state.v.size() << " values, delta " << delta.size();
    throw StructuralError(os.str());
  }
  const Real mu = static_cast<Real>(hp.momentum);
  std::vector<Real> dir(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    state.v[i] = mu * state.v[i] + delta[i];
    dir[i] = delta[i] + mu * state.v[i];
  }
  return dir;
}

template <typename Real>
void apply_outer_direction(std::span<const Real> base, std::span<const Real> direction,
                           const NesterovHyper& hp, std::span<Real> out) {
  if (base.size() != direction.size() || out.size() != base.size())
    throw StructuralError("outer step: length mismatch");
  const Real lr = static_cast<Real>(hp.lr);
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] - lr * direction[i];
}

template <typename Real>
std::vector<Real> nesterov_step(std::span<const Real> base, std::span<const Real> delta,
                                NesterovState<Real>& state, const NesterovHyper& hp) {
  if (base.size() != delta.size()) throw StructuralError("nesterov: base/delta length mismatch");
  const std::vector<Real> dir = nesterov_direction(delta, state, hp);
  std::vector<Real> out(base.size());
  apply_outer_direction<Real>(base, dir, hp, out);
  return out;
}

#define SDLAB_INSTANTIATE(Real)                                                             \
  template void adamw_step(std::span<Real>, std::span<const Real>, AdamState<Real>&,        \
                           const AdamHyper&, std::span<const IndexRange>);                  \
  template std::vector<Real> nesterov_direction(std::span<const Real>, NesterovState<Real>&, \
                                                const NesterovHyper&);                      \
  template void apply_outer_direction(std::span<const Real>, std::span<const Real>,         \
                                      const NesterovHyper&, std::span<Real>);               \
  template std::vector<Real> nesterov_step(std::span<const Real>, std::span<const Real>,    \
                                           NesterovState<Real>&, const NesterovHyper&);

SDLAB_INSTANTIATE(float)
SDLAB_INSTANTIATE(double)
#undef SDLAB_INSTANTIATE

}  // namespace sdlab
