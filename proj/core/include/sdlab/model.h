#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdlab/param_space.h"

namespace sdlab {

struct ModelDims {
  std::size_t d_in = 8;
  std::size_t d_hidden = 32;
  std::size_t d_out = 4;
  std::size_t num_blocks = 12;

  bool operator==(const ModelDims&) const = default;
};

// Residual tanh network:
//   h_0 = W_in x,  h_l = h_{l-1} + tanh(W_l h_{l-1} + b_l),  y = W_out h_L.
// Layout: [w_in, block_0 .. block_{L-1}, w_out]; each block stores W_l
// (row-major, d_hidden x d_hidden) followed by b_l.
class ResidualNet {
 public:
  explicit ResidualNet(ModelDims dims);

  const ModelDims& dims() const { return dims_; }
  const BlockLayout& layout() const { return layout_; }
  std::size_t num_params() const { return layout_.total(); }

  std::size_t w_in_block() const { return 0; }
  std::size_t w_out_block() const { return dims_.num_blocks + 1; }
  // Layout indices of the residual blocks, in depth order.
  std::vector<std::size_t> sync_blocks() const;

  static std::size_t param_count(const ModelDims& d) {
    return d.d_hidden * d.d_in + d.num_blocks * (d.d_hidden * d.d_hidden + d.d_hidden) +
           d.d_out * d.d_hidden;
  }

  // Gaussian init with std 1/sqrt(fan_in) for every weight and bias.
  template <typename Real>
  ParamVector<Real> init(std::uint64_t seed) const;

 private:
  ModelDims dims_;
  BlockLayout layout_;
};

// Row-major inputs (size x d_in) and targets (size x d_out).
template <typename Real>
struct Batch {
  std::size_t size = 0;
  std::vector<Real> x;
  std::vector<Real> y;
};

// Network outputs for every row of x (size x d_out).
template <typename Real>
std::vector<Real> predict(const ResidualNet& net, const ParamVector<Real>& params,
                          std::span<const Real> x, std::size_t rows);

// Mean squared error over all rows and outputs.
template <typename Real>
double forward_loss(const ResidualNet& net, const ParamVector<Real>& params,
                    const Batch<Real>& batch);

// Writes d(loss)/d(params) into grad (overwritten) and returns the loss.
template <typename Real>
double loss_and_gradient(const ResidualNet& net, const ParamVector<Real>& params,
                         const Batch<Real>& batch, std::span<Real> grad);

template <typename Real>
ParamVector<Real> backward(const ResidualNet& net, const ParamVector<Real>& params,
                           const Batch<Real>& batch);

// Teacher-student regression. Batches are pure functions of
// (base seed, replica, step); replica shards draw from disjoint streams.
template <typename Real>
class SyntheticTask {
 public:
  SyntheticTask(const ResidualNet& net, std::uint64_t seed, std::size_t batch_size);

  const ParamVector<Real>& teacher() const { return teacher_; }
  std::size_t batch_size() const { return batch_size_; }
  std::uint64_t shard_seed(std::size_t replica) const;

  Batch<Real> batch(std::size_t replica, long step) const;
  Batch<Real> batch_from_shard(std::uint64_t shard_seed, long step) const;
  // Held-out set drawn from its own seed domain.
  Batch<Real> eval_set(std::size_t size) const;
  Batch<Real> make_batch(std::uint64_t stream_seed, std::size_t size) const;

 private:
  const ResidualNet* net_;
  std::uint64_t seed_;
  std::size_t batch_size_;
  ParamVector<Real> teacher_;
};

}  // namespace sdlab
