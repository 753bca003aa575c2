#include "sdlab/model.h"

#include <cmath>
#include <sstream>
#include <string>

#include "sdlab/errors.h"
#include "sdlab/rng.h"

namespace sdlab {
namespace {

BlockLayout make_layout(const ModelDims& d) {
  std::vector<Block> blocks;
  std::size_t at = 0;
  auto add = [&](std::string name, std::size_t n) {
    blocks.push_back({std::move(name), at, n});
    at += n;
  };
  add("w_in", d.d_hidden * d.d_in);
  for (std::size_t l = 0; l < d.num_blocks; ++l)
    add("block_" + std::to_string(l), d.d_hidden * d.d_hidden + d.d_hidden);
  add("w_out", d.d_out * d.d_hidden);
  return BlockLayout(std::move(blocks));
}

template <typename Real>
void check_shapes(const ResidualNet& net, const ParamVector<Real>& params,
                  const Batch<Real>& batch) {
  const ModelDims& d = net.dims();
  if (params.size() != net.num_params()) {
    std::ostringstream os;
    os << "parameter vector has " << params.size() << " values, network expects "
       << net.num_params();
    throw StructuralError(os.str());
  }
  if (batch.size == 0) throw StructuralError("empty batch");
  if (batch.x.size() != batch.size * d.d_in || batch.y.size() != batch.size * d.d_out) {
    std::ostringstream os;
    os << "batch of " << batch.size << " rows has " << batch.x.size() << " inputs and "
       << batch.y.size() << " targets (d_in=" << d.d_in << ", d_out=" << d.d_out << ")";
    throw StructuralError(os.str());
  }
}

// y = W x, W row-major rows x cols.
template <typename Real>
void matvec(const Real* W, const Real* x, Real* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    Real acc = 0;
    const Real* row = W + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Per-sample activations: h[0..L] and a[1..L] (stored as a[0..L-1]).
template <typename Real>
struct Activations {
  std::vector<Real> h;
  std::vector<Real> a;
  std::vector<Real> out;
};

template <typename Real>
void forward_sample(const ModelDims& d, const BlockLayout& layout, const Real* p,
                    const Real* x, Activations<Real>& act) {
  const std::size_t H = d.d_hidden;
  act.h.resize((d.num_blocks + 1) * H);
  act.a.resize(d.num_blocks * H);
  act.out.resize(d.d_out);
  matvec(p + layout.block(0).start, x, act.h.data(), H, d.d_in);
  for (std::size_t l = 0; l < d.num_blocks; ++l) {
    const Real* W = p + layout.block(l + 1).start;
    const Real* b = W + H * H;
    const Real* h_prev = act.h.data() + l * H;
    Real* h_next = act.h.data() + (l + 1) * H;
    Real* a = act.a.data() + l * H;
    matvec(W, h_prev, a, H, H);
    for (std::size_t i = 0; i < H; ++i) {
      a[i] = std::tanh(a[i] + b[i]);
      h_next[i] = h_prev[i] + a[i];
    }
  }
  matvec(p + layout.block(d.num_blocks + 1).start, act.h.data() + d.num_blocks * H,
         act.out.data(), d.d_out, H);
}

}  // namespace

ResidualNet::ResidualNet(ModelDims dims) : dims_(dims) {
  if (dims.d_in == 0 || dims.d_hidden == 0 || dims.d_out == 0 || dims.num_blocks == 0)
    throw ConfigError("model dimensions must all be >= 1");
  layout_ = make_layout(dims_);
}

std::vector<std::size_t> ResidualNet::sync_blocks() const {
  std::vector<std::size_t> out(dims_.num_blocks);
  for (std::size_t l = 0; l < dims_.num_blocks; ++l) out[l] = l + 1;
  return out;
}

template <typename Real>
ParamVector<Real> ResidualNet::init(std::uint64_t seed) const {
  ParamVector<Real> params(layout_);
  Engine eng(seed);
  Gaussian gauss;
  auto fill = [&](std::span<Real> s, std::size_t fan_in) {
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Real& v : s) v = static_cast<Real>(std_dev * gauss(eng));
  };
  fill(params.block(w_in_block()), dims_.d_in);
  for (std::size_t l = 0; l < dims_.num_blocks; ++l) fill(params.block(l + 1), dims_.d_hidden);
  fill(params.block(w_out_block()), dims_.d_hidden);
  return params;
}

template <typename Real>
std::vector<Real> predict(const ResidualNet& net, const ParamVector<Real>& params,
                          std::span<const Real> x, std::size_t rows) {
  const ModelDims& d = net.dims();
  if (params.size() != net.num_params() || x.size() != rows * d.d_in)
    throw StructuralError("predict: shape mismatch");
  std::vector<Real> out(rows * d.d_out);
  Activations<Real> act;
  for (std::size_t n = 0; n < rows; ++n) {
    forward_sample(d, net.layout(), params.data().data(), x.data() + n * d.d_in, act);
    for (std::size_t o = 0; o < d.d_out; ++o) out[n * d.d_out + o] = act.out[o];
  }
  return out;
}

template <typename Real>
double forward_loss(const ResidualNet& net, const ParamVector<Real>& params,
                    const Batch<Real>& batch) {
  check_shapes(net, params, batch);
  const ModelDims& d = net.dims();
  Activations<Real> act;
  double sum = 0.0;
  for (std::size_t n = 0; n < batch.size; ++n) {
    forward_sample(d, net.layout(), params.data().data(), batch.x.data() + n * d.d_in, act);
    for (std::size_t o = 0; o < d.d_out; ++o) {
      const double r = static_cast<double>(act.out[o]) - batch.y[n * d.d_out + o];
      sum += r * r;
    }
  }
  return sum / static_cast<double>(batch.size * d.d_out);
}

template <typename Real>
double loss_and_gradient(const ResidualNet& net, const ParamVector<Real>& params,
                         const Batch<Real>& batch, std::span<Real> grad) {
  check_shapes(net, params, batch);
  if (grad.size() != params.size()) throw StructuralError("gradient buffer size mismatch");
  const ModelDims& d = net.dims();
  const BlockLayout& layout = net.layout();
  const std::size_t H = d.d_hidden;
  const std::size_t L = d.num_blocks;
  const Real* p = params.data().data();
  std::fill(grad.begin(), grad.end(), Real(0));

  const Real scale = Real(2) / static_cast<Real>(batch.size * d.d_out);
  Activations<Real> act;
  std::vector<Real> g_out(d.d_out), g_h(H), g_z(H);
  double sum = 0.0;

  const std::size_t out_at = layout.block(L + 1).start;
  for (std::size_t n = 0; n < batch.size; ++n) {
    const Real* x = batch.x.data() + n * d.d_in;
    forward_sample(d, layout, p, x, act);
    for (std::size_t o = 0; o < d.d_out; ++o) {
      const Real r = act.out[o] - batch.y[n * d.d_out + o];
      sum += static_cast<double>(r) * static_cast<double>(r);
      g_out[o] = scale * r;
    }
    // Output head.
    const Real* hL = act.h.data() + L * H;
    for (std::size_t o = 0; o < d.d_out; ++o) {
      Real* gw = grad.data() + out_at + o * H;
      for (std::size_t i = 0; i < H; ++i) gw[i] += g_out[o] * hL[i];
    }
    std::fill(g_h.begin(), g_h.end(), Real(0));
    for (std::size_t o = 0; o < d.d_out; ++o) {
      const Real* w = p + out_at + o * H;
      for (std::size_t i = 0; i < H; ++i) g_h[i] += w[i] * g_out[o];
    }
    // Residual blocks, deepest first.
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t at = layout.block(l + 1).start;
      const Real* W = p + at;
      const Real* a = act.a.data() + l * H;
      const Real* h_prev = act.h.data() + l * H;
      Real* gW = grad.data() + at;
      Real* gb = gW + H * H;
      for (std::size_t i = 0; i < H; ++i) g_z[i] = g_h[i] * (Real(1) - a[i] * a[i]);
      for (std::size_t r = 0; r < H; ++r) {
        Real* row = gW + r * H;
        for (std::size_t c = 0; c < H; ++c) row[c] += g_z[r] * h_prev[c];
        gb[r] += g_z[r];
      }
      for (std::size_t r = 0; r < H; ++r) {
        const Real* row = W + r * H;
        const Real gz = g_z[r];
        for (std::size_t c = 0; c < H; ++c) g_h[c] += row[c] * gz;
      }
    }
    // Input projection.
    Real* gin = grad.data() + layout.block(0).start;
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < d.d_in; ++c) gin[r * d.d_in + c] += g_h[r] * x[c];
  }
  return sum / static_cast<double>(batch.size * d.d_out);
}

template <typename Real>
ParamVector<Real> backward(const ResidualNet& net, const ParamVector<Real>& params,
                           const Batch<Real>& batch) {
  ParamVector<Real> grad(net.layout());
  loss_and_gradient(net, params, batch, grad.data());
  return grad;
}

template <typename Real>
SyntheticTask<Real>::SyntheticTask(const ResidualNet& net, std::uint64_t seed,
                                   std::size_t batch_size)
    : net_(&net),
      seed_(seed),
      batch_size_(batch_size),
      teacher_(net.init<Real>(derive_seed(seed, "teacher"))) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
}

template <typename Real>
std::uint64_t SyntheticTask<Real>::shard_seed(std::size_t replica) const {
  return derive_seed(seed_, "shard", replica);
}

template <typename Real>
Batch<Real> SyntheticTask<Real>::make_batch(std::uint64_t stream_seed,
                                            std::size_t size) const {
  const ModelDims& d = net_->dims();
  Batch<Real> b;
  b.size = size;
  b.x.resize(size * d.d_in);
  Engine eng(stream_seed);
  Gaussian gauss;
  for (Real& v : b.x) v = static_cast<Real>(gauss(eng));
  b.y = predict<Real>(*net_, teacher_, b.x, size);
  return b;
}

template <typename Real>
Batch<Real> SyntheticTask<Real>::batch_from_shard(std::uint64_t shard_seed, long step) const {
  return make_batch(derive_seed(shard_seed, "batch", static_cast<std::uint64_t>(step)),
                    batch_size_);
}

template <typename Real>
Batch<Real> SyntheticTask<Real>::batch(std::size_t replica, long step) const {
  return batch_from_shard(shard_seed(replica), step);
}

template <typename Real>
Batch<Real> SyntheticTask<Real>::eval_set(std::size_t size) const {
  return make_batch(derive_seed(seed_, "eval"), size);
}

#define SDLAB_INSTANTIATE(Real)                                                         \
  template ParamVector<Real> ResidualNet::init<Real>(std::uint64_t) const;              \
  template std::vector<Real> predict(const ResidualNet&, const ParamVector<Real>&,      \
                                     std::span<const Real>, std::size_t);               \
  template double forward_loss(const ResidualNet&, const ParamVector<Real>&,            \
                               const Batch<Real>&);                                     \
  template double loss_and_gradient(const ResidualNet&, const ParamVector<Real>&,       \
                                    const Batch<Real>&, std::span<Real>);               \
  template ParamVector<Real> backward(const ResidualNet&, const ParamVector<Real>&,     \
                                      const Batch<Real>&);                              \
  template class SyntheticTask<Real>;

SDLAB_INSTANTIATE(float)
SDLAB_INSTANTIATE(double)
#undef SDLAB_INSTANTIATE

}  // namespace sdlab
