#include "sdlab/engine.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include "sdlab/errors.h"
#include "sdlab/rng.h"

namespace sdlab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const std::size_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<IndexRange> merge_ranges(std::vector<IndexRange> ranges) {
  std::sort(ranges.begin(), ranges.end(),
            [](const IndexRange& a, const IndexRange& b) { return a.begin < b.begin; });
  std::vector<IndexRange> out;
  for (const IndexRange& r : ranges) {
    if (r.size() == 0) continue;
    if (!out.empty() && out.back().end >= r.begin)
      out.back().end = std::max(out.back().end, r.end);
    else
      out.push_back(r);
  }
  return out;
}

// Positions of [lo, hi) inside a buffer gathered from `ranges`.
std::vector<IndexRange> local_positions(std::span<const IndexRange> ranges, std::size_t lo,
                                        std::size_t hi) {
  std::vector<IndexRange> out;
  std::size_t offset = 0;
  for (const IndexRange& r : ranges) {
    const std::size_t b = std::max(r.begin, lo);
    const std::size_t e = std::min(r.end, hi);
    if (b < e) out.push_back({offset + (b - r.begin), offset + (e - r.begin)});
    offset += r.size();
  }
  return out;
}

double mean_ignoring_nan(std::span<const double> xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : xs)
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  return n == 0 ? kNaN : sum / static_cast<double>(n);
}

}  // namespace

const char* to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kDataParallel: return "data_parallel";
    case TrainMode::kDiLoCo: return "diloco";
    case TrainMode::kStreaming: return "streaming";
    case TrainMode::kStreamingOverlapped: return "streaming_overlapped";
    case TrainMode::kStreamingOverlappedQuantized: return "streaming_overlapped_quantized";
  }
  return "?";
}

const char* to_string(EvalMode m) {
  switch (m) {
    case EvalMode::kFirstReplica: return "first_replica";
    case EvalMode::kReplicaAverage: return "replica_average";
    case EvalMode::kOuterParams: return "outer_params";
  }
  return "?";
}

const char* to_string(Precision p) { return p == Precision::kFp32 ? "fp32" : "fp64"; }

TrainMode parse_train_mode(const std::string& s) {
  for (TrainMode m : {TrainMode::kDataParallel, TrainMode::kDiLoCo, TrainMode::kStreaming,
                      TrainMode::kStreamingOverlapped, TrainMode::kStreamingOverlappedQuantized})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode '" + s +
                    "' (expected data_parallel|diloco|streaming|streaming_overlapped|"
                    "streaming_overlapped_quantized)");
}

EvalMode parse_eval_mode(const std::string& s) {
  for (EvalMode m : {EvalMode::kFirstReplica, EvalMode::kReplicaAverage, EvalMode::kOuterParams})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown eval mode '" + s +
                    "' (expected first_replica|replica_average|outer_params)");
}

Precision parse_precision(const std::string& s) {
  if (s == "fp32") return Precision::kFp32;
  if (s == "fp64") return Precision::kFp64;
  throw ConfigError("unknown precision '" + s + "' (expected fp32|fp64)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (replicas < 1) fail("M must be >= 1");
  if (total_steps < 1) fail("T must be >= 1");
  if (period < 1) fail("H must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (eval_interval < 1) fail("eval.interval must be >= 1");
  if (eval_size < 1) fail("eval.size must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must be in [0, 1]");
  if (!(inner.lr > 0.0)) fail("inner.lr must be > 0");
  if (!(outer.lr > 0.0)) fail("outer.lr must be > 0");
  if (taus.size() != replicas) {
    std::ostringstream os;
    os << "taus has " << taus.size() << " entries for M=" << replicas << " replicas";
    fail(os.str());
  }
  codec.validate();
  ResidualNet net(model);  // dimension checks
  if (is_streaming()) {
    const FragmentSpec spec = fragment_spec();  // divisibility, H >= P
    (void)spec;
    const long max_tau = *std::max_element(taus.begin(), taus.end());
    for (long tau : taus)
      if (tau < 0 || tau >= period) {
        std::ostringstream os;
        os << "tau=" << tau << " violates 0 <= tau < H (H=" << period << ")";
        fail(os.str());
      }
    if (mode == TrainMode::kStreaming && max_tau != 0)
      fail("mode streaming requires tau=0; use streaming_overlapped for tau > 0");
    if ((mode == TrainMode::kStreamingOverlapped ||
         mode == TrainMode::kStreamingOverlappedQuantized) &&
        max_tau == 0)
      fail("overlapped modes require tau >= 1 for at least one replica");
    if (mode == TrainMode::kStreamingOverlappedQuantized && codec.kind != CodecKind::kE3M0)
      fail("mode streaming_overlapped_quantized requires codec.kind=e3m0");
  } else if (freeze_fedpart) {
    fail("freeze_fedpart requires a streaming mode");
  }
}

FragmentSpec TrainConfig::fragment_spec() const {
  if (is_streaming())
    return assign_offsets(partition(model.num_blocks, fragment_size, pattern), period);
  return assign_offsets(partition(model.num_blocks, model.num_blocks, pattern), period);
}

double MetricsLog::final_eval(EvalMode mode) const {
  switch (mode) {
    case EvalMode::kFirstReplica: return final_eval_first;
    case EvalMode::kReplicaAverage: return final_eval_avg;
    case EvalMode::kOuterParams: return final_eval_outer;
  }
  return kNaN;
}

template <typename Real>
std::vector<Real> compute_delta(std::span<const Real> outer_base, std::span<const Real> current) {
  if (outer_base.size() != current.size()) {
    std::ostringstream os;
    os << "compute_delta: snapshot has " << outer_base.size() << " values, fragment "
       << current.size();
    throw ScheduleError(os.str());
  }
  std::vector<Real> delta(current.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = outer_base[i] - current[i];
  return delta;
}

template <typename Real>
ReducedDelta<Real> all_reduce_mean(std::span<const std::vector<Real>> deltas,
                                   const CodecSpec& codec,
                                   std::span<const std::uint64_t> codec_seeds) {
  if (deltas.empty()) throw StructuralError("all_reduce_mean: no replicas");
  if (codec_seeds.size() != deltas.size())
    throw StructuralError("all_reduce_mean: one codec seed per replica required");
  const std::size_t n = deltas.front().size();
  ReducedDelta<Real> out;
  out.mean.assign(n, Real(0));
  for (std::size_t m = 0; m < deltas.size(); ++m) {
    if (deltas[m].size() != n) {
      std::ostringstream os;
      os << "all_reduce_mean: replica " << m << " sent " << deltas[m].size()
         << " values, expected " << n;
      throw StructuralError(os.str());
    }
    Transmission<Real> tx;
    try {
      tx = transmit<Real>(codec, deltas[m], codec_seeds[m]);
    } catch (const CodecError& e) {
      std::ostringstream os;
      os << "replica " << m << ": " << e.what();
      throw CodecError(os.str());
    }
    for (std::size_t i = 0; i < n; ++i) out.mean[i] += tx.decoded[i];
    out.wire_bytes.push_back(tx.wire_bytes);
  }
  const Real inv = static_cast<Real>(deltas.size());
  for (Real& v : out.mean) v /= inv;
  return out;
}

template <typename Real>
void merge_fragment(std::span<Real> theta, std::span<const Real> outer, double alpha) {
  if (theta.size() != outer.size()) throw StructuralError("merge: length mismatch");
  const Real a = static_cast<Real>(alpha);
  const Real b = static_cast<Real>(1.0 - alpha);
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = a * theta[i] + b * outer[i];
}

template <typename Real>
double cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw StructuralError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

template <typename Real>
double inner_step(ReplicaState<Real>& replica, const ResidualNet& net, const Batch<Real>& batch,
                  long step, const AdamHyper& hp, std::span<const IndexRange> frozen) {
  std::vector<Real> grad(replica.params.size());
  const double loss = loss_and_gradient(net, replica.params, batch, std::span<Real>(grad));
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "non-finite loss on replica " << replica.id << " at step " << step;
    throw NumericError(os.str());
  }
  for (const IndexRange& r : frozen)
    std::fill(grad.begin() + static_cast<std::ptrdiff_t>(r.begin),
              grad.begin() + static_cast<std::ptrdiff_t>(r.end), Real(0));
  try {
    adamw_step<Real>(replica.params.data(), grad, replica.adam, hp, frozen);
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "replica " << replica.id << " at step " << step << ": " << e.what();
    throw NumericError(os.str());
  }
  replica.last_loss = loss;
  return loss;
}

template <typename Real>
Trainer<Real>::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      net_(config_.model),
      task_(net_, config_.seed, config_.batch_size) {
  eval_set_ = task_.eval_set(config_.eval_size);
  const std::size_t M = config_.mode == TrainMode::kDataParallel ? 1 : config_.replicas;
  const FragmentSpec spec = config_.fragment_spec();
  std::vector<long> taus = config_.is_streaming() ? config_.taus : std::vector<long>(M, 0);
  taus.resize(M);
  calendar_ = build_calendar(spec, config_.total_steps, taus);
  const std::vector<std::size_t> sync = net_.sync_blocks();
  ranges_ = sdlab::fragment_ranges(spec, net_.layout(), sync);

  const ParamVector<Real> init = net_.init<Real>(derive_seed(config_.seed, "init"));
  replicas_.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    ReplicaState<Real>& r = replicas_[m];
    r.id = m;
    r.shard_seed = task_.shard_seed(config_.identical_shards ? 0 : m);
    r.params = init;
    r.adam = AdamState<Real>(init.size());
  }

  const Block& w_in = net_.layout().block(net_.w_in_block());
  if (config_.mode == TrainMode::kDiLoCo) {
    diloco_base_.assign(M, init.values());
    diloco_outer_.assign(M, {});
    diloco_momentum_ = NesterovState<Real>(init.size());
    full_w_in_ = {{w_in.start, w_in.end()}};
  } else if (config_.is_streaming()) {
    fragment_states_.resize(spec.num_fragments());
    for (std::size_t p = 0; p < spec.num_fragments(); ++p) {
      FragmentState& fs = fragment_states_[p];
      const std::size_t n = total_size(ranges_[p]);
      fs.momentum = NesterovState<Real>(n);
      fs.w_in_local = local_positions(ranges_[p], w_in.start, w_in.end());
      fs.replicas.resize(M);
      for (FragmentReplica& fr : fs.replicas) {
        fr.outer_base.resize(n);
        gather<Real>(init.data(), ranges_[p], fr.outer_base);
      }
    }
  }
  log_.step_bytes.reserve(static_cast<std::size_t>(config_.total_steps));
}

template <typename Real>
std::vector<IndexRange> Trainer<Real>::frozen_ranges(long t) const {
  const std::size_t P = ranges_.size();
  std::size_t active = 0;
  long best = std::numeric_limits<long>::max();
  for (std::size_t p = 0; p < P; ++p) {
    const long next = calendar_.next_send(p, t);
    if (next < best) {
      best = next;
      active = p;
    }
  }
  std::vector<IndexRange> frozen;
  for (std::size_t p = 0; p < P; ++p)
    if (p != active) frozen.insert(frozen.end(), ranges_[p].begin(), ranges_[p].end());
  return merge_ranges(std::move(frozen));
}

template <typename Real>
void Trainer<Real>::run_inner_steps(long t) {
  const std::vector<IndexRange> frozen =
      config_.freeze_fedpart ? frozen_ranges(t) : std::vector<IndexRange>{};
  const bool dp = config_.mode == TrainMode::kDataParallel;
  parallel_for(replicas_.size(), config_.threads, [&](std::size_t m) {
    ReplicaState<Real>& r = replicas_[m];
    Batch<Real> batch;
    if (dp) {
      // The M-fold batch is the concatenation of every replica's shard batch.
      for (std::size_t k = 0; k < config_.replicas; ++k) {
        const std::uint64_t shard = task_.shard_seed(config_.identical_shards ? 0 : k);
        Batch<Real> part = task_.batch_from_shard(shard, t);
        batch.size += part.size;
        batch.x.insert(batch.x.end(), part.x.begin(), part.x.end());
        batch.y.insert(batch.y.end(), part.y.begin(), part.y.end());
      }
    } else {
      batch = task_.batch_from_shard(r.shard_seed, t);
    }
    inner_step(r, net_, batch, t, config_.inner, frozen);
  });
}

template <typename Real>
void Trainer<Real>::record_round(long t, std::size_t p,
                                 const std::vector<std::vector<Real>>& deltas) {
  const std::vector<IndexRange>& win =
      config_.mode == TrainMode::kDiLoCo ? full_w_in_ : fragment_states_[p].w_in_local;
  const std::size_t M = deltas.size();
  const std::size_t n = deltas.front().size();
  std::vector<bool> is_win(n, false);
  for (const IndexRange& r : win)
    for (std::size_t i = r.begin; i < r.end; ++i) is_win[i] = true;
  std::vector<std::vector<Real>> win_part(M), rest_part(M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < n; ++i)
      (is_win[i] ? win_part[m] : rest_part[m]).push_back(deltas[m][i]);

  SyncRound round;
  round.step = t;
  round.fragment = p;
  round.cos_rest = kNaN;
  round.cos_win = kNaN;
  if (M >= 2) {
    double rest_sum = 0.0, win_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < M; ++a)
      for (std::size_t b = a + 1; b < M; ++b) {
        rest_sum += cosine_similarity<Real>(rest_part[a], rest_part[b]);
        win_sum += cosine_similarity<Real>(win_part[a], win_part[b]);
        ++pairs;
      }
    if (!rest_part.front().empty()) round.cos_rest = rest_sum / static_cast<double>(pairs);
    if (!win_part.front().empty()) round.cos_win = win_sum / static_cast<double>(pairs);
  }
  log_.rounds.push_back(round);
}

template <typename Real>
void Trainer<Real>::streaming_sync(long t) {
  const std::size_t M = replicas_.size();
  std::uint64_t bytes = 0;
  const std::vector<std::size_t>& sends = calendar_.sends_at(t);

  for (std::size_t p : sends) {
    FragmentState& fs = fragment_states_[p];
    if (fs.in_flight) {
      std::ostringstream os;
      os << "fragment " << p << " sent at step " << t << " while the send from step "
         << fs.in_flight->send_step << " is still in flight";
      throw ScheduleError(os.str());
    }
    const std::size_t n = total_size(ranges_[p]);
    std::vector<std::vector<Real>> deltas(M);
    std::vector<std::uint64_t> seeds(M);
    std::vector<Real> current(n);
    for (std::size_t m = 0; m < M; ++m) {
      gather<Real>(replicas_[m].params.data(), ranges_[p], current);
      deltas[m] = compute_delta<Real>(fs.replicas[m].outer_base, current);
      seeds[m] = derive_seed(config_.seed, "codec", static_cast<std::uint64_t>(t), p, m);
    }
    const ReducedDelta<Real> reduced = all_reduce_mean<Real>(deltas, config_.codec, seeds);
    for (std::size_t b : reduced.wire_bytes) bytes += b;
    record_round(t, p, deltas);
    InFlight flight;
    flight.send_step = t;
    flight.direction = nesterov_direction<Real>(reduced.mean, fs.momentum, config_.outer);
    flight.pending = M;
    fs.in_flight = std::move(flight);
    ++fs.updates;
    ++log_.momentum_updates;
    ++log_.send_events;
  }

  for (std::size_t m = 0; m < M; ++m) {
    for (const ReceiveEvent& ev : calendar_.receives_at(m, t)) {
      FragmentState& fs = fragment_states_[ev.fragment];
      if (!fs.in_flight || fs.in_flight->send_step != ev.send_step) {
        std::ostringstream os;
        os << "replica " << m << " expects fragment " << ev.fragment << " from step "
           << ev.send_step << " at step " << t << " but no such delta is in flight";
        throw ScheduleError(os.str());
      }
      FragmentReplica& fr = fs.replicas[m];
      const std::size_t n = total_size(ranges_[ev.fragment]);
      std::vector<Real> outer(n), current(n);
      apply_outer_direction<Real>(fr.outer_base, fs.in_flight->direction, config_.outer, outer);
      gather<Real>(replicas_[m].params.data(), ranges_[ev.fragment], current);
      merge_fragment<Real>(current, outer, config_.alpha);
      scatter<Real>(current, ranges_[ev.fragment], replicas_[m].params.data());
      fr.outer_base = std::move(outer);
      fr.has_outer = true;
      if (--fs.in_flight->pending == 0) fs.in_flight.reset();
    }
  }
  log_.step_bytes.back() += bytes;
}

template <typename Real>
void Trainer<Real>::diloco_sync(long t) {
  const std::size_t M = replicas_.size();
  std::vector<std::vector<Real>> deltas(M);
  std::vector<std::uint64_t> seeds(M);
  for (std::size_t m = 0; m < M; ++m) {
    deltas[m] = compute_delta<Real>(diloco_base_[m], replicas_[m].params.data());
    seeds[m] = derive_seed(config_.seed, "codec", static_cast<std::uint64_t>(t), 0, m);
  }
  const ReducedDelta<Real> reduced = all_reduce_mean<Real>(deltas, config_.codec, seeds);
  std::uint64_t bytes = 0;
  for (std::size_t b : reduced.wire_bytes) bytes += b;
  record_round(t, 0, deltas);
  const std::vector<Real> direction =
      nesterov_direction<Real>(reduced.mean, diloco_momentum_, config_.outer);
  for (std::size_t m = 0; m < M; ++m) {
    std::vector<Real> outer(direction.size());
    apply_outer_direction<Real>(diloco_base_[m], direction, config_.outer, outer);
    std::copy(outer.begin(), outer.end(), replicas_[m].params.values().begin());
    diloco_base_[m] = outer;
    diloco_outer_[m] = std::move(outer);
  }
  ++log_.momentum_updates;
  ++log_.send_events;
  log_.step_bytes.back() += bytes;
}

template <typename Real>
std::vector<Real> Trainer<Real>::eval_params(EvalMode mode, bool* fallback) const {
  if (fallback) *fallback = false;
  const std::size_t M = replicas_.size();
  if (mode == EvalMode::kFirstReplica || config_.mode == TrainMode::kDataParallel)
    return replicas_.front().params.values();

  const std::size_t n = replicas_.front().params.size();
  std::vector<Real> avg(n, Real(0));
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t i = 0; i < n; ++i) avg[i] += replicas_[m].params[i];
  for (Real& v : avg) v /= static_cast<Real>(M);
  if (mode == EvalMode::kReplicaAverage) return avg;

  auto mean_of = [&](auto&& get, std::size_t len) {
    std::vector<Real> out(len, Real(0));
    for (std::size_t m = 0; m < M; ++m) {
      const std::vector<Real>& v = get(m);
      for (std::size_t i = 0; i < len; ++i) out[i] += v[i];
    }
    for (Real& v : out) v /= static_cast<Real>(M);
    return out;
  };

  bool missing = false;
  if (config_.mode == TrainMode::kDiLoCo) {
    if (diloco_outer_.front().empty()) {
      missing = true;
    } else {
      avg = mean_of([&](std::size_t m) -> const std::vector<Real>& { return diloco_outer_[m]; },
                    n);
    }
  } else {
    for (std::size_t p = 0; p < fragment_states_.size(); ++p) {
      const FragmentState& fs = fragment_states_[p];
      const bool ready = std::all_of(fs.replicas.begin(), fs.replicas.end(),
                                     [](const FragmentReplica& fr) { return fr.has_outer; });
      if (!ready) {
        missing = true;
        continue;
      }
      const std::vector<Real> outer = mean_of(
          [&](std::size_t m) -> const std::vector<Real>& { return fs.replicas[m].outer_base; },
          total_size(ranges_[p]));
      scatter<Real>(outer, ranges_[p], avg);
    }
  }
  if (fallback) *fallback = missing;
  return avg;
}

template <typename Real>
double Trainer<Real>::evaluate(EvalMode mode, bool* fallback) const {
  const ParamVector<Real> params(net_.layout(), eval_params(mode, fallback));
  return forward_loss(net_, params, eval_set_);
}

template <typename Real>
void Trainer<Real>::maybe_log_row(long t) {
  if (t % config_.eval_interval != 0 && t != config_.total_steps) return;
  MetricsRow row;
  row.step = t;
  double loss_sum = 0.0;
  for (const auto& r : replicas_) loss_sum += r.last_loss;
  row.train_loss = loss_sum / static_cast<double>(replicas_.size());
  row.eval_first = evaluate(EvalMode::kFirstReplica);
  row.eval_avg = evaluate(EvalMode::kReplicaAverage);
  bool fallback = false;
  row.eval_outer = evaluate(EvalMode::kOuterParams, &fallback);
  row.bytes_step = log_.step_bytes.back();
  row.bytes_total = log_.total_bytes;
  std::vector<double> rest, win;
  for (std::size_t i = rounds_logged_; i < log_.rounds.size(); ++i) {
    rest.push_back(log_.rounds[i].cos_rest);
    win.push_back(log_.rounds[i].cos_win);
  }
  rounds_logged_ = log_.rounds.size();
  row.cos_rest = mean_ignoring_nan(rest);
  row.cos_win = mean_ignoring_nan(win);
  log_.rows.push_back(row);
  if (t == config_.total_steps) {
    log_.final_train_loss = row.train_loss;
    log_.final_eval_first = row.eval_first;
    log_.final_eval_avg = row.eval_avg;
    log_.final_eval_outer = row.eval_outer;
    log_.outer_eval_fallback = fallback;
  }
}

template <typename Real>
bool Trainer<Real>::step() {
  if (step_ >= config_.total_steps) return false;
  const long t = ++step_;
  run_inner_steps(t);
  log_.step_bytes.push_back(0);
  switch (config_.mode) {
    case TrainMode::kDataParallel:
      // What a per-step gradient all-reduce would put on the wire.
      log_.step_bytes.back() = config_.replicas * replicas_.front().params.size() * sizeof(Real);
      break;
    case TrainMode::kDiLoCo:
      if (t % config_.period == 0) diloco_sync(t);
      break;
    default:
      streaming_sync(t);
      break;
  }
  const std::uint64_t b = log_.step_bytes.back();
  log_.total_bytes += b;
  if (b > log_.peak_step_bytes) {
    log_.peak_step_bytes = b;
    log_.peak_step = t;
  }
  maybe_log_row(t);
  return true;
}

template <typename Real>
RunOutput Trainer<Real>::run() {
  const auto start = std::chrono::steady_clock::now();
  while (step()) {
  }
  log_.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  RunOutput out;
  out.log = log_;
  out.layout = net_.layout();
  const std::vector<Real> final_params = eval_params(config_.eval_mode);
  out.final_params.assign(final_params.begin(), final_params.end());
  for (const auto& r : replicas_)
    out.replica_params.emplace_back(r.params.values().begin(), r.params.values().end());
  return out;
}

RunOutput run_training(const TrainConfig& config) {
  config.validate();
  if (config.precision == Precision::kFp64) return Trainer<double>(config).run();
  return Trainer<float>(config).run();
}

#define SDLAB_INSTANTIATE(Real)                                                              \
  template std::vector<Real> compute_delta(std::span<const Real>, std::span<const Real>);    \
  template ReducedDelta<Real> all_reduce_mean(std::span<const std::vector<Real>>,             \
                                              const CodecSpec&, std::span<const std::uint64_t>); \
  template void merge_fragment(std::span<Real>, std::span<const Real>, double);              \
  template double cosine_similarity(std::span<const Real>, std::span<const Real>);           \
  template double inner_step(ReplicaState<Real>&, const ResidualNet&, const Batch<Real>&,    \
                             long, const AdamHyper&, std::span<const IndexRange>);           \
  template class Trainer<Real>;

SDLAB_INSTANTIATE(float)
SDLAB_INSTANTIATE(double)
#undef SDLAB_INSTANTIATE

}  // namespace sdlab
