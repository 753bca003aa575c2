#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdlab/codec.h"
#include "sdlab/model.h"
#include "sdlab/optim.h"
#include "sdlab/param_space.h"
#include "sdlab/schedule.h"

namespace sdlab {

enum class TrainMode {
  kDataParallel,  // M=1 with an M-fold batch
  kDiLoCo,        // full-model outer step every H steps
  kStreaming,
  kStreamingOverlapped,
  kStreamingOverlappedQuantized,
};

enum class EvalMode { kFirstReplica, kReplicaAverage, kOuterParams };
enum class Precision { kFp32, kFp64 };

const char* to_string(TrainMode m);
const char* to_string(EvalMode m);
const char* to_string(Precision p);
TrainMode parse_train_mode(const std::string& s);
EvalMode parse_eval_mode(const std::string& s);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  TrainMode mode = TrainMode::kStreaming;
  ModelDims model;
  std::size_t replicas = 2;
  long total_steps = 600;
  long period = 30;
  std::size_t fragment_size = 3;
  FragmentPattern pattern = FragmentPattern::kStrided;
  std::vector<long> taus = {1, 1};  // one per replica
  double alpha = 0.5;
  CodecSpec codec;
  AdamHyper inner;
  NesterovHyper outer;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  long eval_interval = 100;
  std::size_t eval_size = 256;
  EvalMode eval_mode = EvalMode::kOuterParams;
  bool freeze_fedpart = false;
  bool identical_shards = false;
  std::size_t threads = 1;
  Precision precision = Precision::kFp32;

  bool is_streaming() const {
    return mode == TrainMode::kStreaming || mode == TrainMode::kStreamingOverlapped ||
           mode == TrainMode::kStreamingOverlappedQuantized;
  }
  // Throws ConfigError describing the first violated constraint.
  void validate() const;
  // Fragment spec with offsets (streaming), or the single-fragment spec
  // equivalent to a DiLoCo round.
  FragmentSpec fragment_spec() const;
};

struct MetricsRow {
  long step = 0;
  double train_loss = 0.0;
  double eval_first = 0.0;
  double eval_avg = 0.0;
  double eval_outer = 0.0;
  std::uint64_t bytes_step = 0;
  std::uint64_t bytes_total = 0;
  double cos_rest = 0.0;  // NaN when no sync round fell in the interval
  double cos_win = 0.0;
};

struct SyncRound {
  long step = 0;
  std::size_t fragment = 0;
  double cos_rest = 0.0;  // mean over replica pairs; NaN if M < 2
  double cos_win = 0.0;   // NaN if the fragment holds no w_in entries
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  std::vector<SyncRound> rounds;
  std::vector<std::uint64_t> step_bytes;  // index t-1 for step t
  std::uint64_t total_bytes = 0;
  std::uint64_t peak_step_bytes = 0;
  long peak_step = 0;
  std::size_t send_events = 0;
  std::size_t momentum_updates = 0;
  bool outer_eval_fallback = false;
  double final_train_loss = 0.0;
  double final_eval_first = 0.0;
  double final_eval_avg = 0.0;
  double final_eval_outer = 0.0;
  double wall_seconds = 0.0;

  double final_eval(EvalMode mode) const;
};

struct RunOutput {
  MetricsLog log;
  BlockLayout layout;
  std::vector<double> final_params;  // parameters selected by eval_mode
  std::vector<std::vector<double>> replica_params;
};

// Δ = outer_base - current.
template <typename Real>
std::vector<Real> compute_delta(std::span<const Real> outer_base, std::span<const Real> current);

template <typename Real>
struct ReducedDelta {
  std::vector<Real> mean;
  std::vector<std::size_t> wire_bytes;  // per replica
};

// Encodes and decodes every replica's delta, sums the decoded values in
// ascending replica order in Real precision, and divides by M.
template <typename Real>
ReducedDelta<Real> all_reduce_mean(std::span<const std::vector<Real>> deltas,
                                   const CodecSpec& codec,
                                   std::span<const std::uint64_t> codec_seeds);

// theta <- alpha * theta + (1 - alpha) * outer.
template <typename Real>
void merge_fragment(std::span<Real> theta, std::span<const Real> outer, double alpha);

// a.b / (|a| |b|) accumulated in double; 0 when either vector is zero.
template <typename Real>
double cosine_similarity(std::span<const Real> a, std::span<const Real> b);

template <typename Real>
struct ReplicaState {
  std::size_t id = 0;
  std::uint64_t shard_seed = 0;
  ParamVector<Real> params;
  AdamState<Real> adam;
  double last_loss = 0.0;
};

// One inner AdamW step on the replica's batch for `step`. Frozen ranges get
// zero gradient. Returns the pre-update batch loss; throws NumericError on a
// non-finite loss.
template <typename Real>
double inner_step(ReplicaState<Real>& replica, const ResidualNet& net,
                  const Batch<Real>& batch, long step, const AdamHyper& hp,
                  std::span<const IndexRange> frozen = {});

// Drives M replicas in lockstep over the synchronization calendar.
template <typename Real>
class Trainer {
 public:
  explicit Trainer(TrainConfig config);

  // Runs the remaining steps and returns the log and final parameters.
  RunOutput run();
  // Advances exactly one step (1-based). Returns false once T is reached.
  bool step();

  long current_step() const { return step_; }
  const TrainConfig& config() const { return config_; }
  const ResidualNet& net() const { return net_; }
  const SyntheticTask<Real>& task() const { return task_; }
  const std::vector<ReplicaState<Real>>& replicas() const { return replicas_; }
  const SyncCalendar& calendar() const { return calendar_; }
  const FragmentSpec& fragments() const { return calendar_.spec(); }
  const std::vector<std::vector<IndexRange>>& fragment_ranges() const { return ranges_; }
  const MetricsLog& log() const { return log_; }
  // Momentum advances so far for fragment p.
  std::size_t momentum_updates(std::size_t p) const { return fragment_states_.at(p).updates; }
  bool in_flight(std::size_t p) const { return fragment_states_.at(p).in_flight.has_value(); }

  // Parameters a given evaluation mode would score. Sets *fallback when
  // outer parameters are requested before every fragment has synced.
  std::vector<Real> eval_params(EvalMode mode, bool* fallback = nullptr) const;
  double evaluate(EvalMode mode, bool* fallback = nullptr) const;

 private:
  struct InFlight {
    long send_step = 0;
    std::vector<Real> direction;
    std::size_t pending = 0;
  };
  struct FragmentReplica {
    // Outer parameters: the initial fragment, then the latest outer step
    // result. Deltas are taken against it.
    std::vector<Real> outer_base;
    bool has_outer = false;
  };
  struct FragmentState {
    NesterovState<Real> momentum;
    std::optional<InFlight> in_flight;
    std::vector<FragmentReplica> replicas;
    std::size_t updates = 0;
    std::vector<IndexRange> w_in_local;  // w_in positions inside the gathered fragment
  };

  void run_inner_steps(long t);
  void streaming_sync(long t);
  void diloco_sync(long t);
  std::vector<IndexRange> frozen_ranges(long t) const;
  void record_round(long t, std::size_t p, const std::vector<std::vector<Real>>& deltas);
  void maybe_log_row(long t);

  TrainConfig config_;
  ResidualNet net_;
  SyntheticTask<Real> task_;
  Batch<Real> eval_set_;
  SyncCalendar calendar_;
  std::vector<std::vector<IndexRange>> ranges_;
  std::vector<ReplicaState<Real>> replicas_;
  std::vector<FragmentState> fragment_states_;
  // Literal full-model path used by TrainMode::kDiLoCo.
  std::vector<std::vector<Real>> diloco_base_;
  std::vector<std::vector<Real>> diloco_outer_;
  NesterovState<Real> diloco_momentum_;
  std::vector<IndexRange> full_w_in_;
  MetricsLog log_;
  long step_ = 0;
  std::size_t rounds_logged_ = 0;
};

// Validates the config and runs it in the configured precision.
RunOutput run_training(const TrainConfig& config);

}  // namespace sdlab
