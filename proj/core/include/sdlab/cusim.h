#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdlab/param_space.h"

namespace sdlab {

enum class SimMethod {
  kDataParallel,
  kDiLoCo,
  kStreaming,
  kStreamingOverlap,
  kStreamingOverlap4bit,
};

const char* to_string(SimMethod m);
SimMethod parse_sim_method(const std::string& s);
const std::vector<SimMethod>& all_sim_methods();

struct SimConfig {
  std::size_t layers = 24;
  double bytes_per_layer = 0.0;  // at 32 bits per value
  double step_time_s = 0.1;      // forward plus backward of one step
  double bandwidth_bps = 1e9;    // may be +inf
  double link_latency_s = 0.0;   // added to every reduce node
  SimMethod method = SimMethod::kDataParallel;
  long H = 100;
  std::size_t fragment_size = 3;
  FragmentPattern pattern = FragmentPattern::kStrided;
  long tau = 1;             // used by the overlapped methods only
  int bits_per_value = 0;   // 0: 4 for the 4-bit method, 32 otherwise
  long num_steps = 200;

  int effective_bits() const;
  // Steps after which a reduce result may be consumed late.
  long effective_tau() const;
  void validate() const;
};

enum class NodeKind { kFwd, kBwdAct, kBwdParam, kReduce };
const char* to_string(NodeKind k);

struct SimNode {
  NodeKind kind = NodeKind::kFwd;
  std::size_t layer = 0;
  long step = 0;  // 1-based
  double duration = 0.0;
  double bytes = 0.0;  // payload of reduce nodes

  bool is_compute() const { return kind != NodeKind::kReduce; }
};

// Node ids double as compute priority: lower ids run first.
struct SimDag {
  std::vector<SimNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (from, to)

  std::size_t add(SimNode n) {
    nodes.push_back(n);
    return nodes.size() - 1;
  }
  void connect(std::size_t from, std::size_t to) { edges.emplace_back(from, to); }
  std::size_t nodes_in_step(long step) const;
  std::size_t count(NodeKind kind) const;
};

// Steps in [1, num_steps] at which each layer group is reduced, as
// (step, layers) pairs in step order.
std::vector<std::pair<long, std::vector<std::size_t>>> reduce_schedule(const SimConfig& config);

SimDag build_dag(const SimConfig& config);

struct SimResult {
  double makespan = 0.0;
  double compute_busy = 0.0;
  double cu = 0.0;
  double bytes_total = 0.0;
};

// List scheduling on one serial compute resource and one FIFO network
// resource. Throws StructuralError on a cycle.
SimResult simulate(const SimDag& dag);
SimResult simulate(const SimConfig& config);

struct Profile {
  std::string name;
  double num_params = 0.0;
  std::size_t layers = 0;
  double step_time_s = 0.0;
  long H = 100;
  std::size_t fragment_size = 3;
  FragmentPattern pattern = FragmentPattern::kStrided;
  long tau = 1;
  long num_steps = 200;
  double link_latency_s = 0.0;

  double bytes_per_layer() const { return num_params * 4.0 / static_cast<double>(layers); }
  SimConfig config(SimMethod method, double bandwidth_gbits) const;
};

Profile parse_profile(const std::string& json_text, const std::string& origin);
Profile load_profile_file(const std::string& path);
// Names of the *.json profiles in `dir`, sorted.
std::vector<std::string> list_profiles(const std::string& dir);
// Loads `<dir>/<name>.json`; ConfigError lists the valid names if absent.
Profile load_profile(const std::string& dir, const std::string& name);

// Geometric grid, inclusive of both ends.
std::vector<double> log_grid(double lo, double hi, std::size_t points);
// 0.1 .. 1000 Gbit/s, 50 points.
std::vector<double> default_bandwidth_grid_gbits();

struct SweepRow {
  SimMethod method = SimMethod::kDataParallel;
  double bandwidth_gbits = 0.0;
  SimResult result;
};

std::vector<SweepRow> sweep(const Profile& profile, const std::vector<SimMethod>& methods,
                            const std::vector<double>& bandwidths_gbits, std::size_t threads = 1);

struct Threshold {
  SimMethod method = SimMethod::kDataParallel;
  double cu_target = 0.0;
  double bandwidth_gbits = 0.0;  // +inf when no grid point reaches the target
};

const std::vector<double>& default_cu_targets();
// Smallest grid bandwidth whose cu reaches each target, per method.
std::vector<Threshold> thresholds(const std::vector<SweepRow>& rows,
                                  const std::vector<double>& targets);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string thresholds_csv(const std::vector<Threshold>& rows);

struct MemoryOverhead {
  double inner_bytes = 0.0;
  double outer_fragment_bytes = 0.0;
  double overhead_fraction = 0.0;
};

// inner = params x 3 x 4 bytes (params, Adam m and v in fp32);
// outer = params x 2 x 4 x |p|/L (outer params and momentum of one fragment).
MemoryOverhead memory_overhead(double num_params, std::size_t layers, std::size_t fragment_size);

inline constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

}  // namespace sdlab
