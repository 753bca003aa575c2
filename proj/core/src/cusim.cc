#include "sdlab/cusim.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "json_reader.h"
#include "sdlab/errors.h"

namespace sdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_streaming(SimMethod m) {
  return m == SimMethod::kStreaming || m == SimMethod::kStreamingOverlap ||
         m == SimMethod::kStreamingOverlap4bit;
}

}  // namespace

const char* to_string(SimMethod m) {
  switch (m) {
    case SimMethod::kDataParallel: return "data_parallel";
    case SimMethod::kDiLoCo: return "diloco";
    case SimMethod::kStreaming: return "streaming";
    case SimMethod::kStreamingOverlap: return "streaming_overlap";
    case SimMethod::kStreamingOverlap4bit: return "streaming_overlap_4bit";
  }
  return "?";
}

const std::vector<SimMethod>& all_sim_methods() {
  static const std::vector<SimMethod> kAll = {
      SimMethod::kDataParallel, SimMethod::kDiLoCo, SimMethod::kStreaming,
      SimMethod::kStreamingOverlap, SimMethod::kStreamingOverlap4bit};
  return kAll;
}

SimMethod parse_sim_method(const std::string& s) {
  for (SimMethod m : all_sim_methods())
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s +
                    "' (expected data_parallel|diloco|streaming|streaming_overlap|"
                    "streaming_overlap_4bit)");
}

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::kFwd: return "fwd";
    case NodeKind::kBwdAct: return "bwd_act";
    case NodeKind::kBwdParam: return "bwd_param";
    case NodeKind::kReduce: return "reduce";
  }
  return "?";
}

int SimConfig::effective_bits() const {
  if (bits_per_value > 0) return bits_per_value;
  return method == SimMethod::kStreamingOverlap4bit ? 4 : 32;
}

long SimConfig::effective_tau() const {
  return method == SimMethod::kStreamingOverlap || method == SimMethod::kStreamingOverlap4bit
             ? tau
             : 0;
}

void SimConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (layers < 1) fail("layers must be >= 1");
  if (!(bytes_per_layer > 0.0) || !std::isfinite(bytes_per_layer))
    fail("bytes_per_layer must be positive");
  if (!(step_time_s > 0.0) || !std::isfinite(step_time_s)) fail("step_time_s must be positive");
  if (!(bandwidth_bps > 0.0)) fail("bandwidth must be positive");
  if (!(link_latency_s >= 0.0) || !std::isfinite(link_latency_s))
    fail("link_latency_s must be >= 0");
  if (num_steps < 1) fail("num_steps must be >= 1");
  if (bits_per_value < 0 || bits_per_value > 64) fail("bits_per_value must be in 1..64");
  if (method != SimMethod::kDataParallel && H < 1) fail("H must be >= 1");
  if (is_streaming(method)) {
    if (fragment_size < 1 || layers % fragment_size != 0) {
      std::ostringstream os;
      os << "fragment_size=" << fragment_size << " must divide layers=" << layers;
      fail(os.str());
    }
    if (H < static_cast<long>(layers / fragment_size)) {
      std::ostringstream os;
      os << "H=" << H << " must be >= the number of fragments " << layers / fragment_size;
      fail(os.str());
    }
    const long t = effective_tau();
    if (t < 0 || t >= H) {
      std::ostringstream os;
      os << "tau=" << t << " violates 0 <= tau < H (H=" << H << ")";
      fail(os.str());
    }
  }
}

std::size_t SimDag::nodes_in_step(long step) const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [&](const SimNode& n) { return n.step == step; }));
}

std::size_t SimDag::count(NodeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [&](const SimNode& n) { return n.kind == kind; }));
}

std::vector<std::pair<long, std::vector<std::size_t>>> reduce_schedule(const SimConfig& c) {
  c.validate();
  std::vector<std::size_t> all(c.layers);
  for (std::size_t l = 0; l < c.layers; ++l) all[l] = l;
  std::vector<std::pair<long, std::vector<std::size_t>>> out;
  switch (c.method) {
    case SimMethod::kDataParallel:
      for (long t = 1; t <= c.num_steps; ++t) out.emplace_back(t, all);
      return out;
    case SimMethod::kDiLoCo:
      for (long t = c.H; t <= c.num_steps; t += c.H) out.emplace_back(t, all);
      return out;
    default:
      break;
  }
  // Steady-state calendar: fragment p reduces at every t >= 1 with
  // t = t_p (mod H), so each window of H steps carries one sync per fragment.
  const FragmentSpec spec = assign_offsets(partition(c.layers, c.fragment_size, c.pattern), c.H);
  std::map<long, std::vector<std::size_t>> by_step;
  for (std::size_t p = 0; p < spec.num_fragments(); ++p) {
    const long first = spec.offsets[p] > 0 ? spec.offsets[p] : c.H;
    for (long t = first; t <= c.num_steps; t += c.H) {
      auto& v = by_step[t];
      v.insert(v.end(), spec.fragments[p].begin(), spec.fragments[p].end());
    }
  }
  for (auto& [t, layers] : by_step) {
    std::sort(layers.begin(), layers.end());
    out.emplace_back(t, std::move(layers));
  }
  return out;
}

SimDag build_dag(const SimConfig& c) {
  c.validate();
  const std::size_t L = c.layers;
  const double unit = c.step_time_s / static_cast<double>(3 * L - 1);
  const double payload = c.bytes_per_layer * c.effective_bits() / 32.0;
  const double transfer =
      std::isinf(c.bandwidth_bps) ? 0.0 : payload * 8.0 / c.bandwidth_bps;
  const long lag = c.effective_tau();

  SimDag dag;
  std::vector<std::vector<std::size_t>> fwd(static_cast<std::size_t>(c.num_steps) + 1);
  std::vector<std::size_t> prev_bwd_param;
  std::vector<std::pair<std::size_t, std::pair<long, std::size_t>>> pending;  // reduce -> (step, layer)
  const auto schedule = reduce_schedule(c);
  std::size_t next_sync = 0;

  for (long s = 1; s <= c.num_steps; ++s) {
    std::vector<std::size_t>& f = fwd[static_cast<std::size_t>(s)];
    f.resize(L);
    std::vector<std::size_t> bp(L), ba(L, 0);
    for (std::size_t l = 0; l < L; ++l) {
      f[l] = dag.add({NodeKind::kFwd, l, s, unit, 0.0});
      if (l > 0) dag.connect(f[l - 1], f[l]);
      if (!prev_bwd_param.empty()) dag.connect(prev_bwd_param[l], f[l]);
    }
    for (std::size_t k = L; k-- > 0;) {
      bp[k] = dag.add({NodeKind::kBwdParam, k, s, unit, 0.0});
      if (k > 0) ba[k] = dag.add({NodeKind::kBwdAct, k, s, unit, 0.0});
      const std::size_t upstream = (k == L - 1) ? f[L - 1] : ba[k + 1];
      dag.connect(upstream, bp[k]);
      if (k > 0) dag.connect(upstream, ba[k]);
    }
    if (next_sync < schedule.size() && schedule[next_sync].first == s) {
      for (std::size_t l : schedule[next_sync].second) {
        const std::size_t r =
            dag.add({NodeKind::kReduce, l, s, transfer + c.link_latency_s, payload});
        dag.connect(bp[l], r);
        const long consumer = s + lag + 1;
        if (consumer <= c.num_steps) pending.push_back({r, {consumer, l}});
      }
      ++next_sync;
    }
    prev_bwd_param = bp;
  }
  for (const auto& [r, target] : pending)
    dag.connect(r, fwd[static_cast<std::size_t>(target.first)][target.second]);
  return dag;
}

SimResult simulate(const SimDag& dag) {
  const std::size_t n = dag.nodes.size();
  std::vector<std::vector<std::size_t>> succ(n);
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& [a, b] : dag.edges) {
    if (a >= n || b >= n) throw StructuralError("simulate: edge references a missing node");
    succ[a].push_back(b);
    ++indeg[b];
  }
  {
    std::vector<std::size_t> deg = indeg, stack;
    for (std::size_t i = 0; i < n; ++i)
      if (deg[i] == 0) stack.push_back(i);
    std::size_t seen = 0;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      ++seen;
      for (std::size_t v : succ[u])
        if (--deg[v] == 0) stack.push_back(v);
    }
    if (seen != n) {
      std::ostringstream os;
      os << "simulate: dependency cycle among " << (n - seen) << " nodes";
      throw StructuralError(os.str());
    }
  }

  using NetKey = std::tuple<double, long, std::size_t, std::size_t>;  // ready, step, layer, id
  std::set<std::size_t> compute_ready;
  std::set<NetKey> net_ready;
  using Event = std::pair<double, std::size_t>;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;

  auto make_ready = [&](std::size_t id, double t) {
    const SimNode& node = dag.nodes[id];
    if (node.is_compute())
      compute_ready.insert(id);
    else
      net_ready.insert({t, node.step, node.layer, id});
  };
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) make_ready(i, 0.0);

  SimResult res;
  double now = 0.0;
  bool cpu_busy = false, net_busy = false;
  std::size_t done = 0;
  while (true) {
    if (!cpu_busy && !compute_ready.empty()) {
      const std::size_t id = *compute_ready.begin();
      compute_ready.erase(compute_ready.begin());
      events.push({now + dag.nodes[id].duration, id});
      res.compute_busy += dag.nodes[id].duration;
      cpu_busy = true;
    }
    if (!net_busy && !net_ready.empty()) {
      const std::size_t id = std::get<3>(*net_ready.begin());
      net_ready.erase(net_ready.begin());
      events.push({now + dag.nodes[id].duration, id});
      res.bytes_total += dag.nodes[id].bytes;
      net_busy = true;
    }
    if (events.empty()) break;
    now = events.top().first;
    while (!events.empty() && events.top().first == now) {
      const std::size_t id = events.top().second;
      events.pop();
      ++done;
      if (dag.nodes[id].is_compute())
        cpu_busy = false;
      else
        net_busy = false;
      for (std::size_t v : succ[id])
        if (--indeg[v] == 0) make_ready(v, now);
    }
  }
  if (done != n) throw StructuralError("simulate: schedule stalled");
  res.makespan = now;
  res.cu = res.makespan > 0.0 ? res.compute_busy / res.makespan : 1.0;
  return res;
}

SimResult simulate(const SimConfig& config) { return simulate(build_dag(config)); }

SimConfig Profile::config(SimMethod method, double bandwidth_gbits) const {
  SimConfig c;
  c.layers = layers;
  c.bytes_per_layer = bytes_per_layer();
  c.step_time_s = step_time_s;
  c.bandwidth_bps = bandwidth_gbits * 1e9;
  c.link_latency_s = link_latency_s;
  c.method = method;
  c.H = H;
  c.fragment_size = fragment_size;
  c.pattern = pattern;
  c.tau = tau;
  c.num_steps = num_steps;
  return c;
}

Profile parse_profile(const std::string& json_text, const std::string& origin) {
  const auto j = detail::parse_json_text(json_text, origin);
  detail::ObjectReader r(j, "profile");
  Profile p;
  p.name = r.string("name");
  p.num_params = r.number("num_params");
  p.layers = r.count("layers");
  p.step_time_s = r.number("step_time_s");
  p.H = r.integer("H", p.H);
  p.fragment_size = r.count("fragment_size", p.fragment_size);
  if (r.has("pattern")) p.pattern = r.parsed("pattern", parse_fragment_pattern);
  p.tau = r.integer("tau", p.tau);
  p.num_steps = r.integer("num_steps", p.num_steps);
  p.link_latency_s = r.number("link_latency_s", p.link_latency_s);
  r.reject_unknown();
  if (!(p.num_params > 0.0)) throw ConfigError("profile.num_params: must be positive");
  if (p.layers < 1) throw ConfigError("profile.layers: must be >= 1");
  for (SimMethod m : all_sim_methods()) {
    try {
      p.config(m, 1.0).validate();
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + e.what());
    }
  }
  return p;
}

namespace detail {
std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}
}  // namespace detail

Profile load_profile_file(const std::string& path) {
  return parse_profile(detail::read_text_file(path), path);
}

std::vector<std::string> list_profiles(const std::string& dir) {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      names.push_back(entry.path().stem().string());
  std::sort(names.begin(), names.end());
  return names;
}

Profile load_profile(const std::string& dir, const std::string& name) {
  const std::vector<std::string> names = list_profiles(dir);
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string msg = "unknown profile '" + name + "'; valid profiles:";
    for (const auto& n : names) msg += " " + n;
    if (names.empty()) msg += " (none found in " + dir + ")";
    throw ConfigError(msg);
  }
  return load_profile_file((std::filesystem::path(dir) / (name + ".json")).string());
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0) || !(hi >= lo) || points < 1)
    throw ConfigError("bandwidth grid needs 0 < lo <= hi and at least one point");
  if (points == 1) return {lo};
  std::vector<double> g(points);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

std::vector<double> default_bandwidth_grid_gbits() { return log_grid(0.1, 1000.0, 50); }

std::vector<SweepRow> sweep(const Profile& profile, const std::vector<SimMethod>& methods,
                            const std::vector<double>& bandwidths_gbits, std::size_t threads) {
  if (bandwidths_gbits.empty()) throw ConfigError("sweep: bandwidth list is empty");
  std::vector<double> grid = bandwidths_gbits;
  std::sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  for (SimMethod m : methods)
    for (double bw : grid) rows.push_back({m, bw, {}});
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, rows.size()));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < rows.size(); i += workers)
        rows[i].result = simulate(profile.config(rows[i].method, rows[i].bandwidth_gbits));
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

const std::vector<double>& default_cu_targets() {
  static const std::vector<double> kTargets = {0.50, 0.80, 0.90, 0.95, 0.99};
  return kTargets;
}

std::vector<Threshold> thresholds(const std::vector<SweepRow>& rows,
                                  const std::vector<double>& targets) {
  std::vector<SimMethod> order;
  for (const SweepRow& r : rows)
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
  std::vector<Threshold> out;
  for (SimMethod m : order) {
    std::vector<const SweepRow*> mine;
    for (const SweepRow& r : rows)
      if (r.method == m) mine.push_back(&r);
    std::sort(mine.begin(), mine.end(), [](const SweepRow* a, const SweepRow* b) {
      return a->bandwidth_gbits < b->bandwidth_gbits;
    });
    for (double target : targets) {
      Threshold t{m, target, kInf};
      for (const SweepRow* r : mine)
        if (r->result.cu >= target) {
          t.bandwidth_gbits = r->bandwidth_gbits;
          break;
        }
      out.push_back(t);
    }
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "method,bandwidth_gbits,cu,makespan_s,bytes_total\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%.6f,%.6f,%.0f\n", to_string(r.method),
                  r.bandwidth_gbits, r.result.cu, r.result.makespan, r.result.bytes_total);
    out += buf;
  }
  return out;
}

std::string thresholds_csv(const std::vector<Threshold>& rows) {
  std::string out = "method,cu_target,bandwidth_gbits\n";
  char buf[256];
  for (const Threshold& t : rows) {
    if (std::isinf(t.bandwidth_gbits))
      std::snprintf(buf, sizeof buf, "%s,%.2f,inf\n", to_string(t.method), t.cu_target);
    else
      std::snprintf(buf, sizeof buf, "%s,%.2f,%.6g\n", to_string(t.method), t.cu_target,
                    t.bandwidth_gbits);
    out += buf;
  }
  return out;
}

MemoryOverhead memory_overhead(double num_params, std::size_t layers, std::size_t fragment_size) {
  if (!(num_params > 0.0) || layers < 1 || fragment_size < 1)
    throw ConfigError("memory: num_params, layers and fragment_size must be positive");
  if (fragment_size > layers) throw ConfigError("memory: fragment_size must be <= layers");
  MemoryOverhead m;
  m.inner_bytes = num_params * 3.0 * 4.0;
  m.outer_fragment_bytes =
      num_params * 2.0 * 4.0 * static_cast<double>(fragment_size) / static_cast<double>(layers);
  m.overhead_fraction = m.outer_fragment_bytes / m.inner_bytes;
  return m;
}

}  // namespace sdlab
