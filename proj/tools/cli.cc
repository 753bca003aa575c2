#include "cli.h"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdlab/config.h"
#include "sdlab/cusim.h"
#include "sdlab/engine.h"
#include "sdlab/errors.h"
#include "sdlab/report.h"
#include "sdlab/schedule.h"
#include "sdlab/version.h"

#ifndef SDLAB_PROFILES_DIR
#define SDLAB_PROFILES_DIR "profiles"
#endif

namespace sdlab::cli {
namespace {

namespace fs = std::filesystem;

std::string default_profiles_dir() {
  if (const char* env = std::getenv("SDLAB_PROFILES_DIR")) return env;
  return SDLAB_PROFILES_DIR;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(path, text);
}

std::vector<SimMethod> parse_methods(const std::string& s) {
  if (s == "all") return all_sim_methods();
  std::vector<SimMethod> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_sim_method(item));
  if (out.empty()) throw ConfigError("--methods: no method given");
  return out;
}

struct TrainArgs {
  std::string config;
  std::string out_dir = ".";
  std::size_t threads = 0;
  std::string dump_calendar;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = load_run_config(a.config);
  if (!rc.train) throw ConfigError(a.config + ": train: section is missing");
  TrainConfig cfg = *rc.train;
  if (a.threads > 0) cfg.threads = a.threads;
  cfg.validate();

  fs::create_directories(a.out_dir);
  if (!a.dump_calendar.empty()) {
    if (cfg.mode == TrainMode::kDataParallel)
      throw ConfigError("train.mode: data_parallel has no synchronization calendar");
    const std::vector<long> taus =
        cfg.is_streaming() ? cfg.taus : std::vector<long>(cfg.replicas, 0);
    emit(calendar_to_json(build_calendar(cfg.fragment_spec(), cfg.total_steps, taus)) + "\n",
         a.dump_calendar, out);
  }
  const RunOutput run = run_training(cfg);
  const fs::path dir(a.out_dir);
  write_file((dir / "metrics.csv").string(), metrics_csv(run.log));
  write_file((dir / "summary.json").string(), summary_json(cfg, run).dump(2) + "\n");
  write_file((dir / "final_params.bin").string(), encode_params(run.final_params));
  out << "train: " << to_string(cfg.mode) << " T=" << cfg.total_steps
      << " final_eval_loss=" << run.log.final_eval(cfg.eval_mode)
      << " total_bytes=" << run.log.total_bytes << " -> " << a.out_dir << "\n";
  return kExitOk;
}

struct SimArgs {
  std::string profile;
  std::string config;
  std::string profiles_dir = default_profiles_dir();
  std::string method;
  std::optional<long> tau;
  std::optional<double> bandwidth;
  std::string out;
};

Profile pick_profile(const std::string& name, const std::optional<ProfileRef>& from_config,
                     const std::string& dir) {
  if (!name.empty()) return load_profile(dir, name);
  if (from_config) return from_config->resolve(dir);
  throw ConfigError("no profile: pass --profile or a config with a profile");
}

int cmd_simulate(const SimArgs& a, std::ostream& out) {
  std::optional<SimulateSpec> spec;
  if (!a.config.empty()) {
    RunConfig rc = load_run_config(a.config);
    if (!rc.simulate) throw ConfigError(a.config + ": simulate: section is missing");
    spec = rc.simulate;
  }
  const Profile profile =
      pick_profile(a.profile, spec ? std::optional<ProfileRef>(spec->profile) : std::nullopt,
                   a.profiles_dir);
  const SimMethod method = !a.method.empty() ? parse_sim_method(a.method)
                           : spec            ? spec->method
                                             : SimMethod::kStreamingOverlap;
  const double bw = a.bandwidth.value_or(spec ? spec->bandwidth_gbits : 10.0);
  SimConfig sc = profile.config(method, bw);
  if (a.tau)
    sc.tau = *a.tau;
  else if (spec && spec->tau)
    sc.tau = *spec->tau;
  const SimResult r = simulate(sc);
  emit(sweep_csv({SweepRow{method, bw, r}}), a.out, out);
  return kExitOk;
}

struct SweepArgs {
  std::string profile;
  std::string config;
  std::string profiles_dir = default_profiles_dir();
  std::string methods;
  std::optional<long> tau;
  std::string out;
  std::string thresholds;
  std::size_t threads = 1;
};

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  SweepSpec spec;
  std::optional<ProfileRef> ref;
  if (!a.config.empty()) {
    RunConfig rc = load_run_config(a.config);
    if (!rc.sweep) throw ConfigError(a.config + ": sweep: section is missing");
    spec = *rc.sweep;
    ref = spec.profile;
  }
  Profile profile = pick_profile(a.profile, ref, a.profiles_dir);
  if (!a.methods.empty()) spec.methods = parse_methods(a.methods);
  if (a.tau)
    profile.tau = *a.tau;
  else if (spec.tau)
    profile.tau = *spec.tau;
  const std::vector<SweepRow> rows =
      sweep(profile, spec.methods, spec.bandwidths_gbits, std::max<std::size_t>(1, a.threads));
  emit(sweep_csv(rows), a.out, out);
  if (!a.thresholds.empty())
    emit(thresholds_csv(thresholds(rows, spec.cu_targets)), a.thresholds, out);
  return kExitOk;
}

struct MemoryArgs {
  std::string config;
  std::optional<double> num_params;
  std::optional<std::size_t> layers;
  std::optional<std::size_t> fragment_size;
};

int cmd_memory(const MemoryArgs& a, std::ostream& out) {
  MemorySpec spec;
  bool have = false;
  if (!a.config.empty()) {
    RunConfig rc = load_run_config(a.config);
    if (!rc.memory) throw ConfigError(a.config + ": memory: section is missing");
    spec = *rc.memory;
    have = true;
  }
  if (a.num_params) spec.num_params = *a.num_params;
  if (a.layers) spec.layers = *a.layers;
  if (a.fragment_size) spec.fragment_size = *a.fragment_size;
  if (!have && (!a.num_params || !a.layers))
    throw ConfigError("memory: --num-params and --layers are required without --config");
  const MemoryOverhead m = memory_overhead(spec.num_params, spec.layers, spec.fragment_size);
  nlohmann::json j;
  j["num_params"] = spec.num_params;
  j["layers"] = spec.layers;
  j["fragment_size"] = spec.fragment_size;
  j["inner_bytes"] = m.inner_bytes;
  j["inner_gib"] = m.inner_bytes / kGiB;
  j["outer_fragment_bytes"] = m.outer_fragment_bytes;
  j["outer_fragment_gib"] = m.outer_fragment_bytes / kGiB;
  j["overhead_fraction"] = m.overhead_fraction;
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desk-scale lab for streamed fragment synchronization"};
  app.set_version_flag("--version", std::string(kVersion) + "+" + kGitDescribe);
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run simulated replicas and write metrics");
  t->add_option("--config", train.config, "JSON config with a train section")->required();
  t->add_option("--out", train.out_dir, "Output directory");
  t->add_option("--threads", train.threads, "Worker threads (overrides the config)");
  t->add_option("--dump-calendar", train.dump_calendar, "Write the sync calendar JSON here");

  SimArgs sim;
  auto* s = app.add_subcommand("simulate", "Compute utilization at one bandwidth");
  s->add_option("--profile", sim.profile, "Built-in profile name");
  s->add_option("--config", sim.config, "JSON config with a simulate section");
  s->add_option("--profiles-dir", sim.profiles_dir, "Directory of profile JSON files");
  s->add_option("--method", sim.method, "Method name (default streaming_overlap)");
  s->add_option("--tau", sim.tau, "Overlap delay in steps");
  s->add_option("--bandwidth", sim.bandwidth, "Bandwidth in Gbit/s");
  s->add_option("--out", sim.out, "Output CSV path (default stdout)");

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Compute utilization over a bandwidth grid");
  w->add_option("--profile", sw.profile, "Built-in profile name");
  w->add_option("--config", sw.config, "JSON config with a sweep section");
  w->add_option("--profiles-dir", sw.profiles_dir, "Directory of profile JSON files");
  w->add_option("--methods", sw.methods, "'all' or a comma-separated list");
  w->add_option("--tau", sw.tau, "Overlap delay in steps");
  w->add_option("--out", sw.out, "Output CSV path (default stdout)");
  w->add_option("--thresholds", sw.thresholds, "Also write bandwidth-to-reach-CU CSV here ('-' = stdout)");
  w->add_option("--threads", sw.threads, "Worker threads");

  MemoryArgs mem;
  auto* m = app.add_subcommand("memory", "Outer-state memory overhead arithmetic");
  m->add_option("--config", mem.config, "JSON config with a memory section");
  m->add_option("--num-params", mem.num_params, "Parameter count (e.g. 100e9)");
  m->add_option("--layers", mem.layers, "Number of layers");
  m->add_option("--fragment-size", mem.fragment_size, "Layers per fragment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*t) return cmd_train(train, out);
    if (*s) return cmd_simulate(sim, out);
    if (*w) return cmd_sweep(sw, out);
    if (*m) return cmd_memory(mem, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace sdlab::cli
