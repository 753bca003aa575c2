#include "sdlab/config.h"

#include "json_reader.h"
#include "sdlab/errors.h"

namespace sdlab {
namespace {

using detail::ObjectReader;
using nlohmann::json;

ModelDims read_model(ObjectReader r) {
  ModelDims d;
  d.d_in = r.count("d_in", d.d_in);
  d.d_hidden = r.count("d_hidden", d.d_hidden);
  d.d_out = r.count("d_out", d.d_out);
  d.num_blocks = r.count("L", d.num_blocks);
  r.reject_unknown();
  return d;
}

CodecSpec read_codec(ObjectReader r, CodecKind fallback) {
  CodecSpec c;
  c.kind = r.has("kind") ? r.parsed("kind", parse_codec_kind) : fallback;
  c.keep_fraction = r.number("keep_fraction", c.keep_fraction);
  c.drop_prob = r.number("drop_prob", c.drop_prob);
  r.reject_unknown();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.path() + ": " + e.what());
  }
  return c;
}

TrainConfig read_train(ObjectReader r) {
  TrainConfig c;
  c.mode = r.parsed("mode", parse_train_mode);
  if (r.has("model")) c.model = read_model(r.object("model"));
  c.replicas = r.count("M");
  c.total_steps = r.integer("T");
  c.period = r.integer("H");
  c.fragment_size = r.count("fragment_size", c.fragment_size);
  if (r.has("pattern")) c.pattern = r.parsed("pattern", parse_fragment_pattern);

  const bool overlapped = c.mode == TrainMode::kStreamingOverlapped ||
                          c.mode == TrainMode::kStreamingOverlappedQuantized;
  c.taus.assign(c.replicas, overlapped ? 1 : 0);
  if (r.has("tau")) {
    const json& t = r.raw("tau");
    if (t.is_number_integer()) {
      c.taus.assign(c.replicas, t.get<long>());
    } else if (t.is_array()) {
      if (t.size() != c.replicas)
        throw ConfigError(r.field("tau") + ": expected " + std::to_string(c.replicas) +
                          " entries (one per replica), got " + std::to_string(t.size()));
      c.taus.clear();
      for (const json& v : t) {
        if (!v.is_number_integer()) throw ConfigError(r.field("tau") + ": expected integers");
        c.taus.push_back(v.get<long>());
      }
    } else {
      throw ConfigError(r.field("tau") + ": expected an integer or an array of integers");
    }
  }
  c.alpha = r.number("alpha", c.alpha);
  const CodecKind default_codec = c.mode == TrainMode::kStreamingOverlappedQuantized
                                      ? CodecKind::kE3M0
                                      : CodecKind::kIdentity;
  c.codec.kind = default_codec;
  if (r.has("codec")) c.codec = read_codec(r.object("codec"), default_codec);
  if (r.has("inner")) {
    ObjectReader in = r.object("inner");
    c.inner.lr = in.number("lr", c.inner.lr);
    c.inner.beta1 = in.number("beta1", c.inner.beta1);
    c.inner.beta2 = in.number("beta2", c.inner.beta2);
    c.inner.eps = in.number("eps", c.inner.eps);
    c.inner.weight_decay = in.number("weight_decay", c.inner.weight_decay);
    in.reject_unknown();
  }
  if (r.has("outer")) {
    ObjectReader out = r.object("outer");
    c.outer.lr = out.number("lr", c.outer.lr);
    c.outer.momentum = out.number("momentum", c.outer.momentum);
    out.reject_unknown();
  }
  c.batch_size = r.count("batch_size", c.batch_size);
  c.seed = r.seed("seed", c.seed);
  if (r.has("eval")) {
    ObjectReader ev = r.object("eval");
    c.eval_interval = ev.integer("interval", c.eval_interval);
    c.eval_size = ev.count("size", c.eval_size);
    if (ev.has("mode")) c.eval_mode = ev.parsed("mode", parse_eval_mode);
    ev.reject_unknown();
  }
  c.freeze_fedpart = r.boolean("freeze_fedpart", c.freeze_fedpart);
  c.identical_shards = r.boolean("identical_shards", c.identical_shards);
  c.threads = r.count("threads", c.threads);
  if (r.has("precision")) c.precision = r.parsed("precision", parse_precision);
  r.reject_unknown();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.path() + ": " + e.what());
  }
  return c;
}

ProfileRef read_profile_ref(ObjectReader& r) {
  ProfileRef p;
  const json& v = r.raw("profile");
  if (v.is_string())
    p.name = v.get<std::string>();
  else if (v.is_object())
    p.inline_profile = parse_profile(v.dump(), r.field("profile"));
  else
    throw ConfigError(r.field("profile") + ": expected a profile name or an object");
  return p;
}

std::vector<double> read_number_list(ObjectReader& r, const std::string& key) {
  const json& v = r.raw(key);
  if (!v.is_array() || v.empty())
    throw ConfigError(r.field(key) + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number()) throw ConfigError(r.field(key) + ": expected numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::optional<long> read_tau(ObjectReader& r) {
  if (!r.has("tau")) return std::nullopt;
  return r.integer("tau");
}

SimulateSpec read_simulate(ObjectReader r) {
  SimulateSpec s;
  s.profile = read_profile_ref(r);
  s.method = r.parsed("method", parse_sim_method);
  s.bandwidth_gbits = r.number("bandwidth_gbits");
  if (!(s.bandwidth_gbits > 0.0)) throw ConfigError(r.field("bandwidth_gbits") + ": must be > 0");
  s.tau = read_tau(r);
  r.reject_unknown();
  return s;
}

SweepSpec read_sweep(ObjectReader r) {
  SweepSpec s;
  s.profile = read_profile_ref(r);
  if (r.has("methods")) {
    const json& m = r.raw("methods");
    if (m.is_string() && m.get<std::string>() == "all") {
      s.methods = all_sim_methods();
    } else if (m.is_array() && !m.empty()) {
      s.methods.clear();
      for (const json& x : m) {
        if (!x.is_string()) throw ConfigError(r.field("methods") + ": expected method names");
        try {
          s.methods.push_back(parse_sim_method(x.get<std::string>()));
        } catch (const ConfigError& e) {
          throw ConfigError(r.field("methods") + ": " + e.what());
        }
      }
    } else {
      throw ConfigError(r.field("methods") + ": expected \"all\" or an array of method names");
    }
  }
  if (r.has("bandwidths_gbits")) {
    s.bandwidths_gbits = read_number_list(r, "bandwidths_gbits");
    for (double b : s.bandwidths_gbits)
      if (!(b > 0.0)) throw ConfigError(r.field("bandwidths_gbits") + ": values must be > 0");
  }
  if (r.has("cu_targets")) {
    s.cu_targets = read_number_list(r, "cu_targets");
    for (double t : s.cu_targets)
      if (!(t > 0.0 && t <= 1.0)) throw ConfigError(r.field("cu_targets") + ": values must be in (0, 1]");
  }
  s.tau = read_tau(r);
  r.reject_unknown();
  return s;
}

MemorySpec read_memory(ObjectReader r) {
  MemorySpec m;
  m.num_params = r.number("num_params");
  m.layers = r.count("layers");
  m.fragment_size = r.count("fragment_size", m.fragment_size);
  r.reject_unknown();
  return m;
}

}  // namespace

Profile ProfileRef::resolve(const std::string& profile_dir) const {
  if (inline_profile) return *inline_profile;
  if (name) return load_profile(profile_dir, *name);
  throw ConfigError("no profile given");
}

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  const json j = detail::parse_json_text(json_text, origin);
  ObjectReader root(j, "");
  RunConfig rc;
  if (root.has("train")) rc.train = read_train(root.object("train"));
  if (root.has("simulate")) rc.simulate = read_simulate(root.object("simulate"));
  if (root.has("sweep")) rc.sweep = read_sweep(root.object("sweep"));
  if (root.has("memory")) rc.memory = read_memory(root.object("memory"));
  root.reject_unknown();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(detail::read_text_file(path), path);
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["model"] = {{"d_in", c.model.d_in},
                {"d_hidden", c.model.d_hidden},
                {"d_out", c.model.d_out},
                {"L", c.model.num_blocks}};
  j["M"] = c.replicas;
  j["T"] = c.total_steps;
  j["H"] = c.period;
  j["fragment_size"] = c.fragment_size;
  j["pattern"] = to_string(c.pattern);
  j["tau"] = c.taus;
  j["alpha"] = c.alpha;
  j["codec"] = {{"kind", to_string(c.codec.kind)},
                {"keep_fraction", c.codec.keep_fraction},
                {"drop_prob", c.codec.drop_prob}};
  j["inner"] = {{"lr", c.inner.lr},
                {"beta1", c.inner.beta1},
                {"beta2", c.inner.beta2},
                {"eps", c.inner.eps},
                {"weight_decay", c.inner.weight_decay}};
  j["outer"] = {{"lr", c.outer.lr}, {"momentum", c.outer.momentum}};
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["eval"] = {{"interval", c.eval_interval}, {"size", c.eval_size}, {"mode", to_string(c.eval_mode)}};
  j["freeze_fedpart"] = c.freeze_fedpart;
  j["identical_shards"] = c.identical_shards;
  j["threads"] = c.threads;
  j["precision"] = to_string(c.precision);
  return j;
}

}  // namespace sdlab
