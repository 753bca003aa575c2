#include "sdlab/report.h"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sdlab/config.h"
#include "sdlab/errors.h"
#include "sdlab/version.h"

namespace sdlab {
namespace {

std::string fmt_real(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

// JSON numbers cannot hold NaN; those become null.
nlohmann::json real_or_null(double x) {
  return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x);
}

}  // namespace

std::string metrics_csv(const MetricsLog& log) {
  std::string out =
      "step,train_loss,eval_loss_first,eval_loss_avg,eval_loss_outer,bytes_step,bytes_total,"
      "cos_sim_rest,cos_sim_win\n";
  for (const MetricsRow& r : log.rows) {
    out += std::to_string(r.step) + "," + fmt_real(r.train_loss) + "," + fmt_real(r.eval_first) +
           "," + fmt_real(r.eval_avg) + "," + fmt_real(r.eval_outer) + "," +
           std::to_string(r.bytes_step) + "," + std::to_string(r.bytes_total) + "," +
           fmt_real(r.cos_rest) + "," + fmt_real(r.cos_win) + "\n";
  }
  return out;
}

nlohmann::json summary_json(const TrainConfig& config, const RunOutput& run) {
  const MetricsLog& log = run.log;
  nlohmann::json j;
  j["version"] = std::string(kVersion) + "+" + kGitDescribe;
  j["total_bytes"] = log.total_bytes;
  j["peak_step_bytes"] = log.peak_step_bytes;
  j["peak_step"] = log.peak_step;
  j["send_events"] = log.send_events;
  j["momentum_updates"] = log.momentum_updates;
  j["final_train_loss"] = real_or_null(log.final_train_loss);
  j["final_eval_loss"] = {{"first_replica", real_or_null(log.final_eval_first)},
                          {"replica_average", real_or_null(log.final_eval_avg)},
                          {"outer_params", real_or_null(log.final_eval_outer)}};
  j["outer_eval_fallback"] = log.outer_eval_fallback;
  j["num_params"] = run.layout.total();

  const FragmentSpec spec = config.fragment_spec();
  nlohmann::json frags = nlohmann::json::array();
  for (std::size_t p = 0; p < spec.num_fragments(); ++p)
    frags.push_back({{"blocks", spec.fragments[p]}, {"offset", spec.offsets[p]}});
  j["fragments"] = frags;
  j["config"] = train_config_to_json(config);
  j["wall_seconds"] = log.wall_seconds;
  return j;
}

std::vector<std::uint8_t> encode_params(const std::vector<double>& params) {
  std::vector<std::uint8_t> out(kParamsMagic.begin(), kParamsMagic.end());
  put_u32(out, kParamsVersion);
  put_u32(out, 0);
  put_u64(out, params.size());
  for (double v : params) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::vector<float> decode_params(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 8 + 4 + 4 + 8;
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kParamsMagic.data(), 8) != 0)
    throw StructuralError("final_params: bad magic");
  if (get_le(bytes, 8, 4) != kParamsVersion) throw StructuralError("final_params: bad version");
  const std::uint64_t n = get_le(bytes, 16, 8);
  if (bytes.size() != kHeader + 4 * n) throw StructuralError("final_params: truncated payload");
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, kHeader + 4 * i, 4)));
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f << text;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path + ": cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path + ": cannot open file");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace sdlab
