#pragma once

#include <array>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sdlab/engine.h"

namespace sdlab {

// step,train_loss,eval_loss_first,eval_loss_avg,eval_loss_outer,bytes_step,
// bytes_total,cos_sim_rest,cos_sim_win
std::string metrics_csv(const MetricsLog& log);

nlohmann::json summary_json(const TrainConfig& config, const RunOutput& run);

// final_params.bin: 8-byte magic, u32 version, u32 reserved (0), u64 count,
// then count little-endian f32 values in block order.
inline constexpr std::array<char, 8> kParamsMagic = {'S', 'D', 'L', 'P', 'A', 'R', 'A', 'M'};
inline constexpr std::uint32_t kParamsVersion = 1;

std::vector<std::uint8_t> encode_params(const std::vector<double>& params);
std::vector<float> decode_params(const std::vector<std::uint8_t>& bytes);

void write_file(const std::string& path, const std::string& text);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_binary_file(const std::string& path);

}  // namespace sdlab
