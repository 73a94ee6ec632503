// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dime/spectral_merge.hpp"
#include "dime/stream.hpp"
#include "dime/train.hpp"

namespace dime {

/// Ablation ladder, from direct averaging up to the full method.
enum class Variant { kBase, kSm, kSmCcw, kSmCcwRtm, kFull };

inline constexpr Variant kAllVariants[] = {Variant::kBase, Variant::kSm, Variant::kSmCcw,
                                           Variant::kSmCcwRtm, Variant::kFull};

std::string_view variant_name(Variant v) noexcept;
Variant parse_variant(std::string_view name);

struct RunConfig {
  StreamConfig stream;  // stream.seed is overwritten per run seed
  std::size_t feature_dim = 48;
  std::size_t adapter_dim = 16;
  double scale = 1.0;
  TrainConfig train;  // train.seed and use_balanced_softmax are set per run
  MergeConfig merge;  // c_old/c_new are set per step
  Variant variant = Variant::kFull;
  std::string output_dir = "dime_out";
  std::vector<std::uint64_t> seed_list{0, 1, 2, 3, 4};

  void validate() const;
};

/// Sets one field by its key name, e.g. ("gamma_head", "0.2"). Throws
/// std::invalid_argument on unknown keys or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies "key=value" text; blank lines and lines starting with '#' are
/// skipped.
void apply_config_text(RunConfig& cfg, std::string_view text);
RunConfig load_config_file(const std::filesystem::path& path);

/// key=value echo of every field, in a fixed order; parseable by
/// apply_config_text.
std::string format_config(const RunConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(std::string_view text);
std::vector<double> parse_value_list(std::string_view text);

}  // namespace dime
