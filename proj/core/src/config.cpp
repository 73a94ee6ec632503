// SPDX-License-Identifier: Apache-2.0

#include "dime/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dime {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string bad_value(std::string_view key, std::string_view value) {
  return "invalid value '" + std::string(value) + "' for key '" + std::string(key) + "'";
}

double to_double(std::string_view key, std::string_view value) {
  const std::string text(trim(value));
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument(bad_value(key, value));
  }
  if (used != text.size()) throw std::invalid_argument(bad_value(key, value));
  return out;
}

template <typename Int>
Int to_integer(std::string_view key, std::string_view value) {
  const std::string_view text = trim(value);
  Int out{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument(bad_value(key, value));
  }
  return out;
}

std::vector<std::string_view> split_commas(std::string_view text) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto stop = comma == std::string_view::npos ? text.size() : comma;
    const auto part = trim(text.substr(start, stop - start));
    if (!part.empty()) parts.push_back(part);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return parts;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kSm: return "sm";
    case Variant::kSmCcw: return "sm_ccw";
    case Variant::kSmCcwRtm: return "sm_ccw_rtm";
    case Variant::kFull: return "full";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == trim(name)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (expected base, sm, sm_ccw, sm_ccw_rtm or full)");
}

void RunConfig::validate() const {
  if (seed_list.empty()) throw std::invalid_argument("RunConfig: seed list is empty");
  if (stream.total_classes < stream.num_steps) {
    throw std::invalid_argument("RunConfig: total_classes must be at least num_steps");
  }
  if (stream.num_steps == 0) throw std::invalid_argument("RunConfig: num_steps must be positive");
  if (!(stream.rho > 0.0 && stream.rho <= 1.0)) throw std::invalid_argument("RunConfig: rho must lie in (0, 1]");
  if (!(stream.class_rho > 0.0 && stream.class_rho <= 1.0)) {
    throw std::invalid_argument("RunConfig: class_rho must lie in (0, 1]");
  }
  if (stream.n_max == 0) throw std::invalid_argument("RunConfig: n_max must be positive");
  if (adapter_dim == 0 || adapter_dim >= feature_dim) {
    throw std::invalid_argument("RunConfig: adapter_dim must lie in [1, feature_dim)");
  }
  train.validate();
  MergeConfig probe = merge;
  probe.c_new = 1;
  probe.validate();
}

void apply_setting(RunConfig& cfg, std::string_view raw_key, std::string_view value) {
  const std::string_view key = trim(raw_key);
  if (key == "total_classes") cfg.stream.total_classes = to_integer<std::size_t>(key, value);
  else if (key == "num_steps") cfg.stream.num_steps = to_integer<std::size_t>(key, value);
  else if (key == "rho") cfg.stream.rho = to_double(key, value);
  else if (key == "class_rho") cfg.stream.class_rho = to_double(key, value);
  else if (key == "n_max") cfg.stream.n_max = to_integer<std::size_t>(key, value);
  else if (key == "input_dim") cfg.stream.input_dim = to_integer<std::size_t>(key, value);
  else if (key == "noise_scale") cfg.stream.noise_scale = to_double(key, value);
  else if (key == "separation") cfg.stream.separation = to_double(key, value);
  else if (key == "test_per_class") cfg.stream.test_per_class = to_integer<std::size_t>(key, value);
  else if (key == "feature_dim") cfg.feature_dim = to_integer<std::size_t>(key, value);
  else if (key == "adapter_dim") cfg.adapter_dim = to_integer<std::size_t>(key, value);
  else if (key == "scale") cfg.scale = to_double(key, value);
  else if (key == "learning_rate") cfg.train.learning_rate = to_double(key, value);
  else if (key == "epochs") cfg.train.epochs = to_integer<int>(key, value);
  else if (key == "batch_size") cfg.train.batch_size = to_integer<std::size_t>(key, value);
  else if (key == "weight_decay") cfg.train.weight_decay = to_double(key, value);
  else if (key == "head_ratio") cfg.merge.head_ratio = to_double(key, value);
  else if (key == "gamma_head") cfg.merge.gamma_head = to_double(key, value);
  else if (key == "gamma_tail") cfg.merge.gamma_tail = to_double(key, value);
  else if (key == "variant") cfg.variant = parse_variant(value);
  else if (key == "output_dir") cfg.output_dir = std::string(trim(value));
  else if (key == "seed_list" || key == "seeds") cfg.seed_list = parse_seed_list(value);
  else throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    const auto stop = nl == std::string_view::npos ? text.size() : nl;
    const std::string_view line = trim(text.substr(start, stop - start));
    ++line_no;
    start = stop + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, buf.str());
  return cfg;
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "total_classes=" << cfg.stream.total_classes << '\n'
      << "num_steps=" << cfg.stream.num_steps << '\n'
      << "rho=" << g17(cfg.stream.rho) << '\n'
      << "class_rho=" << g17(cfg.stream.class_rho) << '\n'
      << "n_max=" << cfg.stream.n_max << '\n'
      << "input_dim=" << cfg.stream.input_dim << '\n'
      << "noise_scale=" << g17(cfg.stream.noise_scale) << '\n'
      << "separation=" << g17(cfg.stream.separation) << '\n'
      << "test_per_class=" << cfg.stream.test_per_class << '\n'
      << "feature_dim=" << cfg.feature_dim << '\n'
      << "adapter_dim=" << cfg.adapter_dim << '\n'
      << "scale=" << g17(cfg.scale) << '\n'
      << "learning_rate=" << g17(cfg.train.learning_rate) << '\n'
      << "epochs=" << cfg.train.epochs << '\n'
      << "batch_size=" << cfg.train.batch_size << '\n'
      << "weight_decay=" << g17(cfg.train.weight_decay) << '\n'
      << "head_ratio=" << g17(cfg.merge.head_ratio) << '\n'
      << "gamma_head=" << g17(cfg.merge.gamma_head) << '\n'
      << "gamma_tail=" << g17(cfg.merge.gamma_tail) << '\n'
      << "variant=" << variant_name(cfg.variant) << '\n'
      << "output_dir=" << cfg.output_dir << '\n'
      << "seed_list=";
  for (std::size_t i = 0; i < cfg.seed_list.size(); ++i) out << (i ? "," : "") << cfg.seed_list[i];
  out << '\n';
  return out.str();
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  for (std::string_view part : split_commas(text)) seeds.push_back(to_integer<std::uint64_t>("seeds", part));
  if (seeds.empty()) throw std::invalid_argument("empty seed list");
  return seeds;
}

std::vector<double> parse_value_list(std::string_view text) {
  std::vector<double> values;
  for (std::string_view part : split_commas(text)) values.push_back(to_double("values", part));
  if (values.empty()) throw std::invalid_argument("empty value list");
  return values;
}

}  // namespace dime
