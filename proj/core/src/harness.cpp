// SPDX-License-Identifier: Apache-2.0

#include "dime/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include "dime/rng.hpp"
#include "dime/spectral_merge.hpp"

namespace dime {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string tier_text(const std::optional<double>& v) { return v ? fixed6(*v) : "NA"; }

AdapterParams combine(Variant variant, const AdapterParams& base, const AdapterParams& fresh,
                      std::size_t c_old, std::size_t c_new, const MergeConfig& tuned) {
  MergeConfig m = tuned;
  switch (variant) {
    case Variant::kBase:
      return average_adapters(base, fresh);
    case Variant::kSm:
      m.c_old = 1;
      m.c_new = 1;
      m.gamma_head = m.gamma_tail = 1.0;
      break;
    case Variant::kSmCcw:
      m.c_old = c_old;
      m.c_new = c_new;
      m.gamma_head = m.gamma_tail = 1.0;
      break;
    case Variant::kSmCcwRtm:
    case Variant::kFull:
      m.c_old = c_old;
      m.c_new = c_new;
      break;
  }
  return merge_adapter(base, fresh, m);
}

StepRecord evaluate(const ModelState& state, const Stream& stream, std::size_t step_pos,
                    std::size_t accumulated_classes) {
  const std::vector<Sample> test = accumulated_test_samples(stream, step_pos);
  std::vector<Prediction> preds;
  preds.reserve(test.size());
  for (const Sample& s : test) preds.push_back({predict(state, s.x), s.label});
  StepAccuracy acc = step_accuracy(preds);

  StepRecord rec;
  rec.step_index = stream.protocol.steps[step_pos].step_index;
  rec.accumulated_classes = accumulated_classes;
  rec.accuracy = acc.accuracy;
  rec.per_class = std::move(acc.per_class);
  rec.adapter_sets = ModelState::adapter_count();
  rec.adapter_parameters = state.adapter.parameter_count();
  return rec;
}

}  // namespace

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  Aggregate a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

SeedRun run_continual(const RunConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  StreamConfig stream_cfg = cfg.stream;
  stream_cfg.seed = seed;
  const Stream stream = build_stream(stream_cfg);

  ModelState state{
      BackboneSpec::create(cfg.stream.input_dim, cfg.feature_dim, seed),
      init_adapter(cfg.feature_dim, cfg.adapter_dim, cfg.scale, derive_seed(seed, seed_purpose::kAdapterInit, 0)),
      ClassifierHead(cfg.feature_dim)};

  SeedRun out;
  out.seed = seed;
  out.protocol = stream.protocol;
  std::vector<StepRecord> records;
  std::size_t seen_classes = 0;
  for (std::size_t t = 0; t < stream.protocol.steps.size(); ++t) {
    const StepSpec& step = stream.protocol.steps[t];
    try {
      state.head.add_classes(step.class_ids);
      const AdapterParams task_init =
          fresh_task_adapter(state.adapter, derive_seed(seed, seed_purpose::kAdapterInit, t + 1));
      TrainConfig train_cfg = cfg.train;
      train_cfg.seed = derive_seed(seed, seed_purpose::kShuffle, t);
      train_cfg.use_balanced_softmax = cfg.variant == Variant::kFull;

      const std::vector<Sample> data = step_train_samples(stream, step);
      TrainResult trained = train_task(state.backbone, task_init, state.head, data, step.class_ids, train_cfg);
      for (LossRecord r : trained.trace) {
        r.epoch += static_cast<int>(t) * cfg.train.epochs;
        out.loss_trace.push_back(r);
      }

      if (t == 0) {
        state.adapter = std::move(trained.adapter);
      } else {
        state.adapter = combine(cfg.variant, state.adapter, trained.adapter, seen_classes,
                                step.class_ids.size(), cfg.merge);
      }
      seen_classes += step.class_ids.size();
      state.validate();
      records.push_back(evaluate(state, stream, t, seen_classes));
    } catch (const std::exception& e) {
      throw std::runtime_error("seed " + std::to_string(seed) + ", step " +
                               std::to_string(step.step_index) + ": " + e.what());
    }
  }
  out.report = summarize(std::move(records), stream.protocol);
  out.final_state = std::move(state);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

RunResult run_seeds(const RunConfig& cfg) {
  cfg.validate();
  std::vector<std::future<SeedRun>> pending;
  pending.reserve(cfg.seed_list.size());
  for (std::uint64_t seed : cfg.seed_list) {
    pending.push_back(std::async(std::launch::async, [&cfg, seed] { return run_continual(cfg, seed); }));
  }
  RunResult result;
  result.config = cfg;
  for (auto& f : pending) result.runs.push_back(f.get());

  std::vector<double> af;
  std::vector<double> ab;
  std::vector<double> wab;
  for (const SeedRun& r : result.runs) {
    af.push_back(r.report.a_final);
    ab.push_back(r.report.a_bar);
    wab.push_back(r.report.wa_bar);
  }
  result.a_final = aggregate(af);
  result.a_bar = aggregate(ab);
  result.wa_bar = aggregate(wab);
  return result;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg) {
  std::vector<AblationRow> rows;
  for (Variant v : kAllVariants) {
    RunConfig c = cfg;
    c.variant = v;
    rows.push_back({v, run_seeds(c)});
  }
  return rows;
}

std::vector<SweepRow> run_sensitivity(const RunConfig& cfg, std::string_view parameter,
                                      std::span<const double> values) {
  if (std::ranges::find(kSweepParameters, parameter) == std::end(kSweepParameters)) {
    throw std::invalid_argument("unknown sweep parameter '" + std::string(parameter) +
                                "' (expected head_ratio, gamma_head, gamma_tail or rho)");
  }
  if (values.empty()) throw std::invalid_argument("run_sensitivity: no sweep values");
  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig c = cfg;
    apply_setting(c, parameter, g17(v));
    rows.push_back({std::string(parameter), v, run_seeds(c)});
  }
  return rows;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

namespace {

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string() +
                             (ec ? ": " + ec.message() : std::string()));
  }
}

}  // namespace

std::string summary_csv(const RunResult& result) {
  std::ostringstream out;
  out << "seed,A_T,Abar,wAbar,large,middle,small\n";
  for (const SeedRun& r : result.runs) {
    const MetricsReport& m = r.report;
    out << r.seed << ',' << fixed6(m.a_final) << ',' << fixed6(m.a_bar) << ',' << fixed6(m.wa_bar) << ','
        << tier_text(m.tiers.large) << ',' << tier_text(m.tiers.middle) << ','
        << tier_text(m.tiers.small) << '\n';
  }
  out << "mean," << fixed6(result.a_final.mean) << ',' << fixed6(result.a_bar.mean) << ','
      << fixed6(result.wa_bar.mean) << ",,,\n";
  out << "std," << fixed6(result.a_final.stddev) << ',' << fixed6(result.a_bar.stddev) << ','
      << fixed6(result.wa_bar.stddev) << ",,,\n";
  return out.str();
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "variant,A_T_mean,A_T_std,Abar_mean,Abar_std,wAbar_mean,wAbar_std\n";
  for (const AblationRow& row : rows) {
    const RunResult& r = row.result;
    out << variant_name(row.variant) << ',' << fixed6(r.a_final.mean) << ',' << fixed6(r.a_final.stddev)
        << ',' << fixed6(r.a_bar.mean) << ',' << fixed6(r.a_bar.stddev) << ',' << fixed6(r.wa_bar.mean)
        << ',' << fixed6(r.wa_bar.stddev) << '\n';
  }
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "param,value,A_T_mean,A_T_std,Abar_mean,Abar_std,wAbar_mean,wAbar_std\n";
  for (const SweepRow& row : rows) {
    const RunResult& r = row.result;
    char value[40];
    std::snprintf(value, sizeof value, "%g", row.value);
    out << row.parameter << ',' << value << ',' << fixed6(r.a_final.mean) << ',' << fixed6(r.a_final.stddev)
        << ',' << fixed6(r.a_bar.mean) << ',' << fixed6(r.a_bar.stddev) << ',' << fixed6(r.wa_bar.mean)
        << ',' << fixed6(r.wa_bar.stddev) << '\n';
  }
  return out.str();
}

void emit_results(const RunResult& result, const std::filesystem::path& dir) {
  ensure_directory(dir);
  std::ostringstream timing;
  for (const SeedRun& r : result.runs) {
    const std::string tag = "seed" + std::to_string(r.seed);

    std::ostringstream metrics;
    write_metrics_csv(metrics, r.report);
    write_file_atomic(dir / ("metrics_" + tag + ".csv"), metrics.str());

    std::ostringstream protocol;
    write_protocol(protocol, r.protocol);
    write_file_atomic(dir / ("protocol_" + tag + ".txt"), protocol.str());

    std::ostringstream loss;
    for (const LossRecord& l : r.loss_trace) loss << l.epoch << ' ' << l.batch << ' ' << g17(l.loss) << '\n';
    write_file_atomic(dir / ("loss_" + tag + ".log"), loss.str());

    timing << r.seed << ' ' << r.seconds << '\n';
  }
  write_file_atomic(dir / "summary.csv", summary_csv(result));
  write_file_atomic(dir / "config.txt", format_config(result.config));
  write_file_atomic(dir / "timing.txt", timing.str());
}

void emit_ablation(std::span<const AblationRow> rows, const std::filesystem::path& dir) {
  ensure_directory(dir);
  for (const AblationRow& row : rows) emit_results(row.result, dir / std::string(variant_name(row.variant)));
  write_file_atomic(dir / "ablation.csv", ablation_csv(rows));
}

void emit_sweep(std::span<const SweepRow> rows, const std::filesystem::path& dir) {
  ensure_directory(dir);
  for (const SweepRow& row : rows) {
    char value[40];
    std::snprintf(value, sizeof value, "%g", row.value);
    emit_results(row.result, dir / (row.parameter + "_" + value));
  }
  write_file_atomic(dir / "sweep.csv", sweep_csv(rows));
}

}  // namespace dime
