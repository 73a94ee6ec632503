// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
// usage: acceptance_test <work_dir> [path/to/dime]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dime/harness.hpp"
#include "dime/spectral_merge.hpp"
#include "dime/svd.hpp"
#include "dime/train.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dime;
using dime::testing::gaussian_matrix;
using dime::testing::gaussian_vector;
using dime::testing::reference_loss;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome svd_correctness() {
  const auto start = Clock::now();
  Rng rng(derive_seed(1, 0));
  double worst_recon = 0.0;
  double worst_orth = 0.0;
  for (int i = 0; i < 200; ++i) {
    // Every tenth matrix uses the largest shape, in both orientations.
    std::size_t m = 1 + uniform_index(rng, 128);
    std::size_t n = 1 + uniform_index(rng, 256);
    if (i % 10 == 0) {
      m = 128;
      n = 256;
    }
    if (i % 20 == 5) std::swap(m, n);
    const Matrix a = gaussian_matrix(m, n, rng);
    const SvdFactors f = thin_svd(a);
    worst_recon = std::max(worst_recon, relative_error(reconstruct(f), a));
    worst_orth = std::max(worst_orth, max_abs_deviation_from_identity(matmul(transpose(f.u), f.u)));
    worst_orth = std::max(worst_orth, max_abs_deviation_from_identity(matmul(f.vt, transpose(f.vt))));
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.passed = worst_recon <= 1e-10 && worst_orth <= 1e-10 && secs <= 60.0;
  o.detail = "200 matrices, max recon err " + fmt("%.3g", worst_recon) + ", max orth dev " +
             fmt("%.3g", worst_orth) + ", " + fmt("%.2f", secs) + " s (limit 60 s)";
  return o;
}

Outcome merge_identities() {
  const auto start = Clock::now();
  Rng rng(derive_seed(2, 0));
  double worst_idem = 0.0;
  double worst_zero = 0.0;
  double worst_full = 0.0;
  for (int i = 0; i < 100; ++i) {
    const bool down = i % 2 == 0;
    const std::size_t rows = down ? 16 : 48;
    const std::size_t cols = down ? 48 : 16;
    const Matrix mb = gaussian_matrix(rows, cols, rng, 0.3);
    const Matrix mt = gaussian_matrix(rows, cols, rng, 0.3);
    MergeConfig cfg;
    cfg.c_old = 1 + uniform_index(rng, 60);
    cfg.c_new = 1 + uniform_index(rng, 20);
    cfg.head_ratio = 0.3;

    cfg.gamma_head = 0.2;
    cfg.gamma_tail = 0.9;
    worst_idem = std::max(worst_idem, relative_error(merge_matrix(mb, mb, cfg), mb));

    cfg.gamma_head = cfg.gamma_tail = 0.0;
    worst_zero = std::max(worst_zero, relative_error(merge_matrix(mb, mt, cfg), mb));

    cfg.gamma_head = cfg.gamma_tail = 1.0;
    const double total = static_cast<double>(cfg.c_old + cfg.c_new);
    const double wb = static_cast<double>(cfg.c_old) / total;
    const double wt = static_cast<double>(cfg.c_new) / total;
    Matrix expected(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) expected(r, c) = wb * mb(r, c) + wt * mt(r, c);
    }
    worst_full = std::max(worst_full, relative_error(merge_matrix(mb, mt, cfg), expected));
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.passed = worst_idem <= 1e-8 && worst_zero <= 1e-8 && worst_full <= 1e-8 && secs <= 30.0;
  o.detail = "100 pairs, idempotence " + fmt("%.3g", worst_idem) + ", zero gate " + fmt("%.3g", worst_zero) +
             ", full gate " + fmt("%.3g", worst_full) + ", " + fmt("%.2f", secs) + " s (limit 30 s)";
  return o;
}

struct Toy {
  ModelState state;
  std::vector<Sample> batch;
  std::vector<ClassId> classes{0, 1, 2};
};

Toy make_toy(Rng& rng, bool uniform_labels) {
  Toy t;
  t.state.backbone = BackboneSpec::create(5, 6, rng());
  t.state.adapter = init_adapter(6, 3, 1.0, rng());
  t.state.adapter.w_up = gaussian_matrix(6, 3, rng, 0.5);
  for (double& g : t.state.adapter.ln_gain) g += 0.3 * standard_normal(rng);
  t.state.adapter.ln_bias = gaussian_vector(6, rng, 0.2);
  t.state.head = ClassifierHead(6);
  t.state.head.add_classes(t.classes);
  t.state.head.weight = gaussian_matrix(3, 6, rng);
  t.state.head.bias = gaussian_vector(3, rng, 0.3);
  const std::size_t n = uniform_labels ? 9 : 8;
  for (std::size_t i = 0; i < n; ++i) {
    // Imbalanced batches carry a 5:2:1 label mix.
    const ClassId y = uniform_labels ? static_cast<ClassId>(i % 3) : (i < 5 ? 0 : (i < 7 ? 1 : 2));
    t.batch.push_back({gaussian_vector(5, rng, 1.5), y});
  }
  return t;
}

std::vector<ClassId> labels_of(const std::vector<Sample>& batch) {
  std::vector<ClassId> out;
  for (const Sample& s : batch) out.push_back(s.label);
  return out;
}

// Parameter coordinate addressed by block and flat index.
double& coordinate(ModelState& m, int block, std::size_t idx) {
  switch (block) {
    case 0: return m.adapter.w_down.data()[idx];
    case 1: return m.adapter.w_up.data()[idx];
    case 2: return m.adapter.ln_gain[idx];
    case 3: return m.adapter.ln_bias[idx];
    case 4: return m.head.weight.data()[idx];
    default: return m.head.bias[idx];
  }
}

double gradient(const Gradients& g, int block, std::size_t idx) {
  switch (block) {
    case 0: return g.w_down.data()[idx];
    case 1: return g.w_up.data()[idx];
    case 2: return g.ln_gain[idx];
    case 3: return g.ln_bias[idx];
    case 4: return g.head_weight.data()[idx];
    default: return g.head_bias[idx];
  }
}

Outcome gradient_correctness() {
  const auto start = Clock::now();
  constexpr double kStep = 1e-5;
  const std::size_t block_sizes[6] = {18, 18, 6, 6, 18, 3};
  Rng rng(derive_seed(3, 0));
  std::size_t probes = 0;
  double worst = 0.0;
  for (int toy_index = 0; toy_index < 10; ++toy_index) {
    const Toy toy = make_toy(rng, false);
    const ClassPriors priors = class_priors(labels_of(toy.batch));
    const LossAndGradients lg = loss_and_gradients(toy.state, toy.batch, priors, toy.classes, true);
    for (int p = 0; p < 60; ++p) {
      const auto block = static_cast<int>(uniform_index(rng, 6));
      const std::size_t idx = uniform_index(rng, block_sizes[block]);
      ModelState plus = toy.state;
      ModelState minus = toy.state;
      coordinate(plus, block, idx) += kStep;
      coordinate(minus, block, idx) -= kStep;
      const double fd = (reference_loss(plus, toy.batch, priors, toy.classes, true) -
                         reference_loss(minus, toy.batch, priors, toy.classes, true)) /
                        (2.0 * kStep);
      const double rel = std::abs(gradient(lg.grads, block, idx) - fd) / std::max(std::abs(fd), 1e-8);
      worst = std::max(worst, rel);
      ++probes;
    }
  }
  const double secs = seconds_since(start);
  Outcome o;
  o.passed = probes >= 500 && worst <= 1e-4 && secs <= 30.0;
  o.detail = std::to_string(probes) + " probed coordinates, max rel err " + fmt("%.3g", worst) + ", " +
             fmt("%.2f", secs) + " s (limit 30 s)";
  return o;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

Outcome balanced_softmax_degeneracy() {
  Rng rng(derive_seed(4, 0));
  double worst_loss = 0.0;
  double worst_grad = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Toy toy = make_toy(rng, true);
    const ClassPriors priors = class_priors(labels_of(toy.batch));
    const LossAndGradients ce = loss_and_gradients(toy.state, toy.batch, priors, toy.classes, false);
    const LossAndGradients bsm = loss_and_gradients(toy.state, toy.batch, priors, toy.classes, true);
    worst_loss = std::max(worst_loss, std::abs(ce.loss - bsm.loss));
    worst_grad = std::max({worst_grad, max_abs_diff(ce.grads.w_down.data(), bsm.grads.w_down.data()),
                           max_abs_diff(ce.grads.w_up.data(), bsm.grads.w_up.data()),
                           max_abs_diff(ce.grads.ln_gain, bsm.grads.ln_gain),
                           max_abs_diff(ce.grads.ln_bias, bsm.grads.ln_bias),
                           max_abs_diff(ce.grads.head_weight.data(), bsm.grads.head_weight.data()),
                           max_abs_diff(ce.grads.head_bias, bsm.grads.head_bias)});
  }
  Outcome o;
  o.passed = worst_loss <= 1e-12 && worst_grad <= 1e-12;
  o.detail = "50 uniform-prior batches, max loss diff " + fmt("%.3g", worst_loss) + ", max grad diff " +
             fmt("%.3g", worst_grad);
  return o;
}

Outcome metric_identities() {
  Rng rng(derive_seed(5, 0));
  double worst_equal = 0.0;
  bool bounded = true;
  for (int i = 0; i < 500; ++i) {
    const std::size_t t = 1 + uniform_index(rng, 12);
    std::vector<double> acc(t);
    for (double& a : acc) a = static_cast<double>(uniform_index(rng, 10001)) / 10000.0;
    const std::vector<std::size_t> equal(t, 1 + uniform_index(rng, 10));
    worst_equal = std::max(worst_equal, std::abs(weighted_average_accuracy(acc, equal) - average_accuracy(acc)));
    std::vector<std::size_t> skewed(t);
    for (std::size_t& c : skewed) c = 1 + uniform_index(rng, 50);
    const double w = weighted_average_accuracy(acc, skewed);
    bounded = bounded && w >= *std::ranges::min_element(acc) && w <= *std::ranges::max_element(acc);
  }
  const double hand = weighted_average_accuracy(std::vector<double>{0.9, 0.5}, std::vector<std::size_t>{3, 1});
  Outcome o;
  o.passed = worst_equal <= 1e-12 && std::abs(hand - 0.74) <= 1e-15 && bounded;
  o.detail = "equal-split max diff " + fmt("%.3g", worst_equal) + ", hand case " + fmt("%.17g", hand) +
             ", bounds " + (bounded ? "held" : "violated") + " over 500 random sequences";
  return o;
}

Outcome protocol_correctness() {
  bool ok = true;
  std::ostringstream notes;
  for (double rho : {1.0, 0.1, 0.01, 0.001}) {
    const std::vector<double> s = step_proportions(rho, 10);
    ok = ok && s.front() == 1.0 && std::abs(s.back() - rho) <= 1e-15;
    const std::vector<std::size_t> counts = allocate_classes(s, 40);
    ok = ok && std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 40 &&
         std::ranges::all_of(counts, [](std::size_t c) { return c >= 1; });
    std::vector<std::size_t> sorted_counts = counts;
    std::ranges::sort(sorted_counts);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      StreamConfig cfg;
      cfg.rho = rho;
      cfg.seed = seed;
      const Stream stream = build_stream(cfg);
      std::set<ClassId> seen;
      std::size_t total = 0;
      for (const StepSpec& step : stream.protocol.steps) {
        total += step.class_ids.size();
        for (ClassId c : step.class_ids) ok = ok && seen.insert(c).second;
      }
      ok = ok && total == 40 && seen.size() == 40;
      std::vector<std::size_t> permuted = stream.protocol.step_sizes();
      std::ranges::sort(permuted);
      ok = ok && permuted == sorted_counts;
    }
    notes << " rho=" << rho << ":";
    for (std::size_t c : counts) notes << ' ' << c;
    notes << ';';
  }
  Outcome o;
  o.passed = ok;
  o.detail = "T=10, C=40, 5 seeds per rho;" + notes.str();
  return o;
}

// Criteria 7 and 9 share one ablation run.
struct AblationOutcome {
  Outcome directional;
  Outcome single_adapter;
};

AblationOutcome ablation_checks() {
  const auto start = Clock::now();
  const RunConfig cfg;  // defaults: C=40, T=10, rho=0.01, class_rho=0.01, seeds 0..4
  const std::vector<AblationRow> rows = run_ablation(cfg);
  const double secs = seconds_since(start);

  const auto mean_of = [&](Variant v) {
    for (const AblationRow& r : rows) {
      if (r.variant == v) return r.result.a_final.mean;
    }
    return std::nan("");
  };
  const double base = mean_of(Variant::kBase);
  const double sm = mean_of(Variant::kSm);
  const double sm_ccw = mean_of(Variant::kSmCcw);
  const double full = mean_of(Variant::kFull);

  AblationOutcome out;
  const bool full_beats_base = full > base;
  const bool ccw_not_worse = sm_ccw >= sm;
  out.directional.passed = full_beats_base && ccw_not_worse && secs <= 300.0;
  std::ostringstream d;
  d << "mean A_T over " << cfg.seed_list.size() << " seeds:";
  for (const AblationRow& r : rows) d << ' ' << variant_name(r.variant) << '=' << fmt("%.4f", r.result.a_final.mean);
  d << "; full>base " << (full_beats_base ? "yes" : "NO") << ", sm_ccw>=sm " << (ccw_not_worse ? "yes" : "NO")
    << "; " << fmt("%.1f", secs) << " s (limit 300 s)";
  out.directional.detail = d.str();

  bool single = true;
  std::size_t points = 0;
  std::set<std::size_t> sizes;
  for (const AblationRow& r : rows) {
    for (const SeedRun& run : r.result.runs) {
      for (const StepRecord& rec : run.report.records) {
        single = single && rec.adapter_sets == 1;
        sizes.insert(rec.adapter_parameters);
        ++points;
      }
      single = single && run.final_state.adapter.parameter_count() == *sizes.begin();
    }
  }
  static_assert(ModelState::adapter_count() == 1);
  out.single_adapter.passed = single && sizes.size() == 1;
  out.single_adapter.detail = std::to_string(points) + " evaluation points, adapter sets always 1, " +
                              std::to_string(sizes.size()) + " distinct adapter size(s) (" +
                              std::to_string(*sizes.begin()) + " parameters)";
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<fs::path> csv_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(fs::relative(e.path(), root));
  }
  std::ranges::sort(out);
  return out;
}

Outcome determinism(const fs::path& work, const std::string& cli) {
  const fs::path a = work / "ablate_a";
  const fs::path b = work / "ablate_b";
  fs::remove_all(a);
  fs::remove_all(b);
  std::string how;
  if (!cli.empty()) {
    for (const fs::path& dir : {a, b}) {
      const std::string cmd = "\"" + cli + "\" ablate --out \"" + dir.string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "ablate command failed: " + cmd};
    }
    how = "two CLI ablate executions";
  } else {
    const RunConfig cfg;
    emit_ablation(run_ablation(cfg), a);
    emit_ablation(run_ablation(cfg), b);
    how = "two in-process ablations";
  }
  const std::vector<fs::path> files_a = csv_files(a);
  const std::vector<fs::path> files_b = csv_files(b);
  bool same = !files_a.empty() && files_a == files_b;
  std::size_t compared = 0;
  for (const fs::path& f : files_a) {
    if (!same) break;
    same = read_file(a / f) == read_file(b / f);
    ++compared;
  }
  return {same, how + ", " + std::to_string(compared) + " CSV files compared byte for byte"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dime_acceptance";
  const std::string cli = argc > 2 ? argv[2] : "";
  fs::create_directories(work);

  std::vector<std::pair<std::string, std::function<Outcome()>>> checks;
  AblationOutcome ablation;
  checks.emplace_back("svd correctness", svd_correctness);
  checks.emplace_back("merge identities", merge_identities);
  checks.emplace_back("gradient correctness", gradient_correctness);
  checks.emplace_back("balanced softmax degeneracy", balanced_softmax_degeneracy);
  checks.emplace_back("metric identities", metric_identities);
  checks.emplace_back("protocol correctness", protocol_correctness);
  checks.emplace_back("directional ablation", [&] {
    ablation = ablation_checks();
    return ablation.directional;
  });
  checks.emplace_back("end-to-end determinism", [&] { return determinism(work, cli); });
  checks.emplace_back("single-adapter inference", [&] { return ablation.single_adapter; });

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::cout << "criterion " << i + 1 << ' ' << (o.passed ? "PASS" : "FAIL") << "  " << checks[i].first << ": "
              << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
