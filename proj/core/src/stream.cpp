// SPDX-License-Identifier: Apache-2.0

#include "dime/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "dime/rng.hpp"

namespace dime {

std::vector<std::size_t> StreamProtocol::step_sizes() const {
  std::vector<std::size_t> sizes;
  sizes.reserve(steps.size());
  for (const StepSpec& s : steps) sizes.push_back(s.class_ids.size());
  return sizes;
}

void StreamProtocol::validate() const {
  if (steps.size() != num_steps) throw std::logic_error("StreamProtocol: step count mismatch");
  std::vector<bool> seen(total_classes, false);
  std::size_t covered = 0;
  for (const StepSpec& s : steps) {
    if (s.class_ids.empty()) {
      throw std::logic_error("StreamProtocol: step " + std::to_string(s.step_index) + " is empty");
    }
    if (s.train_counts.size() != s.class_ids.size()) {
      throw std::logic_error("StreamProtocol: train counts do not match classes");
    }
    for (ClassId c : s.class_ids) {
      if (c < 0 || static_cast<std::size_t>(c) >= total_classes || seen[static_cast<std::size_t>(c)]) {
        throw std::logic_error("StreamProtocol: class " + std::to_string(c) +
                               " repeated or out of range");
      }
      seen[static_cast<std::size_t>(c)] = true;
      ++covered;
    }
  }
  if (covered != total_classes) throw std::logic_error("StreamProtocol: classes not fully covered");
}

std::vector<double> step_proportions(double rho, std::size_t t_steps) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("step_proportions: rho must lie in (0, 1]");
  if (t_steps == 0) throw std::invalid_argument("step_proportions: need at least one step");
  if (t_steps == 1) return {1.0};
  std::vector<double> s(t_steps);
  const double denom = static_cast<double>(t_steps - 1);
  for (std::size_t t = 0; t < t_steps; ++t) s[t] = std::pow(rho, static_cast<double>(t) / denom);
  s.back() = rho;
  return s;
}

std::vector<std::size_t> allocate_classes(std::span<const double> proportions,
                                          std::size_t total_classes) {
  const std::size_t t_steps = proportions.size();
  if (t_steps == 0) throw std::invalid_argument("allocate_classes: no steps");
  if (total_classes < t_steps) {
    throw std::invalid_argument("allocate_classes: " + std::to_string(total_classes) +
                                " classes cannot fill " + std::to_string(t_steps) + " steps");
  }
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("allocate_classes: proportions must be positive");
    sum += p;
  }

  std::vector<std::size_t> counts(t_steps);
  std::vector<double> remainder(t_steps);
  std::size_t assigned = 0;
  for (std::size_t t = 0; t < t_steps; ++t) {
    const double quota = static_cast<double>(total_classes) * proportions[t] / sum;
    const double whole = std::floor(quota);
    counts[t] = static_cast<std::size_t>(whole);
    remainder[t] = quota - whole;
    if (counts[t] == 0) {
      counts[t] = 1;
      remainder[t] = -1.0;  // already rounded up
    }
    assigned += counts[t];
  }

  std::vector<std::size_t> order(t_steps);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total_classes; k = (k + 1) % t_steps) {
    ++counts[order[k]];
    ++assigned;
  }
  // The floor of one can overshoot; take back from the largest, latest step.
  while (assigned > total_classes) {
    std::size_t pick = 0;
    for (std::size_t t = 0; t < t_steps; ++t) {
      if (counts[t] >= counts[pick]) pick = t;
    }
    --counts[pick];
    --assigned;
  }
  return counts;
}

std::vector<std::size_t> permute_steps(std::span<const std::size_t> counts, std::uint64_t seed) {
  if (counts.empty()) throw std::invalid_argument("permute_steps: empty count list");
  std::vector<std::size_t> out(counts.begin(), counts.end());
  Rng rng(seed);
  fisher_yates(std::span<std::size_t>(out), rng);
  return out;
}

std::vector<std::size_t> longtail_counts(std::size_t num_classes, std::size_t n_max, double class_rho) {
  if (num_classes == 0) throw std::invalid_argument("longtail_counts: no classes");
  if (n_max == 0) throw std::invalid_argument("longtail_counts: n_max must be positive");
  if (!(class_rho > 0.0 && class_rho <= 1.0)) {
    throw std::invalid_argument("longtail_counts: class_rho must lie in (0, 1]");
  }
  if (num_classes == 1) return {n_max};
  std::vector<std::size_t> counts(num_classes);
  const double denom = static_cast<double>(num_classes - 1);
  for (std::size_t r = 0; r < num_classes; ++r) {
    const double n = static_cast<double>(n_max) * std::pow(class_rho, static_cast<double>(r) / denom);
    counts[r] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
  }
  return counts;
}

Stream build_stream(const StreamConfig& cfg) {
  if (cfg.total_classes < cfg.num_steps) {
    throw std::invalid_argument("build_stream: fewer classes than steps");
  }
  if (cfg.input_dim == 0) throw std::invalid_argument("build_stream: input_dim must be positive");
  if (!(cfg.noise_scale > 0.0)) throw std::invalid_argument("build_stream: noise_scale must be positive");
  if (cfg.test_per_class == 0) throw std::invalid_argument("build_stream: test_per_class must be positive");

  Stream s;
  StreamProtocol& p = s.protocol;
  p.total_classes = cfg.total_classes;
  p.num_steps = cfg.num_steps;
  p.rho = cfg.rho;
  p.permutation_seed = derive_seed(cfg.seed, seed_purpose::kStepPermutation);

  const auto sizes =
      permute_steps(allocate_classes(step_proportions(cfg.rho, cfg.num_steps), cfg.total_classes),
                    p.permutation_seed);
  const auto per_class = longtail_counts(cfg.total_classes, cfg.n_max, cfg.class_rho);

  // Class ids double as long-tail ranks; shuffling them decouples the tail
  // from the step order.
  std::vector<ClassId> ids(cfg.total_classes);
  std::iota(ids.begin(), ids.end(), ClassId{0});
  Rng assign_rng(derive_seed(cfg.seed, seed_purpose::kClassAssignment));
  fisher_yates(std::span<ClassId>(ids), assign_rng);

  std::size_t cursor = 0;
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    StepSpec step;
    step.step_index = static_cast<int>(t + 1);
    step.class_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(cursor),
                          ids.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[t]));
    std::ranges::sort(step.class_ids);
    for (ClassId c : step.class_ids) step.train_counts.push_back(per_class[static_cast<std::size_t>(c)]);
    cursor += sizes[t];
    p.steps.push_back(std::move(step));
  }
  p.validate();

  SyntheticDataset& d = s.data;
  d.input_dim = cfg.input_dim;
  d.noise_scale = cfg.noise_scale;
  d.separation = cfg.separation;
  d.seed = cfg.seed;

  Rng proto_rng(derive_seed(cfg.seed, seed_purpose::kPrototypes));
  d.prototypes.resize(cfg.total_classes);
  for (Vector& proto : d.prototypes) {
    proto.resize(cfg.input_dim);
    double norm = 0.0;
    for (double& v : proto) {
      v = standard_normal(proto_rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : proto) v *= cfg.separation / norm;
  }

  const auto draw = [&](Rng& rng, std::size_t c) {
    Sample smp;
    smp.label = static_cast<ClassId>(c);
    smp.x = d.prototypes[c];
    for (double& v : smp.x) v += cfg.noise_scale * standard_normal(rng);
    return smp;
  };
  Rng train_rng(derive_seed(cfg.seed, seed_purpose::kSamples, 0));
  Rng test_rng(derive_seed(cfg.seed, seed_purpose::kSamples, 1));
  for (std::size_t c = 0; c < cfg.total_classes; ++c) {
    for (std::size_t i = 0; i < per_class[c]; ++i) d.train.push_back(draw(train_rng, c));
    for (std::size_t i = 0; i < cfg.test_per_class; ++i) d.test.push_back(draw(test_rng, c));
  }
  return s;
}

namespace {

std::vector<bool> class_mask(std::size_t total, std::span<const StepSpec> steps) {
  std::vector<bool> mask(total, false);
  for (const StepSpec& st : steps)
    for (ClassId c : st.class_ids) mask[static_cast<std::size_t>(c)] = true;
  return mask;
}

}  // namespace

std::vector<Sample> step_train_samples(const Stream& s, const StepSpec& step) {
  const auto mask = class_mask(s.protocol.total_classes, std::span<const StepSpec>(&step, 1));
  std::vector<Sample> out;
  for (const Sample& smp : s.data.train) {
    if (mask[static_cast<std::size_t>(smp.label)]) out.push_back(smp);
  }
  return out;
}

std::vector<Sample> accumulated_test_samples(const Stream& s, std::size_t step_pos) {
  if (step_pos >= s.protocol.steps.size()) throw std::out_of_range("accumulated_test_samples: step out of range");
  const auto mask = class_mask(s.protocol.total_classes,
                               std::span<const StepSpec>(s.protocol.steps).first(step_pos + 1));
  std::vector<Sample> out;
  for (const Sample& smp : s.data.test) {
    if (mask[static_cast<std::size_t>(smp.label)]) out.push_back(smp);
  }
  return out;
}

void write_protocol(std::ostream& out, const StreamProtocol& p) {
  for (const StepSpec& s : p.steps) {
    out << s.step_index << ' ' << s.class_ids.size();
    for (ClassId c : s.class_ids) out << ' ' << c;
    out << '\n';
  }
}

}  // namespace dime
