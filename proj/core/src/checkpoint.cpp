// SPDX-License-Identifier: Apache-2.0

#include "dime/checkpoint.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

namespace dime {

namespace {

Matrix row_matrix(std::span<const double> v) {
  return Matrix(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Vector as_vector(const Matrix& m, const std::string& name) {
  if (m.rows() != 1 && !m.empty()) throw std::runtime_error("checkpoint: " + name + " must be a single row");
  return Vector(m.data().begin(), m.data().end());
}

void put(std::ostream& out, const std::string& name, const Matrix& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  write_matrix(out, m);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelState& state) {
  state.validate();
  std::vector<double> dims{static_cast<double>(state.backbone.input_dim),
                           static_cast<double>(state.backbone.feature_dim)};
  put(out, "backbone.dims", row_matrix(dims));
  // The 64-bit seed is split into two exactly representable halves.
  put(out, "backbone.seed", row_matrix(std::vector<double>{
                                static_cast<double>(state.backbone.seed >> 32),
                                static_cast<double>(state.backbone.seed & 0xFFFFFFFFULL)}));
  put(out, "backbone.projection", state.backbone.projection);
  put(out, "backbone.offset", row_matrix(state.backbone.offset));
  put(out, "adapter.w_down", state.adapter.w_down);
  put(out, "adapter.w_up", state.adapter.w_up);
  put(out, "adapter.ln_gain", row_matrix(state.adapter.ln_gain));
  put(out, "adapter.ln_bias", row_matrix(state.adapter.ln_bias));
  put(out, "adapter.scale", Matrix(1, 1, state.adapter.scale));
  put(out, "head.weight", state.head.weight);
  put(out, "head.bias", row_matrix(state.head.bias));
  std::vector<double> ids(state.head.class_ids.begin(), state.head.class_ids.end());
  put(out, "head.class_ids", Matrix(1, ids.size(), ids));
}

ModelState read_checkpoint(std::istream& in) {
  std::map<std::string, Matrix> tensors;
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  while (in >> name >> rows >> cols) {
    Matrix m = read_matrix(in);
    if (m.rows() != rows || m.cols() != cols) {
      throw std::runtime_error("checkpoint: manifest shape of " + name + " disagrees with its data");
    }
    tensors.emplace(name, std::move(m));
  }
  const auto get = [&](const std::string& key) -> const Matrix& {
    const auto it = tensors.find(key);
    if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor " + key);
    return it->second;
  };

  ModelState s;
  const Vector dims = as_vector(get("backbone.dims"), "backbone.dims");
  const Vector seed = as_vector(get("backbone.seed"), "backbone.seed");
  if (dims.size() != 2 || seed.size() != 2) throw std::runtime_error("checkpoint: malformed backbone header");
  s.backbone.input_dim = static_cast<std::size_t>(dims[0]);
  s.backbone.feature_dim = static_cast<std::size_t>(dims[1]);
  s.backbone.seed = (static_cast<std::uint64_t>(seed[0]) << 32) | static_cast<std::uint64_t>(seed[1]);
  s.backbone.projection = get("backbone.projection");
  s.backbone.offset = as_vector(get("backbone.offset"), "backbone.offset");
  s.adapter.w_down = get("adapter.w_down");
  s.adapter.w_up = get("adapter.w_up");
  s.adapter.ln_gain = as_vector(get("adapter.ln_gain"), "adapter.ln_gain");
  s.adapter.ln_bias = as_vector(get("adapter.ln_bias"), "adapter.ln_bias");
  s.adapter.scale = get("adapter.scale")(0, 0);
  s.head.weight = get("head.weight");
  s.head.bias = as_vector(get("head.bias"), "head.bias");
  for (double id : as_vector(get("head.class_ids"), "head.class_ids")) {
    s.head.class_ids.push_back(static_cast<ClassId>(id));
  }
  s.validate();
  return s;
}

}  // namespace dime
