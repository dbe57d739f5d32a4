#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gnn_esr/autodiff.hpp"
#include "gnn_esr/embedding.hpp"

namespace gnn_esr::ad {

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter from its .grad.
inline void adam_step(std::span<Parameter* const> params, AdamState& state, double lr) {
  if (state.first_moment.empty()) {
    for (const Parameter* p : params) {
      state.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) + " parameters, got " +
                     std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() ||
        state.first_moment[i].rows() != p.value.rows() || state.first_moment[i].cols() != p.value.cols())
      throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "'");
  }

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * p.grad;
    v = state.beta2 * v + (1.0 - state.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

// Checkpoint: "GESRCKP1" | count:u64 | per tensor: name_len:u64 name rows:u64
// cols:u64 rows*cols f64 (row-major). Little-endian throughout.

inline constexpr char kCheckpointMagic[8] = {'G', 'E', 'S', 'R', 'C', 'K', 'P', '1'};

struct NamedTensor {
  std::string name;
  Matrix value;
};

inline void write_checkpoint(const std::filesystem::path& file, std::span<const NamedTensor> tensors) {
  using namespace gnn_esr::binary_detail;
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(kCheckpointMagic, 8);
  put_u64(out, tensors.size());
  for (const auto& t : tensors) {
    put_u64(out, t.name.size());
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_u64(out, static_cast<std::uint64_t>(t.value.rows()));
    put_u64(out, static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index r = 0; r < t.value.rows(); ++r)
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put_f64(out, t.value(r, c));
  }
  if (!out) throw std::runtime_error("I/O failure writing " + file.string());
}

inline std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& file) {
  using namespace gnn_esr::binary_detail;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic))
    throw std::runtime_error(file.string() + ": not a checkpoint");
  std::vector<NamedTensor> out(get_u64(in));
  for (auto& t : out) {
    t.name.resize(get_u64(in));
    in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    auto rows = static_cast<Eigen::Index>(get_u64(in));
    auto cols = static_cast<Eigen::Index>(get_u64(in));
    t.value.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = get_f64(in);
  }
  if (!in) throw std::runtime_error(file.string() + ": truncated checkpoint");
  return out;
}

}  // namespace gnn_esr::ad
