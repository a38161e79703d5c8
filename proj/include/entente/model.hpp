#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "entente/hash.hpp"

namespace entente {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelDims {
  int d_x = 2;   // input feature dim
  int d_h = 16;  // GCN hidden dim
  int d_z = 8;   // embedding / GRU state dim

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline void validate_dims(const ModelDims& d) {
  if (d.d_x < 1 || d.d_h < 1 || d.d_z < 1)
    throw std::invalid_argument("model dims must be >= 1");
}

// Flat layout: ENC = [W1 (d_x x d_h), W2 (d_h x d_z)],
// TEMP = per gate (update, reset, candidate): W (d_z x d_z), U (d_z x d_z), b (d_z),
// DEC = empty (inner-product decoder has no weights).
inline std::size_t enc_size(const ModelDims& d) {
  return static_cast<std::size_t>(d.d_x) * d.d_h + static_cast<std::size_t>(d.d_h) * d.d_z;
}
inline std::size_t temp_size(const ModelDims& d) {
  auto z = static_cast<std::size_t>(d.d_z);
  return 3 * (z * z + z * z + z);
}
inline std::size_t dec_size(const ModelDims&) { return 0; }
inline std::size_t param_size(const ModelDims& d) {
  return enc_size(d) + temp_size(d) + dec_size(d);
}

struct SegmentInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
};

inline std::vector<SegmentInfo> param_segments(const ModelDims& d) {
  return {{"ENC", 0, enc_size(d)},
          {"TEMP", enc_size(d), temp_size(d)},
          {"DEC", enc_size(d) + temp_size(d), dec_size(d)}};
}

struct ModelParams {
  ModelDims dims;
  std::vector<double> flat;
};

namespace detail {

template <typename Ptr>
struct GateViewT {
  using MapT = Eigen::Map<std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>,
                                             const Mat, Mat>>;
  using VecT = Eigen::Map<std::conditional_t<std::is_const_v<std::remove_pointer_t<Ptr>>,
                                             const Eigen::RowVectorXd, Eigen::RowVectorXd>>;
  MapT w, u;
  VecT b;
  GateViewT(Ptr base, int d_z)
      : w(base, d_z, d_z),
        u(base + static_cast<std::size_t>(d_z) * d_z, d_z, d_z),
        b(base + 2 * static_cast<std::size_t>(d_z) * d_z, d_z) {}
};

// Maps a flat parameter (or gradient) vector into named matrices.
template <typename Ptr>
struct ParamsViewT {
  using MapT = typename GateViewT<Ptr>::MapT;
  MapT w1, w2;
  GateViewT<Ptr> update, reset, cand;

  ParamsViewT(Ptr base, const ModelDims& d)
      : w1(base, d.d_x, d.d_h),
        w2(base + static_cast<std::size_t>(d.d_x) * d.d_h, d.d_h, d.d_z),
        update(base + enc_size(d), d.d_z),
        reset(base + enc_size(d) + gate_stride(d), d.d_z),
        cand(base + enc_size(d) + 2 * gate_stride(d), d.d_z) {}

  static std::size_t gate_stride(const ModelDims& d) {
    auto z = static_cast<std::size_t>(d.d_z);
    return 2 * z * z + z;
  }
};

}  // namespace detail

using ParamsView = detail::ParamsViewT<double*>;
using ConstParamsView = detail::ParamsViewT<const double*>;

inline ParamsView view(ModelParams& p) { return ParamsView(p.flat.data(), p.dims); }
inline ConstParamsView view(const ModelParams& p) {
  return ConstParamsView(p.flat.data(), p.dims);
}

inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  validate_dims(dims);
  ModelParams p;
  p.dims = dims;
  p.flat.assign(param_size(dims), 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](double* base, int rows, int cols) {
    double bound = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::size_t count = static_cast<std::size_t>(rows) * cols;
    for (std::size_t i = 0; i < count; ++i) base[i] = uni(rng);
  };
  auto v = view(p);
  fill(v.w1.data(), dims.d_x, dims.d_h);
  fill(v.w2.data(), dims.d_h, dims.d_z);
  for (auto* gate : {&v.update, &v.reset, &v.cand}) {
    fill(gate->w.data(), dims.d_z, dims.d_z);
    fill(gate->u.data(), dims.d_z, dims.d_z);
    // biases start at zero, inside every Glorot bound
  }
  return p;
}

inline double l2_norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double l1_norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return s;
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace entente
