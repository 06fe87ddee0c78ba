#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dfsense {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using SparseX = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

// All training arithmetic runs in double precision.
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;
using SparseMatrix = SparseX<double>;
using Index = Eigen::Index;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN/Inf shows up in a forward or backward pass, or a solver
/// is handed an infeasible instance.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Derived>
void check_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

inline void check_finite(double v, std::string_view what) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

inline void require_dims(bool ok, std::string_view what) {
  if (!ok) throw DimensionError("dimension mismatch: " + std::string(what));
}

}  // namespace dfsense
