#ifndef INK_TENSOR_HPP
#define INK_TENSOR_HPP

#include <Eigen/Core>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>

#include "ink/errors.hpp"
#include "ink/rng.hpp"

namespace ink {

using Index = Eigen::Index;

template <typename Scalar>
using VecX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Extents of a [batch, channel, height, width] tensor.
struct Shape4 {
  Index n = 0, c = 0, h = 0, w = 0;

  Index size() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense 4-D array in row-major [n][c][h][w] order with an optional
/// gradient buffer of the same shape. The universal value flowing through
/// the networks; backed by an Eigen array so elementwise work and the
/// GEMM-based convolutions stay expression-friendly.
template <typename Scalar>
class Tensor4 {
 public:
  using Storage = VecX<Scalar>;

  Tensor4() = default;
  explicit Tensor4(Shape4 s) : shape_(s), data_(Storage::Zero(s.size())) {}

  static Tensor4 zeros(Shape4 s) { return Tensor4(s); }

  static Tensor4 full(Shape4 s, Scalar v) {
    Tensor4 t(s);
    t.data_.setConstant(v);
    return t;
  }

  static Tensor4 from_values(Shape4 s, std::initializer_list<Scalar> values) {
    Tensor4 t(s);
    if (static_cast<Index>(values.size()) != s.size())
      throw ShapeError("from_values: " + std::to_string(values.size()) +
                       " values for shape " + s.str());
    Index i = 0;
    for (Scalar v : values) t.data_[i++] = v;
    return t;
  }

  static Tensor4 random_uniform(Shape4 s, Rng& rng, Scalar lo, Scalar hi) {
    Tensor4 t(s);
    for (Index i = 0; i < t.size(); ++i)
      t.data_[i] = static_cast<Scalar>(rng.uniform(lo, hi));
    return t;
  }

  const Shape4& shape() const { return shape_; }
  Index n() const { return shape_.n; }
  Index c() const { return shape_.c; }
  Index h() const { return shape_.h; }
  Index w() const { return shape_.w; }
  Index size() const { return data_.size(); }

  Index offset(Index in, Index ic, Index iy, Index ix) const {
    return ((in * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
  }

  Scalar& at(Index in, Index ic, Index iy, Index ix) { return data_[offset(in, ic, iy, ix)]; }
  Scalar at(Index in, Index ic, Index iy, Index ix) const { return data_[offset(in, ic, iy, ix)]; }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }

  bool has_grad() const { return grad_.has_value(); }

  Storage& grad() {
    if (!grad_) grad_.emplace(Storage::Zero(data_.size()));
    return *grad_;
  }

  const Storage& grad() const {
    if (!grad_) throw ShapeError("grad() on tensor without gradient buffer");
    return *grad_;
  }

  void zero_grad() { grad().setZero(); }
  void drop_grad() { grad_.reset(); }

  bool all_finite() const { return data_.isFinite().all(); }

 private:
  Shape4 shape_{};
  Storage data_;
  std::optional<Storage> grad_;
};

using Tensor4d = Tensor4<double>;
using Tensor4f = Tensor4<float>;

template <typename Scalar>
void require_same_shape(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b,
                        const char* where) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
}

}  // namespace ink

#endif  // INK_TENSOR_HPP
