#include "lcg/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace lcg {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void throw_shape_error(std::string_view op, const Shape& a, const Shape& b) {
  std::string msg(op);
  msg += ": shape mismatch ";
  msg += shape_str(a);
  msg += " vs ";
  msg += shape_str(b);
  throw ShapeError(msg);
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto e : shape_) {
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() < 2) return 1;
  return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item: expected one element, got " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) throw_shape_error("reshape", shape_, shape);
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Shape broadcast_shapes(const Shape& a, const Shape& b, std::string_view op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) throw_shape_error(op, a, b);
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Strides of `shape` viewed inside an output of rank `rank`; broadcast axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    const std::size_t src_axis = shape.size() - 1 - k;
    const std::size_t dst_axis = rank - 1 - k;
    strides[dst_axis] = shape[src_axis] == 1 ? 0 : stride;
    stride *= shape[src_axis];
  }
  return strides;
}

template <class Fn>
void for_each_broadcast_index(const Shape& out, const std::vector<std::size_t>& strides,
                              Fn&& fn) {
  const std::size_t total = shape_size(out);
  const std::size_t rank = out.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, src);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      src += strides[ax];
      if (counter[ax] < out[ax]) break;
      src -= strides[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - small.size());
}

}  // namespace

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (broadcast_shapes(x.shape(), shape, "broadcast_to") != shape) {
    throw_shape_error("broadcast_to", x.shape(), shape);
  }
  Tensor out(shape);
  auto src = x.data();
  auto dst = out.data();
  if (is_suffix(x.shape(), shape)) {
    const std::size_t period = x.size();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i % period];
    return out;
  }
  for_each_broadcast_index(shape, broadcast_strides(x.shape(), shape),
                           [&](std::size_t i, std::size_t s) { dst[i] = src[s]; });
  return out;
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  if (broadcast_shapes(target, grad.shape(), "reduce_to_shape") != grad.shape()) {
    throw_shape_error("reduce_to_shape", grad.shape(), target);
  }
  Tensor out(target);
  auto src = grad.data();
  auto dst = out.data();
  if (is_suffix(target, grad.shape())) {
    const std::size_t period = out.size();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i % period] += src[i];
    return out;
  }
  for_each_broadcast_index(grad.shape(), broadcast_strides(target, grad.shape()),
                           [&](std::size_t i, std::size_t s) { dst[s] += src[i]; });
  return out;
}

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) throw_shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t ka = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (ka != kb) throw_shape_error("matmul", a.shape(), b.shape());
  Tensor c({m, n});
  ConstMap ma(a.data().data(), static_cast<Eigen::Index>(a.dim(0)),
              static_cast<Eigen::Index>(a.dim(1)));
  ConstMap mb(b.data().data(), static_cast<Eigen::Index>(b.dim(0)),
              static_cast<Eigen::Index>(b.dim(1)));
  Map mc(c.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!transpose_a && !transpose_b) {
    mc.noalias() = ma * mb;
  } else if (transpose_a && !transpose_b) {
    mc.noalias() = ma.transpose() * mb;
  } else if (!transpose_a && transpose_b) {
    mc.noalias() = ma * mb.transpose();
  } else {
    mc.noalias() = ma.transpose() * mb.transpose();
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw_shape_error("max_abs_diff", a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace lcg
