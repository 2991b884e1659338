#include "teeg/tensor.hpp"

#include <cmath>
#include <sstream>

#include "teeg/common.hpp"

namespace teeg {

int64_t numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) fail("tensor: non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
  data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
}

Tensor Tensor::full(std::vector<int64_t> s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1, 1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> v) {
  Tensor t;
  t.shape = {1, static_cast<int64_t>(v.size())};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::matrix(int64_t r, int64_t c, std::vector<double> v) {
  if (static_cast<int64_t>(v.size()) != r * c)
    fail("tensor: matrix init size mismatch");
  Tensor t;
  t.shape = {r, c};
  t.data = std::move(v);
  return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

double Tensor::max_abs() const {
  double m = 0;
  for (double x : data) m = std::max(m, std::fabs(x));
  return m;
}

std::string Tensor::shape_str() const { return teeg::shape_str(shape); }

}  // namespace teeg
