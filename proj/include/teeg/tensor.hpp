#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace teeg {

// Dense row-major tensor of 64-bit floats. Rank is arbitrary for storage
// purposes (the checkpoint format carries it), but all compute-graph ops
// work on rank-2 tensors; vectors are 1xN rows and scalars are 1x1.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s);

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v);
  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);
  static Tensor matrix(int64_t r, int64_t c, std::vector<double> v);

  int64_t numel() const;
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  bool is2d() const { return shape.size() == 2; }
  int64_t rows() const { return shape[0]; }
  int64_t cols() const { return shape[1]; }

  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  double max_abs() const;
  std::string shape_str() const;
};

using TensorMap = std::map<std::string, Tensor>;

std::string shape_str(const std::vector<int64_t>& shape);
int64_t numel_of(const std::vector<int64_t>& shape);

}  // namespace teeg
