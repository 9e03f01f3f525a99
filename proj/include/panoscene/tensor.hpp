#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace pano {

// Dense row-major float32 array. Image layout is (C,H,W), optionally with a
// leading batch dimension (N,C,H,W).
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s);
  Tensor(std::vector<int> s, float fill);
  Tensor(std::vector<int> s, std::vector<float> d);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int> s, float v) { return Tensor(std::move(s), v); }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  std::int64_t numel() const;
  bool empty() const { return data.empty(); }

  float& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
  float operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

  // Index helpers for up to 4 dimensions.
  float& at(int a);
  float& at(int a, int b);
  float& at(int a, int b, int c);
  float& at(int a, int b, int c, int d);
  float at(int a) const;
  float at(int a, int b) const;
  float at(int a, int b, int c) const;
  float at(int a, int b, int c, int d) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  void fill(float v);

  std::string shape_str() const;
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Throws std::invalid_argument naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

}  // namespace pano
