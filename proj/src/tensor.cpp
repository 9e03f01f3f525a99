#include "panoscene/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pano {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension in " + shape_to_string(shape));
  }
  data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<int> s, float fill) : Tensor(std::move(s)) {
  this->fill(fill);
}

Tensor::Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_to_string(shape));
  }
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

namespace {
inline std::int64_t idx2(const std::vector<int>& s, int a, int b) {
  return static_cast<std::int64_t>(a) * s[1] + b;
}
inline std::int64_t idx3(const std::vector<int>& s, int a, int b, int c) {
  return (static_cast<std::int64_t>(a) * s[1] + b) * s[2] + c;
}
inline std::int64_t idx4(const std::vector<int>& s, int a, int b, int c, int d) {
  return ((static_cast<std::int64_t>(a) * s[1] + b) * s[2] + c) * s[3] + d;
}
}  // namespace

float& Tensor::at(int a) { return data[static_cast<size_t>(a)]; }
float& Tensor::at(int a, int b) { return data[static_cast<size_t>(idx2(shape, a, b))]; }
float& Tensor::at(int a, int b, int c) { return data[static_cast<size_t>(idx3(shape, a, b, c))]; }
float& Tensor::at(int a, int b, int c, int d) { return data[static_cast<size_t>(idx4(shape, a, b, c, d))]; }
float Tensor::at(int a) const { return data[static_cast<size_t>(a)]; }
float Tensor::at(int a, int b) const { return data[static_cast<size_t>(idx2(shape, a, b))]; }
float Tensor::at(int a, int b, int c) const { return data[static_cast<size_t>(idx3(shape, a, b, c))]; }
float Tensor::at(int a, int b, int c, int d) const { return data[static_cast<size_t>(idx4(shape, a, b, c, d))]; }

bool Tensor::all_finite() const {
  for (float v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(float v) {
  for (auto& x : data) x = v;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
  }
}

}  // namespace pano
