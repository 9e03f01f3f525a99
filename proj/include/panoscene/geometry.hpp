#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

// Small double-precision vector/matrix helpers.  All rig-frame geometry is
// done in double and only converted to f32 at the tensor boundary.
namespace pano::geom {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// wraps an angle in degrees to (-180, 180]
inline double wrap_deg(double a) {
  a = std::fmod(a, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  if (n < 1e-300) throw std::invalid_argument("normalized: zero-length vector");
  return v * (1.0 / n);
}

// row-major 3x3
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }

  // rotation about the world up axis (y); yaw 0 looks along +z, positive yaw
  // turns toward +x (so yaw(dir) = atan2(dir.x, dir.z))
  static Mat3 rotation_y_deg(double deg) {
    const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
    return {{c, 0, s, 0, 1, 0, -s, 0, c}};
  }

  // exact 90-degree yaw for face k: entries are 0/±1, no trig rounding
  static Mat3 face_yaw(int k) {
    switch (((k % 4) + 4) % 4) {
      case 0: return {{1, 0, 0, 0, 1, 0, 0, 0, 1}};
      case 1: return {{0, 0, 1, 0, 1, 0, -1, 0, 0}};
      case 2: return {{-1, 0, 0, 0, 1, 0, 0, 0, -1}};
      default: return {{0, 0, -1, 0, 1, 0, 1, 0, 0}};
    }
  }

  // maps (0,0,1) to (0, sin(pitch), cos(pitch)); positive pitch looks up
  static Mat3 pitch_up_deg(double deg) {
    const double c = std::cos(deg_to_rad(deg)), s = std::sin(deg_to_rad(deg));
    return {{1, 0, 0, 0, c, s, 0, -s, c}};
  }

  Vec3 apply(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Vec3 apply_transposed(const Vec3& v) const {
    return {m[0] * v.x + m[3] * v.y + m[6] * v.z, m[1] * v.x + m[4] * v.y + m[7] * v.z,
            m[2] * v.x + m[5] * v.y + m[8] * v.z};
  }

  Mat3 mul(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
        r.m[i * 3 + j] = acc;
      }
    return r;
  }

  double det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
};

struct Eigen3 {
  // ascending eigenvalues with matching eigenvectors
  std::array<double, 3> values{};
  std::array<Vec3, 3> vectors{};
};

// cyclic Jacobi on a symmetric 3x3 given as (xx, xy, xz, yy, yz, zz)
inline Eigen3 symmetric_eigen3(double xx, double xy, double xz, double yy, double yz, double zz) {
  std::array<std::array<double, 3>, 3> a{{{xx, xy, xz}, {xy, yy, yz}, {xz, yz, zz}}};
  std::array<std::array<double, 3>, 3> v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 32; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  std::array<int, 3> order{0, 1, 2};
  for (int i = 0; i < 2; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (a[order[j]][order[j]] < a[order[i]][order[i]]) std::swap(order[i], order[j]);
  Eigen3 out;
  for (int i = 0; i < 3; ++i) {
    const int k = order[i];
    out.values[i] = a[k][k];
    out.vectors[i] = {v[0][k], v[1][k], v[2][k]};
  }
  return out;
}

}  // namespace pano::geom
