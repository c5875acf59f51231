#ifndef OMNI_COMMON_HPP
#define OMNI_COMMON_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace omni {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Thrown on contract violations (bad shapes, invalid payloads, schema errors).
class OmniError : public std::runtime_error {
 public:
  explicit OmniError(const std::string& msg) : std::runtime_error(msg) {}
};

#define OMNI_CHECK(cond, msg)                  \
  do {                                         \
    if (!(cond)) throw ::omni::OmniError(msg); \
  } while (0)

// FNV-1a over raw bytes. Used for parameter/checkpoint content hashes.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t hash_matrix(const Mat& m, uint64_t h = 1469598103934665603ULL) {
  int64_t dims[2] = {m.rows(), m.cols()};
  h = fnv1a(dims, sizeof(dims), h);
  return fnv1a(m.data(), sizeof(double) * static_cast<size_t>(m.size()), h);
}

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Seeded RNG wrapper so every stochastic component shares one idiom.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform() { return uniform_(gen_); }
  // Uniform integer in [0, n).
  int64_t index(int64_t n) {
    return std::uniform_int_distribution<int64_t>(0, n - 1)(gen_);
  }

  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal() * scale;
    return m;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace omni

#endif  // OMNI_COMMON_HPP
