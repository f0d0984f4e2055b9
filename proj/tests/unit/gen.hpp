#pragma once

// Small seeded generators for property tests.

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace gen {

inline std::mt19937_64 rng(std::uint64_t case_index, std::uint64_t salt = 0) {
  return std::mt19937_64(0xC0FFEEULL + 7919ULL * case_index + salt);
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline int integer(std::mt19937_64& g, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(g);
}

inline Eigen::MatrixXd matrix(std::mt19937_64& g, Eigen::Index r, Eigen::Index c,
                              double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(g);
  return m;
}

inline Eigen::VectorXd vector(std::mt19937_64& g, Eigen::Index n, double scale = 1.0) {
  return matrix(g, n, 1, scale);
}

}  // namespace gen
