#pragma once

#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prefer/core.hpp"
#include "prefer/selection.hpp"

namespace prefer::testing {

inline AspectVector random_simplex(std::mt19937_64& gen, std::size_t k, double floor = 0.0) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(k);
  for (double& x : v) x = e(gen) + floor;
  return AspectVector::from_weights(std::move(v));
}

inline Eigen::VectorXd random_unit(std::mt19937_64& gen, int dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = n(gen);
  return v / v.norm();
}

/// Vector with nonnegative entries; any two such vectors have cosine >= 0.
inline Eigen::VectorXd random_positive(std::mt19937_64& gen, int dim) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = u(gen);
  return v;
}

inline std::vector<selection::EvidenceCandidate> random_candidates(std::mt19937_64& gen,
                                                                   std::size_t n, std::size_t k,
                                                                   int dim, bool nonnegative) {
  std::vector<selection::EvidenceCandidate> out;
  std::uniform_int_distribution<std::int64_t> tok(1, 30);
  for (std::size_t i = 0; i < n; ++i) {
    selection::EvidenceCandidate c;
    c.sentence_id = static_cast<std::int64_t>(i);
    c.phi = random_simplex(gen, k);
    c.reduced = nonnegative ? random_positive(gen, dim) : random_unit(gen, dim);
    c.token_count = tok(gen);
    out.push_back(std::move(c));
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 gen(
      static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  auto dir = std::filesystem::temp_directory_path() /
             ("prefer_" + tag + "_" + std::to_string(gen() % 1000000000ULL));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace prefer::testing
