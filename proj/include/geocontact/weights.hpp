#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "geocontact/common.hpp"

namespace geocontact {

/// Displacement weights d(i, j, l): displacement accrued by holding pattern i
/// while the shape moves from cycle point j to cycle point l. Built as a
/// difference of one potential per pattern, so it is anti-symmetric and
/// additive by construction.
class WeightTensor {
public:
  WeightTensor() = default;
  WeightTensor(int n_patterns, int n_sites)
      : n_(n_patterns), m_(n_sites),
        data_(static_cast<std::size_t>(n_patterns) * n_sites * n_sites, 0.0) {
    require(n_patterns >= 1 && n_sites >= 2, "WeightTensor: need N >= 1 and M >= 2");
  }

  /// d(i, j, l) = values(i, l) - values(i, j), with `values` an N x M row-major
  /// table of potential samples along the cycle.
  static WeightTensor from_site_potentials(int n_patterns, int n_sites, const std::vector<double>& values) {
    require(values.size() == static_cast<std::size_t>(n_patterns) * n_sites,
            "WeightTensor: potential table has the wrong size");
    WeightTensor w(n_patterns, n_sites);
    for (int i = 0; i < n_patterns; ++i) {
      const double* p = values.data() + static_cast<std::size_t>(i) * n_sites;
      for (int j = 0; j < n_sites; ++j)
        for (int l = 0; l < n_sites; ++l) w(i, j, l) = p[l] - p[j];
    }
    return w;
  }

  int patterns() const noexcept { return n_; }
  int sites() const noexcept { return m_; }

  double& operator()(int i, int j, int l) noexcept { return data_[index(i, j, l)]; }
  double operator()(int i, int j, int l) const noexcept { return data_[index(i, j, l)]; }

  /// Weight of the cycle step j -> j+1 (cyclic).
  double step(int i, int j) const noexcept { return (*this)(i, j, (j + 1) % m_); }

  double max_abs() const noexcept {
    double out = 0;
    for (double v : data_) out = std::max(out, std::abs(v));
    return out;
  }

  /// Largest |d(i,j,l) + d(i,l,j)| over all triples.
  double antisymmetry_error() const noexcept {
    double err = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j)
        for (int l = 0; l < m_; ++l) err = std::max(err, std::abs((*this)(i, j, l) + (*this)(i, l, j)));
    return err;
  }

  /// Largest |d(i,j,l) + d(i,l,k) - d(i,j,k)| over all index triples.
  double additivity_error() const noexcept {
    double err = 0;
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < m_; ++j)
        for (int l = 0; l < m_; ++l)
          for (int k = 0; k < m_; ++k)
            err = std::max(err, std::abs((*this)(i, j, l) + (*this)(i, l, k) - (*this)(i, j, k)));
    return err;
  }

private:
  std::size_t index(int i, int j, int l) const noexcept {
    return (static_cast<std::size_t>(i) * m_ + static_cast<std::size_t>(j)) * m_ + static_cast<std::size_t>(l);
  }

  int n_ = 0;
  int m_ = 0;
  std::vector<double> data_;
};

}  // namespace geocontact
