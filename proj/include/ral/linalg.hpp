#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ral/errors.hpp"

namespace ral {

using Vector = std::vector<double>;
using Matrix = std::vector<std::vector<double>>; // dense, row-major

// Worker indices in {0..n-1}, strictly increasing.
using IndexSubset = std::vector<int>;

struct CovarianceStats {
    Vector mean;
    double trace = 0.0;
    double lambda_max = 0.0;
};

// Largest eigenvalue of a symmetric matrix. Closed form for d <= 2,
// cyclic Jacobi for d >= 3 (off-diagonal norm threshold 1e-12 relative to
// the input scale, at most 100 sweeps).
double max_eigenvalue_sym(const Matrix& m);

// Empirical covariance statistics of {vectors[i] : i in subset} with 1/|S|
// normalization (no Bessel correction): mean, trace, top eigenvalue.
CovarianceStats covariance_stats(const std::vector<Vector>& vectors,
                                 const IndexSubset& subset);

// C(n, k); n <= 24 guarded by the callers below.
std::uint64_t binomial(int n, int k);

// Visit all C(n,k) k-subsets of {0..n-1} in lexicographic order.
// Guard: 0 < k <= n <= 24.
void for_each_subset(int n, int k,
                     const std::function<void(const IndexSubset&)>& visit);

// Materialized form of for_each_subset (same order, same guard).
std::vector<IndexSubset> enumerate_subsets(int n, int k);

// Small vector helpers shared across modules.
double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);           // Euclidean norm
double squared_distance(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double s);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);

} // namespace ral
