#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "ral/linalg.hpp"

using namespace ral;

namespace {

// Rayleigh-quotient oracle: lambda_max >= u^T M u / u^T u for every direction,
// with equality at the top eigenvector. A dense direction sweep brackets the
// Jacobi result from below; power iteration confirms it from above.
double rayleigh_sweep(const Matrix& m, std::mt19937_64& gen, int directions) {
    const int d = static_cast<int>(m.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    double best = -1e300;
    for (int it = 0; it < directions; ++it) {
        Vector u(d);
        for (double& v : u) v = normal(gen);
        double uu = dot(u, u);
        if (uu < 1e-12) continue;
        Vector mu(d, 0.0);
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) mu[r] += m[r][c] * u[c];
        best = std::max(best, dot(u, mu) / uu);
    }
    return best;
}

double power_iteration(const Matrix& m, int iters) {
    const int d = static_cast<int>(m.size());
    // Shift to make the matrix strictly positive definite so the iteration
    // tracks the largest (signed) eigenvalue: M + sI with s > max row sum.
    double shift = 0.0;
    for (int r = 0; r < d; ++r) {
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += std::abs(m[r][c]);
        shift = std::max(shift, s);
    }
    shift += 1.0;
    Vector u(d, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vector next(d, 0.0);
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) next[r] += m[r][c] * u[c];
            next[r] += shift * u[r];
        }
        const double n = norm2(next);
        if (n < 1e-300) return 0.0;
        u = scaled(next, 1.0 / n);
        lambda = n;
    }
    return lambda - shift;
}

Matrix random_symmetric(int d, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(d, Vector(d, 0.0));
    for (int r = 0; r < d; ++r)
        for (int c = r; c < d; ++c) m[r][c] = m[c][r] = normal(gen);
    return m;
}

} // namespace

TEST_CASE("max eigenvalue matches the power-iteration oracle") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 1 + static_cast<int>(gen() % 6);
        const Matrix m = random_symmetric(d, gen);
        const double jac = max_eigenvalue_sym(m);
        const double pow = power_iteration(m, 4000);
        CHECK(jac == doctest::Approx(pow).epsilon(1e-7));
        // No direction may beat the claimed top eigenvalue.
        CHECK(rayleigh_sweep(m, gen, 200) <= jac + 1e-9);
    }
}

TEST_CASE("max eigenvalue closed forms in low dimension") {
    CHECK(max_eigenvalue_sym({{3.0}}) == doctest::Approx(3.0));
    CHECK(max_eigenvalue_sym({{-2.0}}) == doctest::Approx(-2.0));
    // [[2,1],[1,2]] has eigenvalues 1 and 3.
    CHECK(max_eigenvalue_sym({{2.0, 1.0}, {1.0, 2.0}}) == doctest::Approx(3.0));
    // [[0,1],[1,0]] has eigenvalues -1 and 1.
    CHECK(max_eigenvalue_sym({{0.0, 1.0}, {1.0, 0.0}}) == doctest::Approx(1.0));
    // diag(5, -7): the largest eigenvalue is 5 even though -7 dominates in size.
    CHECK(max_eigenvalue_sym({{5.0, 0.0}, {0.0, -7.0}}) == doctest::Approx(5.0));
}

TEST_CASE("covariance stats against direct formulas") {
    // Values {0, 0, 1} in one dimension: mean 1/3, variance 2/9.
    const std::vector<Vector> vecs = {{0.0}, {0.0}, {1.0}};
    const CovarianceStats s = covariance_stats(vecs, {0, 1, 2});
    CHECK(s.mean[0] == doctest::Approx(1.0 / 3.0));
    CHECK(s.trace == doctest::Approx(2.0 / 9.0));
    CHECK(s.lambda_max == doctest::Approx(2.0 / 9.0));

    // Subset selection: {0, 1} has zero variance.
    const CovarianceStats z = covariance_stats(vecs, {0, 1});
    CHECK(z.trace == doctest::Approx(0.0));
    CHECK(z.lambda_max == doctest::Approx(0.0));

    // Random multi-dimensional check: trace equals the sum of per-coordinate
    // variances, and the top eigenvalue sits between trace/d and trace.
    std::mt19937_64 gen(11);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(gen() % 4);
        const int n = 2 + static_cast<int>(gen() % 6);
        std::vector<Vector> pts(n, Vector(d));
        for (Vector& p : pts)
            for (double& v : p) v = normal(gen);
        IndexSubset all(n);
        for (int i = 0; i < n; ++i) all[i] = i;
        const CovarianceStats st = covariance_stats(pts, all);
        double trace = 0.0;
        for (int k = 0; k < d; ++k) {
            double mean = 0.0;
            for (const Vector& p : pts) mean += p[k];
            mean /= n;
            for (const Vector& p : pts) trace += (p[k] - mean) * (p[k] - mean) / n;
        }
        CHECK(st.trace == doctest::Approx(trace).epsilon(1e-10));
        CHECK(st.lambda_max <= st.trace + 1e-9);
        CHECK(st.lambda_max >= st.trace / d - 1e-9);
    }
}

TEST_CASE("subset enumeration is exhaustive, ordered and deduplicated") {
    for (int n = 1; n <= 7; ++n) {
        for (int k = 1; k <= n; ++k) {
            std::vector<IndexSubset> seen;
            for_each_subset(n, k, [&](const IndexSubset& s) { seen.push_back(s); });
            CHECK(seen.size() == binomial(n, k));
            std::set<IndexSubset> uniq(seen.begin(), seen.end());
            CHECK(uniq.size() == seen.size());
            for (std::size_t i = 0; i + 1 < seen.size(); ++i)
                CHECK(seen[i] < seen[i + 1]); // lexicographic
            for (const IndexSubset& s : seen) {
                CHECK(static_cast<int>(s.size()) == k);
                for (std::size_t i = 0; i + 1 < s.size(); ++i) CHECK(s[i] < s[i + 1]);
                CHECK(s.front() >= 0);
                CHECK(s.back() < n);
            }
            CHECK(enumerate_subsets(n, k) == seen);
        }
    }
    CHECK(binomial(15, 12) == 455);
    CHECK(binomial(24, 12) == 2704156);
    CHECK_THROWS_AS(for_each_subset(25, 3, [](const IndexSubset&) {}),
                    capacity_error);
    CHECK_THROWS_AS(for_each_subset(5, 0, [](const IndexSubset&) {}),
                    validation_error);
}

TEST_CASE("vector helpers") {
    const Vector a = {1.0, -2.0, 3.0}, b = {0.5, 4.0, -1.0};
    CHECK(dot(a, b) == doctest::Approx(0.5 - 8.0 - 3.0));
    CHECK(norm2(a) == doctest::Approx(std::sqrt(14.0)));
    CHECK(squared_distance(a, b) ==
          doctest::Approx(0.25 + 36.0 + 16.0));
    CHECK(add(a, b) == Vector{1.5, 2.0, 2.0});
    CHECK(sub(a, b) == Vector{0.5, -6.0, 4.0});
    CHECK(scaled(a, -2.0) == Vector{-2.0, 4.0, -6.0});
    CHECK_THROWS_AS(dot({1.0}, {1.0, 2.0}), validation_error);
}
