#include "ral/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ral {

namespace {

void require_finite(const Matrix& m) {
    for (const auto& row : m)
        for (double x : row)
            if (!std::isfinite(x))
                throw validation_error("max_eigenvalue_sym: non-finite entry");
}

void require_symmetric(const Matrix& m) {
    const std::size_t d = m.size();
    for (const auto& row : m)
        if (row.size() != d)
            throw validation_error("max_eigenvalue_sym: matrix not square");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::fabs(m[i][j] - m[j][i]) > 1e-10)
                throw validation_error("max_eigenvalue_sym: matrix not symmetric");
}

double frobenius(const Matrix& m) {
    double s = 0.0;
    for (const auto& row : m)
        for (double x : row) s += x * x;
    return std::sqrt(s);
}

double off_diagonal_norm(const Matrix& m) {
    double s = 0.0;
    const std::size_t d = m.size();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) s += m[i][j] * m[i][j];
    return std::sqrt(s);
}

// One cyclic Jacobi sweep over all upper-triangle pivots.
void jacobi_sweep(Matrix& a) {
    const std::size_t d = a.size();
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t q = p + 1; q < d; ++q) {
            const double apq = a[p][q];
            if (apq == 0.0) continue;
            const double app = a[p][p], aqq = a[q][q];
            const double tau = (aqq - app) / (2.0 * apq);
            const double t = (tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                         : 1.0 / (tau - std::sqrt(1.0 + tau * tau)));
            const double c = 1.0 / std::sqrt(1.0 + t * t);
            const double s = t * c;
            for (std::size_t k = 0; k < d; ++k) {
                const double akp = a[k][p], akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for (std::size_t k = 0; k < d; ++k) {
                const double apk = a[p][k], aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
}

} // namespace

double max_eigenvalue_sym(const Matrix& m) {
    if (m.empty())
        throw validation_error("max_eigenvalue_sym: empty matrix");
    require_finite(m);
    require_symmetric(m);
    const std::size_t d = m.size();
    if (d == 1) return m[0][0];
    if (d == 2) {
        const double a = m[0][0], b = m[0][1], c = m[1][1];
        const double half_diff = 0.5 * (a - c);
        return 0.5 * (a + c) + std::sqrt(half_diff * half_diff + b * b);
    }
    Matrix a = m;
    const double scale = std::max(1.0, frobenius(a));
    for (int sweep = 0; sweep < 100; ++sweep) {
        if (off_diagonal_norm(a) <= 1e-12 * scale) break;
        jacobi_sweep(a);
    }
    double best = a[0][0];
    for (std::size_t i = 1; i < d; ++i) best = std::max(best, a[i][i]);
    return best;
}

CovarianceStats covariance_stats(const std::vector<Vector>& vectors,
                                 const IndexSubset& subset) {
    if (subset.empty())
        throw validation_error("covariance_stats: empty subset");
    const int n = static_cast<int>(vectors.size());
    for (int i : subset)
        if (i < 0 || i >= n)
            throw validation_error("covariance_stats: subset index out of range");
    const std::size_t d = vectors[subset.front()].size();
    for (int i : subset)
        if (vectors[i].size() != d)
            throw validation_error("covariance_stats: dimension mismatch");

    const double inv_k = 1.0 / static_cast<double>(subset.size());
    CovarianceStats stats;
    stats.mean.assign(d, 0.0);
    for (int i : subset)
        for (std::size_t j = 0; j < d; ++j) stats.mean[j] += vectors[i][j];
    for (std::size_t j = 0; j < d; ++j) stats.mean[j] *= inv_k;

    if (d == 1) {
        double var = 0.0;
        for (int i : subset) {
            const double dev = vectors[i][0] - stats.mean[0];
            var += dev * dev;
        }
        var *= inv_k;
        stats.trace = var;
        stats.lambda_max = var;
        return stats;
    }

    Matrix sigma(d, Vector(d, 0.0));
    for (int i : subset) {
        for (std::size_t r = 0; r < d; ++r) {
            const double dr = vectors[i][r] - stats.mean[r];
            for (std::size_t c = r; c < d; ++c)
                sigma[r][c] += dr * (vectors[i][c] - stats.mean[c]);
        }
    }
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) {
            sigma[r][c] *= inv_k;
            sigma[c][r] = sigma[r][c];
        }
    for (std::size_t r = 0; r < d; ++r) stats.trace += sigma[r][r];
    stats.lambda_max = max_eigenvalue_sym(sigma);
    return stats;
}

std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t result = 1;
    for (int i = 1; i <= k; ++i) {
        result = result * static_cast<std::uint64_t>(n - k + i) /
                 static_cast<std::uint64_t>(i);
    }
    return result;
}

void for_each_subset(int n, int k,
                     const std::function<void(const IndexSubset&)>& visit) {
    if (k <= 0 || k > n)
        throw validation_error("for_each_subset: need 0 < k <= n");
    if (n > 24)
        throw capacity_error("for_each_subset: n = " + std::to_string(n) +
                             " exceeds the enumeration limit n <= 24");
    IndexSubset s(k);
    for (int i = 0; i < k; ++i) s[i] = i;
    while (true) {
        visit(s);
        int i = k - 1;
        while (i >= 0 && s[i] == n - k + i) --i;
        if (i < 0) break;
        ++s[i];
        for (int j = i + 1; j < k; ++j) s[j] = s[j - 1] + 1;
    }
}

std::vector<IndexSubset> enumerate_subsets(int n, int k) {
    std::vector<IndexSubset> out;
    out.reserve(binomial(n, k));
    for_each_subset(n, k, [&](const IndexSubset& s) { out.push_back(s); });
    return out;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw validation_error("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw validation_error("squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Vector scaled(const Vector& a, double s) {
    Vector out(a);
    for (double& x : out) x *= s;
    return out;
}

Vector add(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw validation_error("add: dimension mismatch");
    Vector out(a);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
    return out;
}

Vector sub(const Vector& a, const Vector& b) {
    if (a.size() != b.size())
        throw validation_error("sub: dimension mismatch");
    Vector out(a);
    for (std::size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
    return out;
}

} // namespace ral
