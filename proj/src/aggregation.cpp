#include "ral/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ral {

namespace {

void validate_batch(const std::vector<Vector>& batch) {
    if (batch.empty())
        throw validation_error("aggregate: empty batch");
    const std::size_t d = batch.front().size();
    if (d == 0)
        throw validation_error("aggregate: zero-dimensional vectors");
    for (const auto& v : batch) {
        if (v.size() != d)
            throw validation_error("aggregate: dimension mismatch in batch");
        for (double x : v)
            if (!std::isfinite(x))
                throw validation_error("aggregate: non-finite entry in batch");
    }
}

void validate_f(int n, int f) {
    if (f < 0 || 2 * f >= n)
        throw validation_error("aggregate: need 0 <= f < n/2 (n = " +
                               std::to_string(n) + ", f = " + std::to_string(f) + ")");
}

} // namespace

AggregationOutcome aggregate_mean(const std::vector<Vector>& batch) {
    validate_batch(batch);
    const std::size_t d = batch.front().size();
    AggregationOutcome out;
    out.aggregate.assign(d, 0.0);
    for (const auto& v : batch)
        for (std::size_t j = 0; j < d; ++j) out.aggregate[j] += v[j];
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& x : out.aggregate) x *= inv_n;
    return out;
}

double trimmed_mean_scalar(const std::vector<double>& values, int f) {
    const int n = static_cast<int>(values.size());
    validate_f(n, f);
    std::vector<std::pair<double, int>> order(values.size());
    for (int i = 0; i < n; ++i) order[i] = {values[i], i};
    std::sort(order.begin(), order.end());
    double sum = 0.0;
    for (int i = f; i < n - f; ++i) sum += order[i].first;
    return sum / static_cast<double>(n - 2 * f);
}

AggregationOutcome aggregate_cwtm(const std::vector<Vector>& batch, int f) {
    validate_batch(batch);
    validate_f(static_cast<int>(batch.size()), f);
    const std::size_t d = batch.front().size();
    AggregationOutcome out;
    out.aggregate.assign(d, 0.0);
    std::vector<double> column(batch.size());
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < batch.size(); ++i) column[i] = batch[i][j];
        out.aggregate[j] = trimmed_mean_scalar(column, f);
    }
    return out;
}

AggregationOutcome aggregate_smea(const std::vector<Vector>& batch, int f) {
    validate_batch(batch);
    const int n = static_cast<int>(batch.size());
    validate_f(n, f);
    const int k = n - f;

    AggregationOutcome out;
    double best = std::numeric_limits<double>::infinity();
    IndexSubset best_subset;
    // Lexicographic enumeration + strict improvement keeps the first minimizer.
    for_each_subset(n, k, [&](const IndexSubset& s) {
        const CovarianceStats stats = covariance_stats(batch, s);
        if (stats.lambda_max < best) {
            best = stats.lambda_max;
            best_subset = s;
        }
    });
    const CovarianceStats winner = covariance_stats(batch, best_subset);
    out.aggregate = winner.mean;
    out.selected = best_subset;
    out.selected_lambda_max = winner.lambda_max;
    return out;
}

double kappa_smea(int n, int f) {
    validate_f(n, f);
    const double fn = static_cast<double>(f);
    const double ratio = 1.0 + fn / static_cast<double>(n - 2 * f);
    return (4.0 * fn / static_cast<double>(n - f)) * ratio * ratio;
}

double kappa_cwtm(int n, int f) {
    validate_f(n, f);
    const double fn = static_cast<double>(f);
    const double ratio = 1.0 + fn / static_cast<double>(n - 2 * f);
    return (6.0 * fn / static_cast<double>(n - 2 * f)) * ratio;
}

CertificationRecord check_robustness(const std::vector<Vector>& batch,
                                     const Vector& rule_output,
                                     const RobustnessSpec& spec) {
    validate_batch(batch);
    const int n = static_cast<int>(batch.size());
    validate_f(n, spec.f);
    if (rule_output.size() != batch.front().size())
        throw validation_error("check_robustness: output dimension mismatch");

    CertificationRecord record;
    record.worst_slack = std::numeric_limits<double>::infinity();
    for_each_subset(n, n - spec.f, [&](const IndexSubset& s) {
        const CovarianceStats stats = covariance_stats(batch, s);
        const double lhs = squared_distance(rule_output, stats.mean);
        const double rhs =
            spec.kappa * (spec.norm == OpNorm::trace ? stats.trace : stats.lambda_max);
        const double slack = rhs - lhs;
        if (slack < record.worst_slack) {
            record.worst_slack = slack;
            record.worst_subset = s;
            record.worst_lhs = lhs;
            record.worst_rhs = rhs;
        }
    });
    record.pass = record.worst_slack >= -1e-9 * std::max(1.0, record.worst_rhs);
    return record;
}

} // namespace ral
