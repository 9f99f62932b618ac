#pragma once

#include <optional>
#include <vector>

#include "ral/linalg.hpp"

namespace ral {

enum class OpNorm { trace, spectral };

struct RobustnessSpec {
    int f = 0;
    double kappa = 0.0;
    OpNorm norm = OpNorm::spectral;
};

struct AggregationOutcome {
    Vector aggregate;
    // Present only for SMEA: the selected (n-f)-subset and its top eigenvalue.
    std::optional<IndexSubset> selected;
    std::optional<double> selected_lambda_max;
};

struct CertificationRecord {
    bool pass = true;
    double worst_slack = 0.0; // min over subsets of rhs - lhs
    IndexSubset worst_subset;
    double worst_lhs = 0.0;
    double worst_rhs = 0.0;
};

// Coordinate-wise arithmetic mean of all n vectors.
AggregationOutcome aggregate_mean(const std::vector<Vector>& batch);

// Coordinate-wise trimmed mean: per coordinate, drop the f smallest and f
// largest values and average the remaining n-2f. Ties sort by original index.
AggregationOutcome aggregate_cwtm(const std::vector<Vector>& batch, int f);

// Smallest-maximum-eigenvalue averaging: average the (n-f)-subset whose
// empirical covariance has the smallest top eigenvalue; ties broken by
// lexicographic subset order (first enumerated wins).
AggregationOutcome aggregate_smea(const std::vector<Vector>& batch, int f);

// Robustness coefficients.
double kappa_smea(int n, int f); // (4f/(n-f)) * (1 + f/(n-2f))^2
double kappa_cwtm(int n, int f); // (6f/(n-2f)) * (1 + f/(n-2f))

// Exhaustively checks ||rule_output - mean_S||^2 <= kappa * ||Sigma_S||_op
// over every subset S of size n - spec.f. Pass tolerance: slack >=
// -1e-9 * max(1, rhs) at the worst subset.
CertificationRecord check_robustness(const std::vector<Vector>& batch,
                                     const Vector& rule_output,
                                     const RobustnessSpec& spec);

// Scalar trimmed mean (the CWTM building block), exposed so its Lipschitz
// and sandwich properties can be tested directly.
double trimmed_mean_scalar(const std::vector<double>& values, int f);

} // namespace ral
