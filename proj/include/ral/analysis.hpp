#pragma once

#include <optional>
#include <string>

#include "ral/engine.hpp"

namespace ral {

// One attack/f cell of the stability experiment.
struct StabilityReport {
    std::string attack;
    int f = 0;
    double measured_stability = 0.0; // Monte-Carlo mean for SGD, exact for GD
    std::optional<double> std_error; // emitted as "stderr"
    std::optional<double> lb_theoretical;
    double ub_theoretical = 0.0;
    std::optional<double> ub_empirical_kappa;
    double kappa_hat_base = 0.0;
    double kappa_hat_variant = 0.0;
    std::optional<double> gen_error;
};

enum class TheoremId {
    byz_convex,
    byz_strongcvx,
    byz_nonconvex_sgd,
    pois_smea_convex,
    pois_smea_strongcvx,
    pois_smea_nonconvex,
    pois_cwtm_nonconvex,
    lb_pois_convex,
    lb_pois_strongcvx,
};

struct BoundQuery {
    TheoremId theorem = TheoremId::byz_convex;
    std::optional<double> gamma; // constant-step bounds
    std::optional<double> c;     // inverse-schedule bounds (gamma_t = c/(L(t+1)))
    double C = 1.0;
    double L = 1.0;
    std::optional<double> mu;
    int T = 1;
    int n = 1;
    int f = 0;
    int m = 1;
    std::optional<double> kappa;
    std::optional<double> ell_inf;
    std::optional<double> nu;
    bool regime_override = false; // skip the step-size regime check
};

struct BoundResult {
    double value = 0.0;
    bool order_only = false; // lower bounds hold up to an absolute constant
};

// Uniform-stability gap of one neighboring run pair: sup_z [loss(theta_T; z) -
// loss(theta'_T; z)]. Closed forms for the scalar families (the quadratic one
// evaluates both losses at z = chi * C/(2 mu), chi = -sign(theta_T - theta'_T));
// other families maximize over a caller-supplied z grid.
double measure_stability(const Trajectory& base, const Trajectory& variant,
                         const LossModel& loss,
                         const std::vector<DataPoint>* z_grid = nullptr);

// Largest observed ratio ||agg_t - mean_S||^2 / ((1/|S|) sum_{i in S} ||g_i -
// mean_S||^2) over every step and every (n-f)-subset of that step's full batch
// (honest gradients plus Byzantine values). Zero-variance subsets contribute 0
// when the numerator also vanishes and abort otherwise.
double empirical_kappa(const Trajectory& trajectory, int n, int f);

// (theta_T^(-1) - theta_T^(0)) / (4 (n - f)): the expected generalization error
// when the pivot worker's distribution is (1/2) delta_0 + (1/2) delta_{-1} and
// every other honest worker is a point mass.
double generalization_error_linear(double theta_T_zero, double theta_T_minus,
                                   int n, int f);

BoundResult theorem_bound(const BoundQuery& query);

struct CovarianceCheck {
    bool pass = false;
    double worst_slack = 0.0; // min over steps of C^2 - max(trace, lambda_max)
    int worst_step = -1;
};

// Pathwise check of Tr(Sigma_t) <= C^2 and lambda_max(Sigma_t) <= C^2 on the
// recorded honest-gradient covariances.
CovarianceCheck covariance_lemma_check(const Trajectory& trajectory, double C);

struct RefinedCovarianceRecord {
    double G = 0.0;     // max over the grid of sqrt(mean_i ||grad R_i - grad R_H||^2)
    double sigma = 0.0; // max over grid and i of sqrt(mean_j ||grad l - grad R_i||^2)
    double trace_bound = 0.0;    // 3 G^2 + 3 sigma^2 (1 + 1/(n-f))
    double spectral_bound = 0.0; // sigma^2 + G^2
    double measured_max_trace = 0.0;
    double measured_max_spectral = 0.0;
    bool pass() const;
};

// Heterogeneity-aware covariance bounds evaluated on a finite theta grid; the
// measured statistics are the GD-gradient covariances on the same grid.
RefinedCovarianceRecord refined_covariance_check(const std::vector<WorkerDataset>& honest,
                                                 const LossModel& loss,
                                                 const std::vector<Vector>& theta_grid,
                                                 int n, int f);

struct CocoercivityWitness {
    Vector v;
    Vector x;
    Vector theta;
    double inner_product = 0.0;
};

// Grid search for a monotonicity violation of CWTM under the squared
// regression loss (d = 2, n = 3, f = 1, samples (v,0), (x,0), (x,1), theta =
// x/L against omega = 0). Throws property_violation if no witness with inner
// product < -1e-6 exists on the grid.
CocoercivityWitness cwtm_cocoercivity_counterexample(double L);

} // namespace ral
