#include "ral/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ral/errors.hpp"
#include "ral/linalg.hpp"

namespace ral {

namespace {

const Vector& final_theta(const Trajectory& t) {
    if (t.thetas.empty())
        throw validation_error("measure_stability: empty trajectory");
    return t.thetas.back();
}

double scalar_theta(const Trajectory& t) {
    const Vector& theta = final_theta(t);
    if (theta.size() != 1)
        throw validation_error("measure_stability: scalar loss family expects d = 1");
    return theta[0];
}

// Full batch (honest gradients plus Byzantine values) at step t.
std::vector<Vector> step_batch(const Trajectory& traj, int n, int t) {
    std::vector<Vector> batch(n);
    std::vector<bool> filled(n, false);
    const auto place = [&](const std::vector<std::pair<int, Vector>>& part) {
        for (const auto& [id, g] : part) {
            if (id < 0 || id >= n || filled[id])
                throw validation_error("empirical_kappa: bad worker id in trajectory");
            batch[id] = g;
            filled[id] = true;
        }
    };
    place(traj.honest_gradients[t]);
    place(traj.byzantine_values[t]);
    for (int i = 0; i < n; ++i)
        if (!filled[i])
            throw validation_error("empirical_kappa: trajectory does not cover worker " +
                                   std::to_string(i));
    return batch;
}

void require(bool present, const char* theorem, const char* field) {
    if (!present)
        throw validation_error(std::string("theorem_bound(") + theorem + "): " + field +
                               " required");
}

} // namespace

double measure_stability(const Trajectory& base, const Trajectory& variant,
                         const LossModel& loss, const std::vector<DataPoint>* z_grid) {
    switch (loss.family) {
    case LossFamily::linear1d: {
        const double a = scalar_theta(base), b = scalar_theta(variant);
        return loss.C * std::fabs(a - b);
    }
    case LossFamily::quadratic_mean: {
        if (!loss.mu)
            throw validation_error("measure_stability: quadratic family needs mu");
        const double a = scalar_theta(base), b = scalar_theta(variant);
        const double chi = (a - b) > 0.0 ? -1.0 : 1.0; // worst z = chi * C/(2mu)
        const DataPoint z = DataPoint::scalar(chi * loss.C / (2.0 * *loss.mu));
        return loss_value(loss, final_theta(base), z) -
               loss_value(loss, final_theta(variant), z);
    }
    default: {
        if (z_grid == nullptr || z_grid->empty())
            throw validation_error("measure_stability: this loss family needs a z grid");
        const Vector& a = final_theta(base);
        const Vector& b = final_theta(variant);
        double best = -std::numeric_limits<double>::infinity();
        for (const DataPoint& z : *z_grid)
            best = std::max(best, loss_value(loss, a, z) - loss_value(loss, b, z));
        return best;
    }
    }
}

double empirical_kappa(const Trajectory& trajectory, int n, int f) {
    if (n < 1 || f < 0 || 2 * f >= n)
        throw validation_error("empirical_kappa: need 0 <= f < n/2");
    const int T = static_cast<int>(trajectory.honest_gradients.size());
    if (T == 0 || trajectory.selected_subsets.size() != static_cast<size_t>(T) ||
        trajectory.byzantine_values.size() != static_cast<size_t>(T))
        throw validation_error("empirical_kappa: incomplete trajectory record");

    double kappa_hat = 0.0;
    for (int t = 0; t < T; ++t) {
        if (!trajectory.selected_subsets[t])
            throw validation_error("empirical_kappa: no selected subset at step " +
                                   std::to_string(t) + " (SMEA trajectories only)");
        const std::vector<Vector> batch = step_batch(trajectory, n, t);
        const size_t d = batch[0].size();
        for (const Vector& g : batch)
            if (g.size() != d)
                throw validation_error("empirical_kappa: mixed gradient dimensions");

        const IndexSubset& sel = *trajectory.selected_subsets[t];
        Vector agg(d, 0.0);
        for (int id : sel) agg = add(agg, batch[id]);
        agg = scaled(agg, 1.0 / static_cast<double>(sel.size()));

        for_each_subset(n, n - f, [&](const IndexSubset& S) {
            const CovarianceStats stats = covariance_stats(batch, S);
            const double numerator = squared_distance(agg, stats.mean);
            if (stats.trace < 1e-12) {
                if (numerator < 1e-12) return; // ratio 0
                throw property_violation(
                    "empirical_kappa: zero-variance subset with nonzero deviation " +
                    std::to_string(numerator) + " at step " + std::to_string(t));
            }
            kappa_hat = std::max(kappa_hat, numerator / stats.trace);
        });
    }
    return kappa_hat;
}

double generalization_error_linear(double theta_T_zero, double theta_T_minus, int n,
                                   int f) {
    if (n < 1 || f < 0 || 2 * f >= n)
        throw validation_error("generalization_error_linear: need 0 <= f < n/2");
    return (theta_T_minus - theta_T_zero) / (4.0 * (n - f));
}

BoundResult theorem_bound(const BoundQuery& q) {
    if (q.n < 1 || q.f < 0 || 2 * q.f >= q.n)
        throw validation_error("theorem_bound: need 0 <= f < n/2");
    if (q.m < 1 || q.T < 1)
        throw validation_error("theorem_bound: need m >= 1 and T >= 1");
    if (!(q.C > 0.0) || !(q.L > 0.0))
        throw validation_error("theorem_bound: need C > 0 and L > 0");

    const double nf = static_cast<double>(q.n - q.f);
    const double base_term = 1.0 / (nf * q.m);            // attack-free sampling term
    const double p = (q.f + 1.0 / q.m) / nf;               // poisoning fraction
    const auto check_regime = [&](double cap, const char* label) {
        if (q.regime_override) return;
        if (q.gamma && *q.gamma > cap + 1e-12)
            throw validation_error(std::string("theorem_bound: gamma exceeds ") + label);
    };
    const auto sqrt_kappa = [&](const char* theorem) {
        require(q.kappa.has_value(), theorem, "kappa");
        if (*q.kappa < 0.0)
            throw validation_error("theorem_bound: kappa must be nonnegative");
        return std::sqrt(*q.kappa);
    };
    const auto need_positive = [](const std::optional<double>& v, const char* theorem,
                                  const char* field) {
        if (!v.has_value())
            throw validation_error(std::string("theorem_bound(") + theorem + "): " +
                                   field + " required");
        if (!(*v > 0.0))
            throw validation_error(std::string("theorem_bound(") + theorem + "): " +
                                   field + " must be positive");
        return *v;
    };

    BoundResult out;
    switch (q.theorem) {
    case TheoremId::byz_convex: {
        const double gamma = need_positive(q.gamma, "byz_convex", "gamma");
        check_regime(2.0 / q.L, "2/L");
        out.value = 2.0 * gamma * q.C * q.C * q.T * (base_term + sqrt_kappa("byz_convex"));
        break;
    }
    case TheoremId::byz_strongcvx: {
        const double mu = need_positive(q.mu, "byz_strongcvx", "mu");
        check_regime(1.0 / q.L, "1/L");
        out.value = (2.0 * q.C * q.C / mu) * (base_term + sqrt_kappa("byz_strongcvx"));
        break;
    }
    case TheoremId::byz_nonconvex_sgd: {
        const double c = need_positive(q.c, "byz_nonconvex_sgd", "c");
        const double ell = need_positive(q.ell_inf, "byz_nonconvex_sgd", "ell_inf");
        const double inner = base_term + sqrt_kappa("byz_nonconvex_sgd");
        out.value = 2.0 * std::pow(2.0 * q.C * q.C / q.L, 1.0 / (c + 1.0)) *
                    std::pow(inner, 1.0 / (c + 1.0)) *
                    std::pow(ell * q.T / q.m, c / (c + 1.0));
        break;
    }
    case TheoremId::pois_smea_convex: {
        const double gamma = need_positive(q.gamma, "pois_smea_convex", "gamma");
        check_regime(2.0 / q.L, "2/L");
        out.value = 2.0 * gamma * q.C * q.C * q.T * p;
        break;
    }
    case TheoremId::pois_smea_strongcvx: {
        const double mu = need_positive(q.mu, "pois_smea_strongcvx", "mu");
        check_regime(1.0 / q.L, "1/L");
        out.value = (2.0 * q.C * q.C / mu) * p;
        break;
    }
    case TheoremId::pois_smea_nonconvex: {
        const double c = need_positive(q.c, "pois_smea_nonconvex", "c");
        const double ell = need_positive(q.ell_inf, "pois_smea_nonconvex", "ell_inf");
        out.value = 2.0 * std::pow((2.0 * q.C * q.C / q.L) * p, 1.0 / (c + 1.0)) *
                    std::pow(ell * q.T / q.m, c / (c + 1.0));
        break;
    }
    case TheoremId::pois_cwtm_nonconvex: {
        const double c = need_positive(q.c, "pois_cwtm_nonconvex", "c");
        const double ell = need_positive(q.ell_inf, "pois_cwtm_nonconvex", "ell_inf");
        const double nu = need_positive(q.nu, "pois_cwtm_nonconvex", "nu");
        const double lead = 2.0 * q.C * q.C * nu * nu / ((2.0 + nu) * (2.0 + nu) * q.L);
        out.value = 2.0 * std::pow(lead, 1.0 / (c + 1.0)) *
                    std::pow(q.T * ell, c / (c + 1.0)) /
                    (q.m * std::pow(std::sqrt(static_cast<double>(q.n)), 1.0 / (c + 1.0)));
        break;
    }
    case TheoremId::lb_pois_convex: {
        const double gamma = need_positive(q.gamma, "lb_pois_convex", "gamma");
        check_regime(2.0 / q.L, "2/L");
        out.value = gamma * q.C * q.C * q.T * p;
        out.order_only = true;
        break;
    }
    case TheoremId::lb_pois_strongcvx: {
        const double mu = need_positive(q.mu, "lb_pois_strongcvx", "mu");
        check_regime(1.0 / q.L, "1/L");
        out.value = (q.C * q.C / mu) * p;
        out.order_only = true;
        break;
    }
    }
    return out;
}

CovarianceCheck covariance_lemma_check(const Trajectory& trajectory, double C) {
    if (trajectory.honest_gradients.empty())
        throw validation_error("covariance_lemma_check: empty trajectory");
    CovarianceCheck out;
    out.worst_slack = std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < trajectory.honest_gradients.size(); ++t) {
        const auto& step = trajectory.honest_gradients[t];
        std::vector<Vector> grads;
        grads.reserve(step.size());
        for (const auto& [id, g] : step) grads.push_back(g);
        IndexSubset all(grads.size());
        for (size_t i = 0; i < grads.size(); ++i) all[i] = static_cast<int>(i);
        const CovarianceStats stats = covariance_stats(grads, all);
        const double slack = C * C - std::max(stats.trace, stats.lambda_max);
        if (slack < out.worst_slack) {
            out.worst_slack = slack;
            out.worst_step = static_cast<int>(t);
        }
    }
    out.pass = out.worst_slack >= -1e-9 * std::max(1.0, C * C);
    return out;
}

bool RefinedCovarianceRecord::pass() const {
    const double tol_tr = 1e-9 * std::max(1.0, trace_bound);
    const double tol_sp = 1e-9 * std::max(1.0, spectral_bound);
    return measured_max_trace <= trace_bound + tol_tr &&
           measured_max_spectral <= spectral_bound + tol_sp;
}

RefinedCovarianceRecord refined_covariance_check(const std::vector<WorkerDataset>& honest,
                                                 const LossModel& loss,
                                                 const std::vector<Vector>& theta_grid,
                                                 int n, int f) {
    if (theta_grid.empty())
        throw validation_error("refined_covariance_check: empty theta grid");
    if (honest.empty() || static_cast<int>(honest.size()) != n - f)
        throw validation_error("refined_covariance_check: need exactly n - f honest datasets");
    for (const auto& ds : honest)
        if (ds.data.empty())
            throw validation_error("refined_covariance_check: empty dataset");

    RefinedCovarianceRecord out;
    const int h = n - f;
    for (const Vector& theta : theta_grid) {
        std::vector<Vector> local_means;
        local_means.reserve(h);
        for (const auto& ds : honest) {
            Vector mean(theta.size(), 0.0);
            for (const DataPoint& z : ds.data) mean = add(mean, loss_gradient(loss, theta, z));
            local_means.push_back(scaled(mean, 1.0 / static_cast<double>(ds.data.size())));
        }
        Vector global(theta.size(), 0.0);
        for (const Vector& g : local_means) global = add(global, g);
        global = scaled(global, 1.0 / static_cast<double>(h));

        double het = 0.0; // mean_i ||grad R_i - grad R_H||^2
        for (const Vector& g : local_means) het += squared_distance(g, global);
        het /= static_cast<double>(h);
        out.G = std::max(out.G, std::sqrt(het));

        for (size_t i = 0; i < honest.size(); ++i) {
            double noise = 0.0; // mean_j ||grad l - grad R_i||^2
            for (const DataPoint& z : honest[i].data)
                noise += squared_distance(loss_gradient(loss, theta, z), local_means[i]);
            noise /= static_cast<double>(honest[i].data.size());
            out.sigma = std::max(out.sigma, std::sqrt(noise));
        }

        IndexSubset all(h);
        for (int i = 0; i < h; ++i) all[i] = i;
        const CovarianceStats stats = covariance_stats(local_means, all);
        out.measured_max_trace = std::max(out.measured_max_trace, stats.trace);
        out.measured_max_spectral = std::max(out.measured_max_spectral, stats.lambda_max);
    }
    out.trace_bound = 3.0 * out.G * out.G +
                      3.0 * out.sigma * out.sigma * (1.0 + 1.0 / static_cast<double>(h));
    out.spectral_bound = out.sigma * out.sigma + out.G * out.G;
    return out;
}

CocoercivityWitness cwtm_cocoercivity_counterexample(double L) {
    if (!(L > 0.0))
        throw validation_error("cwtm_cocoercivity_counterexample: need L > 0");
    LossModel model;
    model.family = LossFamily::squared_regression;
    model.C = 1.0;
    model.L = L;

    const double root_l = std::sqrt(L);
    const int angles = 720;
    // Witnesses require ||x|| well inside the ball: the per-coordinate medians
    // can only land on opposite branches when ||x||^2 / L < 1 - sqrt(3)/2.
    const double radii[] = {0.1, 0.2, 0.3};
    const Vector omega = {0.0, 0.0};

    for (int iv = 0; iv < angles; ++iv) {
        const double av = 2.0 * std::numbers::pi * iv / angles;
        const Vector v = {root_l * std::cos(av), root_l * std::sin(av)};
        for (double r : radii) {
            for (int ix = 0; ix < angles; ++ix) {
                const double ax = 2.0 * std::numbers::pi * ix / angles;
                const Vector x = {r * root_l * std::cos(ax), r * root_l * std::sin(ax)};
                const Vector theta = scaled(x, 1.0 / L);
                const DataPoint z1 = DataPoint::pair(v, 0.0);
                const DataPoint z2 = DataPoint::pair(x, 0.0);
                const DataPoint z3 = DataPoint::pair(x, 1.0);
                const std::vector<Vector> at_theta = {loss_gradient(model, theta, z1),
                                                      loss_gradient(model, theta, z2),
                                                      loss_gradient(model, theta, z3)};
                const std::vector<Vector> at_omega = {loss_gradient(model, omega, z1),
                                                      loss_gradient(model, omega, z2),
                                                      loss_gradient(model, omega, z3)};
                const Vector agg_theta = aggregate_cwtm(at_theta, 1).aggregate;
                const Vector agg_omega = aggregate_cwtm(at_omega, 1).aggregate;
                const double inner = dot(sub(theta, omega), sub(agg_theta, agg_omega));
                if (inner < -1e-6) return {v, x, theta, inner};
            }
        }
    }
    throw property_violation(
        "cwtm_cocoercivity_counterexample: no witness on the search grid");
}

} // namespace ral
