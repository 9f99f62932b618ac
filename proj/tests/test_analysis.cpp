#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "ral/aggregation.hpp"
#include "ral/analysis.hpp"
#include "ral/threats.hpp"

using namespace ral;

namespace {

Trajectory scalar_trajectory(double theta_final) {
    Trajectory t;
    t.thetas = {{0.0}, {theta_final}};
    return t;
}

// Batch of n scalar gradients for a one-step trajectory with a recorded
// selection, as the empirical-kappa scan expects.
Trajectory one_step(const std::vector<double>& values, IndexSubset selected) {
    Trajectory t;
    t.thetas = {{0.0}, {0.0}};
    std::vector<std::pair<int, Vector>> grads;
    for (size_t i = 0; i < values.size(); ++i)
        grads.emplace_back(static_cast<int>(i), Vector{values[i]});
    t.honest_gradients.push_back(grads);
    t.byzantine_values.push_back({});
    t.selected_subsets.push_back(std::move(selected));
    return t;
}

} // namespace

TEST_CASE("stability closed forms for the scalar loss families") {
    LossModel linear;
    linear.family = LossFamily::linear1d;
    linear.C = 1.0;

    CHECK(measure_stability(scalar_trajectory(0.4), scalar_trajectory(0.4), linear) == 0.0);
    CHECK(measure_stability(scalar_trajectory(0.5), scalar_trajectory(0.2), linear) ==
          doctest::Approx(0.3));

    // The f=3 poisoning pair: C |theta_T - theta'_T| with psi = sqrt(7/11).
    const double psi = std::sqrt(7.0 / 11.0);
    const double theta_variant = -(3.0 / 12.0) * (1.0 + psi) / 2.0 * 5.0;
    CHECK(measure_stability(scalar_trajectory(5.0 / 3.0),
                            scalar_trajectory(theta_variant), linear) ==
          doctest::Approx(2.7902).epsilon(1e-4));

    // f=0: the differing sample alone moves theta by 1/3.
    CHECK(measure_stability(scalar_trajectory(1.0 / 3.0), scalar_trajectory(0.0),
                            linear) == doctest::Approx(1.0 / 3.0));

    LossModel quad;
    quad.family = LossFamily::quadratic_mean;
    quad.C = 1.0;
    quad.mu = 1.0;
    // Evaluated at the endpoint z = chi C/(2mu), chi = -sign(dtheta):
    // (mu/2)[(0.3+0.5)^2 - (0.1+0.5)^2] = 0.14.
    const double got = measure_stability(scalar_trajectory(0.3), scalar_trajectory(0.1), quad);
    CHECK(got == doctest::Approx(0.14).epsilon(1e-12));
    // The endpoint is the true sup: no admissible z does better.
    for (int k = -1000; k <= 1000; ++k) {
        const double z = 0.5 * k / 1000.0;
        const double diff = 0.5 * (0.3 - z) * (0.3 - z) - 0.5 * (0.1 - z) * (0.1 - z);
        CHECK(diff <= got + 1e-12);
    }
    LossModel quad_nomu = quad;
    quad_nomu.mu.reset();
    CHECK_THROWS_AS(measure_stability(scalar_trajectory(0.3), scalar_trajectory(0.1),
                                      quad_nomu),
                    validation_error);

    // Grid-based families refuse to run without a grid and maximize over it
    // when given one.
    LossModel sq;
    sq.family = LossFamily::squared_regression;
    sq.C = 1.0;
    sq.L = 1.0;
    Trajectory a, b;
    a.thetas = {{0.0}, {0.5}};
    b.thetas = {{0.0}, {0.0}};
    CHECK_THROWS_AS(measure_stability(a, b, sq), validation_error);
    std::vector<DataPoint> grid = {DataPoint::pair({1.0}, 0.0),
                                   DataPoint::pair({1.0}, 1.0)};
    // losses: 1/2 (x theta - y)^2; diff at y=0: 1/8; at y=1: 1/8 - 1/2.
    CHECK(measure_stability(a, b, sq, &grid) == doctest::Approx(0.125));
}

TEST_CASE("empirical kappa hand-enumerated example and guard rails") {
    // Honest values {0, 0, 1}, n=3, f=1, SMEA picks {0,1} (aggregate 0):
    // S={0,1}: ratio 0; S={0,2} and {1,2}: |0-1/2|^2 / (1/4) = 1.
    const Trajectory t = one_step({0.0, 0.0, 1.0}, IndexSubset{0, 1});
    CHECK(empirical_kappa(t, 3, 1) == doctest::Approx(1.0).epsilon(1e-12));

    // f=0: only the full subset exists and the aggregate is its mean.
    const Trajectory t0 = one_step({0.3, -0.2, 0.9}, IndexSubset{0, 1, 2});
    CHECK(empirical_kappa(t0, 3, 0) == 0.0);

    // Zero-variance subset with a nonzero deviation must abort loudly.
    const Trajectory bad = one_step({0.0, 0.0, 1.0}, IndexSubset{0, 2});
    CHECK_THROWS_AS(empirical_kappa(bad, 3, 1), property_violation);

    // Missing selection record.
    Trajectory no_sel = one_step({0.0, 1.0, 2.0}, IndexSubset{0, 1});
    no_sel.selected_subsets[0].reset();
    CHECK_THROWS_AS(empirical_kappa(no_sel, 3, 1), validation_error);

    CHECK_THROWS_AS(empirical_kappa(t, 3, 2), validation_error);
}

TEST_CASE("empirical kappa stays under the certified coefficient on a real run") {
    ConstructionParams params;
    const ConstructionOutput cons = build_linear_lb(params);
    RunConfig rc;
    rc.algorithm = Algorithm::gd;
    rc.rule = Rule::smea;
    rc.f = 3;
    rc.T = 5;
    rc.schedule = Schedule::constant(1.0);
    rc.theta0 = {0.0};
    WorkerSet ws;
    ws.n = 15;
    ws.honest = cons.pair.base;
    const Trajectory traj = run(rc, ws, cons.loss);
    const double kh = empirical_kappa(traj, 15, 3);
    CHECK(kh >= 0.0);
    CHECK(kh <= kappa_smea(15, 3) + 1e-9);
}

TEST_CASE("generalization error formula and enumeration oracle") {
    CHECK(generalization_error_linear(0.7, 0.7, 15, 3) == 0.0);
    CHECK(generalization_error_linear(0.0, 1.0 / 3.0, 15, 0) ==
          doctest::Approx(1.0 / 180.0).epsilon(1e-15));

    // Oracle: the pivot's distribution is (1/2)d_0 + (1/2)d_{-1}; every other
    // honest worker's empirical and population risks agree. With l(theta; z) =
    // theta z the expected population-minus-empirical gap enumerates to four
    // terms over {dataset} x {pivot sample}.
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(gen() % 13);
        const int f = static_cast<int>(gen() % ((n - 1) / 2 + 1));
        const double theta0 = u(gen), theta_minus = u(gen);
        const int h = n - f;
        const double pop0 = (0.5 * (theta0 * 0.0) + 0.5 * (theta0 * -1.0)) / h;
        const double emp0 = (theta0 * 0.0) / h;
        const double popm = (0.5 * (theta_minus * 0.0) + 0.5 * (theta_minus * -1.0)) / h;
        const double empm = (theta_minus * -1.0) / h;
        const double oracle = 0.5 * (pop0 - emp0) + 0.5 * (popm - empm);
        CHECK(generalization_error_linear(theta0, theta_minus, n, f) ==
              doctest::Approx(oracle).epsilon(1e-12));
    }
}

TEST_CASE("theorem bound closed-form examples") {
    BoundQuery q;
    q.theorem = TheoremId::byz_convex;
    q.gamma = 1.0;
    q.C = 1.0;
    q.L = 1.0;
    q.T = 5;
    q.n = 15;
    q.f = 3;
    q.m = 1;
    q.kappa = 16.0 / 9.0;
    const BoundResult byz = theorem_bound(q);
    CHECK(byz.value == doctest::Approx(85.0 / 6.0).epsilon(1e-12));
    CHECK_FALSE(byz.order_only);

    q.theorem = TheoremId::pois_smea_convex;
    const BoundResult pois = theorem_bound(q);
    CHECK(pois.value == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
    CHECK_FALSE(pois.order_only);
    CHECK(byz.value / pois.value == doctest::Approx(4.25).epsilon(1e-12));

    // f=0 collapse: both convex bounds equal the attack-free term.
    BoundQuery q0 = q;
    q0.f = 0;
    q0.kappa = 0.0;
    q0.theorem = TheoremId::byz_convex;
    const double free_term = 2.0 * 1.0 * 1.0 * 5.0 / (15.0 * 1.0);
    CHECK(theorem_bound(q0).value == doctest::Approx(free_term).epsilon(1e-14));
    q0.theorem = TheoremId::pois_smea_convex;
    CHECK(theorem_bound(q0).value == doctest::Approx(free_term).epsilon(1e-14));

    // Strongly convex pair.
    BoundQuery qs = q;
    qs.mu = 1.0;
    qs.theorem = TheoremId::byz_strongcvx;
    CHECK(theorem_bound(qs).value ==
          doctest::Approx(2.0 * (1.0 / 12.0 + std::sqrt(16.0 / 9.0))).epsilon(1e-12));
    qs.theorem = TheoremId::pois_smea_strongcvx;
    CHECK(theorem_bound(qs).value == doctest::Approx(2.0 * (4.0 / 12.0)).epsilon(1e-12));

    // Lower bounds carry the order-only flag and drop the factor 2.
    BoundQuery ql = q;
    ql.theorem = TheoremId::lb_pois_convex;
    const BoundResult lb = theorem_bound(ql);
    CHECK(lb.order_only);
    CHECK(lb.value == doctest::Approx(5.0 * (4.0 / 12.0)).epsilon(1e-12));
    ql.theorem = TheoremId::lb_pois_strongcvx;
    ql.mu = 0.5;
    const BoundResult lbs = theorem_bound(ql);
    CHECK(lbs.order_only);
    CHECK(lbs.value == doctest::Approx((1.0 / 0.5) * (4.0 / 12.0)).epsilon(1e-12));

    // Nonconvex formulas, recomputed inline.
    BoundQuery qn;
    qn.theorem = TheoremId::byz_nonconvex_sgd;
    qn.c = 1.0;
    qn.C = 1.0;
    qn.L = 1.0;
    qn.T = 5;
    qn.n = 15;
    qn.f = 3;
    qn.m = 1;
    qn.kappa = 16.0 / 9.0;
    qn.ell_inf = 1.0;
    {
        const double e1 = 1.0 / 2.0, e2 = 1.0 / 2.0; // 1/(c+1), c/(c+1) at c=1
        const double expected = 2.0 * std::pow(2.0, e1) *
                                std::pow(1.0 / 12.0 + std::sqrt(16.0 / 9.0), e1) *
                                std::pow(5.0, e2);
        CHECK(theorem_bound(qn).value == doctest::Approx(expected).epsilon(1e-12));
    }
    qn.theorem = TheoremId::pois_smea_nonconvex;
    {
        const double p = (3.0 + 1.0) / 12.0;
        const double expected = 2.0 * std::pow(2.0 * p, 0.5) * std::pow(5.0, 0.5);
        CHECK(theorem_bound(qn).value == doctest::Approx(expected).epsilon(1e-12));
    }
    qn.theorem = TheoremId::pois_cwtm_nonconvex;
    qn.nu = 2.0;
    {
        const double lead = 2.0 * 4.0 / 16.0; // 2 C^2 nu^2 / (2+nu)^2, L = 1
        const double expected = 2.0 * std::pow(lead, 0.5) * std::pow(5.0, 0.5) /
                                (1.0 * std::pow(std::sqrt(15.0), 0.5));
        CHECK(theorem_bound(qn).value == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("theorem bound validation and regimes") {
    BoundQuery q;
    q.theorem = TheoremId::byz_convex;
    q.gamma = 1.0;
    q.T = 5;
    q.n = 15;
    q.f = 3;
    q.m = 1;
    q.kappa = 1.0;

    // Step-size regimes: gamma <= 2/L for the convex bound, 1/L for the
    // strongly convex ones, overridable.
    BoundQuery bad = q;
    bad.gamma = 2.5;
    CHECK_THROWS_AS(theorem_bound(bad), validation_error);
    bad.regime_override = true;
    CHECK_NOTHROW(theorem_bound(bad));
    BoundQuery bads = q;
    bads.theorem = TheoremId::byz_strongcvx;
    bads.mu = 1.0;
    bads.gamma = 1.5;
    CHECK_THROWS_AS(theorem_bound(bads), validation_error);

    // Missing-field errors name the requirement.
    auto message_mentions = [](const BoundQuery& query, const std::string& needle) {
        try {
            theorem_bound(query);
        } catch (const validation_error& e) {
            return std::string(e.what()).find(needle) != std::string::npos;
        }
        return false;
    };
    BoundQuery miss = q;
    miss.kappa.reset();
    CHECK(message_mentions(miss, "kappa"));
    miss = q;
    miss.gamma.reset();
    CHECK(message_mentions(miss, "gamma"));
    miss = q;
    miss.theorem = TheoremId::byz_strongcvx;
    CHECK(message_mentions(miss, "mu"));
    miss = q;
    miss.theorem = TheoremId::byz_nonconvex_sgd;
    miss.c = 1.0;
    miss.gamma.reset();
    CHECK(message_mentions(miss, "ell_inf"));
    miss.ell_inf = 1.0;
    miss.c.reset();
    CHECK(message_mentions(miss, "c"));
    miss = q;
    miss.theorem = TheoremId::pois_cwtm_nonconvex;
    miss.c = 1.0;
    miss.ell_inf = 1.0;
    CHECK(message_mentions(miss, "nu"));

    BoundQuery badnf = q;
    badnf.f = 8;
    CHECK_THROWS_AS(theorem_bound(badnf), validation_error);
}

TEST_CASE("theorem bounds are monotone in the expected directions") {
    auto value = [](TheoremId id, int n, int f, int m, int T, double C) {
        BoundQuery q;
        q.theorem = id;
        q.gamma = 0.5;
        q.c = 1.0;
        q.C = C;
        q.L = 1.0;
        q.mu = 0.5;
        q.T = T;
        q.n = n;
        q.f = f;
        q.m = m;
        q.kappa = 1.2;
        q.ell_inf = 1.0;
        q.nu = 2.0;
        return theorem_bound(q).value;
    };
    const TheoremId ids[] = {
        TheoremId::byz_convex,        TheoremId::byz_strongcvx,
        TheoremId::byz_nonconvex_sgd, TheoremId::pois_smea_convex,
        TheoremId::pois_smea_strongcvx, TheoremId::pois_smea_nonconvex,
        TheoremId::pois_cwtm_nonconvex, TheoremId::lb_pois_convex,
        TheoremId::lb_pois_strongcvx,
    };
    for (TheoremId id : ids) {
        for (int f = 1; f <= 4; ++f)
            CHECK(value(id, 15, f + 1, 2, 5, 1.0) >= value(id, 15, f, 2, 5, 1.0) - 1e-12);
        for (int T = 1; T <= 4; ++T)
            CHECK(value(id, 15, 3, 2, T + 1, 1.0) >= value(id, 15, 3, 2, T, 1.0) - 1e-12);
        CHECK(value(id, 15, 3, 2, 5, 2.0) >= value(id, 15, 3, 2, 5, 1.0) - 1e-12);
        for (int n : {13, 15, 17, 19})
            CHECK(value(id, n + 2, 3, 2, 5, 1.0) <= value(id, n, 3, 2, 5, 1.0) + 1e-12);
        for (int m : {1, 2, 4})
            CHECK(value(id, 15, 3, 2 * m, 5, 1.0) <= value(id, 15, 3, m, 5, 1.0) + 1e-12);
    }
}

TEST_CASE("pathwise covariance check") {
    Trajectory t;
    t.thetas = {{0.0}, {0.0}};
    t.honest_gradients.push_back({{0, {0.5}}, {1, {0.5}}, {2, {0.5}}});
    t.byzantine_values.push_back({});
    t.selected_subsets.push_back(std::nullopt);
    const CovarianceCheck same = covariance_lemma_check(t, 1.0);
    CHECK(same.pass);
    CHECK(same.worst_slack == doctest::Approx(1.0)); // trace 0, slack C^2

    // Boundary: {-C, C} has trace exactly C^2.
    Trajectory edge;
    edge.thetas = {{0.0}, {0.0}};
    edge.honest_gradients.push_back({{0, {-1.0}}, {1, {1.0}}});
    edge.byzantine_values.push_back({});
    edge.selected_subsets.push_back(std::nullopt);
    const CovarianceCheck b = covariance_lemma_check(edge, 1.0);
    CHECK(b.pass);
    CHECK(b.worst_slack == doctest::Approx(0.0).epsilon(1e-15));

    // A violation reports the offending step.
    Trajectory viol;
    viol.thetas = {{0.0}, {0.0}, {0.0}};
    viol.honest_gradients.push_back({{0, {0.0}}, {1, {0.0}}});
    viol.honest_gradients.push_back({{0, {-2.0}}, {1, {2.0}}});
    viol.byzantine_values.assign(2, {});
    viol.selected_subsets.assign(2, std::nullopt);
    const CovarianceCheck v = covariance_lemma_check(viol, 1.0);
    CHECK_FALSE(v.pass);
    CHECK(v.worst_step == 1);
    CHECK(v.worst_slack == doctest::Approx(-3.0));

    Trajectory empty;
    CHECK_THROWS_AS(covariance_lemma_check(empty, 1.0), validation_error);
}

TEST_CASE("refined covariance record") {
    LossModel quad;
    quad.family = LossFamily::quadratic_mean;
    quad.C = 10.0; // generous ball keeps every sample admissible
    quad.mu = 1.0;

    // Homogeneous data: G = 0, so the trace bound collapses to its sigma term.
    {
        std::vector<WorkerDataset> workers;
        for (int i = 0; i < 4; ++i)
            workers.push_back({i, {DataPoint::scalar(0.5), DataPoint::scalar(-0.5)}});
        const auto rec = refined_covariance_check(workers, quad, {{0.0}, {1.0}}, 4, 0);
        CHECK(rec.G == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(rec.trace_bound ==
              doctest::Approx(3.0 * rec.sigma * rec.sigma * (1.0 + 0.25)).epsilon(1e-12));
        CHECK(rec.sigma == doctest::Approx(0.5)); // grad spread mu*|z - zbar|
        CHECK(rec.pass());
    }

    // Single-sample workers: sigma = 0, spectral bound G^2; the measured GD
    // spectral statistic attains it for quadratics (gradient spread is
    // theta-independent).
    {
        std::vector<WorkerDataset> workers = {
            {0, {DataPoint::scalar(-1.0)}},
            {1, {DataPoint::scalar(0.0)}},
            {2, {DataPoint::scalar(1.0)}},
        };
        const auto rec = refined_covariance_check(workers, quad, {{-1.0}, {0.5}}, 3, 0);
        CHECK(rec.sigma == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(rec.spectral_bound == doctest::Approx(rec.G * rec.G).epsilon(1e-12));
        CHECK(rec.measured_max_spectral ==
              doctest::Approx(rec.G * rec.G).epsilon(1e-9));
        CHECK(rec.pass());
    }

    // Random heterogeneous datasets stay within both bounds.
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int workers_n = 3 + static_cast<int>(gen() % 5);
        const int m = 1 + static_cast<int>(gen() % 3);
        std::vector<WorkerDataset> workers;
        for (int i = 0; i < workers_n; ++i) {
            WorkerDataset w;
            w.id = i;
            for (int j = 0; j < m; ++j) w.data.push_back(DataPoint::scalar(u(gen)));
            workers.push_back(std::move(w));
        }
        std::vector<Vector> grid;
        for (int k = -2; k <= 2; ++k) grid.push_back({1.5 * k});
        const auto rec = refined_covariance_check(workers, quad, grid, workers_n, 0);
        CHECK(rec.measured_max_trace <= rec.trace_bound + 1e-9);
        CHECK(rec.measured_max_spectral <= rec.spectral_bound + 1e-9);
        CHECK(rec.pass());
    }

    CHECK_THROWS_AS(refined_covariance_check({{0, {DataPoint::scalar(0.0)}}}, quad,
                                             {}, 1, 0),
                    validation_error);
}

TEST_CASE("trimmed-mean co-coercivity witness survives independent recomputation") {
    for (const double L : {1.0, 2.0}) {
        const CocoercivityWitness w = cwtm_cocoercivity_counterexample(L);
        CHECK(w.inner_product < -1e-6);
        REQUIRE(w.v.size() == 2);
        REQUIRE(w.x.size() == 2);
        CHECK(norm2(w.v) == doctest::Approx(std::sqrt(L)).epsilon(1e-12));
        CHECK(w.theta[0] == doctest::Approx(w.x[0] / L));
        CHECK(w.theta[1] == doctest::Approx(w.x[1] / L));

        // Recompute both aggregates from raw squared-loss gradients
        // g(theta; (x,y)) = (<x,theta> - y) x and coordinatewise medians.
        auto grad = [](const Vector& xx, double y, const Vector& th) {
            const double r = xx[0] * th[0] + xx[1] * th[1] - y;
            return Vector{r * xx[0], r * xx[1]};
        };
        auto median3 = [](double a, double b, double c) {
            double v[3] = {a, b, c};
            std::sort(v, v + 3);
            return v[1];
        };
        const Vector omega = {0.0, 0.0};
        Vector agg_theta(2), agg_omega(2);
        for (int k = 0; k < 2; ++k) {
            const Vector g1t = grad(w.v, 0.0, w.theta);
            const Vector g2t = grad(w.x, 0.0, w.theta);
            const Vector g3t = grad(w.x, 1.0, w.theta);
            agg_theta[k] = median3(g1t[k], g2t[k], g3t[k]);
            const Vector g1o = grad(w.v, 0.0, omega);
            const Vector g2o = grad(w.x, 0.0, omega);
            const Vector g3o = grad(w.x, 1.0, omega);
            agg_omega[k] = median3(g1o[k], g2o[k], g3o[k]);
        }
        const double inner = (w.theta[0] - omega[0]) * (agg_theta[0] - agg_omega[0]) +
                             (w.theta[1] - omega[1]) * (agg_theta[1] - agg_omega[1]);
        CHECK(inner == doctest::Approx(w.inner_product).epsilon(1e-12));

        // The omega-side medians are zero when x sits in the open positive
        // quadrant (grad set {0, 0, -x_k} per coordinate).
        if (w.x[0] > 0.0 && w.x[1] > 0.0) {
            CHECK(agg_omega[0] == 0.0);
            CHECK(agg_omega[1] == 0.0);
        }
    }
    CHECK_THROWS_AS(cwtm_cocoercivity_counterexample(0.0), validation_error);
}
