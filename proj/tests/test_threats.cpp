#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "ral/aggregation.hpp"
#include "ral/threats.hpp"

using namespace ral;

namespace {

double dataset_value(const ConstructionOutput& cons, int worker, int sample) {
    return cons.pair.base[worker].data[sample].z;
}

// Membership oracle used to cross-check the tailored attack: place the
// candidate at every Byzantine slot and ask whether SMEA selects any of them.
bool member(const std::vector<std::pair<int, Vector>>& honest, const IndexSubset& byz,
            int n, int f, double candidate) {
    std::vector<Vector> batch(n);
    for (const auto& [id, g] : honest) batch[id] = g;
    for (int id : byz) batch[id] = {candidate};
    const AggregationOutcome out = aggregate_smea(batch, f);
    for (int id : byz)
        if (std::binary_search(out.selected->begin(), out.selected->end(), id))
            return true;
    return false;
}

} // namespace

TEST_CASE("linear construction layout and closed forms") {
    ConstructionParams params; // n=15, f=3, m=1, C=1, T=5, gamma=1
    const ConstructionOutput cons = build_linear_lb(params);

    CHECK(cons.group_pivot == IndexSubset{0});
    CHECK(cons.group_N == IndexSubset{1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(cons.group_E == IndexSubset{9, 10, 11});
    CHECK(cons.group_F == IndexSubset{12, 13, 14});

    const double psi = std::sqrt(7.0 / 11.0);
    CHECK(cons.predicted->psi == doctest::Approx(psi).epsilon(1e-15));
    CHECK(cons.predicted->p == doctest::Approx(1.0 / 3.0));
    CHECK(cons.predicted->theta_T == doctest::Approx(5.0 / 3.0));
    CHECK(cons.predicted->theta_variant_T ==
          doctest::Approx(-(3.0 / 12.0) * (1.0 + psi) / 2.0 * 5.0));

    // Dataset values: pivot -C then zeros (variant all zero), N zero,
    // E (1+psi)C/2, F -C.
    CHECK(dataset_value(cons, 0, 0) == -1.0);
    CHECK(cons.pair.variant[0].data[0].z == 0.0);
    CHECK(dataset_value(cons, 4, 0) == 0.0);
    CHECK(dataset_value(cons, 9, 0) == doctest::Approx((1.0 + psi) / 2.0));
    CHECK(dataset_value(cons, 14, 0) == -1.0);
    CHECK(cons.pair.diff_worker == 0);
    CHECK(cons.pair.diff_sample == 0);
    CHECK(cons.loss.family == LossFamily::linear1d);

    // Predicted subsets.
    CHECK(cons.predicted->base_subset ==
          IndexSubset{0, 1, 2, 3, 4, 5, 6, 7, 8, 12, 13, 14});
    CHECK(cons.predicted->variant_subset ==
          IndexSubset{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});

    // m > 1: pivot holds one -C among zeros, psi follows the m-dependent rule.
    params.m = 4;
    const ConstructionOutput consm = build_linear_lb(params);
    CHECK(dataset_value(consm, 0, 0) == -1.0);
    CHECK(dataset_value(consm, 0, 3) == 0.0);
    CHECK(consm.predicted->psi ==
          doctest::Approx(std::sqrt((9.0 - 0.5) / (9.0 + 0.5))));
    CHECK(consm.predicted->p == doctest::Approx((3.0 + 0.25) / 12.0));
}

TEST_CASE("linear construction edge cases: f = 0 and the clamped psi") {
    ConstructionParams params;
    params.f = 0;
    const ConstructionOutput c0 = build_linear_lb(params);
    CHECK(c0.group_E.empty());
    CHECK(c0.group_F.empty());
    CHECK(static_cast<int>(c0.group_N.size()) == 14);
    CHECK(c0.predicted->p == doctest::Approx((0.0 + 1.0) / 15.0));

    params.f = 7;
    const ConstructionOutput c7 = build_linear_lb(params);
    CHECK(c7.predicted->psi == 0.0); // negative radicand clamps to zero
    CHECK(dataset_value(c7, 1, 0) == doctest::Approx(0.5)); // E value C/2
    CHECK(c7.group_N.empty());
}

TEST_CASE("strongly convex construction") {
    ConstructionParams params;
    params.mu = 1.0;
    const ConstructionOutput cons = build_strongcvx_lb(params);
    CHECK(cons.loss.family == LossFamily::quadratic_mean);
    REQUIRE(cons.loss.domain.has_value());
    CHECK(cons.loss.domain->radius == doctest::Approx(0.5)); // C/(2 mu)

    // theta_T = p/2 when gamma = mu = 1 collapses the geometric factor.
    CHECK(cons.predicted->theta_T == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

    // psi defaults to the midpoint of (max{sqrt((n-2(f+1/m))/(n-2(f-1/m))),
    // 1-4/(m(n-2f))}, 1).
    for (int f = 1; f <= 6; ++f) {
        ConstructionParams p;
        p.f = f;
        p.mu = 1.0;
        const ConstructionOutput c = build_strongcvx_lb(p);
        const double a = std::sqrt((15.0 - 2.0 * (f + 1.0)) / (15.0 - 2.0 * (f - 1.0)));
        const double b = 1.0 - 4.0 / (15.0 - 2.0 * f);
        const double mid = (std::max(a, b) + 1.0) / 2.0;
        CHECK(c.predicted->psi == doctest::Approx(mid).epsilon(1e-14));
        // Dataset: pivot C/(2mu) special sample, N zero, E negative, F positive.
        CHECK(c.pair.base[0].data[0].z == doctest::Approx(0.5));
        CHECK(c.pair.variant[0].data[0].z == 0.0);
        CHECK(dataset_value(c, c.group_E[0], 0) ==
              doctest::Approx(-(1.0 + mid) / 2.0 * 0.5));
        CHECK(dataset_value(c, c.group_F[0], 0) == doctest::Approx(0.5));
        // theta'_T = -[f(1+psi)C/(4 mu (n-f))] (1-(1-gamma mu)^T), here the
        // geometric factor is 1.
        CHECK(c.predicted->theta_variant_T ==
              doctest::Approx(-f * (1.0 + mid) / (4.0 * (15.0 - f))));
    }

    // m = 2 moves both interval endpoints.
    {
        ConstructionParams p;
        p.f = 3;
        p.m = 2;
        p.mu = 1.0;
        const ConstructionOutput c = build_strongcvx_lb(p);
        const double a = std::sqrt((15.0 - 2.0 * 3.5) / (15.0 - 2.0 * 2.5));
        const double b = 1.0 - 4.0 / (2.0 * 9.0);
        CHECK(c.predicted->psi == doctest::Approx((std::max(a, b) + 1.0) / 2.0));
    }

    // f = 7: the radicand goes negative, no valid psi exists.
    {
        ConstructionParams p;
        p.f = 7;
        p.mu = 1.0;
        CHECK_THROWS_AS(build_strongcvx_lb(p), construction_error);
    }

    // Overrides outside the open interval are rejected.
    {
        ConstructionParams p;
        p.mu = 1.0;
        p.psi_override = 0.5; // below the lower endpoint for f=3
        CHECK_THROWS_AS(build_strongcvx_lb(p), construction_error);
        p.psi_override = 1.0; // closed endpoint excluded
        CHECK_THROWS_AS(build_strongcvx_lb(p), construction_error);
    }

    // mu is required and must not exceed L.
    {
        ConstructionParams p;
        CHECK_THROWS_AS(build_strongcvx_lb(p), validation_error);
        p.mu = 2.0;
        p.L = 1.0;
        CHECK_THROWS_AS(build_strongcvx_lb(p), validation_error);
    }
}

TEST_CASE("projected construction parameters and predictions") {
    ConstructionParams params;
    params.T = 16;
    params.m = 4;
    params.epsilon = 0.1;
    const ConstructionOutput cons = build_projected_lb(params);
    REQUIRE(cons.projected_predicted.has_value());
    const ProjectedPredictions& pp = *cons.projected_predicted;

    CHECK(pp.psi == doctest::Approx(7.0 / 9.0));
    CHECK(pp.beta == doctest::Approx(1.0));
    CHECK(pp.alpha == doctest::Approx(0.9));
    CHECK(pp.b == doctest::Approx(0.25));
    CHECK(pp.p == doctest::Approx(3.25 / 12.0));
    CHECK(pp.lambda_star() == doctest::Approx(16.0));
    CHECK(pp.contraction() == doctest::Approx(1.0 - (3.25 / 12.0) * 0.0625));
    CHECK(pp.lambda_at_t0() == doctest::Approx(4.0 / 12.0));

    // Conditional expectation identity and the geometric mixture.
    const double q = pp.contraction();
    for (int t0 = 1; t0 <= 16; ++t0)
        CHECK(pp.conditional_lambda(t0) ==
              doctest::Approx(16.0 + (1.0 / 3.0 - 16.0) * std::pow(q, 16 - t0)));
    double mixture = 0.0;
    for (int t0 = 1; t0 <= 16; ++t0)
        mixture += 0.25 * std::pow(0.75, t0 - 1) * pp.conditional_lambda(t0);
    CHECK(pp.mixture_mean() == doctest::Approx(mixture).epsilon(1e-12));

    // Closed-form stability floor at these parameters.
    const double tau = 16.0 / 4.0;
    const double floor_expected =
        0.5 * (1.0 - (1.0 - std::exp(-tau)) / tau) * (3.25 / 12.0) * 16.0;
    CHECK(pp.stability_lower_bound() == doctest::Approx(floor_expected).epsilon(1e-12));
    CHECK(pp.stability_lower_bound() == doctest::Approx(1.6349215).epsilon(1e-5));

    // Monte-Carlo check of the conditional expectation: replay the scalar
    // recursion with Bernoulli(1/m) pivot draws after a forced draw at t0 = 3.
    {
        std::mt19937_64 gen(99);
        std::bernoulli_distribution draw(0.25);
        const int t0 = 3, T = 16;
        double sum = 0.0, sq = 0.0;
        const int reps = 200000;
        for (int r = 0; r < reps; ++r) {
            double lambda = pp.lambda_at_t0();
            for (int t = t0 + 1; t <= T; ++t) {
                const double x = draw(gen) ? 1.0 : 0.0;
                const double w = (3.0 + x) / 12.0;
                lambda = lambda * (1.0 - 0.0625 * w) + w;
            }
            sum += lambda;
            sq += lambda * lambda;
        }
        const double mean = sum / reps;
        const double se = std::sqrt((sq / reps - mean * mean) / reps);
        CHECK(std::abs(mean - pp.conditional_lambda(t0)) <= 3.0 * se + 1e-9);
    }

    // E-group gradient at theta = 0 has norm (1 - eps) C.
    const int e_id = cons.group_E[0];
    const Vector g = loss_gradient(cons.loss, {0.0}, cons.pair.base[e_id].data[0]);
    CHECK(norm2(g) == doctest::Approx(0.9));

    // The ray domain points along v = sqrt(L).
    REQUIRE(cons.loss.domain.has_value());
    CHECK(cons.loss.domain->direction == Vector{1.0});
}

TEST_CASE("projected construction parameter validation") {
    ConstructionParams params;
    params.T = 16;
    params.epsilon = 0.3; // above min{1 - 7/9, gamma L f/(n-f)} = 2/9
    CHECK_THROWS_AS(build_projected_lb(params), construction_error);
    params.epsilon = 0.0;
    CHECK_THROWS_AS(build_projected_lb(params), construction_error);
    params.epsilon = 0.1;
    params.f = 7; // n - 2f = 1 < 3
    CHECK_THROWS_AS(build_projected_lb(params), construction_error);
}

TEST_CASE("byzantine identity table") {
    CHECK(byzantine_identity_table(15, 0) == IndexSubset{});
    CHECK(byzantine_identity_table(15, 1) == IndexSubset{1});
    CHECK(byzantine_identity_table(15, 2) == IndexSubset{1, 2});
    CHECK(byzantine_identity_table(15, 3) == IndexSubset{1, 2, 3});
    CHECK(byzantine_identity_table(15, 4) == IndexSubset{1, 2, 3, 4});
    CHECK(byzantine_identity_table(15, 5) == IndexSubset{1, 2, 3, 4, 5});
    CHECK(byzantine_identity_table(15, 6) == IndexSubset{6, 7, 8, 9, 10, 11});
    CHECK(byzantine_identity_table(15, 7) == IndexSubset{5, 6, 7, 8, 9, 10, 11});
    // Untabulated sizes default to the last f workers.
    CHECK(byzantine_identity_table(9, 2) == IndexSubset{7, 8});
}

TEST_CASE("tailored attack state mirrors the poisoning landscape") {
    ConstructionParams params;
    const ConstructionOutput cons = build_linear_lb(params);
    const IndexSubset byz = byzantine_identity_table(15, 3);
    const TailoredAttackState state = make_tailored_state(cons, byz, 1e-3);
    CHECK(state.byz_ids == byz);
    CHECK(state.epsilon == 1e-3);
    CHECK(state.C == 1.0);
    // Mimic values equal the base-dataset mean of each hijacked worker
    // (all three sit in group N here).
    REQUIRE(state.poisoning_mimic.size() == 3);
    for (const auto& [id, v] : state.poisoning_mimic) CHECK(v == 0.0);

    // f = 6 hijacks a mix of E and F workers.
    ConstructionParams p6;
    p6.f = 6;
    const ConstructionOutput c6 = build_linear_lb(p6);
    const IndexSubset byz6 = byzantine_identity_table(15, 6);
    const TailoredAttackState s6 = make_tailored_state(c6, byz6, 1e-3);
    const double e_value = (1.0 + c6.predicted->psi) / 2.0;
    for (const auto& [id, v] : s6.poisoning_mimic) {
        if (id <= 8)
            CHECK(v == doctest::Approx(e_value)); // group E ids 3..8
        else
            CHECK(v == doctest::Approx(-1.0)); // group F ids 9..14
    }

    // At theta = 0 the strategy simply replays the mimic value.
    TailoredByzantineStrategy strat(s6);
    std::vector<std::pair<int, Vector>> honest;
    for (int id = 0; id < 15; ++id)
        if (!std::binary_search(byz6.begin(), byz6.end(), id))
            honest.emplace_back(id, Vector{c6.pair.base[id].data[0].z});
    const Vector at_zero = strat.value(9, {0.0}, honest);
    CHECK(at_zero == Vector{-1.0});
    const Vector at_zero_e = strat.value(6, {0.0}, honest);
    CHECK(at_zero_e[0] == doctest::Approx(e_value));
}

TEST_CASE("tailored value sits just inside the membership region") {
    ConstructionParams params;
    const ConstructionOutput cons = build_linear_lb(params);
    const IndexSubset byz = byzantine_identity_table(15, 3);
    TailoredAttackState state = make_tailored_state(cons, byz, 1e-3);

    std::vector<std::pair<int, Vector>> honest;
    for (int id = 0; id < 15; ++id)
        if (!std::binary_search(byz.begin(), byz.end(), id))
            honest.emplace_back(id, Vector{cons.pair.base[id].data[0].z});

    for (const double theta : {0.7, 2.0, -0.7, -2.0}) {
        const double v = tailored_byzantine_value(state, byz[0], {theta}, honest);
        CHECK(member(honest, byz, 15, 3, v));
        // Stepping 2 eps past the boundary leaves the selection.
        const double outside = theta > 0.0 ? v - 2.0 * state.epsilon
                                           : v + 2.0 * state.epsilon;
        CHECK_FALSE(member(honest, byz, 15, 3, outside));
    }

    // The two sides bracket the honest spread from opposite ends.
    const double low = tailored_byzantine_value(state, byz[0], {1.0}, honest);
    const double high = tailored_byzantine_value(state, byz[0], {-1.0}, honest);
    CHECK(low < high);
}

TEST_CASE("tailored boundary agrees with a brute-force grid scan") {
    // Degenerate landscape: all 14 honest gradients equal 0.5; only the
    // candidate 0.5 can join a zero-variance selection.
    std::vector<std::pair<int, Vector>> honest;
    for (int id = 0; id < 15; ++id)
        if (id != 1) honest.emplace_back(id, Vector{0.5});
    TailoredAttackState state;
    state.byz_ids = {1};
    state.epsilon = 1e-3;
    state.C = 1.0;
    const double v = tailored_byzantine_value(state, 1, {1.0}, honest);

    double grid_min = 1e9;
    for (int k = -200; k <= 200; ++k) {
        const double alpha = k / 100.0;
        if (member(honest, {1}, 15, 1, alpha)) {
            grid_min = alpha;
            break;
        }
    }
    CHECK(grid_min == doctest::Approx(0.5));
    CHECK(std::abs(v - (grid_min + state.epsilon)) <= 2.0 / 100.0);
}

TEST_CASE("strategy caching returns one shared scalar per step") {
    ConstructionParams params;
    const ConstructionOutput cons = build_linear_lb(params);
    const IndexSubset byz = byzantine_identity_table(15, 3);
    TailoredByzantineStrategy strat(make_tailored_state(cons, byz, 1e-3));
    std::vector<std::pair<int, Vector>> honest;
    for (int id = 0; id < 15; ++id)
        if (!std::binary_search(byz.begin(), byz.end(), id))
            honest.emplace_back(id, Vector{cons.pair.base[id].data[0].z});
    const Vector a = strat.value(1, {0.4}, honest);
    const Vector b = strat.value(2, {0.4}, honest);
    const Vector c = strat.value(3, {0.4}, honest);
    CHECK(a == b);
    CHECK(b == c);
    // Clones restart with clean caches but identical behavior.
    const auto clone = strat.clone();
    CHECK(clone->value(1, {0.4}, honest) == a);
}

TEST_CASE("filter_pair strips byzantine workers but keeps the pivot") {
    ConstructionParams params;
    const ConstructionOutput cons = build_linear_lb(params);
    const NeighboringPair filtered = filter_pair(cons.pair, {1, 2, 3});
    CHECK(filtered.base.size() == 12);
    CHECK(filtered.variant.size() == 12);
    CHECK(filtered.base[0].id == 0);
    CHECK(filtered.base[1].id == 4);
    CHECK(filtered.diff_worker == 0);
    // Hijacking the differing worker would break the neighboring relation.
    CHECK_THROWS_AS(filter_pair(cons.pair, {0, 1, 2}), validation_error);
}
