#pragma once

#include <optional>

#include "ral/engine.hpp"

namespace ral {

struct ConstructionParams {
    int n = 15;
    int f = 3;
    int m = 1;
    double C = 1.0;
    double L = 1.0;
    std::optional<double> mu;
    int T = 5;              // horizon used by predictions; required by the projected build
    double epsilon = 0.0;   // projected build only
    std::optional<double> psi_override;
    double gamma = 1.0;     // constant step size used by predictions
};

// Closed-form predictions for the GD constructions.
struct Predictions {
    IndexSubset base_subset;    // expected SMEA selection, every step, base run
    IndexSubset variant_subset; // same, variant run
    double p = 0.0;             // (f + 1/m) / (n - f)
    double psi = 0.0;
    double theta_T = 0.0;
    double theta_variant_T = 0.0;
};

// Conditional-expectation machinery for the projected-SGD construction.
// T0 is the first step (1-indexed) at which the pivot worker draws its
// differing sample; theta_t = lambda_t * v on the ray.
struct ProjectedPredictions {
    int n = 0, f = 0, m = 0, T = 0;
    double gamma = 0.0, C = 0.0, L = 0.0;
    double psi = 0.0, alpha = 0.0, beta = 0.0, b = 0.0;
    double p = 0.0;

    double lambda_star() const;            // beta / (L b^2)
    double contraction() const;            // q = 1 - p gamma L b^2
    double lambda_at_t0() const;           // gamma beta (f+1)/(n-f)
    double conditional_lambda(int t0) const; // E[lambda_T | T0 = t0], 1 <= t0 <= T
    double mixture_mean() const;            // E[lambda_T] over the geometric law of T0
    double stability_lower_bound() const;   // (1/2)(1-(1-e^{-tau})/tau) p gamma C^2 T
};

struct ConstructionOutput {
    NeighboringPair pair;
    WorkerSet workers; // all-honest: poisoning workers hold corrupted data
    LossModel loss;
    IndexSubset group_pivot; // {0}
    IndexSubset group_N;     // {1 .. n-2f-1}
    IndexSubset group_E;     // {n-2f .. n-f-1}
    IndexSubset group_F;     // {n-f .. n-1}
    std::optional<Predictions> predicted;
    std::optional<ProjectedPredictions> projected_predicted;
};

// Linear-loss poisoning pair: pivot holds 0s except one -C sample (variant 0),
// N holds 0, E holds (1+psi)C/2, F holds -C, with
// psi = sqrt(max(0, n-2f-2/m) / (n-2f+2/m)).
ConstructionOutput build_linear_lb(const ConstructionParams& params);

// Strongly convex pair on the ball B(0, C/(2mu)): pivot holds 0s except one
// C/(2mu) sample (variant 0), N holds 0, E holds -((1+psi)/2)C/(2mu), F holds
// C/(2mu); psi defaults to the midpoint of its valid open interval.
ConstructionOutput build_strongcvx_lb(const ConstructionParams& params);

// Projected-SGD pair under the huberized loss on the ray {lambda v : lambda>=0},
// v = sqrt(L) (d = 1), beta = C/sqrt(L), alpha = (1-epsilon)beta, b = 1/sqrt(T):
// pivot holds (0,0)s except one (b v, beta/b) sample (variant (0,0)), N holds
// (0,0), E holds (v, -alpha), F holds (b v, beta/b).
ConstructionOutput build_projected_lb(const ConstructionParams& params);

struct TailoredAttackState {
    IndexSubset byz_ids;
    double epsilon = 1e-3;
    // worker id -> scalar sent when theta == 0 (the poisoning value).
    std::vector<std::pair<int, double>> poisoning_mimic;
    double bracket_multiplier = 10.0; // half-width = multiplier * (max |g| + C)
    double C = 1.0;
};

// Adaptive scalar attack: mimic poisoning at theta = 0; otherwise the most
// extreme candidate still selected by SMEA, offset inward by epsilon
// (inf{a : selected} + eps for theta > 0, sup{b : selected} - eps for theta < 0).
double tailored_byzantine_value(const TailoredAttackState& state, int worker_id,
                                const Vector& theta,
                                const std::vector<std::pair<int, Vector>>& honest_gradients);

class TailoredByzantineStrategy : public ByzantineStrategy {
public:
    explicit TailoredByzantineStrategy(TailoredAttackState state);
    Vector value(int worker_id, const Vector& theta,
                 const std::vector<std::pair<int, Vector>>& honest_gradients) override;
    std::unique_ptr<ByzantineStrategy> clone() const override;

private:
    TailoredAttackState state_;
    // One bisection per step: every Byzantine worker sends the same scalar.
    std::optional<std::pair<Vector, std::vector<std::pair<int, Vector>>>> cache_key_;
    double cache_value_ = 0.0;
};

// Byzantine identities: the tabulated n=15 sets (0-indexed), otherwise the
// last f workers.
IndexSubset byzantine_identity_table(int n, int f);

// Attack state whose mimic values are the construction's base-dataset values
// at the given ids (scalar families only).
TailoredAttackState make_tailored_state(const ConstructionOutput& construction,
                                        const IndexSubset& byz_ids, double epsilon = 1e-3);

// Restricts a pair to the workers outside byz_ids (the honest side of a
// Byzantine run over the same data landscape).
NeighboringPair filter_pair(const NeighboringPair& pair, const IndexSubset& byz_ids);

} // namespace ral
