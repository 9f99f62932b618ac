#include "ral/threats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ral {

namespace {

IndexSubset index_range(int lo, int hi) { // [lo, hi)
    IndexSubset s;
    s.reserve(std::max(0, hi - lo));
    for (int i = lo; i < hi; ++i) s.push_back(i);
    return s;
}

void validate_params(const ConstructionParams& p) {
    if (p.n < 1 || p.m < 1)
        throw validation_error("construction: need n >= 1 and m >= 1");
    if (p.f < 0 || 2 * p.f >= p.n)
        throw validation_error("construction: need 0 <= f < n/2");
    if (!(p.C > 0.0))
        throw validation_error("construction: need C > 0");
    if (!(p.L > 0.0))
        throw validation_error("construction: need L > 0");
    if (!(p.gamma > 0.0))
        throw validation_error("construction: need gamma > 0");
    if (p.T < 1)
        throw validation_error("construction: need T >= 1");
}

// Scalar-family datasets: pivot (worker 0) holds `pivot_fill` everywhere except
// sample 0 = `pivot_special`; groups N/E/F hold constants.
std::vector<WorkerDataset> scalar_datasets(const ConstructionParams& p,
                                           double pivot_special, double pivot_fill,
                                           double n_value, double e_value, double f_value) {
    std::vector<WorkerDataset> out;
    out.reserve(p.n);
    for (int id = 0; id < p.n; ++id) {
        WorkerDataset ds;
        ds.id = id;
        double fill;
        if (id == 0)
            fill = pivot_fill;
        else if (id <= p.n - 2 * p.f - 1)
            fill = n_value;
        else if (id <= p.n - p.f - 1)
            fill = e_value;
        else
            fill = f_value;
        ds.data.assign(p.m, DataPoint::scalar(fill));
        if (id == 0) ds.data[0] = DataPoint::scalar(pivot_special);
        out.push_back(std::move(ds));
    }
    return out;
}

void fill_groups(ConstructionOutput& out, const ConstructionParams& p) {
    out.group_pivot = {0};
    out.group_N = index_range(1, p.n - 2 * p.f);
    out.group_E = index_range(p.n - 2 * p.f, p.n - p.f);
    out.group_F = index_range(p.n - p.f, p.n);
}

IndexSubset base_selection(const ConstructionParams& p) { // {0} u N u F
    IndexSubset s = index_range(0, p.n - 2 * p.f);
    for (int i = p.n - p.f; i < p.n; ++i) s.push_back(i);
    return s;
}

IndexSubset variant_selection(const ConstructionParams& p) { // {0} u N u E
    return index_range(0, p.n - p.f);
}

double attack_fraction(const ConstructionParams& p) {
    return (p.f + 1.0 / p.m) / static_cast<double>(p.n - p.f);
}

bool selects_byzantine(const std::vector<std::pair<int, Vector>>& honest_gradients,
                       const IndexSubset& byz_ids, double candidate) {
    const int n = static_cast<int>(honest_gradients.size() + byz_ids.size());
    std::vector<Vector> batch(n);
    for (const auto& [id, g] : honest_gradients) {
        if (id < 0 || id >= n)
            throw validation_error("tailored attack: honest worker id out of range");
        batch[id] = g;
    }
    for (int id : byz_ids) {
        if (id < 0 || id >= n)
            throw validation_error("tailored attack: byzantine id out of range");
        batch[id] = {candidate};
    }
    const AggregationOutcome outcome =
        aggregate_smea(batch, static_cast<int>(byz_ids.size()));
    const IndexSubset& sel = *outcome.selected;
    for (int id : byz_ids)
        if (std::binary_search(sel.begin(), sel.end(), id)) return true;
    return false;
}

} // namespace

ConstructionOutput build_linear_lb(const ConstructionParams& params) {
    validate_params(params);
    const int n = params.n, f = params.f, m = params.m;
    const double C = params.C;

    // The raw radicand n - 2f - 2/m can go negative (f = 7, n = 15, m = 1);
    // the selection condition holds vacuously there, so clamp to zero.
    const double psi =
        params.psi_override
            ? *params.psi_override
            : std::sqrt(std::max(0.0, n - 2.0 * f - 2.0 / m) / (n - 2.0 * f + 2.0 / m));
    const double e_value = 0.5 * (1.0 + psi) * C;

    ConstructionOutput out;
    out.pair.base = scalar_datasets(params, -C, 0.0, 0.0, e_value, -C);
    out.pair.variant = scalar_datasets(params, 0.0, 0.0, 0.0, e_value, -C);
    out.pair.diff_worker = 0;
    out.pair.diff_sample = 0;
    out.workers.n = n;
    out.workers.honest = out.pair.base;
    out.loss.family = LossFamily::linear1d;
    out.loss.C = C;
    out.loss.L = params.L;
    fill_groups(out, params);

    Predictions pred;
    pred.base_subset = base_selection(params);
    pred.variant_subset = variant_selection(params);
    pred.p = attack_fraction(params);
    pred.psi = psi;
    pred.theta_T = pred.p * params.gamma * C * params.T;
    pred.theta_variant_T =
        -(static_cast<double>(f) / (n - f)) * 0.5 * (1.0 + psi) * params.gamma * C * params.T;
    out.predicted = pred;
    return out;
}

ConstructionOutput build_strongcvx_lb(const ConstructionParams& params) {
    validate_params(params);
    if (!params.mu)
        throw validation_error("strongcvx construction: mu missing");
    const double mu = *params.mu;
    if (!(mu > 0.0) || mu > params.L + 1e-12)
        throw validation_error("strongcvx construction: need 0 < mu <= L");
    const int n = params.n, f = params.f, m = params.m;
    const double C = params.C;

    const double radicand_num = n - 2.0 * (f + 1.0 / m);
    const double radicand_den = n - 2.0 * (f - 1.0 / m);
    const double endpoint_flat = 1.0 - 4.0 / (m * (n - 2.0 * f));
    if (radicand_num < 0.0)
        throw construction_error(
            "strongcvx construction: psi interval is empty — lower endpoint "
            "sqrt(" + std::to_string(radicand_num) + "/" + std::to_string(radicand_den) +
            ") is imaginary (other endpoint " + std::to_string(endpoint_flat) +
            ", upper endpoint 1)");
    const double lower = std::max(std::sqrt(radicand_num / radicand_den), endpoint_flat);
    if (lower >= 1.0)
        throw construction_error("strongcvx construction: psi interval (" +
                                 std::to_string(lower) + ", 1) is empty");
    const double psi = params.psi_override ? *params.psi_override : 0.5 * (lower + 1.0);
    if (psi <= lower || psi >= 1.0)
        throw construction_error("strongcvx construction: psi must lie in (" +
                                 std::to_string(lower) + ", 1)");

    const double r = C / (2.0 * mu);
    ConstructionOutput out;
    out.pair.base = scalar_datasets(params, r, 0.0, 0.0, -0.5 * (1.0 + psi) * r, r);
    out.pair.variant = scalar_datasets(params, 0.0, 0.0, 0.0, -0.5 * (1.0 + psi) * r, r);
    out.pair.diff_worker = 0;
    out.pair.diff_sample = 0;
    out.workers.n = n;
    out.workers.honest = out.pair.base;
    out.loss.family = LossFamily::quadratic_mean;
    out.loss.C = C;
    out.loss.L = params.L;
    out.loss.mu = mu;
    out.loss.domain = ProjectionDomain::ball(r);
    fill_groups(out, params);

    Predictions pred;
    pred.base_subset = base_selection(params);
    pred.variant_subset = variant_selection(params);
    pred.p = attack_fraction(params);
    pred.psi = psi;
    const double geometric = 1.0 - std::pow(1.0 - params.gamma * mu, params.T);
    pred.theta_T = pred.p * r * geometric;
    pred.theta_variant_T = -(f * (1.0 + psi) * C / (4.0 * mu * (n - f))) * geometric;
    out.predicted = pred;
    return out;
}

ConstructionOutput build_projected_lb(const ConstructionParams& params) {
    validate_params(params);
    const int n = params.n, f = params.f, m = params.m;
    const double C = params.C, L = params.L;
    if (n - 2 * f < 3)
        throw construction_error("projected construction: need n - 2f >= 3");
    const double psi = params.psi_override
                           ? *params.psi_override
                           : (n - 2.0 * f - 2.0) / (n - 2.0 * f);
    const double eps_cap = std::min(1.0 - psi, params.gamma * L * f / (n - f));
    if (!(params.epsilon > 0.0) || !(params.epsilon < eps_cap))
        throw construction_error(
            "projected construction: need 0 < epsilon < min{1-psi, gamma L f/(n-f)} = " +
            std::to_string(eps_cap));

    const double beta = C / std::sqrt(L);
    const double alpha = (1.0 - params.epsilon) * beta;
    const double b = 1.0 / std::sqrt(static_cast<double>(params.T));
    const Vector v = {std::sqrt(L)};

    const DataPoint zero = DataPoint::pair({0.0}, 0.0);
    const DataPoint pivot_special = DataPoint::pair(scaled(v, b), beta / b);
    const DataPoint e_point = DataPoint::pair(v, -alpha);
    const DataPoint f_point = pivot_special;

    auto make_datasets = [&](bool with_special) {
        std::vector<WorkerDataset> out;
        out.reserve(n);
        for (int id = 0; id < n; ++id) {
            WorkerDataset ds;
            ds.id = id;
            const DataPoint& fill = (id == 0 || id <= n - 2 * f - 1) ? zero
                                    : (id <= n - f - 1)              ? e_point
                                                                     : f_point;
            ds.data.assign(m, fill);
            if (id == 0 && with_special) ds.data[0] = pivot_special;
            out.push_back(std::move(ds));
        }
        return out;
    };

    ConstructionOutput out;
    out.pair.base = make_datasets(true);
    out.pair.variant = make_datasets(false);
    out.pair.diff_worker = 0;
    out.pair.diff_sample = 0;
    out.workers.n = n;
    out.workers.honest = out.pair.base;
    out.loss.family = LossFamily::huberized_regression;
    out.loss.C = C;
    out.loss.L = L;
    out.loss.domain = ProjectionDomain::ray(v);
    fill_groups(out, params);

    ProjectedPredictions pred;
    pred.n = n;
    pred.f = f;
    pred.m = m;
    pred.T = params.T;
    pred.gamma = params.gamma;
    pred.C = C;
    pred.L = L;
    pred.psi = psi;
    pred.alpha = alpha;
    pred.beta = beta;
    pred.b = b;
    pred.p = attack_fraction(params);
    out.projected_predicted = pred;
    return out;
}

double ProjectedPredictions::lambda_star() const { return beta / (L * b * b); }

double ProjectedPredictions::contraction() const { return 1.0 - p * gamma * L * b * b; }

double ProjectedPredictions::lambda_at_t0() const {
    return gamma * beta * (f + 1.0) / static_cast<double>(n - f);
}

double ProjectedPredictions::conditional_lambda(int t0) const {
    if (t0 < 1 || t0 > T)
        throw validation_error("conditional_lambda: t0 must lie in {1..T}");
    // Exact solution of the conditional recursion
    //   lambda_{t0} = gamma beta (f+1)/(n-f),
    //   E[lambda_t] = q E[lambda_{t-1}] + p gamma beta      (t > t0)
    // evaluated at t = T.
    return lambda_star() +
           (lambda_at_t0() - lambda_star()) * std::pow(contraction(), T - t0);
}

double ProjectedPredictions::mixture_mean() const {
    const double hit = 1.0 / m;
    double tail = 1.0; // (1 - 1/m)^{t0 - 1}
    double mean = 0.0;
    for (int t0 = 1; t0 <= T; ++t0) {
        mean += hit * tail * conditional_lambda(t0);
        tail *= 1.0 - hit;
    }
    return mean; // T0 > T leaves the parameter at the origin
}

double ProjectedPredictions::stability_lower_bound() const {
    const double tau = static_cast<double>(T) / m;
    return 0.5 * (1.0 - (1.0 - std::exp(-tau)) / tau) * p * gamma * C * C * T;
}

double tailored_byzantine_value(const TailoredAttackState& state, int worker_id,
                                const Vector& theta,
                                const std::vector<std::pair<int, Vector>>& honest_gradients) {
    if (theta.size() != 1)
        throw validation_error("tailored attack: expects a 1-D parameter");
    if (state.byz_ids.empty())
        throw validation_error("tailored attack: empty byzantine id set");
    for (const auto& [id, g] : honest_gradients)
        if (g.size() != 1)
            throw validation_error("tailored attack: expects 1-D gradients");

    if (theta[0] == 0.0) {
        for (const auto& [id, value] : state.poisoning_mimic)
            if (id == worker_id) return value;
        throw validation_error("tailored attack: no mimic value for worker " +
                               std::to_string(worker_id));
    }

    double max_abs = 0.0, mean = 0.0;
    for (const auto& [id, g] : honest_gradients) {
        max_abs = std::max(max_abs, std::fabs(g[0]));
        mean += g[0];
    }
    mean /= static_cast<double>(honest_gradients.size());
    const double K = state.bracket_multiplier * (max_abs + state.C);

    const auto member = [&](double candidate) {
        return selects_byzantine(honest_gradients, state.byz_ids, candidate);
    };

    double seed = mean;
    if (!member(seed)) {
        bool found = false;
        for (int i = 0; i <= 256 && !found; ++i) {
            const double candidate = -K + 2.0 * K * i / 256.0;
            if (member(candidate)) {
                seed = candidate;
                found = true;
            }
        }
        if (!found)
            throw attack_infeasible_error(
                "tailored attack: no candidate in [-K, K] is ever selected (K = " +
                std::to_string(K) + ")");
    }

    if (theta[0] > 0.0) {
        // inf{a : selected} + eps
        if (member(-K)) return -K + state.epsilon;
        double lo = -K, hi = seed; // member(lo) = false, member(hi) = true
        for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
            const double mid = 0.5 * (lo + hi);
            (member(mid) ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi) + state.epsilon;
    }
    // sup{b : selected} - eps
    if (member(K)) return K - state.epsilon;
    double lo = seed, hi = K; // member(lo) = true, member(hi) = false
    for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
        const double mid = 0.5 * (lo + hi);
        (member(mid) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi) - state.epsilon;
}

TailoredByzantineStrategy::TailoredByzantineStrategy(TailoredAttackState state)
    : state_(std::move(state)) {}

Vector TailoredByzantineStrategy::value(
    int worker_id, const Vector& theta,
    const std::vector<std::pair<int, Vector>>& honest_gradients) {
    if (theta.size() == 1 && theta[0] == 0.0)
        return {tailored_byzantine_value(state_, worker_id, theta, honest_gradients)};
    // For theta != 0 every Byzantine worker sends the same scalar; compute the
    // bisection once per step.
    if (cache_key_ && cache_key_->first == theta && cache_key_->second == honest_gradients)
        return {cache_value_};
    const double v = tailored_byzantine_value(state_, worker_id, theta, honest_gradients);
    cache_key_ = {theta, honest_gradients};
    cache_value_ = v;
    return {v};
}

std::unique_ptr<ByzantineStrategy> TailoredByzantineStrategy::clone() const {
    return std::make_unique<TailoredByzantineStrategy>(state_);
}

IndexSubset byzantine_identity_table(int n, int f) {
    if (f < 0 || 2 * f >= n)
        throw validation_error("byzantine_identity_table: need 0 <= f < n/2");
    if (f == 0) return {};
    if (n == 15 && f <= 7) {
        switch (f) {
        case 1: return {1};
        case 2: return {1, 2};
        case 3: return {1, 2, 3};
        case 4: return {1, 2, 3, 4};
        case 5: return {1, 2, 3, 4, 5};
        case 6: return {6, 7, 8, 9, 10, 11};
        default: return {5, 6, 7, 8, 9, 10, 11};
        }
    }
    return index_range(n - f, n);
}

TailoredAttackState make_tailored_state(const ConstructionOutput& construction,
                                        const IndexSubset& byz_ids, double epsilon) {
    if (construction.loss.family != LossFamily::linear1d)
        throw validation_error("make_tailored_state: only the linear construction is supported");
    if (!(epsilon > 0.0))
        throw validation_error("make_tailored_state: epsilon must be positive");
    TailoredAttackState state;
    state.byz_ids = byz_ids;
    state.epsilon = epsilon;
    state.C = construction.loss.C;
    for (int id : byz_ids) {
        bool found = false;
        for (const auto& ds : construction.pair.base) {
            if (ds.id != id) continue;
            // Linear loss: the step-one poisoning message is the mean data value.
            double mean = 0.0;
            for (const auto& point : ds.data) mean += point.z;
            mean /= static_cast<double>(ds.data.size());
            state.poisoning_mimic.emplace_back(id, mean);
            found = true;
            break;
        }
        if (!found)
            throw validation_error("make_tailored_state: id " + std::to_string(id) +
                                   " not present in the construction");
    }
    return state;
}

NeighboringPair filter_pair(const NeighboringPair& pair, const IndexSubset& byz_ids) {
    const auto is_byz = [&](int id) {
        return std::find(byz_ids.begin(), byz_ids.end(), id) != byz_ids.end();
    };
    if (is_byz(pair.diff_worker))
        throw validation_error("filter_pair: differing worker cannot be Byzantine");
    NeighboringPair out;
    out.diff_worker = pair.diff_worker;
    out.diff_sample = pair.diff_sample;
    for (const auto& ds : pair.base)
        if (!is_byz(ds.id)) out.base.push_back(ds);
    for (const auto& ds : pair.variant)
        if (!is_byz(ds.id)) out.variant.push_back(ds);
    return out;
}

} // namespace ral
