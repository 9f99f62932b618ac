#include "ral/engine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ral {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void validate_workers(const RunConfig& config, const WorkerSet& workers) {
    const int n = workers.n;
    if (n < 1)
        throw validation_error("run: need at least one worker");
    if (static_cast<int>(workers.honest.size() + workers.byzantine_ids.size()) != n)
        throw validation_error("run: |honest| + |byzantine| must equal n");
    if (config.f < static_cast<int>(workers.byzantine_ids.size()))
        throw validation_error("run: more Byzantine workers than the rule tolerates");
    if (2 * config.f >= n)
        throw validation_error("run: need f < n/2");
    if (!workers.byzantine_ids.empty() && !workers.strategy)
        throw validation_error("run: byzantine_ids set but no strategy handle");

    std::vector<bool> seen(n, false);
    std::size_t m = 0;
    for (const auto& ds : workers.honest) {
        if (ds.id < 0 || ds.id >= n)
            throw validation_error("run: honest worker id out of range");
        if (seen[ds.id])
            throw validation_error("run: duplicate worker id");
        seen[ds.id] = true;
        if (ds.data.empty())
            throw validation_error("run: honest worker with empty dataset");
        if (m == 0) m = ds.data.size();
        if (ds.data.size() != m)
            throw validation_error("run: honest datasets must share the same m");
    }
    for (int id : workers.byzantine_ids) {
        if (id < 0 || id >= n)
            throw validation_error("run: byzantine worker id out of range");
        if (seen[id])
            throw validation_error("run: duplicate worker id");
        seen[id] = true;
    }
}

void validate_config(const RunConfig& config, const LossModel& loss) {
    if (config.T < 1)
        throw validation_error("run: T must be >= 1");
    if (config.mc_runs < 1)
        throw validation_error("run: mc_runs must be >= 1");
    if (config.theta0.empty())
        throw validation_error("run: theta0 must be set");
    if (config.schedule.kind == Schedule::Kind::inverse && !(config.schedule.c > 0.0))
        throw validation_error("run: inverse schedule needs c > 0");
    if (config.schedule.kind == Schedule::Kind::constant && !(config.schedule.gamma > 0.0))
        throw validation_error("run: constant schedule needs gamma > 0");
    if (config.validate_regime && config.schedule.kind == Schedule::Kind::constant &&
        config.schedule.gamma > 1.0 / loss.L + 1e-12)
        throw validation_error("run: constant step size exceeds 1/L");
}

Vector honest_gradient(const RunConfig& config, const LossModel& loss,
                       const WorkerDataset& ds, const Vector& theta, int t,
                       int* drawn_index) {
    if (config.algorithm == Algorithm::gd) {
        Vector sum = loss_gradient(loss, theta, ds.data.front());
        for (std::size_t j = 1; j < ds.data.size(); ++j)
            sum = add(sum, loss_gradient(loss, theta, ds.data[j]));
        return scaled(sum, 1.0 / static_cast<double>(ds.data.size()));
    }
    const int m = static_cast<int>(ds.data.size());
    const int j = draw_index(config.seed, t, ds.id, m);
    if (drawn_index) *drawn_index = j;
    return loss_gradient(loss, theta, ds.data[j]);
}

} // namespace

Schedule Schedule::constant(double gamma) {
    Schedule s;
    s.kind = Kind::constant;
    s.gamma = gamma;
    return s;
}

Schedule Schedule::inverse(double c) {
    Schedule s;
    s.kind = Kind::inverse;
    s.c = c;
    return s;
}

double Schedule::rate(int t, double L) const {
    // Inverse schedule indexed as c/(L*(t+1)): defined at t = 0 and satisfies
    // the non-increasing gamma_t <= c/(L*t) constraint for all t >= 1.
    if (kind == Kind::constant) return gamma;
    return c / (L * static_cast<double>(t + 1));
}

int draw_index(std::uint64_t seed, int t, int worker, int m) {
    if (m < 1)
        throw validation_error("draw_index: m must be >= 1");
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(t)));
    h = splitmix64(h ^ (0xd1b54a32d192ed03ULL + static_cast<std::uint64_t>(worker)));
    return static_cast<int>(h % static_cast<std::uint64_t>(m));
}

Trajectory run(const RunConfig& config, const WorkerSet& workers, const LossModel& loss) {
    validate_workers(config, workers);
    validate_config(config, loss);

    std::vector<const WorkerDataset*> honest_by_id;
    honest_by_id.reserve(workers.honest.size());
    for (const auto& ds : workers.honest) honest_by_id.push_back(&ds);
    std::sort(honest_by_id.begin(), honest_by_id.end(),
              [](const WorkerDataset* a, const WorkerDataset* b) { return a->id < b->id; });
    std::vector<int> byz_ids = workers.byzantine_ids;
    std::sort(byz_ids.begin(), byz_ids.end());

    std::unique_ptr<ByzantineStrategy> strategy;
    if (!byz_ids.empty()) strategy = workers.strategy->clone();

    const bool sgd = config.algorithm != Algorithm::gd;
    Trajectory traj;
    traj.thetas.reserve(config.T + 1);
    traj.thetas.push_back(config.theta0);
    traj.selected_subsets.resize(config.T);
    traj.honest_gradients.resize(config.T);
    traj.sample_indices.resize(config.T);
    traj.byzantine_values.resize(config.T);

    Vector theta = config.theta0;
    std::vector<Vector> batch(workers.n);
    for (int t = 0; t < config.T; ++t) {
        auto& honest_grads = traj.honest_gradients[t];
        honest_grads.reserve(honest_by_id.size());
        for (const WorkerDataset* ds : honest_by_id) {
            int drawn = -1;
            Vector g = honest_gradient(config, loss, *ds, theta, t, sgd ? &drawn : nullptr);
            if (sgd) traj.sample_indices[t].emplace_back(ds->id, drawn);
            honest_grads.emplace_back(ds->id, std::move(g));
        }
        for (const auto& [id, g] : honest_grads) batch[id] = g;
        for (int id : byz_ids) {
            Vector v = strategy->value(id, theta, honest_grads);
            if (v.size() != theta.size())
                throw validation_error("run: byzantine value dimension mismatch");
            traj.byzantine_values[t].emplace_back(id, v);
            batch[id] = std::move(v);
        }

        AggregationOutcome outcome;
        switch (config.rule) {
        case Rule::mean:
            outcome = aggregate_mean(batch);
            break;
        case Rule::cwtm:
            outcome = aggregate_cwtm(batch, config.f);
            break;
        case Rule::smea:
            outcome = aggregate_smea(batch, config.f);
            traj.selected_subsets[t] = outcome.selected;
            break;
        }

        const double gamma_t = config.schedule.rate(t, loss.L);
        theta = sub(theta, scaled(outcome.aggregate, gamma_t));
        if (config.algorithm == Algorithm::projected_sgd && loss.domain)
            theta = project(*loss.domain, theta);
        traj.thetas.push_back(theta);
    }
    return traj;
}

std::pair<Trajectory, Trajectory> run_paired(const RunConfig& config,
                                             const NeighboringPair& pair,
                                             const WorkerSet& workers_template,
                                             const LossModel& loss) {
    if (pair.base.size() != pair.variant.size())
        throw validation_error("run_paired: base and variant worker counts differ");
    int diffs = 0;
    for (std::size_t i = 0; i < pair.base.size(); ++i) {
        const auto& a = pair.base[i];
        const auto& b = pair.variant[i];
        if (a.id != b.id || a.data.size() != b.data.size())
            throw validation_error("run_paired: base/variant shape mismatch");
        for (std::size_t j = 0; j < a.data.size(); ++j) {
            const bool same = a.data[j].z == b.data[j].z && a.data[j].y == b.data[j].y &&
                              a.data[j].x == b.data[j].x;
            if (!same) {
                ++diffs;
                if (a.id != pair.diff_worker || static_cast<int>(j) != pair.diff_sample)
                    throw validation_error("run_paired: datasets differ away from diff_location");
            }
        }
    }
    if (diffs > 1)
        throw validation_error("run_paired: datasets differ in more than one sample");

    WorkerSet base = workers_template;
    base.honest = pair.base;
    WorkerSet variant = workers_template;
    variant.honest = pair.variant;
    return {run(config, base, loss), run(config, variant, loss)};
}

std::optional<int> first_divergence_step(const Trajectory& a, const Trajectory& b) {
    if (a.thetas.size() != b.thetas.size())
        throw validation_error("first_divergence_step: trajectory lengths differ");
    for (std::size_t t = 0; t < a.thetas.size(); ++t)
        if (std::sqrt(squared_distance(a.thetas[t], b.thetas[t])) > 1e-12)
            return static_cast<int>(t);
    return std::nullopt;
}

} // namespace ral
