#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "ral/aggregation.hpp"
#include "ral/losses.hpp"

namespace ral {

struct WorkerDataset {
    int id = 0;
    std::vector<DataPoint> data; // exactly m points
};

// Byzantine workers see the current parameter and the honest gradients of the
// current step (omniscient threat model), and return an arbitrary vector.
class ByzantineStrategy {
public:
    virtual ~ByzantineStrategy() = default;
    virtual Vector value(int worker_id, const Vector& theta,
                         const std::vector<std::pair<int, Vector>>& honest_gradients) = 0;
    virtual std::unique_ptr<ByzantineStrategy> clone() const = 0;
};

struct WorkerSet {
    int n = 0;
    std::vector<WorkerDataset> honest;  // ascending ids
    std::vector<int> byzantine_ids;     // ascending ids, disjoint from honest
    std::shared_ptr<const ByzantineStrategy> strategy; // prototype, cloned per run
};

enum class Algorithm { gd, sgd, projected_sgd };
enum class Rule { mean, cwtm, smea };

struct Schedule {
    enum class Kind { constant, inverse } kind = Kind::constant;
    double gamma = 0.1; // constant
    double c = 1.0;     // inverse: gamma_t = c / (L * (t + 1))

    static Schedule constant(double gamma);
    static Schedule inverse(double c);
    double rate(int t, double L) const;
};

struct RunConfig {
    Algorithm algorithm = Algorithm::gd;
    Rule rule = Rule::mean;
    int f = 0; // server-side robustness parameter; >= |byzantine_ids|
    int T = 1;
    Schedule schedule;
    Vector theta0;
    std::uint64_t seed = 0;
    int mc_runs = 1;            // SGD Monte-Carlo repetitions (seeds seed+i)
    bool validate_regime = false; // enforce constant gamma <= 1/L
};

struct Trajectory {
    std::vector<Vector> thetas;                                   // T + 1
    std::vector<std::optional<IndexSubset>> selected_subsets;     // T (SMEA only)
    std::vector<std::vector<std::pair<int, Vector>>> honest_gradients; // T
    std::vector<std::vector<std::pair<int, int>>> sample_indices;      // T (SGD only)
    std::vector<std::vector<std::pair<int, Vector>>> byzantine_values; // T
};

// Two honest dataset collections differing in exactly one sample.
struct NeighboringPair {
    std::vector<WorkerDataset> base;
    std::vector<WorkerDataset> variant;
    int diff_worker = 0;
    int diff_sample = 0;
};

// Counter-based uniform draw in {0..m-1}, keyed by (seed, step, worker id).
// Paired runs share streams because the draw never depends on data.
int draw_index(std::uint64_t seed, int t, int worker, int m);

Trajectory run(const RunConfig& config, const WorkerSet& workers, const LossModel& loss);

// Runs base and variant datasets under identical seeded index streams and an
// independently cloned Byzantine strategy per leg.
std::pair<Trajectory, Trajectory> run_paired(const RunConfig& config,
                                             const NeighboringPair& pair,
                                             const WorkerSet& workers_template,
                                             const LossModel& loss);

// Smallest t with ||theta_t - theta'_t|| > 1e-12, if any.
std::optional<int> first_divergence_step(const Trajectory& a, const Trajectory& b);

} // namespace ral
