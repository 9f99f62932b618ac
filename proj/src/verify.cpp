#include "ral/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

namespace ral {

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double a, double b) {
        return std::uniform_real_distribution<double>(a, b)(gen_);
    }
    double normal(double stddev) {
        return std::normal_distribution<double>(0.0, stddev)(gen_);
    }
    int uniform_int(int a, int b) {
        return std::uniform_int_distribution<int>(a, b)(gen_);
    }
    Vector unit(int d) {
        Vector u(d);
        double n2 = 0.0;
        do {
            for (double& v : u) v = normal(1.0);
            n2 = dot(u, u);
        } while (n2 < 1e-12);
        return scaled(u, 1.0 / std::sqrt(n2));
    }

private:
    std::mt19937_64 gen_;
};

struct SuiteCtx {
    SuiteResult result;
    bool first = true;

    explicit SuiteCtx(std::string name) { result.name = std::move(name); }

    void record(bool pass, double slack, const std::string& witness) {
        ++result.checks;
        if (first || slack < result.worst_slack) {
            result.worst_slack = slack;
            first = false;
        }
        if (!pass) {
            ++result.failures;
            if (result.witness.empty()) result.witness = witness;
        }
    }
};

std::string vec_text(const Vector& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += " ";
        s += format_double(v[i]);
    }
    return s + "]";
}

std::string batch_text(const std::vector<Vector>& batch) {
    std::string s = "{";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (i) s += ", ";
        s += vec_text(batch[i]);
    }
    return s + "}";
}

bool bits_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------

SuiteResult suite_aggregation_cert(std::uint64_t seed) {
    SuiteCtx ctx("aggregation-cert");
    Rng rng(seed);
    for (int i = 0; i < 200; ++i) {
        const int n = rng.uniform_int(3, 10);
        const int f = rng.uniform_int(1, (n - 1) / 2);
        const int d = rng.uniform_int(1, 4);
        std::vector<Vector> batch(n, Vector(d, 0.0));
        if (i % 4 == 3) {
            // Adversarial collinear pool: a clump at 0 and two outlier groups.
            const Vector u = rng.unit(d);
            const double hi = rng.uniform(0.5, 3.0);
            const double lo = -rng.uniform(0.5, 3.0);
            int idx = 0;
            for (int k = 0; k < n - 2 * f; ++k) batch[idx++] = Vector(d, 0.0);
            for (int k = 0; k < f; ++k) batch[idx++] = scaled(u, hi);
            for (int k = 0; k < f; ++k) batch[idx++] = scaled(u, lo);
        } else {
            for (Vector& g : batch)
                for (double& v : g) v = rng.normal(2.0);
        }
        const auto witness = [&](const char* rule) {
            std::ostringstream os;
            os << rule << " i=" << i << " n=" << n << " f=" << f
               << " batch=" << batch_text(batch);
            return os.str();
        };
        const AggregationOutcome smea = aggregate_smea(batch, f);
        RobustnessSpec spec;
        spec.f = f;
        spec.kappa = kappa_smea(n, f);
        spec.norm = OpNorm::spectral;
        const CertificationRecord rs = check_robustness(batch, smea.aggregate, spec);
        ctx.record(rs.pass, rs.worst_slack, rs.pass ? std::string() : witness("smea"));

        const AggregationOutcome cwtm = aggregate_cwtm(batch, f);
        spec.kappa = kappa_cwtm(n, f);
        spec.norm = OpNorm::trace;
        const CertificationRecord rc = check_robustness(batch, cwtm.aggregate, spec);
        ctx.record(rc.pass, rc.worst_slack, rc.pass ? std::string() : witness("cwtm"));
    }
    return ctx.result;
}

SuiteResult suite_trimmed_mean(std::uint64_t seed) {
    SuiteCtx ctx("trimmed-mean");
    Rng rng(seed);
    for (int i = 0; i < 1000; ++i) {
        const int n = rng.uniform_int(3, 11);
        const int f = rng.uniform_int(0, (n - 1) / 2);
        std::vector<double> x(n), y(n);
        for (int k = 0; k < n; ++k) {
            x[k] = rng.normal(2.0);
            y[k] = x[k] + rng.normal(1.0);
        }
        const double tx = trimmed_mean_scalar(x, f);
        const double ty = trimmed_mean_scalar(y, f);
        double l1 = 0.0, dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
        for (int k = 0; k < n; ++k) {
            const double dk = x[k] - y[k];
            l1 += std::abs(dk);
            dmin = std::min(dmin, dk);
            dmax = std::max(dmax, dk);
        }
        const double scale = std::max(1.0, l1);
        const auto witness = [&](const char* what) {
            std::ostringstream os;
            os << what << " n=" << n << " f=" << f << " x=" << vec_text(x)
               << " y=" << vec_text(y);
            return os.str();
        };
        const double lip_slack = l1 / (n - 2.0 * f) - std::abs(tx - ty);
        ctx.record(lip_slack >= -1e-12 * scale, lip_slack,
                   lip_slack >= -1e-12 * scale ? std::string() : witness("lipschitz"));
        const double sandwich_slack = std::min((tx - ty) - dmin, dmax - (tx - ty));
        ctx.record(sandwich_slack >= -1e-12 * scale, sandwich_slack,
                   sandwich_slack >= -1e-12 * scale ? std::string() : witness("sandwich"));
    }
    return ctx.result;
}

Vector gd_step(const LossModel& model, const Vector& theta,
               const std::vector<DataPoint>& data, double gamma) {
    Vector g(theta.size(), 0.0);
    for (const DataPoint& z : data) g = add(g, loss_gradient(model, theta, z));
    return sub(theta, scaled(g, gamma / static_cast<double>(data.size())));
}

SuiteResult suite_expansivity(std::uint64_t seed) {
    SuiteCtx ctx("expansivity");
    Rng rng(seed);
    for (int i = 0; i < 500; ++i) {
        // (a) any smooth loss: eta = 1 + gamma L; (b) convex, gamma <= 2/L: eta = 1.
        for (int variant = 0; variant < 2; ++variant) {
            LossModel model;
            model.family = LossFamily::huberized_regression;
            model.C = rng.uniform(0.5, 2.0);
            model.L = rng.uniform(0.5, 2.0);
            const int d = rng.uniform_int(1, 3);
            const double gamma = variant == 0 ? rng.uniform(0.01, 3.0 / model.L)
                                              : rng.uniform(0.01, 2.0 / model.L);
            const int k = rng.uniform_int(1, 4);
            std::vector<DataPoint> data;
            for (int j = 0; j < k; ++j) {
                const Vector x =
                    scaled(rng.unit(d), rng.uniform(0.0, std::sqrt(model.L)));
                data.push_back(DataPoint::pair(x, rng.normal(2.0)));
            }
            Vector theta(d), omega(d);
            for (double& v : theta) v = rng.normal(2.0);
            for (double& v : omega) v = rng.normal(2.0);
            const double dist = std::sqrt(squared_distance(theta, omega));
            const double after = std::sqrt(squared_distance(
                gd_step(model, theta, data, gamma), gd_step(model, omega, data, gamma)));
            const double eta = variant == 0 ? 1.0 + gamma * model.L : 1.0;
            const double slack = eta * dist - after;
            const bool ok = slack >= -1e-9 * std::max(1.0, dist);
            std::ostringstream os;
            if (!ok)
                os << (variant == 0 ? "smooth" : "convex") << " i=" << i
                   << " gamma=" << gamma << " L=" << model.L
                   << " theta=" << vec_text(theta) << " omega=" << vec_text(omega);
            ctx.record(ok, slack, os.str());
        }
        // (c) strongly convex, gamma <= 1/L: eta = 1 - gamma mu (here L = mu).
        {
            LossModel model;
            model.family = LossFamily::quadratic_mean;
            const double mu = rng.uniform(0.2, 2.0);
            model.mu = mu;
            model.L = mu;
            model.C = 1.0;
            const double radius = model.C / (2.0 * mu);
            const double gamma = rng.uniform(0.05, 1.0) / mu;
            std::vector<DataPoint> data;
            const int k = rng.uniform_int(1, 4);
            for (int j = 0; j < k; ++j)
                data.push_back(DataPoint::scalar(rng.uniform(-radius, radius)));
            const Vector theta = {rng.normal(2.0)}, omega = {rng.normal(2.0)};
            const double dist = std::sqrt(squared_distance(theta, omega));
            const double after = std::sqrt(squared_distance(
                gd_step(model, theta, data, gamma), gd_step(model, omega, data, gamma)));
            const double slack = (1.0 - gamma * mu) * dist - after;
            const bool ok = slack >= -1e-9 * std::max(1.0, dist);
            std::ostringstream os;
            if (!ok)
                os << "strongcvx i=" << i << " mu=" << mu << " gamma=" << gamma
                   << " theta=" << vec_text(theta) << " omega=" << vec_text(omega);
            ctx.record(ok, slack, os.str());
        }
        // (d) CWTM composed with a gradient step.
        {
            LossModel model;
            model.family = LossFamily::huberized_regression;
            model.C = rng.uniform(0.5, 2.0);
            model.L = rng.uniform(0.5, 2.0);
            const int n = rng.uniform_int(3, 9);
            const int f = rng.uniform_int(1, (n - 1) / 2);
            const int d = rng.uniform_int(1, 4);
            const double gamma = rng.uniform(0.01, 2.0 / model.L);
            std::vector<DataPoint> data;
            for (int j = 0; j < n; ++j) {
                const Vector x =
                    scaled(rng.unit(d), rng.uniform(0.0, std::sqrt(model.L)));
                data.push_back(DataPoint::pair(x, rng.normal(2.0)));
            }
            Vector theta(d), omega(d);
            for (double& v : theta) v = rng.normal(2.0);
            for (double& v : omega) v = rng.normal(2.0);
            const auto cwtm_step = [&](const Vector& point) {
                std::vector<Vector> grads;
                for (const DataPoint& z : data) grads.push_back(loss_gradient(model, point, z));
                return sub(point, scaled(aggregate_cwtm(grads, f).aggregate, gamma));
            };
            const double dist = std::sqrt(squared_distance(theta, omega));
            const double after =
                std::sqrt(squared_distance(cwtm_step(theta), cwtm_step(omega)));
            const double lever = std::min({static_cast<double>(n) / (n - 2.0 * f),
                                           std::sqrt(static_cast<double>(n)),
                                           std::sqrt(static_cast<double>(d))});
            const double slack = (1.0 + gamma * model.L * lever) * dist - after;
            const bool ok = slack >= -1e-9 * std::max(1.0, dist);
            std::ostringstream os;
            if (!ok)
                os << "cwtm i=" << i << " n=" << n << " f=" << f << " d=" << d
                   << " gamma=" << gamma << " L=" << model.L;
            ctx.record(ok, slack, os.str());
        }
    }
    return ctx.result;
}

SuiteResult suite_pick_lemma(std::uint64_t seed) {
    SuiteCtx ctx("pick-lemma");
    Rng rng(seed);
    for (int i = 0; i < 200; ++i) {
        const int n = rng.uniform_int(3, 9);
        const int f = rng.uniform_int(1, (n - 1) / 2);
        const int na = rng.uniform_int(1, n - 2);
        const int nb = rng.uniform_int(1, n - 1 - na);
        const int nc = n - na - nb;
        const int d = rng.uniform_int(1, 3);
        const Vector u = rng.unit(d);
        const double oa = rng.normal(2.0), ob = rng.normal(2.0), oc = rng.normal(2.0);
        std::vector<Vector> batch;
        for (int k = 0; k < na; ++k) batch.push_back(scaled(u, oa));
        for (int k = 0; k < nb; ++k) batch.push_back(scaled(u, ob));
        for (int k = 0; k < nc; ++k) batch.push_back(scaled(u, oc));

        // Composition formula for the minimal top eigenvalue over
        // (n-f)-subsets of a three-value collinear pool.
        const int size = n - f;
        const double dab = (oa - ob) * (oa - ob);
        const double dbc = (ob - oc) * (ob - oc);
        const double dac = (oa - oc) * (oa - oc);
        double best = std::numeric_limits<double>::infinity();
        for (int a = std::max(0, size - nb - nc); a <= std::min(na, size); ++a) {
            for (int b = std::max(0, size - a - nc); b <= std::min(nb, size - a); ++b) {
                const int c = size - a - b;
                const double val =
                    (a * b * dab + b * c * dbc + a * c * dac) /
                    (static_cast<double>(size) * size);
                best = std::min(best, val);
            }
        }
        const AggregationOutcome smea = aggregate_smea(batch, f);
        const double measured = smea.selected_lambda_max.value_or(-1.0);
        const double err = std::abs(measured - best);
        const double slack = 1e-10 * std::max(1.0, best) - err;
        const bool ok = slack >= 0.0;
        std::ostringstream os;
        if (!ok)
            os << "i=" << i << " n=" << n << " f=" << f << " counts=(" << na << ","
               << nb << "," << nc << ") offsets=(" << format_double(oa) << ","
               << format_double(ob) << "," << format_double(oc) << ") measured="
               << format_double(measured) << " formula=" << format_double(best);
        ctx.record(ok, slack, os.str());
    }
    return ctx.result;
}

SuiteResult suite_losses(std::uint64_t seed) {
    SuiteCtx ctx("losses");
    Rng rng(seed);
    for (int i = 0; i < 500; ++i) {
        LossModel model;
        DataPoint z;
        Vector theta;
        switch (i % 4) {
        case 0: {
            model.family = LossFamily::linear1d;
            model.C = rng.uniform(0.5, 2.0);
            z = DataPoint::scalar(rng.uniform(-model.C, model.C));
            theta = {rng.normal(2.0)};
            break;
        }
        case 1: {
            model.family = LossFamily::quadratic_mean;
            const double mu = rng.uniform(0.2, 2.0);
            model.mu = mu;
            model.L = mu;
            const double radius = model.C / (2.0 * mu);
            z = DataPoint::scalar(rng.uniform(-radius, radius));
            theta = {rng.normal(1.0)};
            break;
        }
        case 2: {
            model.family = LossFamily::huberized_regression;
            model.C = rng.uniform(0.5, 2.0);
            model.L = rng.uniform(0.5, 2.0);
            const int d = rng.uniform_int(1, 3);
            Vector x = scaled(rng.unit(d), rng.uniform(0.1, std::sqrt(model.L)));
            theta = Vector(d);
            for (double& v : theta) v = rng.normal(1.5);
            double y = rng.normal(2.0);
            // keep the finite-difference stencil away from the huber kink
            for (int tries = 0; tries < 100; ++tries) {
                const double margin =
                    std::abs(std::abs(dot(theta, x) - y) * std::sqrt(dot(x, x)) - model.C);
                if (margin > 1e-3) break;
                y += 0.01;
            }
            z = DataPoint::pair(x, y);
            break;
        }
        default: {
            model.family = LossFamily::squared_regression;
            model.L = rng.uniform(0.5, 2.0);
            const int d = 2;
            const Vector x =
                scaled(rng.unit(d), rng.uniform(0.1, std::sqrt(model.L)));
            theta = Vector(d);
            for (double& v : theta) v = rng.normal(1.0);
            z = DataPoint::pair(x, rng.normal(1.0));
            break;
        }
        }
        const Vector g = loss_gradient(model, theta, z);
        const Vector fd = finite_diff_gradient(model, theta, z, 1e-6);
        const double err = std::sqrt(squared_distance(g, fd));
        const double tol = 1e-5 * (1.0 + std::sqrt(dot(g, g)));
        std::ostringstream os;
        if (err > tol)
            os << "family=" << static_cast<int>(model.family) << " i=" << i
               << " theta=" << vec_text(theta) << " err=" << format_double(err);
        ctx.record(err <= tol, tol - err, os.str());
    }
    for (int i = 0; i < 200; ++i) {
        const int d = rng.uniform_int(1, 3);
        const ProjectionDomain dom = (i % 2 == 0)
                                         ? ProjectionDomain::ball(rng.uniform(0.2, 2.0))
                                         : ProjectionDomain::ray(scaled(rng.unit(d), rng.uniform(0.5, 2.0)));
        Vector a(d), b(d);
        for (double& v : a) v = rng.normal(2.0);
        for (double& v : b) v = rng.normal(2.0);
        const Vector pa = project(dom, a), pb = project(dom, b);
        const double idem = std::sqrt(squared_distance(project(dom, pa), pa));
        std::ostringstream os1;
        if (idem > 1e-12) os1 << "idempotence i=" << i << " a=" << vec_text(a);
        ctx.record(idem <= 1e-12, 1e-12 - idem, os1.str());
        const double expand = std::sqrt(squared_distance(pa, pb)) -
                              std::sqrt(squared_distance(a, b));
        std::ostringstream os2;
        if (expand > 1e-12)
            os2 << "nonexpansive i=" << i << " a=" << vec_text(a) << " b=" << vec_text(b);
        ctx.record(expand <= 1e-12, -expand, os2.str());
    }
    return ctx.result;
}

SuiteResult suite_coupling(std::uint64_t seed) {
    SuiteCtx ctx("coupling");
    Rng rng(seed);
    for (int i = 0; i < 100; ++i) {
        const int n = rng.uniform_int(2, 6);
        const int m = rng.uniform_int(2, 5);
        const bool use_smea = (i % 2 == 1) && n >= 3;
        const int f = use_smea ? rng.uniform_int(0, (n - 1) / 2) : 0;

        NeighboringPair pair;
        for (int w = 0; w < n; ++w) {
            WorkerDataset ds;
            ds.id = w;
            for (int j = 0; j < m; ++j)
                ds.data.push_back(DataPoint::scalar(rng.uniform(-1.0, 0.3)));
            pair.base.push_back(ds);
        }
        pair.variant = pair.base;
        pair.diff_worker = rng.uniform_int(0, n - 1);
        pair.diff_sample = rng.uniform_int(0, m - 1);
        pair.variant[pair.diff_worker].data[pair.diff_sample].z += 0.5;

        LossModel loss;
        loss.family = LossFamily::linear1d;
        loss.C = 1.0;

        RunConfig rc;
        rc.algorithm = Algorithm::sgd;
        rc.rule = use_smea ? Rule::smea : Rule::mean;
        rc.f = f;
        rc.T = rng.uniform_int(3, 8);
        rc.schedule = Schedule::constant(0.25);
        rc.theta0 = {0.0};
        rc.seed = seed * 1000003ULL + static_cast<std::uint64_t>(i);

        WorkerSet tmpl;
        tmpl.n = n;
        const auto [a, b] = run_paired(rc, pair, tmpl, loss);

        std::optional<int> tstar;
        for (int t = 0; t < rc.T; ++t)
            if (draw_index(rc.seed, t, pair.diff_worker, m) == pair.diff_sample) {
                tstar = t;
                break;
            }
        const int prefix_end = tstar ? *tstar : rc.T;
        bool prefix_ok = true;
        for (int t = 0; t <= prefix_end && prefix_ok; ++t)
            prefix_ok = bits_equal(a.thetas[t], b.thetas[t]);
        std::ostringstream os;
        if (!prefix_ok)
            os << "prefix i=" << i << " seed=" << rc.seed << " n=" << n << " m=" << m
               << " diff=(" << pair.diff_worker << "," << pair.diff_sample << ")";
        ctx.record(prefix_ok, prefix_ok ? 0.0 : -1.0, os.str());

        const std::optional<int> div = first_divergence_step(a, b);
        bool loc_ok;
        if (!tstar)
            loc_ok = !div;
        else if (rc.rule == Rule::mean)
            loc_ok = div && *div == *tstar + 1;
        else
            loc_ok = !div || *div >= *tstar + 1;
        std::ostringstream os2;
        if (!loc_ok)
            os2 << "divergence i=" << i << " seed=" << rc.seed << " tstar="
                << (tstar ? *tstar : -1) << " div=" << (div ? *div : -1);
        ctx.record(loc_ok, loc_ok ? 0.0 : -1.0, os2.str());
    }
    return ctx.result;
}

SuiteResult suite_covariance(std::uint64_t seed) {
    SuiteCtx ctx("covariance");
    Rng rng(seed);
    for (int i = 0; i < 100; ++i) {
        const int n = rng.uniform_int(3, 8);
        const int m = rng.uniform_int(1, 3);
        const double C = rng.uniform(0.5, 2.0);
        LossModel loss;
        loss.family = LossFamily::linear1d;
        loss.C = C;
        WorkerSet workers;
        workers.n = n;
        for (int w = 0; w < n; ++w) {
            WorkerDataset ds;
            ds.id = w;
            for (int j = 0; j < m; ++j)
                ds.data.push_back(DataPoint::scalar(rng.uniform(-C, C)));
            workers.honest.push_back(ds);
        }
        RunConfig rc;
        rc.algorithm = (i % 2 == 0) ? Algorithm::gd : Algorithm::sgd;
        switch (i % 3) {
        case 0: rc.rule = Rule::mean; break;
        case 1: rc.rule = Rule::cwtm; break;
        default: rc.rule = Rule::smea; break;
        }
        rc.f = rc.rule == Rule::mean ? 0 : rng.uniform_int(0, (n - 1) / 2);
        rc.T = 4;
        rc.schedule = Schedule::constant(0.2);
        rc.theta0 = {0.0};
        rc.seed = seed + static_cast<std::uint64_t>(i);
        const Trajectory traj = run(rc, workers, loss);
        const CovarianceCheck check = covariance_lemma_check(traj, C);
        std::ostringstream os;
        if (!check.pass)
            os << "pathwise i=" << i << " n=" << n << " C=" << format_double(C)
               << " step=" << check.worst_step;
        ctx.record(check.pass, check.worst_slack, os.str());
    }
    for (int i = 0; i < 100; ++i) {
        const int n = rng.uniform_int(3, 8);
        const int f = rng.uniform_int(0, (n - 1) / 2);
        const int m = rng.uniform_int(1, 4);
        LossModel loss;
        loss.family = LossFamily::quadratic_mean;
        const double mu = rng.uniform(0.2, 2.0);
        loss.mu = mu;
        loss.L = mu;
        loss.C = 20.0; // generous ball so heterogeneous samples stay admissible
        const double radius = loss.C / (2.0 * mu);
        std::vector<WorkerDataset> honest;
        for (int w = 0; w < n - f; ++w) {
            WorkerDataset ds;
            ds.id = w;
            for (int j = 0; j < m; ++j)
                ds.data.push_back(
                    DataPoint::scalar(std::clamp(rng.normal(2.0), -radius, radius)));
            honest.push_back(ds);
        }
        std::vector<Vector> grid;
        for (int g = 0; g <= 10; ++g) grid.push_back({-3.0 + 0.6 * g});
        const RefinedCovarianceRecord rec = refined_covariance_check(honest, loss, grid, n, f);
        const double slack = std::min(rec.trace_bound - rec.measured_max_trace,
                                      rec.spectral_bound - rec.measured_max_spectral);
        std::ostringstream os;
        if (!rec.pass())
            os << "refined i=" << i << " n=" << n << " f=" << f << " m=" << m
               << " mu=" << format_double(mu);
        ctx.record(rec.pass(), slack, os.str());
    }
    return ctx.result;
}

SuiteResult suite_counterexample(std::uint64_t seed) {
    (void)seed;
    SuiteCtx ctx("counterexample");
    for (const double L : {1.0, 2.0}) {
        const CocoercivityWitness w = cwtm_cocoercivity_counterexample(L);
        // Independent recomputation with bare arithmetic.
        const auto grad = [&](const Vector& point, const Vector& x, double y) {
            const double res = point[0] * x[0] + point[1] * x[1] - y;
            return Vector{res * x[0], res * x[1]};
        };
        const auto median3 = [](double a, double b, double c) {
            double v[3] = {a, b, c};
            std::sort(v, v + 3);
            return v[1];
        };
        const Vector omega = {0.0, 0.0};
        Vector agg_theta(2), agg_omega(2);
        const Vector g1t = grad(w.theta, w.v, 0.0), g2t = grad(w.theta, w.x, 0.0),
                     g3t = grad(w.theta, w.x, 1.0);
        const Vector g1o = grad(omega, w.v, 0.0), g2o = grad(omega, w.x, 0.0),
                     g3o = grad(omega, w.x, 1.0);
        for (int k = 0; k < 2; ++k) {
            agg_theta[k] = median3(g1t[k], g2t[k], g3t[k]);
            agg_omega[k] = median3(g1o[k], g2o[k], g3o[k]);
        }
        double inner = 0.0;
        for (int k = 0; k < 2; ++k)
            inner += (w.theta[k] - omega[k]) * (agg_theta[k] - agg_omega[k]);
        const double err = std::abs(inner - w.inner_product);
        std::ostringstream os;
        if (err > 1e-12 || inner >= -1e-6)
            os << "L=" << format_double(L) << " inner=" << format_double(inner)
               << " reported=" << format_double(w.inner_product);
        ctx.record(err <= 1e-12 && inner < -1e-6, std::min(1e-12 - err, -1e-6 - inner),
                   os.str());
    }
    return ctx.result;
}

SuiteResult suite_constructions(std::uint64_t seed) {
    SuiteCtx ctx("constructions");

    const auto audit_gd = [&](const ConstructionOutput& cons, const ConstructionParams& cp,
                              const char* tag) {
        RunConfig rc;
        rc.algorithm = Algorithm::gd;
        rc.rule = Rule::smea;
        rc.f = cp.f;
        rc.T = cp.T;
        rc.schedule = Schedule::constant(cp.gamma);
        rc.theta0 = {0.0};
        WorkerSet tmpl;
        tmpl.n = cp.n;
        const auto [base, variant] = run_paired(rc, cons.pair, tmpl, cons.loss);
        const Predictions& pred = *cons.predicted;

        const double err_base = std::abs(base.thetas.back()[0] - pred.theta_T);
        const double err_variant =
            std::abs(variant.thetas.back()[0] - pred.theta_variant_T);
        std::ostringstream os;
        os << tag << " f=" << cp.f << " m=" << cp.m;
        ctx.record(err_base <= 1e-9, 1e-9 - err_base, os.str() + " base theta");
        ctx.record(err_variant <= 1e-9, 1e-9 - err_variant, os.str() + " variant theta");

        bool sel_base = true, sel_variant = true;
        for (int t = 0; t < cp.T; ++t) {
            sel_base = sel_base && base.selected_subsets[t] &&
                       *base.selected_subsets[t] == pred.base_subset;
            sel_variant = sel_variant && variant.selected_subsets[t] &&
                          *variant.selected_subsets[t] == pred.variant_subset;
        }
        ctx.record(sel_base, sel_base ? 0.0 : -1.0, os.str() + " base selection");
        ctx.record(sel_variant, sel_variant ? 0.0 : -1.0, os.str() + " variant selection");
    };

    for (int f = 1; f <= 7; ++f) {
        ConstructionParams cp;
        cp.f = f;
        audit_gd(build_linear_lb(cp), cp, "linear");
    }
    {
        ConstructionParams cp;
        cp.f = 2;
        cp.m = 3;
        audit_gd(build_linear_lb(cp), cp, "linear");
    }
    for (int f = 1; f <= 6; ++f) {
        ConstructionParams cp;
        cp.f = f;
        cp.mu = 1.0;
        audit_gd(build_strongcvx_lb(cp), cp, "strongcvx");
    }
    {
        ConstructionParams cp;
        cp.f = 7;
        cp.mu = 1.0;
        bool threw = false;
        try {
            build_strongcvx_lb(cp);
        } catch (const construction_error&) {
            threw = true;
        }
        ctx.record(threw, threw ? 0.0 : -1.0, "strongcvx f=7 did not report infeasibility");
    }

    // Projected-SGD: the variant is pinned at zero, the base follows the
    // two-phase selection pattern and the per-path lambda recursion.
    {
        ConstructionParams cp;
        cp.f = 3;
        cp.m = 4;
        cp.T = 16;
        cp.epsilon = 0.1;
        const ConstructionOutput cons = build_projected_lb(cp);
        const ProjectedPredictions& pp = *cons.projected_predicted;
        IndexSubset pre_sel = cons.group_pivot, post_sel = cons.group_pivot;
        pre_sel.insert(pre_sel.end(), cons.group_N.begin(), cons.group_N.end());
        post_sel = pre_sel;
        pre_sel.insert(pre_sel.end(), cons.group_E.begin(), cons.group_E.end());
        post_sel.insert(post_sel.end(), cons.group_F.begin(), cons.group_F.end());

        for (int s = 0; s < 5; ++s) {
            RunConfig rc;
            rc.algorithm = Algorithm::projected_sgd;
            rc.rule = Rule::smea;
            rc.f = cp.f;
            rc.T = cp.T;
            rc.schedule = Schedule::constant(cp.gamma);
            rc.theta0 = {0.0};
            rc.seed = seed * 31ULL + static_cast<std::uint64_t>(s);
            WorkerSet tmpl;
            tmpl.n = cp.n;
            const auto [base, variant] = run_paired(rc, cons.pair, tmpl, cons.loss);
            std::ostringstream tag;
            tag << "projected seed=" << rc.seed;

            bool variant_pinned = true;
            for (const Vector& th : variant.thetas)
                variant_pinned = variant_pinned && th[0] == 0.0;
            ctx.record(variant_pinned, variant_pinned ? 0.0 : -1.0,
                       tag.str() + " variant not pinned at zero");

            std::optional<int> t0;
            for (int t = 0; t < cp.T; ++t)
                if (draw_index(rc.seed, t, cons.pair.diff_worker, cp.m) ==
                    cons.pair.diff_sample) {
                    t0 = t;
                    break;
                }
            bool phases_ok = true;
            for (int t = 0; t < cp.T && phases_ok; ++t) {
                const IndexSubset& expect = (!t0 || t < *t0) ? pre_sel : post_sel;
                phases_ok = base.selected_subsets[t] &&
                            *base.selected_subsets[t] == expect;
            }
            ctx.record(phases_ok, phases_ok ? 0.0 : -1.0,
                       tag.str() + " base selection phases");

            // Replay the scalar recursion: lambda' = lambda (1 - gamma L b^2
            // (f + X_t)/(n-f)) + gamma beta (f + X_t)/(n-f) after the pivot
            // first draws its special sample, zero before.
            const double root_l = std::sqrt(cp.L);
            double lambda = 0.0;
            double worst = 0.0;
            for (int t = 0; t < cp.T; ++t) {
                if (t0 && t >= *t0) {
                    const int x_t =
                        draw_index(rc.seed, t, cons.pair.diff_worker, cp.m) ==
                                cons.pair.diff_sample
                            ? 1
                            : 0;
                    const double weight =
                        (cp.f + x_t) / static_cast<double>(cp.n - cp.f);
                    lambda = lambda * (1.0 - cp.gamma * cp.L * pp.b * pp.b * weight) +
                             cp.gamma * pp.beta * weight;
                }
                worst = std::max(worst,
                                 std::abs(base.thetas[t + 1][0] - lambda * root_l));
            }
            ctx.record(worst <= 1e-9, 1e-9 - worst, tag.str() + " lambda recursion");
        }
    }
    return ctx.result;
}

} // namespace

std::vector<std::string> verify_suite_names() {
    return {"aggregation-cert", "trimmed-mean", "expansivity", "pick-lemma", "losses",
            "coupling",         "covariance",   "counterexample", "constructions"};
}

SuiteResult run_verify_suite(const std::string& name, std::uint64_t seed) {
    if (name == "aggregation-cert") return suite_aggregation_cert(seed);
    if (name == "trimmed-mean") return suite_trimmed_mean(seed);
    if (name == "expansivity") return suite_expansivity(seed);
    if (name == "pick-lemma") return suite_pick_lemma(seed);
    if (name == "losses") return suite_losses(seed);
    if (name == "coupling") return suite_coupling(seed);
    if (name == "covariance") return suite_covariance(seed);
    if (name == "counterexample") return suite_counterexample(seed);
    if (name == "constructions") return suite_constructions(seed);
    throw validation_error("verify: unknown suite '" + name + "'");
}

} // namespace ral
