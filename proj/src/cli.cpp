#include "ral/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ral {

namespace {

using json = nlohmann::ordered_json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Tracks which keys a command consumed so leftovers can be rejected.
class KeyReader {
public:
    explicit KeyReader(const std::map<std::string, std::string>& keys) : keys_(keys) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        const auto it = keys_.find(key);
        if (it == keys_.end()) return std::nullopt;
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& def) {
        return raw(key).value_or(def);
    }

    std::string require_string(const std::string& key) {
        const auto v = raw(key);
        if (!v) throw validation_error("config: key '" + key + "' is required");
        return *v;
    }

    double get_double(const std::string& key, double def) {
        const auto v = raw(key);
        return v ? parse_double(key, *v) : def;
    }

    std::optional<double> get_opt_double(const std::string& key) {
        const auto v = raw(key);
        if (!v) return std::nullopt;
        return parse_double(key, *v);
    }

    int get_int(const std::string& key, int def) {
        const auto v = raw(key);
        return v ? parse_int(key, *v) : def;
    }

    int require_int(const std::string& key) { return parse_int(key, require_string(key)); }

    std::uint64_t get_seed(const std::string& key, std::uint64_t def) {
        const auto v = raw(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            const std::uint64_t parsed = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument("");
            return parsed;
        } catch (const std::exception&) {
            throw validation_error("config: key '" + key + "' expects an unsigned integer");
        }
    }

    bool get_bool(const std::string& key, bool def) {
        const auto v = raw(key);
        if (!v) return def;
        if (*v == "1" || *v == "true" || *v == "yes") return true;
        if (*v == "0" || *v == "false" || *v == "no") return false;
        throw validation_error("config: key '" + key + "' expects a boolean");
    }

    Vector get_vector(const std::string& key, const Vector& def) {
        const auto v = raw(key);
        if (!v) return def;
        Vector out;
        std::stringstream ss(*v);
        std::string part;
        while (std::getline(ss, part, ','))
            out.push_back(parse_double(key, part));
        if (out.empty()) throw validation_error("config: key '" + key + "' is empty");
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : keys_)
            if (!used_.count(key))
                throw validation_error("config: unknown key '" + key + "'");
    }

private:
    static double parse_double(const std::string& key, const std::string& text) {
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw validation_error("config: key '" + key + "' expects a number");
        }
    }

    static int parse_int(const std::string& key, const std::string& text) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(text, &used);
            if (used != text.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw validation_error("config: key '" + key + "' expects an integer");
        }
    }

    const std::map<std::string, std::string>& keys_;
    std::set<std::string> used_;
};

void write_output(const ExperimentConfig& config, const std::string& text,
                  std::ostream& out) {
    if (config.out_path.empty()) {
        out << text;
        return;
    }
    std::ofstream file(config.out_path, std::ios::binary);
    if (!file)
        throw validation_error("cannot open output file: " + config.out_path);
    file << text;
}

void check_format(const ExperimentConfig& config) {
    if (config.format != "csv" && config.format != "json")
        throw validation_error("format must be csv or json");
}

json optional_json(const std::optional<double>& v) {
    if (!v || std::isnan(*v)) return nullptr;
    return *v;
}

json double_json(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

std::string plot_script_path(const std::string& csv_path) {
    const auto dot = csv_path.find_last_of('.');
    const auto slash = csv_path.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return csv_path + ".gp";
    return csv_path.substr(0, dot) + ".gp";
}

const char* kFigure1Columns =
    "f,kappa_theory,kappa_hat_pois_base,kappa_hat_pois_variant,kappa_hat_byz_base,"
    "kappa_hat_byz_variant,stab_pois,stab_byz,lb_pois,ub_pois,ub_byz_theory,"
    "ub_byz_empirical,gen_err_pois,gen_err_byz";

std::string figure1_csv(const std::vector<Figure1Row>& rows) {
    std::string text = std::string(kFigure1Columns) + "\n";
    for (const Figure1Row& r : rows) {
        text += std::to_string(r.f);
        for (double v : {r.kappa_theory, r.kappa_hat_pois_base, r.kappa_hat_pois_variant,
                         r.kappa_hat_byz_base, r.kappa_hat_byz_variant, r.stab_pois,
                         r.stab_byz, r.lb_pois, r.ub_pois, r.ub_byz_theory,
                         r.ub_byz_empirical, r.gen_err_pois, r.gen_err_byz})
            text += "," + format_double(v);
        text += "\n";
    }
    return text;
}

json figure1_report(const Figure1Row& r, bool byzantine) {
    json j;
    j["attack"] = byzantine ? "byzantine_tailored" : "poisoning";
    j["f"] = r.f;
    j["measured_stability"] = double_json(byzantine ? r.stab_byz : r.stab_pois);
    j["stderr"] = nullptr; // GD: deterministic
    j["lb_theoretical"] = byzantine ? json(nullptr) : double_json(r.lb_pois);
    j["ub_theoretical"] = double_json(byzantine ? r.ub_byz_theory : r.ub_pois);
    j["ub_empirical_kappa"] =
        byzantine ? double_json(r.ub_byz_empirical) : json(nullptr);
    j["kappa_hat_base"] =
        double_json(byzantine ? r.kappa_hat_byz_base : r.kappa_hat_pois_base);
    j["kappa_hat_variant"] =
        double_json(byzantine ? r.kappa_hat_byz_variant : r.kappa_hat_pois_variant);
    j["gen_error"] = double_json(byzantine ? r.gen_err_byz : r.gen_err_pois);
    j["kappa_theory"] = double_json(r.kappa_theory);
    j["infeasible"] = byzantine ? r.infeasible : false;
    return j;
}

std::string figure1_plot_script(const std::string& csv_path) {
    std::string s;
    s += "# Stability sweep vs f. Usage: gnuplot <this file>\n";
    s += "set datafile separator ','\n";
    s += "set key top left\n";
    s += "set xlabel 'f'\n";
    s += "set ylabel 'uniform stability'\n";
    s += "set logscale y\n";
    s += "csv = '" + csv_path + "'\n";
    s += "plot csv using 1:7 every ::1 with linespoints title 'poisoning (measured)', \\\n";
    s += "     csv using 1:8 every ::1 with linespoints title 'byzantine (measured)', \\\n";
    s += "     csv using 1:9 every ::1 with lines dashtype 2 title 'poisoning lower bound', \\\n";
    s += "     csv using 1:10 every ::1 with lines dashtype 2 title 'poisoning upper bound', \\\n";
    s += "     csv using 1:11 every ::1 with lines dashtype 3 title 'byzantine upper bound', \\\n";
    s += "     csv using 1:12 every ::1 with linespoints pointtype 2 title 'byzantine empirical-kappa bound'\n";
    return s;
}

struct TheoremRow {
    TheoremId id;
    const char* name;
};

constexpr TheoremRow kTheorems[] = {
    {TheoremId::byz_convex, "byz_convex"},
    {TheoremId::byz_strongcvx, "byz_strongcvx"},
    {TheoremId::byz_nonconvex_sgd, "byz_nonconvex_sgd"},
    {TheoremId::pois_smea_convex, "pois_smea_convex"},
    {TheoremId::pois_smea_strongcvx, "pois_smea_strongcvx"},
    {TheoremId::pois_smea_nonconvex, "pois_smea_nonconvex"},
    {TheoremId::pois_cwtm_nonconvex, "pois_cwtm_nonconvex"},
    {TheoremId::lb_pois_convex, "lb_pois_convex"},
    {TheoremId::lb_pois_strongcvx, "lb_pois_strongcvx"},
};

std::optional<TheoremId> theorem_from_name(const std::string& name) {
    for (const TheoremRow& row : kTheorems)
        if (name == row.name) return row.id;
    return std::nullopt;
}

bool theorem_applicable(TheoremId id, const BoundQuery& q) {
    switch (id) {
    case TheoremId::byz_convex:
    case TheoremId::pois_smea_convex:
    case TheoremId::lb_pois_convex:
        return q.gamma.has_value();
    case TheoremId::byz_strongcvx:
    case TheoremId::pois_smea_strongcvx:
    case TheoremId::lb_pois_strongcvx:
        return q.mu.has_value();
    case TheoremId::byz_nonconvex_sgd:
    case TheoremId::pois_smea_nonconvex:
        return q.c.has_value();
    case TheoremId::pois_cwtm_nonconvex:
        return q.c.has_value() && q.nu.has_value();
    }
    return false;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
    std::ifstream file(path);
    if (!file)
        throw validation_error("cannot open config file: " + path);
    std::map<std::string, std::string> keys;
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(file, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error("config " + path + ":" + std::to_string(lineno) +
                                   ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw validation_error("config " + path + ":" + std::to_string(lineno) +
                                   ": empty key");
        keys[key] = value;
    }
    return keys;
}

Figure1Row figure1_cell(const Figure1Params& params, int f) {
    Figure1Row row;
    row.f = f;

    ConstructionParams cp;
    cp.n = params.n;
    cp.f = f;
    cp.m = params.m;
    cp.C = params.C;
    cp.L = 1.0;
    cp.T = params.T;
    cp.gamma = params.gamma;
    const ConstructionOutput cons = build_linear_lb(cp);

    RunConfig rc;
    rc.algorithm = Algorithm::gd;
    rc.rule = Rule::smea;
    rc.f = f;
    rc.T = params.T;
    rc.schedule = Schedule::constant(params.gamma);
    rc.theta0 = {0.0};

    WorkerSet honest_template;
    honest_template.n = params.n;
    const auto [pois_base, pois_variant] =
        run_paired(rc, cons.pair, honest_template, cons.loss);

    row.kappa_theory = kappa_smea(params.n, f);
    row.stab_pois = measure_stability(pois_base, pois_variant, cons.loss);
    row.kappa_hat_pois_base = empirical_kappa(pois_base, params.n, f);
    row.kappa_hat_pois_variant = empirical_kappa(pois_variant, params.n, f);
    row.gen_err_pois = generalization_error_linear(
        pois_variant.thetas.back()[0], pois_base.thetas.back()[0], params.n, f);

    BoundQuery q;
    q.gamma = params.gamma;
    q.C = params.C;
    q.L = 1.0;
    q.T = params.T;
    q.n = params.n;
    q.f = f;
    q.m = params.m;
    q.theorem = TheoremId::lb_pois_convex;
    row.lb_pois = theorem_bound(q).value;
    q.theorem = TheoremId::pois_smea_convex;
    row.ub_pois = theorem_bound(q).value;
    q.theorem = TheoremId::byz_convex;
    q.kappa = row.kappa_theory;
    row.ub_byz_theory = theorem_bound(q).value;

    if (f == 0) {
        // No Byzantine workers to corrupt: the tailored cell degenerates to the
        // poisoning one.
        row.stab_byz = row.stab_pois;
        row.kappa_hat_byz_base = row.kappa_hat_pois_base;
        row.kappa_hat_byz_variant = row.kappa_hat_pois_variant;
        row.gen_err_byz = row.gen_err_pois;
        row.ub_byz_empirical =
            params.gamma * params.C * params.T *
            (2.0 / ((params.n - f) * params.m) + std::sqrt(row.kappa_hat_byz_base) +
             std::sqrt(row.kappa_hat_byz_variant));
        return row;
    }

    try {
        const IndexSubset byz_ids = byzantine_identity_table(params.n, f);
        TailoredAttackState state = make_tailored_state(cons, byz_ids, params.epsilon);
        const NeighboringPair filtered = filter_pair(cons.pair, byz_ids);
        WorkerSet byz_template;
        byz_template.n = params.n;
        byz_template.byzantine_ids = byz_ids;
        byz_template.strategy =
            std::make_shared<const TailoredByzantineStrategy>(std::move(state));
        const auto [byz_base, byz_variant] =
            run_paired(rc, filtered, byz_template, cons.loss);

        row.stab_byz = measure_stability(byz_base, byz_variant, cons.loss);
        row.kappa_hat_byz_base = empirical_kappa(byz_base, params.n, f);
        row.kappa_hat_byz_variant = empirical_kappa(byz_variant, params.n, f);
        row.gen_err_byz = generalization_error_linear(
            byz_variant.thetas.back()[0], byz_base.thetas.back()[0], params.n, f);
        row.ub_byz_empirical =
            params.gamma * params.C * params.T *
            (2.0 / ((params.n - f) * params.m) + std::sqrt(row.kappa_hat_byz_base) +
             std::sqrt(row.kappa_hat_byz_variant));
    } catch (const construction_error&) {
        row.infeasible = true;
    } catch (const attack_infeasible_error&) {
        row.infeasible = true;
    }
    if (row.infeasible) {
        row.stab_byz = kNaN;
        row.kappa_hat_byz_base = kNaN;
        row.kappa_hat_byz_variant = kNaN;
        row.gen_err_byz = kNaN;
        row.ub_byz_empirical = kNaN;
    }
    return row;
}

std::vector<Figure1Row> figure1_rows(const Figure1Params& params) {
    if (params.f_min < 0 || params.f_min > params.f_max || 2 * params.f_max >= params.n)
        throw validation_error("figure1: need 0 <= f_min <= f_max < n/2");
    std::vector<Figure1Row> rows;
    rows.reserve(params.f_max - params.f_min + 1);
    for (int f = params.f_min; f <= params.f_max; ++f)
        rows.push_back(figure1_cell(params, f));
    return rows;
}

int cmd_figure1(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    check_format(config);
    KeyReader reader(config.keys);
    Figure1Params params;
    params.n = reader.get_int("n", params.n);
    params.m = reader.get_int("m", params.m);
    params.T = reader.get_int("T", params.T);
    params.C = reader.get_double("C", params.C);
    params.gamma = reader.get_double("gamma", params.gamma);
    params.epsilon = reader.get_double("epsilon", params.epsilon);
    params.f_min = reader.get_int("f_min", params.f_min);
    params.f_max = reader.get_int("f_max", params.f_max);
    reader.finish();

    const std::vector<Figure1Row> rows = figure1_rows(params);
    for (const Figure1Row& r : rows)
        if (r.infeasible)
            err << "figure1: byzantine cell infeasible at f = " << r.f << "\n";

    if (config.format == "csv") {
        write_output(config, figure1_csv(rows), out);
    } else {
        json doc = json::array();
        for (const Figure1Row& r : rows) {
            doc.push_back(figure1_report(r, false));
            doc.push_back(figure1_report(r, true));
        }
        write_output(config, doc.dump(2) + "\n", out);
    }

    if (config.emit_plot_script) {
        if (config.out_path.empty() || config.format != "csv")
            throw validation_error("plot script emission needs --out and csv format");
        const std::string path = plot_script_path(config.out_path);
        std::ofstream script(path, std::ios::binary);
        if (!script)
            throw validation_error("cannot open plot script file: " + path);
        script << figure1_plot_script(config.out_path);
        err << "figure1: wrote plot script " << path << "\n";
    }
    return 0;
}

int cmd_bounds(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    (void)err;
    check_format(config);
    KeyReader reader(config.keys);
    BoundQuery q;
    q.n = reader.require_int("n");
    q.f = reader.require_int("f");
    q.m = reader.get_int("m", 1);
    q.T = reader.get_int("T", 1);
    q.C = reader.get_double("C", 1.0);
    q.L = reader.get_double("L", 1.0);
    q.gamma = reader.get_opt_double("gamma");
    q.c = reader.get_opt_double("c");
    q.mu = reader.get_opt_double("mu");
    q.kappa = reader.get_opt_double("kappa");
    q.ell_inf = reader.get_opt_double("ell_inf");
    q.nu = reader.get_opt_double("nu");
    q.regime_override = reader.get_bool("regime_override", false);
    const auto filter = reader.raw("theorem");
    reader.finish();

    if (q.n < 1 || q.f < 0 || 2 * q.f >= q.n)
        throw validation_error("bounds: need 0 <= f < n/2");
    if (!q.kappa) q.kappa = kappa_smea(q.n, q.f); // the SMEA default

    std::vector<std::pair<std::string, BoundResult>> results;
    if (filter) {
        const auto id = theorem_from_name(*filter);
        if (!id)
            throw validation_error("bounds: unknown theorem '" + *filter + "'");
        results.emplace_back(*filter, theorem_bound([&] {
            BoundQuery one = q;
            one.theorem = *id;
            return one;
        }()));
    } else {
        for (const TheoremRow& row : kTheorems) {
            if (!theorem_applicable(row.id, q)) continue;
            BoundQuery one = q;
            one.theorem = row.id;
            results.emplace_back(row.name, theorem_bound(one));
        }
    }

    // Cross-threat ratios, emitted when both threat models were evaluated.
    std::vector<std::pair<std::string, double>> ratios;
    if (!filter) {
        const double nf = static_cast<double>(q.n - q.f);
        const double base_term = 1.0 / (nf * q.m);
        if (q.gamma) {
            double byz = 0.0, pois = 0.0;
            for (const auto& [name, r] : results) {
                if (name == "byz_convex") byz = r.value;
                if (name == "pois_smea_convex") pois = r.value;
            }
            if (pois > 0.0)
                ratios.emplace_back("ratio_byz_over_pois_convex", byz / pois);
        }
        if (q.c) {
            const double num = base_term + std::sqrt(*q.kappa);
            const double den = base_term + q.f / nf;
            ratios.emplace_back("ratio_byz_over_pois_nonconvex",
                                std::pow(num / den, 1.0 / (*q.c + 1.0)));
            if (q.nu) {
                const double nu = *q.nu;
                const double lead = (2.0 + nu) * (2.0 + nu) / (nu * nu);
                const double root_n = std::sqrt(static_cast<double>(q.n));
                ratios.emplace_back(
                    "ratio_pois_smea_over_cwtm_nonconvex",
                    std::pow(lead * (root_n / nf + q.f * q.m * root_n / nf),
                             1.0 / (*q.c + 1.0)));
            }
        }
    }

    if (config.format == "csv") {
        std::string text = "name,value,order_only\n";
        for (const auto& [name, r] : results)
            text += name + "," + format_double(r.value) + "," + (r.order_only ? "1" : "0") +
                    "\n";
        for (const auto& [name, v] : ratios)
            text += name + "," + format_double(v) + ",0\n";
        write_output(config, text, out);
    } else {
        json doc;
        json inputs;
        inputs["n"] = q.n;
        inputs["f"] = q.f;
        inputs["m"] = q.m;
        inputs["T"] = q.T;
        inputs["C"] = q.C;
        inputs["L"] = q.L;
        inputs["gamma"] = optional_json(q.gamma);
        inputs["c"] = optional_json(q.c);
        inputs["mu"] = optional_json(q.mu);
        inputs["kappa"] = optional_json(q.kappa);
        inputs["ell_inf"] = optional_json(q.ell_inf);
        inputs["nu"] = optional_json(q.nu);
        doc["inputs"] = inputs;
        json bounds = json::array();
        for (const auto& [name, r] : results) {
            json row;
            row["theorem"] = name;
            row["value"] = r.value;
            row["order_only"] = r.order_only;
            bounds.push_back(row);
        }
        doc["bounds"] = bounds;
        json ratio_obj;
        for (const auto& [name, v] : ratios) ratio_obj[name] = v;
        doc["ratios"] = ratio_obj;
        write_output(config, doc.dump(2) + "\n", out);
    }
    return 0;
}

int cmd_run(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    (void)err;
    check_format(config);
    KeyReader reader(config.keys);
    const std::string which = reader.require_string("construction");

    ConstructionParams cp;
    cp.n = reader.get_int("n", cp.n);
    cp.f = reader.get_int("f", cp.f);
    cp.m = reader.get_int("m", cp.m);
    cp.C = reader.get_double("C", cp.C);
    cp.L = reader.get_double("L", cp.L);
    cp.mu = reader.get_opt_double("mu");
    cp.T = reader.get_int("T", cp.T);
    cp.gamma = reader.get_double("gamma", cp.gamma);
    cp.epsilon = reader.get_double("epsilon", cp.epsilon);
    cp.psi_override = reader.get_opt_double("psi_override");

    ConstructionOutput cons;
    Algorithm default_algorithm = Algorithm::gd;
    if (which == "linear") {
        cons = build_linear_lb(cp);
    } else if (which == "strongcvx") {
        if (!cp.mu) cp.mu = 1.0;
        cons = build_strongcvx_lb(cp);
    } else if (which == "projected") {
        cons = build_projected_lb(cp);
        default_algorithm = Algorithm::projected_sgd;
    } else {
        throw validation_error("run: construction must be linear, strongcvx or projected");
    }

    RunConfig rc;
    const std::string algorithm = reader.get_string(
        "algorithm", default_algorithm == Algorithm::gd ? "gd" : "projected_sgd");
    if (algorithm == "gd")
        rc.algorithm = Algorithm::gd;
    else if (algorithm == "sgd")
        rc.algorithm = Algorithm::sgd;
    else if (algorithm == "projected_sgd")
        rc.algorithm = Algorithm::projected_sgd;
    else
        throw validation_error("run: algorithm must be gd, sgd or projected_sgd");

    const std::string rule = reader.get_string("rule", "smea");
    if (rule == "mean")
        rc.rule = Rule::mean;
    else if (rule == "cwtm")
        rc.rule = Rule::cwtm;
    else if (rule == "smea")
        rc.rule = Rule::smea;
    else
        throw validation_error("run: rule must be mean, cwtm or smea");

    rc.f = cp.f;
    rc.T = cp.T;
    rc.schedule = Schedule::constant(cp.gamma);
    rc.theta0 = reader.get_vector("theta0", {0.0});
    const std::uint64_t seed_base = reader.get_seed("seed", 0);
    const int seeds = reader.get_int("seeds", 1);
    reader.finish();
    if (seeds < 1) throw validation_error("run: seeds must be >= 1");

    WorkerSet honest_template;
    honest_template.n = cp.n;

    // Stochastic witness grid for the projected construction: the data point
    // maximizing the per-pair loss gap on the ray.
    std::vector<DataPoint> grid;
    const std::vector<DataPoint>* grid_ptr = nullptr;
    if (cons.loss.family == LossFamily::huberized_regression) {
        grid.push_back(DataPoint::pair({std::sqrt(cp.L)}, -cp.C / std::sqrt(cp.L)));
        grid_ptr = &grid;
    }

    double stab_sum = 0.0, stab_sq = 0.0;
    double base_sum = 0.0, variant_sum = 0.0;
    std::optional<std::pair<Trajectory, Trajectory>> first;
    double kappa_base = kNaN, kappa_variant = kNaN;
    for (int r = 0; r < seeds; ++r) {
        rc.seed = seed_base + static_cast<std::uint64_t>(r);
        auto pair = run_paired(rc, cons.pair, honest_template, cons.loss);
        const double stab = measure_stability(pair.first, pair.second, cons.loss, grid_ptr);
        stab_sum += stab;
        stab_sq += stab * stab;
        base_sum += pair.first.thetas.back()[0];
        variant_sum += pair.second.thetas.back()[0];
        if (r == 0) {
            if (rc.rule == Rule::smea) {
                kappa_base = empirical_kappa(pair.first, cp.n, cp.f);
                kappa_variant = empirical_kappa(pair.second, cp.n, cp.f);
            }
            first = std::move(pair);
        }
    }
    const double stab_mean = stab_sum / seeds;
    const double theta_mean = base_sum / seeds;
    const double variant_mean = variant_sum / seeds;
    std::optional<double> stab_se;
    if (seeds > 1) {
        const double var =
            std::max(0.0, (stab_sq - seeds * stab_mean * stab_mean) / (seeds - 1.0));
        stab_se = std::sqrt(var / seeds);
    }

    // Theoretical companions for the report.
    std::optional<double> lb, ub;
    json predicted;
    if (cons.predicted) {
        const Predictions& p = *cons.predicted;
        predicted["p"] = p.p;
        predicted["psi"] = p.psi;
        predicted["theta_T"] = p.theta_T;
        predicted["theta_variant_T"] = p.theta_variant_T;
        BoundQuery q;
        q.n = cp.n;
        q.f = cp.f;
        q.m = cp.m;
        q.T = cp.T;
        q.C = cp.C;
        q.L = cp.L;
        if (which == "linear") {
            q.gamma = cp.gamma;
            q.theorem = TheoremId::lb_pois_convex;
            lb = theorem_bound(q).value;
            q.theorem = TheoremId::pois_smea_convex;
            ub = theorem_bound(q).value;
        } else {
            q.mu = cp.mu;
            q.theorem = TheoremId::lb_pois_strongcvx;
            lb = theorem_bound(q).value;
            q.theorem = TheoremId::pois_smea_strongcvx;
            ub = theorem_bound(q).value;
        }
    } else if (cons.projected_predicted) {
        const ProjectedPredictions& p = *cons.projected_predicted;
        predicted["p"] = p.p;
        predicted["psi"] = p.psi;
        predicted["alpha"] = p.alpha;
        predicted["beta"] = p.beta;
        predicted["b"] = p.b;
        predicted["lambda_star"] = p.lambda_star();
        predicted["contraction"] = p.contraction();
        predicted["mixture_mean_theta_T"] = p.mixture_mean() * std::sqrt(cp.L);
        lb = p.stability_lower_bound();
        ub = kNaN; // no matching closed-form upper bound for projected SGD
    }

    StabilityReport report;
    report.attack = "poisoning";
    report.f = cp.f;
    report.measured_stability = stab_mean;
    report.std_error = stab_se;
    report.lb_theoretical = lb;
    report.ub_theoretical = ub.value_or(kNaN);
    report.kappa_hat_base = kappa_base;
    report.kappa_hat_variant = kappa_variant;

    if (config.format == "json") {
        json doc;
        json cfg;
        cfg["construction"] = which;
        cfg["algorithm"] = algorithm;
        cfg["rule"] = rule;
        cfg["n"] = cp.n;
        cfg["f"] = cp.f;
        cfg["m"] = cp.m;
        cfg["C"] = cp.C;
        cfg["L"] = cp.L;
        cfg["mu"] = optional_json(cp.mu);
        cfg["T"] = cp.T;
        cfg["gamma"] = cp.gamma;
        cfg["epsilon"] = cp.epsilon;
        cfg["seed"] = seed_base;
        cfg["seeds"] = seeds;
        doc["config"] = cfg;
        json rep;
        rep["attack"] = report.attack;
        rep["f"] = report.f;
        rep["measured_stability"] = double_json(report.measured_stability);
        rep["stderr"] = optional_json(report.std_error);
        rep["lb_theoretical"] = optional_json(report.lb_theoretical);
        rep["ub_theoretical"] = double_json(report.ub_theoretical);
        rep["ub_empirical_kappa"] = optional_json(report.ub_empirical_kappa);
        rep["kappa_hat_base"] = double_json(report.kappa_hat_base);
        rep["kappa_hat_variant"] = double_json(report.kappa_hat_variant);
        rep["gen_error"] = optional_json(report.gen_error);
        doc["report"] = rep;
        json measured;
        measured["theta_T_mean"] = theta_mean;
        measured["theta_variant_T_mean"] = variant_mean;
        doc["measured"] = measured;
        doc["predicted"] = predicted;
        json traj;
        traj["base_thetas"] = json::array();
        traj["variant_thetas"] = json::array();
        for (const Vector& th : first->first.thetas) traj["base_thetas"].push_back(th[0]);
        for (const Vector& th : first->second.thetas)
            traj["variant_thetas"].push_back(th[0]);
        doc["trajectory"] = traj;
        write_output(config, doc.dump(2) + "\n", out);
    } else {
        std::string text = "key,value\n";
        const auto emit = [&](const std::string& k, double v) {
            text += k + "," + format_double(v) + "\n";
        };
        text += "construction," + which + "\n";
        emit("f", cp.f);
        emit("measured_stability", stab_mean);
        emit("stability_stderr", stab_se.value_or(kNaN));
        emit("theta_T_mean", theta_mean);
        emit("theta_variant_T_mean", variant_mean);
        emit("lb_theoretical", lb.value_or(kNaN));
        emit("ub_theoretical", ub.value_or(kNaN));
        emit("kappa_hat_base", kappa_base);
        emit("kappa_hat_variant", kappa_variant);
        for (const auto& [k, v] : predicted.items())
            emit(std::string("predicted_") + k, v.is_number() ? v.get<double>() : kNaN);
        write_output(config, text, out);
    }
    return 0;
}

int cmd_counterexample(const ExperimentConfig& config, std::ostream& out,
                       std::ostream& err) {
    (void)err;
    check_format(config);
    KeyReader reader(config.keys);
    const double L = reader.get_double("L", 1.0);
    reader.finish();

    const CocoercivityWitness w = cwtm_cocoercivity_counterexample(L);
    if (config.format == "json") {
        json doc;
        doc["L"] = L;
        doc["v"] = w.v;
        doc["x"] = w.x;
        doc["theta"] = w.theta;
        doc["inner_product"] = w.inner_product;
        write_output(config, doc.dump(2) + "\n", out);
    } else {
        std::string text = "key,value\n";
        text += "L," + format_double(L) + "\n";
        text += "v_0," + format_double(w.v[0]) + "\n";
        text += "v_1," + format_double(w.v[1]) + "\n";
        text += "x_0," + format_double(w.x[0]) + "\n";
        text += "x_1," + format_double(w.x[1]) + "\n";
        text += "theta_0," + format_double(w.theta[0]) + "\n";
        text += "theta_1," + format_double(w.theta[1]) + "\n";
        text += "inner_product," + format_double(w.inner_product) + "\n";
        write_output(config, text, out);
    }
    return 0;
}

int cmd_verify(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    KeyReader reader(config.keys);
    const std::uint64_t seed = reader.get_seed("seed", 12345);
    std::string suite = config.suite;
    if (suite.empty()) suite = reader.get_string("suite", "");
    reader.finish();

    std::vector<std::string> names = verify_suite_names();
    if (!suite.empty()) {
        bool known = false;
        for (const std::string& n : names) known = known || n == suite;
        if (!known)
            throw validation_error("verify: unknown suite '" + suite + "'");
        names = {suite};
    }

    int total_failures = 0;
    for (const std::string& name : names) {
        const SuiteResult result = run_verify_suite(name, seed);
        out << "suite " << result.name << ": " << result.checks << " checks, "
            << result.failures << " failures, worst slack "
            << format_double(result.worst_slack)
            << (result.failures == 0 ? "  PASS" : "  FAIL") << "\n";
        if (result.failures > 0) {
            err << "suite " << result.name << " witness: " << result.witness << "\n";
            total_failures += result.failures;
        }
    }
    out << (total_failures == 0 ? "verify: PASS" : "verify: FAIL") << "\n";
    return total_failures == 0 ? 0 : 2;
}

int dispatch(const ExperimentConfig& config, std::ostream& out, std::ostream& err) {
    try {
        if (config.command == "figure1") return cmd_figure1(config, out, err);
        if (config.command == "verify") return cmd_verify(config, out, err);
        if (config.command == "bounds") return cmd_bounds(config, out, err);
        if (config.command == "run") return cmd_run(config, out, err);
        if (config.command == "counterexample") return cmd_counterexample(config, out, err);
        throw validation_error("unknown command: " + config.command);
    } catch (const property_violation& e) {
        err << "property violation: " << e.what() << "\n";
        return 2;
    } catch (const construction_error& e) {
        err << "infeasible construction: " << e.what() << "\n";
        return 3;
    } catch (const attack_infeasible_error& e) {
        err << "infeasible attack: " << e.what() << "\n";
        return 3;
    } catch (const error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace ral
