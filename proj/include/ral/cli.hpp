#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ral/analysis.hpp"
#include "ral/threats.hpp"

namespace ral {

// Merged configuration: file keys overridden by command-line flags.
struct ExperimentConfig {
    std::string command; // figure1 | verify | bounds | run | counterexample
    std::map<std::string, std::string> keys;
    std::string out_path;       // empty: write the table to the output stream
    std::string format = "csv"; // csv | json
    bool emit_plot_script = false;
    std::string suite; // verify: run only the named suite
};

// key=value lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

// Runs the configured command; returns the process exit code
// (0 ok, 1 validation, 2 property violation, 3 infeasible construction).
int dispatch(const ExperimentConfig& config, std::ostream& out, std::ostream& err);

int cmd_figure1(const ExperimentConfig&, std::ostream& out, std::ostream& err);
int cmd_verify(const ExperimentConfig&, std::ostream& out, std::ostream& err);
int cmd_bounds(const ExperimentConfig&, std::ostream& out, std::ostream& err);
int cmd_run(const ExperimentConfig&, std::ostream& out, std::ostream& err);
int cmd_counterexample(const ExperimentConfig&, std::ostream& out, std::ostream& err);

struct Figure1Params {
    int n = 15;
    int m = 1;
    int T = 5;
    double C = 1.0;
    double gamma = 1.0;
    double epsilon = 1e-3; // adaptive-attack offset
    int f_min = 1;
    int f_max = 7;
};

struct Figure1Row {
    int f = 0;
    bool infeasible = false; // Byzantine cell could not be mounted
    double kappa_theory = 0.0;
    double kappa_hat_pois_base = 0.0;
    double kappa_hat_pois_variant = 0.0;
    double kappa_hat_byz_base = 0.0;
    double kappa_hat_byz_variant = 0.0;
    double stab_pois = 0.0;
    double stab_byz = 0.0;
    double lb_pois = 0.0;
    double ub_pois = 0.0;
    double ub_byz_theory = 0.0;
    double ub_byz_empirical = 0.0;
    double gen_err_pois = 0.0;
    double gen_err_byz = 0.0;
};

// One f-cell / the full sweep of the stability experiment (GD + SMEA, linear
// construction vs the adaptive Byzantine attack on the same data landscape).
Figure1Row figure1_cell(const Figure1Params& params, int f);
std::vector<Figure1Row> figure1_rows(const Figure1Params& params);

// Lossless decimal rendering (17 significant digits).
std::string format_double(double v);

// Property suites behind `verify` (exposed for the test harness).
struct SuiteResult {
    std::string name;
    int checks = 0;
    int failures = 0;
    double worst_slack = 0.0;
    std::string witness; // minimal reproducing input for the first failure
};

std::vector<std::string> verify_suite_names();
SuiteResult run_verify_suite(const std::string& name, std::uint64_t seed);

} // namespace ral
