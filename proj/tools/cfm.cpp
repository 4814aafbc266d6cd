// cfm: simulate, match, fit, evaluate, replicate.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
// failure inside the sampler, 4 I/O error.

#include "cfm/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int run(int argc, char** argv) {
    CLI::App app{"Bayesian causal factor regression with dependent stick-breaking score priors"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(CFM_VERSION));

    std::optional<int> threads;

    cfm::SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Generate one scenario dataset with its ground truth");
    simulate->add_option("--scenario", sim.scenario, "Scenario 1..6")->check(CLI::Range(1, 6))->required();
    simulate->add_option("--seed", sim.seed, "Random seed");
    simulate->add_option("--out", sim.out, "Output directory")->required();
    simulate->add_flag("--paper-scale", sim.paper_scale, "Use the full scenario sizes");

    cfm::MatchOptions mat;
    double caliper = -1;
    auto* match = app.add_subcommand("match", "1-to-1 nearest-neighbour propensity score matching");
    match->add_option("--data", mat.input, "Input CSV")->required();
    match->add_option("--schema", mat.schema, "Column mapping JSON");
    match->add_option("--caliper", caliper, "Maximum propensity distance");
    match->add_option("--out", mat.out, "Output directory")->required();

    cfm::FitOptions fit;
    std::string prior = "ddp";
    std::uint64_t fit_seed = 0;
    auto* fitc = app.add_subcommand("fit", "Run the Gibbs sampler and summarize the SATE");
    fitc->add_option("--data", fit.input, "Input CSV")->required();
    fitc->add_option("--schema", fit.schema, "Column mapping JSON");
    fitc->add_option("--config", fit.config, "Model configuration JSON");
    auto* fit_seed_opt = fitc->add_option("--seed", fit_seed, "Random seed (overrides rng_seed)");
    fitc->add_option("--prior", prior, "Score prior: ddp or standard")->check(CLI::IsMember({"ddp", "standard"}));
    fitc->add_flag("--save-params", fit.save_params, "Write per-draw parameter snapshots");
    fitc->add_option("--out", fit.out, "Output directory")->required();
    fitc->add_option("--threads", threads, "Worker threads");

    cfm::EvaluateOptions ev;
    std::vector<std::string> pairs;
    auto* evaluate = app.add_subcommand("evaluate", "Bias, MSE and coverage against a truth file");
    evaluate->add_option("--truth", ev.truth, "truth.json from simulate")->required();
    evaluate->add_option("--pair", pairs, "method=path/to/summary.json (repeatable)")->required();
    evaluate->add_option("--out", ev.out, "Output directory")->required();

    cfm::ReplicateOptions rep;
    std::string rep_priors = "ddp,standard";
    auto* replicate = app.add_subcommand("replicate", "Simulate, fit and evaluate repeatedly");
    replicate->add_option("--scenario", rep.scenario, "Scenario 1..6")->check(CLI::Range(1, 6))->required();
    auto* reps_opt = replicate->add_option("--reps", rep.reps, "Number of replicates");
    replicate->add_option("--seed", rep.seed, "Random seed");
    replicate->add_option("--config", rep.config, "Model configuration JSON");
    replicate->add_option("--prior", rep_priors, "Comma-separated priors to fit");
    replicate->add_option("--out", rep.out, "Output directory")->required();
    replicate->add_option("--threads", threads, "Worker threads");
    replicate->add_flag("--paper-scale", rep.paper_scale, "Use the full scenario sizes and 100 replicates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*simulate) {
        cfm::cmd_simulate(sim);
    } else if (*match) {
        if (caliper >= 0) mat.caliper = caliper;
        cfm::cmd_match(mat);
    } else if (*fitc) {
        fit.prior = cfm::parse_prior(prior);
        if (*fit_seed_opt) fit.seed = fit_seed;
        cfm::resolve_threads(threads);
        cfm::cmd_fit(fit);
    } else if (*evaluate) {
        for (const auto& p : pairs) {
            const auto eq = p.find('=');
            if (eq == std::string::npos || eq == 0) throw cfm::ValidationError("--pair expects method=path, got '" + p + "'");
            ev.summaries.emplace_back(p.substr(0, eq), p.substr(eq + 1));
        }
        cfm::cmd_evaluate(ev);
    } else if (*replicate) {
        rep.threads = cfm::resolve_threads(threads);
        if (rep.paper_scale && !*reps_opt) rep.reps = 100;
        rep.priors.clear();
        std::stringstream ss(rep_priors);
        for (std::string item; std::getline(ss, item, ',');) rep.priors.push_back(cfm::parse_prior(item));
        cfm::cmd_replicate(rep);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cfm::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const cfm::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const cfm::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
