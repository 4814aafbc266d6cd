#pragma once
// File-level pipeline behind the command-line tool:
// simulate -> match -> fit -> evaluate, plus replicate loops.
//
// Every command writes its outputs first and manifest.json last, so the
// presence of a manifest marks a complete output directory.

#include "cfm/baseline.hpp"
#include "cfm/config.hpp"
#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/estimands.hpp"
#include "cfm/evaluation.hpp"
#include "cfm/gibbs.hpp"
#include "cfm/matching.hpp"
#include "cfm/simulation.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef CFM_VERSION
#define CFM_VERSION "0.0.0"
#endif

namespace cfm {

namespace fs = std::filesystem;

enum class Prior { ddp, standard };

inline const char* prior_name(Prior p) { return p == Prior::ddp ? "ddp" : "standard"; }

inline Prior parse_prior(const std::string& s) {
    if (s == "ddp") return Prior::ddp;
    if (s == "standard") return Prior::standard;
    throw ValidationError("unknown prior '" + s + "' (expected ddp or standard)");
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const std::string& path) {
    const std::string text = read_file(path);
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("'" + path + "': " + e.what());
    }
}

// Git blob hash: SHA-1 over "blob <size>\0<content>".
inline std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline fs::path prepare_output(const std::string& dir) {
    if (dir.empty()) throw ValidationError("--out is required");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    fs::remove(fs::path(dir) / "manifest.json", ec);
    return fs::path(dir);
}

struct RunManifest {
    std::string subcommand;
    std::string config_path;
    std::map<std::string, std::string> inputs;  // path -> git blob hash
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    nlohmann::json options = nlohmann::json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void add_input(const std::string& path) { inputs[path] = git_blob_hash(read_file(path)); }

    void write(const fs::path& dir) const {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        nlohmann::json j{{"subcommand", subcommand},
                         {"config", config_path},
                         {"inputs", inputs},
                         {"outputs", outputs},
                         {"seed", seed},
                         {"options", options},
                         {"wall_clock_seconds", wall},
                         {"version", CFM_VERSION}};
        const fs::path tmp = dir / "manifest.json.tmp";
        write_json(tmp, j);
        std::error_code ec;
        fs::rename(tmp, dir / "manifest.json", ec);
        if (ec) throw IoError("cannot finalize manifest: " + ec.message());
    }
};

inline std::string draws_csv(const Matrix& draws, const std::string& prefix) {
    std::string s;
    for (Index k = 0; k < draws.cols(); ++k) s += (k ? "," : "") + prefix + std::to_string(k + 1);
    s += '\n';
    for (Index i = 0; i < draws.rows(); ++i) {
        for (Index k = 0; k < draws.cols(); ++k) s += (k ? "," : "") + format_double(draws(i, k));
        s += '\n';
    }
    return s;
}

// Runs `fn(i)` for i in [0, count) on up to `threads` workers. The first
// exception is rethrown after all workers stop.
template <class Fn>
void parallel_for(int count, int threads, Fn fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (int i; (i = next++) < count;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!error) error = std::current_exception();
                    next = count;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// --threads wins; otherwise CFM_THREADS; otherwise 1.
inline int resolve_threads(std::optional<int> flag) {
    if (flag) {
        if (*flag < 1) throw ValidationError("--threads must be >= 1");
        return *flag;
    }
    if (const char* env = std::getenv("CFM_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return v;
        } catch (const std::exception&) {
        }
        throw ValidationError(std::string("CFM_THREADS must be a positive integer, got '") + env + "'");
    }
    return 1;
}

inline ChainOutput fit_chain(const Dataset& d, const ModelConfig& cfg, std::uint64_t seed, Prior prior) {
    return prior == Prior::ddp ? run_chain(d, cfg, seed) : run_chain_standard(d, cfg, seed);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    int scenario = 1;
    std::uint64_t seed = 1;
    std::string out;
    bool paper_scale = false;
};

inline ScenarioSpec scenario_spec(int scenario, std::uint64_t seed, bool paper_scale) {
    return paper_scale ? ScenarioSpec::paper(scenario, seed) : ScenarioSpec::desk(scenario, seed);
}

inline void cmd_simulate(const SimulateOptions& o) {
    const ScenarioSpec spec = scenario_spec(o.scenario, o.seed, o.paper_scale);
    const fs::path dir = prepare_output(o.out);
    RunManifest m{.subcommand = "simulate", .seed = o.seed};
    m.options = {{"scenario", o.scenario}, {"paper_scale", o.paper_scale}};
    const SimulatedTruth truth = generate(spec);
    write_dataset(truth.data, (dir / "data.csv").string());
    write_json(dir / "truth.json", truth_to_json(truth));
    m.outputs = {"data.csv", "truth.json"};
    m.write(dir);
}

// ---------------------------------------------------------------------------
// match

struct MatchOptions {
    std::string input;
    std::string schema;
    std::string out;
    std::optional<double> caliper;
};

inline Schema load_schema_opt(const std::string& path) { return path.empty() ? Schema{} : Schema::load(path); }

inline void cmd_match(const MatchOptions& o) {
    const Dataset d = load_dataset(o.input, load_schema_opt(o.schema));
    const fs::path dir = prepare_output(o.out);
    RunManifest m{.subcommand = "match"};
    m.add_input(o.input);
    if (!o.schema.empty()) m.add_input(o.schema);
    m.options["caliper"] = o.caliper ? nlohmann::json(*o.caliper) : nlohmann::json(nullptr);
    const MatchedStudy s = match_study(d, o.caliper);
    for (const auto& w : s.propensity.warnings) std::cerr << "warning: " << w << '\n';
    for (const auto& n : s.match.notices) std::cerr << "notice: " << n << '\n';
    write_dataset(s.matched, (dir / "matched.csv").string());
    write_json(dir / "balance.json", balance_to_json(s, d));
    m.outputs = {"matched.csv", "balance.json"};
    m.write(dir);
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    std::string input;
    std::string schema;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    Prior prior = Prior::ddp;
    bool save_params = false;
};

inline void write_params(const fs::path& dir, const ChainOutput& c, const Dataset& d) {
    fs::create_directories(dir);
    for (int t = 0; t < 2; ++t) {
        const std::string arm = std::to_string(t);
        std::string mu = "draw", psi = "draw", lam = "draw,outcome,factor,value\n", reg = "draw,outcome,covariate,value\n";
        for (Index k = 0; k < d.q(); ++k) mu += "," + d.outcome_names[static_cast<size_t>(k)];
        psi += mu.substr(4);
        mu += '\n', psi += '\n';
        for (size_t r = 0; r < c.params.size(); ++r) {
            const ParamSnapshot& s = c.params[r];
            const std::string id = std::to_string(s.sweep);
            mu += id, psi += id;
            for (Index k = 0; k < d.q(); ++k) {
                mu += "," + format_double(s.mu[t][k]);
                psi += "," + format_double(s.psi[t][k]);
            }
            mu += '\n', psi += '\n';
            for (Index k = 0; k < s.loadings[t].rows(); ++k)
                for (Index h = 0; h < s.loadings[t].cols(); ++h)
                    lam += id + "," + std::to_string(k + 1) + "," + std::to_string(h + 1) + "," +
                           format_double(s.loadings[t](k, h)) + "\n";
            for (Index k = 0; k < s.regression[t].rows(); ++k)
                for (Index h = 0; h < s.regression[t].cols(); ++h)
                    reg += id + "," + std::to_string(k + 1) + "," + d.covariate_names[static_cast<size_t>(h)] + "," +
                           format_double(s.regression[t](k, h)) + "\n";
        }
        write_file(dir / ("mu_" + arm + ".csv"), mu);
        write_file(dir / ("psi_" + arm + ".csv"), psi);
        write_file(dir / ("loadings_" + arm + ".csv"), lam);
        write_file(dir / ("regression_" + arm + ".csv"), reg);
    }
    // Rotated posterior-mean loadings and their variance shares.
    nlohmann::json summary = nlohmann::json::array();
    for (int t = 0; t < 2; ++t) {
        const Matrix mean = posterior_mean_loadings(c.params, t);
        Vector psi = Vector::Zero(d.q());
        for (const auto& s : c.params) psi += s.psi[t];
        psi /= static_cast<double>(c.params.size());
        const VarimaxResult v = varimax(mean);
        const VarianceExplained ve = variance_explained(v.rotated, psi);
        summary.push_back({{"arm", t},
                           {"rotated_loadings", matrix_to_json(v.rotated)},
                           {"rotation", matrix_to_json(v.rotation)},
                           {"variance_share", std::vector<double>(ve.share.data(), ve.share.data() + ve.share.size())},
                           {"variance_total", ve.total}});
    }
    write_json(dir / "loadings_summary.json", summary);
}

inline void cmd_fit(const FitOptions& o) {
    ModelConfig cfg = o.config.empty() ? ModelConfig{} : load_config(o.config);
    if (o.seed) cfg.rng_seed = *o.seed;
    if (o.save_params) cfg.store_params = true;
    const Dataset d = load_dataset(o.input, load_schema_opt(o.schema));
    const fs::path dir = prepare_output(o.out);
    RunManifest m{.subcommand = "fit", .config_path = o.config, .seed = cfg.rng_seed};
    m.add_input(o.input);
    if (!o.schema.empty()) m.add_input(o.schema);
    if (!o.config.empty()) m.add_input(o.config);
    m.options = {{"prior", prior_name(o.prior)}, {"save_params", o.save_params}, {"config", config_to_json(cfg)}};

    const ChainOutput c = fit_chain(d, cfg, cfg.rng_seed, o.prior);
    const EffectSummary s = summarize_sate(c.sate, cfg.credible_level, d.outcome_names);
    write_file(dir / "sate_draws.csv", draws_csv(c.sate, "sate_"));
    write_json(dir / "summary.json", summary_to_json(s));
    m.outputs = {"sate_draws.csv", "summary.json"};
    if (o.save_params && !c.params.empty()) {
        write_params(dir / "params", c, d);
        m.outputs.push_back("params/");
    }
    m.write(dir);
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOptions {
    std::string truth;
    std::vector<std::pair<std::string, std::string>> summaries;  // method -> summary.json
    std::string out;
};

inline Vector truth_sate(const nlohmann::json& j) {
    try {
        const auto v = j.at("sate").get<std::vector<double>>();
        return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed truth file: ") + e.what());
    }
}

inline std::string metrics_header() { return "method,outcome,bias,mse,coverage,replicates\n"; }

inline std::string metrics_rows(const std::string& method, const AggregateMetrics& a,
                                const std::vector<std::string>& names) {
    std::string s;
    for (Index k = 0; k < a.bias.size(); ++k)
        s += method + "," + names[static_cast<size_t>(k)] + "," + format_double(a.bias[k]) + "," +
             format_double(a.mse[k]) + "," + format_double(a.coverage[k]) + "," + std::to_string(a.replicates) + "\n";
    return s;
}

inline std::string long_header() { return "replicate,method,outcome,truth,mean,lo,hi,bias,covered\n"; }

inline std::string long_rows(int rep, const std::string& method, const EffectSummary& s, const Vector& truth) {
    std::string out;
    for (Index k = 0; k < s.q(); ++k) {
        const bool cov = s.lower[k] <= truth[k] && truth[k] <= s.upper[k];
        out += std::to_string(rep) + "," + method + "," + s.names[static_cast<size_t>(k)] + "," +
               format_double(truth[k]) + "," + format_double(s.mean[k]) + "," + format_double(s.lower[k]) + "," +
               format_double(s.upper[k]) + "," + format_double(s.mean[k] - truth[k]) + "," + (cov ? "1" : "0") + "\n";
    }
    return out;
}

inline void cmd_evaluate(const EvaluateOptions& o) {
    if (o.summaries.empty()) throw ValidationError("evaluate needs at least one --pair method=summary.json");
    const Vector truth = truth_sate(read_json(o.truth));
    std::vector<std::pair<std::string, EffectSummary>> sums;
    for (const auto& [method, path] : o.summaries) sums.emplace_back(method, summary_from_json(read_json(path)));
    const fs::path dir = prepare_output(o.out);
    RunManifest m{.subcommand = "evaluate"};
    m.add_input(o.truth);
    std::string metrics = metrics_header(), lng = long_header();
    for (const auto& [method, path] : o.summaries) m.add_input(path);
    for (const auto& [method, s] : sums) {
        const AggregateMetrics a = aggregate_metrics({replicate_metrics(s, truth, method)});
        metrics += metrics_rows(method, a, s.names);
        lng += long_rows(0, method, s, truth);
    }
    write_file(dir / "metrics.csv", metrics);
    write_file(dir / "metrics_long.csv", lng);
    m.outputs = {"metrics.csv", "metrics_long.csv"};
    m.write(dir);
}

// ---------------------------------------------------------------------------
// replicate

struct ReplicateOptions {
    int scenario = 1;
    int reps = 20;
    std::uint64_t seed = 1;
    std::string config;
    std::string out;
    int threads = 1;
    bool paper_scale = false;
    std::vector<Prior> priors{Prior::ddp, Prior::standard};
};

struct ReplicateRun {
    SimulatedTruth truth;
    std::vector<EffectSummary> summaries;  // one per prior
};

struct ReplicateStudy {
    std::vector<ReplicateRun> runs;
    std::vector<AggregateMetrics> metrics;  // one per prior
};

// Sampler settings for a scenario: factor truncation follows the scenario
// unless the config file sets it.
inline ModelConfig replicate_config(const std::string& path, const ScenarioSpec& spec) {
    if (path.empty()) {
        ModelConfig cfg;
        cfg.j_max = spec.j;
        return cfg;
    }
    const nlohmann::json j = read_config_json(path);
    ModelConfig cfg = config_from_json(j);
    if (!j.contains("j_max")) cfg.j_max = spec.j;
    return cfg;
}

inline ReplicateStudy run_replicates(const ReplicateOptions& o, const ModelConfig* override_cfg = nullptr) {
    if (o.reps < 1) throw ValidationError("--reps must be >= 1");
    if (o.priors.empty()) throw ValidationError("no priors selected");
    const ScenarioSpec base = scenario_spec(o.scenario, o.seed, o.paper_scale);
    const ModelConfig cfg = override_cfg ? *override_cfg : replicate_config(o.config, base);
    cfg.validate();
    ReplicateStudy study;
    study.runs.resize(static_cast<size_t>(o.reps));
    // Work items: (replicate, prior) pairs so that chains spread over workers.
    const int np = static_cast<int>(o.priors.size());
    for (int r = 0; r < o.reps; ++r) {
        ScenarioSpec spec = base;
        spec.seed = derive_seed(o.seed, {static_cast<std::uint64_t>(r)});
        study.runs[static_cast<size_t>(r)].truth = generate(spec);
        study.runs[static_cast<size_t>(r)].summaries.resize(static_cast<size_t>(np));
    }
    parallel_for(o.reps * np, o.threads, [&](int item) {
        const int r = item / np, k = item % np;
        ReplicateRun& run = study.runs[static_cast<size_t>(r)];
        const std::uint64_t chain_seed = derive_seed(run.truth.spec.seed, {0xF17, static_cast<std::uint64_t>(k)});
        ModelConfig c = cfg;
        c.store_params = false;
        const ChainOutput out = fit_chain(run.truth.data, c, chain_seed, o.priors[static_cast<size_t>(k)]);
        run.summaries[static_cast<size_t>(k)] = summarize_sate(out.sate, cfg.credible_level, run.truth.data.outcome_names);
    });
    for (int k = 0; k < np; ++k) {
        std::vector<ReplicateMetrics> reps;
        for (const auto& run : study.runs)
            reps.push_back(replicate_metrics(run.summaries[static_cast<size_t>(k)], run.truth.sate,
                                             prior_name(o.priors[static_cast<size_t>(k)])));
        study.metrics.push_back(aggregate_metrics(reps));
    }
    return study;
}

inline void cmd_replicate(const ReplicateOptions& o) {
    const ModelConfig cfg = replicate_config(o.config, scenario_spec(o.scenario, o.seed, o.paper_scale));
    const fs::path dir = prepare_output(o.out);
    RunManifest m{.subcommand = "replicate", .config_path = o.config, .seed = o.seed};
    if (!o.config.empty()) m.add_input(o.config);
    m.options = {{"scenario", o.scenario}, {"reps", o.reps}, {"paper_scale", o.paper_scale}};
    const ReplicateStudy study = run_replicates(o, &cfg);
    const auto& names = study.runs.front().truth.data.outcome_names;
    std::string metrics = metrics_header(), lng = long_header();
    for (size_t k = 0; k < o.priors.size(); ++k) metrics += metrics_rows(prior_name(o.priors[k]), study.metrics[k], names);
    for (size_t r = 0; r < study.runs.size(); ++r)
        for (size_t k = 0; k < o.priors.size(); ++k)
            lng += long_rows(static_cast<int>(r), prior_name(o.priors[k]), study.runs[r].summaries[k],
                             study.runs[r].truth.sate);
    write_file(dir / "metrics.csv", metrics);
    write_file(dir / "metrics_long.csv", lng);
    m.outputs = {"metrics.csv", "metrics_long.csv"};
    m.write(dir);
}

}  // namespace cfm
