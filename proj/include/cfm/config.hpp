#pragma once

#include "cfm/errors.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <fstream>
#include <string>

namespace cfm {

// Sampler settings and prior hyperparameters. Per-arm values are indexed by treatment level.
struct ModelConfig {
    std::array<int, 2> j_max{3, 3};  // factor truncation per arm
    int l_max = 10;                  // probit stick-breaking truncation
    int n_iter = 3000;
    int burn_in = 1500;
    int thin = 1;
    std::uint64_t rng_seed = 1;

    // Intercept and regression coefficients (diagonal Gaussian priors).
    double mu_m = 0.0;
    double sigma2_m = 100.0;
    double mu_beta = 0.0;
    double sigma2_beta = 10.0;

    // Multiplicative gamma process.
    std::array<double, 2> nu{3.0, 3.0};
    std::array<double, 2> a1{2.1, 2.1};
    std::array<double, 2> a2{3.1, 3.1};

    // Idiosyncratic variances ~ InvGamma(a_psi, b_psi).
    double a_psi = 1.0;
    double b_psi = 1.0;

    // Mixture atoms: eta ~ N(mu_eta, sigma2_eta); tau ~ Gamma(gamma1, gamma2) unless fixed at 1.
    double mu_eta = 0.0;
    double sigma2_eta = 1.0;
    double gamma1 = 1.0;
    double gamma2 = 1.0;
    bool fixed_tau = true;

    double sigma2_alpha = 1.0;  // stick-breaking coefficient prior variance
    double credible_level = 0.90;

    bool predictive_noise = true;        // add idiosyncratic noise to imputed outcomes
    bool store_counterfactuals = false;  // keep imputed Y^mis per kept draw
    bool store_params = true;            // keep mu, B, Lambda, Psi snapshots
    int param_thin = 1;                  // snapshot every k-th kept draw

    int kept_draws() const { return (n_iter - burn_in) / thin; }

    void validate() const {
        auto fail = [](const std::string& m) { throw ValidationError("invalid configuration: " + m); };
        if (j_max[0] < 1 || j_max[1] < 1) fail("j_max must be >= 1");
        if (l_max < 2) fail("l_max must be >= 2");
        if (n_iter < 1 || burn_in < 0 || thin < 1) fail("n_iter, thin must be positive and burn_in nonnegative");
        if (burn_in >= n_iter) fail("burn_in must be smaller than n_iter");
        if (!(sigma2_m > 0 && sigma2_beta > 0 && sigma2_eta > 0 && sigma2_alpha > 0)) fail("variances must be > 0");
        for (int t = 0; t < 2; ++t)
            if (!(nu[t] > 0 && a1[t] > 0 && a2[t] > 0)) fail("MGP hyperparameters must be > 0");
        if (!(a_psi > 0 && b_psi > 0 && gamma1 > 0 && gamma2 > 0)) fail("gamma hyperparameters must be > 0");
        if (!(credible_level > 0 && credible_level < 1)) fail("credible_level must lie in (0, 1)");
        if (param_thin < 1) fail("param_thin must be >= 1");
    }
};

namespace detail {

template <class T>
void read_pair(const nlohmann::json& j, const char* key, std::array<T, 2>& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.is_array()) {
        if (v.size() != 2) throw ValidationError(std::string("config field '") + key + "' needs two values");
        dst = {v[0].get<T>(), v[1].get<T>()};
    } else {
        dst = {v.get<T>(), v.get<T>()};
    }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& dst) {
    if (j.contains(key)) dst = j.at(key).get<T>();
}

}  // namespace detail

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        detail::read_pair(j, "j_max", c.j_max);
        detail::read(j, "l_max", c.l_max);
        detail::read(j, "n_iter", c.n_iter);
        detail::read(j, "burn_in", c.burn_in);
        detail::read(j, "thin", c.thin);
        detail::read(j, "rng_seed", c.rng_seed);
        detail::read(j, "mu_m", c.mu_m);
        detail::read(j, "sigma2_m", c.sigma2_m);
        detail::read(j, "mu_beta", c.mu_beta);
        detail::read(j, "sigma2_beta", c.sigma2_beta);
        detail::read_pair(j, "nu", c.nu);
        detail::read_pair(j, "a1", c.a1);
        detail::read_pair(j, "a2", c.a2);
        detail::read(j, "a_psi", c.a_psi);
        detail::read(j, "b_psi", c.b_psi);
        detail::read(j, "mu_eta", c.mu_eta);
        detail::read(j, "sigma2_eta", c.sigma2_eta);
        detail::read(j, "gamma1", c.gamma1);
        detail::read(j, "gamma2", c.gamma2);
        detail::read(j, "fixed_tau", c.fixed_tau);
        detail::read(j, "sigma2_alpha", c.sigma2_alpha);
        detail::read(j, "credible_level", c.credible_level);
        detail::read(j, "predictive_noise", c.predictive_noise);
        detail::read(j, "store_counterfactuals", c.store_counterfactuals);
        detail::read(j, "store_params", c.store_params);
        detail::read(j, "param_thin", c.param_thin);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid configuration: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {
        {"j_max", c.j_max},         {"l_max", c.l_max},
        {"n_iter", c.n_iter},       {"burn_in", c.burn_in},
        {"thin", c.thin},           {"rng_seed", c.rng_seed},
        {"mu_m", c.mu_m},           {"sigma2_m", c.sigma2_m},
        {"mu_beta", c.mu_beta},     {"sigma2_beta", c.sigma2_beta},
        {"nu", c.nu},               {"a1", c.a1},
        {"a2", c.a2},               {"a_psi", c.a_psi},
        {"b_psi", c.b_psi},         {"mu_eta", c.mu_eta},
        {"sigma2_eta", c.sigma2_eta}, {"gamma1", c.gamma1},
        {"gamma2", c.gamma2},       {"fixed_tau", c.fixed_tau},
        {"sigma2_alpha", c.sigma2_alpha}, {"credible_level", c.credible_level},
        {"predictive_noise", c.predictive_noise}, {"store_counterfactuals", c.store_counterfactuals},
        {"store_params", c.store_params}, {"param_thin", c.param_thin},
    };
}

inline nlohmann::json read_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config file '" + path + "': " + e.what());
    }
}

inline ModelConfig load_config(const std::string& path) { return config_from_json(read_config_json(path)); }

}  // namespace cfm
