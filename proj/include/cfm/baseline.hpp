#pragma once
// Comparator with independent N(0, 1) priors on every factor score.
//
// This is the main sampler restricted to one cluster with the atom frozen at
// eta = 0, tau = 1 and the mixture blocks switched off.

#include "cfm/gibbs.hpp"

namespace cfm {

inline ModelConfig standard_prior_config(ModelConfig cfg) {
    cfg.l_max = 1;
    cfg.fixed_tau = true;
    return cfg;
}

inline ChainOutput run_chain_standard(const Dataset& data, const ModelConfig& cfg, std::uint64_t seed) {
    return run_chain(data, standard_prior_config(cfg), seed, SweepPlan::standard_prior());
}

inline ChainOutput run_chain_standard(const Dataset& data, const ModelConfig& cfg) {
    return run_chain_standard(data, cfg, cfg.rng_seed);
}

}  // namespace cfm
