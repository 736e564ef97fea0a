#pragma once

#include <vector>

#include "timewarp/util.hpp"

namespace timewarp {

// Log-probabilities (natural log) of the chosen (w) and rejected (l)
// responses under the policy and the reference model.
struct PolicyLogProbs {
    double lw_t = 0.0;
    double ll_t = 0.0;
    double lw_r = 0.0;
    double ll_r = 0.0;
    double lambda = 1.0;
};

json to_json(const PolicyLogProbs& p);
PolicyLogProbs policy_log_probs_from_json(const json& j);
std::vector<PolicyLogProbs> load_policy_batch(const fs::path& path);

// Throws InvalidInput on an empty batch, a positive or non-finite log-prob,
// or lambda <= 0.
void validate_batch(const std::vector<PolicyLogProbs>& batch);

// lambda * ((lw_t - lw_r) - (ll_t - ll_r))
double dpo_margin(const PolicyLogProbs& p);

// log(1 + exp(-t)) without overflow at large |t|.
double logistic_loss(double t);
double sigmoid(double x);

double dpo_loss(const std::vector<PolicyLogProbs>& batch);

struct DpoGrad {
    double lw_t = 0.0;
    double ll_t = 0.0;
    double lw_r = 0.0;
    double ll_r = 0.0;
};

// Gradient of the mean loss with respect to each example's four log-probs.
std::vector<DpoGrad> dpo_grad(const std::vector<PolicyLogProbs>& batch);

json dpo_report(const std::vector<PolicyLogProbs>& batch);

struct CategoricalToy {
    std::vector<double> r;
    std::vector<double> p_theta;
    std::vector<double> p_ref;
};

struct RlhfValue {
    double objective = 0.0;
    double expected_reward = 0.0;
    double kl = 0.0;
};

// KL(p || q) with 0 log 0 = 0. Throws DivergenceInfinite where q is 0 and p
// is not.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// E_theta[r] - lambda * KL(p_theta || p_ref). Throws InvalidInput when the
// vectors are not distributions of matching length (sum within 1e-9).
RlhfValue rlhf_objective(const CategoricalToy& toy, double lambda);

// Seeded toy batch with log-probs in [-8, -0.01] and the given lambda.
std::vector<PolicyLogProbs> random_policy_batch(std::size_t n, std::uint64_t seed, double lambda = 1.0);

}  // namespace timewarp
