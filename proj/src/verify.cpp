#include "timewarp/verify.hpp"

#include <cmath>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

json to_json(const PolicyLogProbs& p) {
    return {{"lw_t", p.lw_t}, {"ll_t", p.ll_t}, {"lw_r", p.lw_r}, {"ll_r", p.ll_r}, {"lambda", p.lambda}};
}

PolicyLogProbs policy_log_probs_from_json(const json& j) {
    try {
        return {j.at("lw_t").get<double>(), j.at("ll_t").get<double>(), j.at("lw_r").get<double>(),
                j.at("ll_r").get<double>(), j.at("lambda").get<double>()};
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("bad log-prob row: ") + e.what());
    }
}

std::vector<PolicyLogProbs> load_policy_batch(const fs::path& path) {
    std::vector<PolicyLogProbs> out;
    for (const auto& row : read_jsonl(path)) out.push_back(policy_log_probs_from_json(row));
    return out;
}

void validate_batch(const std::vector<PolicyLogProbs>& batch) {
    if (batch.empty()) throw InvalidInput("empty batch");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& p = batch[i];
        for (double v : {p.lw_t, p.ll_t, p.lw_r, p.ll_r}) {
            if (!std::isfinite(v) || v > 0.0) {
                throw InvalidInput(fmt::format("example {}: log-probability {} is not finite and <= 0", i, v));
            }
        }
        if (!std::isfinite(p.lambda) || p.lambda <= 0.0) {
            throw InvalidInput(fmt::format("example {}: lambda {} must be > 0", i, p.lambda));
        }
    }
}

double dpo_margin(const PolicyLogProbs& p) { return p.lambda * ((p.lw_t - p.lw_r) - (p.ll_t - p.ll_r)); }

double logistic_loss(double t) {
    if (t > 0.0) return std::log1p(std::exp(-t));
    return -t + std::log1p(std::exp(t));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double dpo_loss(const std::vector<PolicyLogProbs>& batch) {
    validate_batch(batch);
    double sum = 0.0;
    for (const auto& p : batch) sum += logistic_loss(dpo_margin(p));
    return sum / static_cast<double>(batch.size());
}

std::vector<DpoGrad> dpo_grad(const std::vector<PolicyLogProbs>& batch) {
    validate_batch(batch);
    const double n = static_cast<double>(batch.size());
    std::vector<DpoGrad> out;
    out.reserve(batch.size());
    for (const auto& p : batch) {
        // d l(t)/dt = -sigma(-t)
        double g = p.lambda * sigmoid(-dpo_margin(p)) / n;
        out.push_back({-g, g, g, -g});
    }
    return out;
}

json dpo_report(const std::vector<PolicyLogProbs>& batch) {
    double loss = dpo_loss(batch);
    auto grads = dpo_grad(batch);
    json g = json::array();
    json margins = json::array();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        margins.push_back(dpo_margin(batch[i]));
        g.push_back({{"lw_t", grads[i].lw_t}, {"ll_t", grads[i].ll_t}, {"lw_r", grads[i].lw_r}, {"ll_r", grads[i].ll_r}});
    }
    return {{"n", batch.size()}, {"loss", loss}, {"margins", std::move(margins)}, {"grad", std::move(g)}};
}

namespace {

void check_distribution(const std::vector<double>& p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (!std::isfinite(v) || v < 0.0) throw InvalidInput(fmt::format("{} has a negative or non-finite entry", name));
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput(fmt::format("{} sums to {:.12g}, not 1", name, sum));
}

}  // namespace

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw InvalidInput("KL: length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) throw DivergenceInfinite(fmt::format("reference is 0 at {} where policy is {}", i, p[i]));
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

RlhfValue rlhf_objective(const CategoricalToy& toy, double lambda) {
    if (toy.r.empty() || toy.p_theta.size() != toy.r.size() || toy.p_ref.size() != toy.r.size()) {
        throw InvalidInput("rewards and distributions must be non-empty and of equal length");
    }
    if (!std::isfinite(lambda) || lambda < 0.0) throw InvalidInput("lambda must be >= 0");
    check_distribution(toy.p_theta, "p_theta");
    check_distribution(toy.p_ref, "p_ref");
    RlhfValue v;
    for (std::size_t i = 0; i < toy.r.size(); ++i) v.expected_reward += toy.p_theta[i] * toy.r[i];
    v.kl = kl_divergence(toy.p_theta, toy.p_ref);
    v.objective = v.expected_reward - lambda * v.kl;
    return v;
}

std::vector<PolicyLogProbs> random_policy_batch(std::size_t n, std::uint64_t seed, double lambda) {
    Rng rng(derive_seed(seed, "policy_batch"));
    auto draw = [&] { return -0.01 - 7.99 * uniform_unit(rng); };
    std::vector<PolicyLogProbs> out(n);
    for (auto& p : out) {
        p.lw_t = draw();
        p.ll_t = draw();
        p.lw_r = draw();
        p.ll_r = draw();
        p.lambda = lambda;
    }
    return out;
}

}  // namespace timewarp
