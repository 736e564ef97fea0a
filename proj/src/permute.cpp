#include "timewarp/permute.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "timewarp/errors.hpp"

namespace timewarp {

std::string to_string(PermKind k) { return k == PermKind::Shuffled ? "shuffled" : "reversed"; }

PermKind parse_perm_kind(const std::string& s) {
    if (s == "shuffled") return PermKind::Shuffled;
    if (s == "reversed") return PermKind::Reversed;
    throw SchemaMismatch("unknown permutation kind '" + s + "'");
}

std::string ScenePermutation::id() const { return video_id + ":" + to_string(kind); }

bool is_identity(const std::vector<std::size_t>& pi) {
    for (std::size_t i = 0; i < pi.size(); ++i) {
        if (pi[i] != i) return false;
    }
    return true;
}

bool is_reversal(const std::vector<std::size_t>& pi) {
    const std::size_t n = pi.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (pi[i] != n - 1 - i) return false;
    }
    return true;
}

bool is_permutation(const std::vector<std::size_t>& pi) {
    std::vector<bool> seen(pi.size(), false);
    for (auto v : pi) {
        if (v >= pi.size() || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

std::vector<std::size_t> invert(const std::vector<std::size_t>& pi) {
    std::vector<std::size_t> inv(pi.size());
    for (std::size_t k = 0; k < pi.size(); ++k) inv.at(pi[k]) = k;
    return inv;
}

ScenePermutation make_shuffle(const ClipSpec& clip, std::uint64_t seed) {
    const std::size_t n = clip.scene_count();
    if (n < 3) {
        throw NotShuffleable(fmt::format("{}: {} scene(s); the only non-identity order is the reversal",
                                         clip.video_id, n));
    }
    Rng rng(seed);
    std::vector<std::size_t> pi(n);
    do {
        for (std::size_t i = 0; i < n; ++i) pi[i] = i;
        shuffle_in_place(pi, rng);
    } while (is_identity(pi) || is_reversal(pi));
    return {clip.video_id, PermKind::Shuffled, std::move(pi), seed};
}

ScenePermutation make_reverse(const ClipSpec& clip) {
    const std::size_t n = clip.scene_count();
    if (n < 2) {
        throw NotShuffleable(fmt::format("{}: cannot reverse a clip with {} scene(s)", clip.video_id, n));
    }
    std::vector<std::size_t> pi(n);
    for (std::size_t i = 0; i < n; ++i) pi[i] = n - 1 - i;
    return {clip.video_id, PermKind::Reversed, std::move(pi), 0};
}

NegativePlan plan_negative_set(const std::vector<ClipSpec>& clips, double shuffle_fraction,
                               std::uint64_t seed) {
    if (!(shuffle_fraction >= 0.0 && shuffle_fraction <= 1.0)) {
        throw PreconditionFailed(fmt::format("shuffle_fraction {} outside [0, 1]", shuffle_fraction));
    }
    std::vector<const ClipSpec*> sorted;
    for (const auto& c : clips) sorted.push_back(&c);
    std::sort(sorted.begin(), sorted.end(),
              [](const ClipSpec* a, const ClipSpec* b) { return a->video_id < b->video_id; });

    NegativePlan plan;
    std::vector<const ClipSpec*> shuffleable;
    for (const auto* c : sorted) {
        if (c->scene_count() >= 3) shuffleable.push_back(c);
    }
    const auto n_shuffled = static_cast<std::size_t>(
        std::llround(shuffle_fraction * static_cast<double>(shuffleable.size())));
    Rng pick(derive_seed(seed, "plan_negative_set"));
    std::vector<bool> shuffle_flag(shuffleable.size(), false);
    for (auto i : sample_indices(shuffleable.size(), n_shuffled, pick)) shuffle_flag[i] = true;

    std::size_t si = 0;
    for (const auto* c : sorted) {
        if (c->scene_count() < 2) {
            ++plan.ineligible;
            continue;
        }
        if (c->scene_count() >= 3 && shuffle_flag[si++]) {
            plan.permutations.push_back(make_shuffle(*c, derive_seed(seed, c->video_id)));
            ++plan.shuffled;
        } else {
            plan.permutations.push_back(make_reverse(*c));
            ++plan.reversed;
        }
    }
    return plan;
}

std::vector<std::size_t> permuted_scene_order(const ClipSpec& clip, const ScenePermutation& perm) {
    if (perm.pi.size() != clip.scene_count() || !is_permutation(perm.pi)) {
        throw InvalidOrder(fmt::format("{}: permutation does not match clip with {} scenes",
                                       clip.video_id, clip.scene_count()));
    }
    return apply_permutation(perm.pi, clip.kept_scene_indices);
}

json to_json(const ScenePermutation& p) {
    return {{"video_id", p.video_id}, {"kind", to_string(p.kind)}, {"pi", p.pi}, {"seed", p.seed}};
}

ScenePermutation scene_permutation_from_json(const json& j) {
    try {
        ScenePermutation p;
        p.video_id = j.at("video_id").get<std::string>();
        p.kind = parse_perm_kind(j.at("kind").get<std::string>());
        p.pi = j.at("pi").get<std::vector<std::size_t>>();
        p.seed = j.at("seed").get<std::uint64_t>();
        return p;
    } catch (const json::exception& e) {
        throw SchemaMismatch(std::string("permutation: ") + e.what());
    }
}

}  // namespace timewarp
