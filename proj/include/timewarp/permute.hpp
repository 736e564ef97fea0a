#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "timewarp/preprocess.hpp"

namespace timewarp {

enum class PermKind { Shuffled, Reversed };

std::string to_string(PermKind k);
PermKind parse_perm_kind(const std::string& s);

// Reorders whole scenes of a clip. `pi[k]` is the source scene index shown at
// output position k.
struct ScenePermutation {
    std::string video_id;
    PermKind kind = PermKind::Reversed;
    std::vector<std::size_t> pi;
    std::uint64_t seed = 0;

    // Stable reference used by benchmark items ("<video_id>:<kind>").
    std::string id() const;
    bool operator==(const ScenePermutation&) const = default;
};

// Uniform over the n! - 2 orders that are neither identity nor reversal.
// Requires at least 3 kept scenes; throws NotShuffleable otherwise.
ScenePermutation make_shuffle(const ClipSpec& clip, std::uint64_t seed);

ScenePermutation make_reverse(const ClipSpec& clip);

struct NegativePlan {
    std::vector<ScenePermutation> permutations;  // sorted by video_id
    std::size_t shuffled = 0;
    std::size_t reversed = 0;
    std::size_t ineligible = 0;  // clips with fewer than 2 scenes
};

// Two-scene clips are always reversed. Of the remaining clips,
// round(shuffle_fraction * m) are shuffled; which ones is a seeded choice.
// Each clip's shuffle uses a seed derived from (seed, video_id).
NegativePlan plan_negative_set(const std::vector<ClipSpec>& clips, double shuffle_fraction,
                               std::uint64_t seed);

bool is_identity(const std::vector<std::size_t>& pi);
bool is_reversal(const std::vector<std::size_t>& pi);
bool is_permutation(const std::vector<std::size_t>& pi);
std::vector<std::size_t> invert(const std::vector<std::size_t>& pi);

// out[k] = items[pi[k]]
template <typename T>
std::vector<T> apply_permutation(const std::vector<std::size_t>& pi, const std::vector<T>& items) {
    std::vector<T> out;
    out.reserve(pi.size());
    for (auto i : pi) out.push_back(items.at(i));
    return out;
}

// Scene indices of the clip in permuted order.
std::vector<std::size_t> permuted_scene_order(const ClipSpec& clip, const ScenePermutation& perm);

json to_json(const ScenePermutation& p);
ScenePermutation scene_permutation_from_json(const json& j);

}  // namespace timewarp
