#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace timewarp {

// Insertion-ordered so serialized records keep their documented field order.
using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- hashing

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

// First 16 hex chars of sha256 over the parts joined by '\x1f'. Used for
// content-addressed record ids.
std::string content_id(std::initializer_list<std::string_view> parts);

// Digest of a file set in `sha256sum` manifest form: sha256 over the lines
// "<sha256(file)>  <relative path>\n" sorted by path. For a single file the
// relative path is its filename.
std::string file_set_digest(const fs::path& root);

// ---------------------------------------------------------------- rng
//
// std::mt19937_64 has a standardized output sequence; the distributions in
// <random> do not, so bounded draws are done here to keep outputs identical
// across standard libraries.

using Rng = std::mt19937_64;

std::uint64_t derive_seed(std::uint64_t base, std::string_view salt);

// Uniform integer in [0, bound). bound must be > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices from [0, n), returned in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng);

// ---------------------------------------------------------------- text

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);

// Aligned text table; rows[0] is the header. First column left-aligned.
std::string render_table(const std::vector<std::vector<std::string>>& rows);

// ---------------------------------------------------------------- workers

// Calls fn(i) for i in [0, n) on up to `workers` threads. Callers write
// results by index so output order never depends on scheduling. The first
// exception thrown by any call is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- jsonl

std::vector<json> read_jsonl(const fs::path& path);
// One compact object per line, LF-terminated.
void write_jsonl(const fs::path& path, const std::vector<json>& rows);
void write_json(const fs::path& path, const json& value);
json read_json(const fs::path& path);
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, std::string_view bytes);

}  // namespace timewarp
