#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "timewarp/corpus.hpp"
#include "timewarp/datasets.hpp"
#include "timewarp/llmclient.hpp"
#include "timewarp/media.hpp"

namespace timewarp {

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;
    std::string model_id = "mock";
    std::string credential_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 4;
    int max_attempts = 4;
    int timeout_s = 60;
    std::optional<fs::path> cache_dir;
    double temperature = 0.0;
    int max_tokens = 1024;

    GenSettings settings() const { return {model_id, temperature, max_tokens}; }
    json to_json() const;
};

// A mixture part is either a pipeline output ("explicit", "implicit") or an
// external DPO JSONL file.
struct MixturePartConfig {
    std::string name;
    std::string source;  // "explicit" | "implicit" | "file"
    fs::path path;       // source == "file"
    std::optional<std::size_t> take;
};

struct RunConfig {
    fs::path config_path;
    fs::path base_dir;  // relative paths in the file resolve against this

    fs::path corpus_path;
    CorpusFormat corpus_format = CorpusFormat::CanonicalJsonl;
    IngestOptions ingest;

    fs::path out_dir;
    std::uint64_t seed = 0;
    bool dry_run = false;

    double max_s = 105.0;
    std::size_t min_scenes = 2;
    double shuffle_fraction = 0.5;

    MediaOptions media;
    std::size_t n_frames = 10;
    std::size_t media_workers = 4;
    double downscale_factor = 0.25;
    std::array<int, 3> channel_map{2, 1, 0};
    double hue_shift_deg = 90.0;

    BackendConfig generator;
    BackendConfig subject;
    std::optional<fs::path> prompt_dir;

    std::size_t kto_sample = 0;  // 0 = keep all
    std::vector<MixturePartConfig> mixture;

    std::optional<fs::path> mcqa_predictions;
    std::optional<fs::path> group_predictions;
    std::optional<fs::path> probe_predictions;
    std::size_t probe_videos = 500;
    std::size_t probe_min_captions = 4;
    SimilarityMetric similarity = SimilarityMetric::Overlap;
    double hard_threshold = kDefaultHardThreshold;

    std::optional<fs::path> verify_batch;
    std::size_t verify_toy_size = 16;
    double verify_lambda = 0.1;
};

// Command-line flags; they win over the file.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    std::optional<fs::path> out_dir;
};

// Throws ConfigError on syntax errors, unknown keys, bad values and paths
// that do not exist.
RunConfig load_config(const fs::path& path, const ConfigOverrides& overrides = {});
RunConfig parse_config(const std::string& text, const fs::path& base_dir, const ConfigOverrides& overrides = {});

}  // namespace timewarp
