#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "timewarp/config.hpp"
#include "timewarp/llmclient.hpp"
#include "timewarp/promptkit.hpp"

namespace timewarp {

struct StageOutcome {
    std::string stage;
    bool skipped = false;  // up to date
    double wall_time_s = 0.0;
    std::string summary;   // human-readable result, printed by the CLI
};

struct StageIo {
    std::vector<fs::path> inputs;   // relative: under out_dir; absolute: external
    std::vector<fs::path> outputs;  // relative to out_dir
    json params;
};

std::shared_ptr<Backend> make_backend(const BackendConfig& config, const PromptLibrary& prompts);

// Runs stages against one output directory and keeps out_dir/manifest.json
// up to date. A stage is skipped when its recorded input digests, output
// digests, parameters and seed all still match.
class Pipeline {
public:
    explicit Pipeline(RunConfig config);

    // Canonical stage order.
    static const std::vector<std::string>& stage_names();
    static bool is_stage(const std::string& name);

    // Throws StageDependencyMissing when an input produced by an earlier
    // stage is absent.
    StageOutcome run(const std::string& stage, bool force = false);
    std::vector<StageOutcome> run_all(bool force = false);

    StageIo io(const std::string& stage) const;
    json manifest() const;
    const RunConfig& config() const { return config_; }
    const PromptLibrary& prompts() const { return prompts_; }

    // Injects backends (tests); otherwise they are built from the config on
    // first use.
    void set_generator(std::shared_ptr<LlmClient> client) { generator_ = std::move(client); }
    void set_subject(std::shared_ptr<LlmClient> client) { subject_ = std::move(client); }

    // Producer stage of an out_dir-relative path, or "" for external inputs.
    std::string producer_of(const fs::path& path) const;

private:
    std::string run_ingest();
    std::string run_trim();
    std::string run_permute();
    std::string run_render();
    std::string run_gen_explicit();
    std::string run_gen_implicit();
    std::string run_to_kto();
    std::string run_merge();
    std::string run_bench_mcqa();
    std::string run_bench_probes();
    std::string run_score_mcqa();
    std::string run_score_group();
    std::string run_grade_probes();
    std::string run_verify_loss();
    std::string run_stats();

    LlmClient& generator();
    LlmClient& subject();
    fs::path out(const fs::path& rel) const { return config_.out_dir / rel; }
    fs::path resolve_input(const fs::path& p) const;
    std::string digest(const fs::path& p) const;
    void load_manifest();
    void save_manifest() const;

    RunConfig config_;
    PromptLibrary prompts_;
    std::string prompt_digest_;
    std::shared_ptr<LlmClient> generator_;
    std::shared_ptr<LlmClient> subject_;
    json stages_ = json::object();  // manifest entries by stage
};

}  // namespace timewarp
