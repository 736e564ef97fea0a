#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "timewarp/config.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/pipeline.hpp"

namespace tw = timewarp;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    std::optional<std::string> out;
    bool force = false;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "run configuration (TOML)")->required();
    sub->add_option("--seed", f.seed, "override the configured seed");
    sub->add_flag("--dry-run", f.dry_run, "emit media plans without executing them");
    sub->add_option("--out", f.out, "override the output directory");
    sub->add_flag("--force", f.force, "rerun even when up to date");
}

const std::map<std::string, std::string> kHelp = {
    {"ingest", "load the annotated corpus into canonical form"},
    {"trim", "cut each video to a scene-aligned clip under the duration cap"},
    {"permute", "assign a shuffled or reversed scene order to every clip"},
    {"render", "plan (and unless --dry-run, run) clip renders and frame extraction"},
    {"gen-explicit", "generate QA and explicit preference pairs from permuted narratives"},
    {"gen-implicit", "generate preference pairs from the subject model's own descriptions"},
    {"to-kto", "convert explicit pairs to KTO records"},
    {"merge", "build the preference mixture from its configured parts"},
    {"bench-mcqa", "build the normal/shuffled multiple-choice benchmark"},
    {"bench-probes", "build binary temporal-order probe statements"},
    {"score-mcqa", "score multiple-choice predictions per split"},
    {"score-group", "compute text, video and group scores"},
    {"grade-probes", "grade probe answers and the strictness sweep"},
    {"verify-loss", "check the preference loss and its gradient numerically"},
    {"stats", "write corpus and dataset statistics tables"},
};

void print(const tw::StageOutcome& o) {
    if (o.skipped) {
        fmt::print("[{}] skipped (up-to-date)\n", o.stage);
        return;
    }
    fmt::print("[{}] done in {:.2f}s\n{}\n", o.stage, o.wall_time_s, o.summary);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"timewarp: temporal preference data and evaluation pipeline"};
    app.require_subcommand(1);
    Flags flags;
    for (const auto& st : tw::Pipeline::stage_names()) add_flags(app.add_subcommand(st, kHelp.at(st)), flags);
    add_flags(app.add_subcommand("all", "run every stage in order"), flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    std::string stage = app.get_subcommands().front()->get_name();

    tw::ConfigOverrides ov;
    ov.seed = flags.seed;
    ov.dry_run = flags.dry_run;
    if (flags.out) ov.out_dir = *flags.out;

    try {
        tw::Pipeline pipeline(tw::load_config(flags.config, ov));
        if (stage == "all") {
            for (const auto& st : tw::Pipeline::stage_names()) print(pipeline.run(st, flags.force));
        } else {
            print(pipeline.run(stage, flags.force));
        }
    } catch (const tw::ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const tw::Error& e) {
        fmt::print(stderr, "{}: {}: {}\n", stage, e.kind(), e.what());
        return kExitStage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "{}: {}\n", stage, e.what());
        return kExitStage;
    }
    return 0;
}
