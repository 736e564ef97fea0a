#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "support.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/pipeline.hpp"

using namespace timewarp;

namespace {

RunConfig fixture_config(const fs::path& out, std::optional<std::uint64_t> seed = std::nullopt) {
    ConfigOverrides o;
    o.out_dir = out;
    o.seed = seed;
    return load_config(twtest::data_dir() / "run.toml", o);
}

std::set<std::string> reran(const std::vector<StageOutcome>& outcomes) {
    std::set<std::string> s;
    for (const auto& o : outcomes)
        if (!o.skipped) s.insert(o.stage);
    return s;
}

// Stages reachable from `stage` through declared inputs/outputs.
std::set<std::string> downstream(const Pipeline& p, const std::string& stage) {
    std::set<std::string> out{stage};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& s : Pipeline::stage_names()) {
            if (out.count(s)) continue;
            for (const auto& in : p.io(s).inputs) {
                if (out.count(p.producer_of(in))) {
                    out.insert(s);
                    grew = true;
                    break;
                }
            }
        }
    }
    return out;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(TIMEWARP_CLI) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("stage list") {
    const auto& names = Pipeline::stage_names();
    CHECK(names.size() == 15);
    CHECK(names.front() == "ingest");
    CHECK(names.back() == "stats");
    CHECK(Pipeline::is_stage("gen-implicit"));
    CHECK_FALSE(Pipeline::is_stage("all"));
}

TEST_CASE("full run, rerun skips, manifest records every stage") {
    twtest::TempDir d;
    Pipeline p(fixture_config(d.path()));
    auto first = p.run_all();
    CHECK(first.size() == 15);
    CHECK(reran(first).size() == 15);
    auto m = p.manifest();
    CHECK(m["seed"] == 7);
    CHECK(m["stages"].size() == 15);
    for (const auto& [name, entry] : m["stages"].items()) {
        CHECK(entry["status"] == "completed");
        CHECK(entry["seed"] == 7);
        for (const auto& [path, digest] : entry["outputs"].items()) CHECK(digest.get<std::string>().size() == 64);
    }
    CHECK(fs::exists(d / "manifest.json"));

    // a fresh process over the same directory sees the saved manifest
    Pipeline again(fixture_config(d.path()));
    CHECK(reran(again.run_all()).empty());
    CHECK(reran(again.run_all(true)).size() == 15);
}

TEST_CASE("a tampered output reruns its producer only") {
    twtest::TempDir d;
    Pipeline p(fixture_config(d.path()));
    p.run_all();
    std::ofstream(d / "kto.jsonl") << "{}\n";
    auto out = p.run_all();
    CHECK(reran(out) == std::set<std::string>{"to-kto"});
    fs::remove(d / "probes.jsonl");
    CHECK(reran(p.run_all()) == std::set<std::string>{"bench-probes"});
}

TEST_CASE("a changed parameter reruns the stage and what reads its outputs") {
    twtest::TempDir d;
    {
        Pipeline p(fixture_config(d.path()));
        p.run_all();
    }
    auto cfg = fixture_config(d.path());
    cfg.shuffle_fraction = 0.9;
    Pipeline p(cfg);
    auto affected = downstream(p, "permute");
    CHECK(affected.count("render"));
    CHECK_FALSE(affected.count("bench-probes"));
    auto got = reran(p.run_all());
    CHECK(got.count("permute"));
    for (const auto& s : got) CHECK(affected.count(s));
    for (const auto& s : {"render", "gen-explicit", "bench-mcqa"}) CHECK(got.count(s));
}

TEST_CASE("a changed seed reruns everything seeded") {
    twtest::TempDir d;
    Pipeline(fixture_config(d.path())).run_all();
    Pipeline p(fixture_config(d.path(), 8));
    CHECK(reran(p.run_all()).size() == 15);
    CHECK(p.manifest()["seed"] == 8);
}

TEST_CASE("missing upstream output") {
    twtest::TempDir d;
    Pipeline p(fixture_config(d.path()));
    CHECK_THROWS_AS(p.run("to-kto"), StageDependencyMissing);
    try {
        p.run("permute");
    } catch (const StageDependencyMissing& e) {
        CHECK(std::string(e.what()).find("trim") != std::string::npos);
    }
    CHECK(p.producer_of("clips.jsonl") == "trim");
    CHECK(p.producer_of("/abs/elsewhere.jsonl") == "");
    p.run("ingest");
    p.run("trim");
    CHECK_NOTHROW(p.run("permute"));
    CHECK_THROWS(p.run("nonsense"));
}

TEST_CASE("two runs produce identical trees") {
    twtest::TempDir a, b;
    Pipeline(fixture_config(a.path())).run_all();
    Pipeline(fixture_config(b.path())).run_all();
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        auto rel = fs::relative(e.path(), a.path());
        REQUIRE(fs::exists(b / rel));
        CHECK_MESSAGE(sha256_file(e.path()) == sha256_file(b / rel), rel.string());
        ++files;
    }
    CHECK(files > 20);
}

TEST_CASE("cli exit codes") {
    twtest::TempDir d;
    auto run_toml = (twtest::data_dir() / "run.toml").string();
    auto out = " --out " + d.path().string();
    CHECK(run_cli("all --config " + run_toml + out) == 0);
    CHECK(run_cli("stats --config " + run_toml + out) == 0);
    CHECK(run_cli("stats --config " + run_toml + out + " --seed 3 --dry-run") == 0);

    CHECK(run_cli("") == 2);
    CHECK(run_cli("all") == 2);
    CHECK(run_cli("all --config " + (d / "nope.toml").string()) == 2);
    CHECK(run_cli("bogus --config " + run_toml) == 2);
    std::ofstream(d / "bad.toml") << "[corpus]\npath = \"" << (twtest::data_dir() / "fixture_corpus.jsonl").string()
                                   << "\"\ncolour = 1\n";
    CHECK(run_cli("all --config " + (d / "bad.toml").string()) == 2);

    twtest::TempDir empty;
    CHECK(run_cli("to-kto --config " + run_toml + " --out " + empty.path().string()) == 3);
}
