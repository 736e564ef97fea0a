// Acceptance run: one PASS/FAIL line per criterion, exit 1 on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>

#include "support.hpp"
#include "timewarp/benchgen.hpp"
#include "timewarp/config.hpp"
#include "timewarp/datasets.hpp"
#include "timewarp/eval.hpp"
#include "timewarp/permute.hpp"
#include "timewarp/pipeline.hpp"
#include "timewarp/preprocess.hpp"
#include "timewarp/verify.hpp"

using namespace timewarp;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
    bool ok = true;
    std::vector<std::string> failures;
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (failures.size() < 5) failures.push_back(what);
        }
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int n_failed = 0;

void report(const char* id, const std::string& title, const std::function<std::string(Check&)>& body) {
    Check c;
    std::string detail;
    try {
        detail = body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.failures.push_back(std::string("exception: ") + e.what());
    }
    fmt::print("{} {} {}{}{}\n", id, c.ok ? "PASS" : "FAIL", title, detail.empty() ? "" : " | ", detail);
    for (const auto& f : c.failures) fmt::print("    {}\n", f);
    if (!c.ok) ++n_failed;
}

PreferenceRecord synthetic_dpo(const std::string& tag, std::size_t i, RecordSource src) {
    PreferenceRecord r;
    r.id = content_id({tag, std::to_string(i)});
    r.video_path = fmt::format("media/{}{:05}.original.mp4", tag, i);
    r.shuffled_video_path = fmt::format("media/{}{:05}.shuffled.mp4", tag, i);
    r.prompt = fmt::format("What happens immediately after event {}?", i);
    r.chosen = fmt::format("event {}", i + 1);
    r.rejected = fmt::format("event {}", i + 2);
    r.source = src;
    r.perm_kind = PermKind::Shuffled;
    return r;
}

std::map<std::string, std::string> tree_digests(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
        out[fs::relative(e.path(), root).string()] = sha256_file(e.path());
    }
    return out;
}

RunConfig fixture_run(const fs::path& out) {
    ConfigOverrides o;
    o.out_dir = out;
    return load_config(twtest::data_dir() / "run.toml", o);
}

}  // namespace

int main() {
    report("AC1", "trimming", [](Check& c) {
        auto t0 = Clock::now();
        Rng rng(derive_seed(1, "ac1"));
        Corpus corpus;
        for (int v = 0; v < 50; ++v) {
            VideoRecord r;
            r.video_id = fmt::format("syn{:02}", v);
            r.media_path = r.video_id + ".mp4";
            auto n = static_cast<std::size_t>(uniform_below(rng, 9));  // 0..8 scenes
            double t = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double len = 3.0 + 67.0 * uniform_unit(rng);
                r.scenes.push_back({i, t, t + len, fmt::format("Scene {} of {}.", i, r.video_id)});
                t += len + 0.5 * uniform_unit(rng);
            }
            r.duration_s = t;
            corpus.records.push_back(std::move(r));
        }
        std::size_t expected_excluded = 0;
        for (const auto& r : corpus.records) expected_excluded += r.scenes.size() < 2;
        auto out = trim_corpus(corpus);
        std::size_t over = 0;
        for (const auto& clip : out.clips) {
            if (clip.over_budget) {
                ++over;
                c.expect(clip.scene_count() == 2, clip.video_id + " over budget with more than 2 scenes");
                continue;
            }
            c.expect(clip.clip_duration_s <= 105.0, fmt::format("{} lasts {}", clip.video_id, clip.clip_duration_s));
            c.expect(clip.scene_count() >= 2, clip.video_id + " has < 2 scenes");
        }
        c.expect(out.excluded.size() == expected_excluded, "excluded count");
        c.expect(out.clips.size() + out.excluded.size() == 50, "every video accounted for");
        c.expect(over == out.over_budget, "over-budget count");
        double dt = seconds_since(t0);
        c.expect(dt < 1.0, "runtime");
        return fmt::format("{} clips, {} excluded, {} over budget, {:.3f}s", out.clips.size(), out.excluded.size(),
                           over, dt);
    });

    report("AC2", "permutations", [](Check& c) {
        std::size_t drawn = 0;
        for (std::size_t n = 3; n <= 6; ++n) {
            ClipSpec clip{"p", {}, 0, 0, false};
            for (std::size_t i = 0; i < n; ++i) clip.kept_scene_indices.push_back(i);
            std::vector<std::string> caps;
            for (std::size_t i = 0; i < n; ++i) caps.push_back("c" + std::to_string(i));
            std::set<std::vector<std::size_t>> seen;
            for (std::uint64_t seed = 0; seed < 3000; ++seed, ++drawn) {
                auto pi = make_shuffle(clip, seed).pi;
                c.expect(is_permutation(pi) && !is_identity(pi) && !is_reversal(pi), "inadmissible shuffle");
                c.expect(apply_permutation(invert(pi), apply_permutation(pi, caps)) == caps, "inverse");
                seen.insert(pi);
            }
            std::size_t fact = 1;
            for (std::size_t k = 2; k <= n; ++k) fact *= k;
            if (n <= 4) c.expect(seen.size() == fact - 2, fmt::format("n={} covers {} orders", n, seen.size()));
            auto rev = make_reverse(clip).pi;
            c.expect(is_reversal(rev) && apply_permutation(rev, apply_permutation(rev, caps)) == caps, "involution");
        }
        twtest::TempDir a, b;
        std::string ha, hb;
        for (auto* d : {&a, &b}) {
            Pipeline p(fixture_run(d->path()));
            for (const auto* s : {"ingest", "trim", "permute", "render"}) p.run(s);
        }
        ha = sha256_file(a / "permutations.jsonl") + sha256_file(a / "media/plans.json");
        hb = sha256_file(b / "permutations.jsonl") + sha256_file(b / "media/plans.json");
        c.expect(ha == hb, "plan files differ between runs");
        return fmt::format("{} shuffles checked, plan hash {}", drawn, sha256_file(a / "media/plans.json").substr(0, 12));
    });

    report("AC3", "kto conversion", [](Check& c) {
        std::vector<PreferenceRecord> pairs;
        for (std::size_t i = 0; i < 7500; ++i) pairs.push_back(synthetic_dpo("k", i, RecordSource::Explicit));
        auto kto = dpo_to_kto(pairs);
        c.expect(kto.records.size() == 30000, fmt::format("{} KTO records", kto.records.size()));
        std::map<std::string, std::set<std::tuple<std::string, std::string, bool>>> per_parent;
        std::map<std::string, const PreferenceRecord*> by_id;
        for (const auto& p : pairs) by_id[p.id] = &p;
        for (const auto& k : kto.records) {
            const auto* p = by_id.at(k.dpo_id);
            std::string which = k.completion == p->chosen ? "chosen" : "rejected";
            per_parent[k.dpo_id].insert({to_string(k.origin), which, k.label});
        }
        const std::set<std::tuple<std::string, std::string, bool>> matrix = {
            {"original", "chosen", true}, {"original", "rejected", false},
            {"shuffled", "rejected", true}, {"shuffled", "chosen", false}};
        std::size_t good = 0;
        for (const auto& [_, m] : per_parent) good += m == matrix;
        c.expect(per_parent.size() == 7500 && good == 7500, fmt::format("{} parents with the exact matrix", good));
        auto s1 = sample_kto(kto.records, 15000, 11);
        auto s2 = sample_kto(kto.records, 15000, 11);
        std::set<std::string> ids;
        for (const auto& r : s1) ids.insert(r.id);
        c.expect(s1.size() == 15000 && ids.size() == 15000, "sample size");
        c.expect(s1 == s2, "sample not deterministic");
        return fmt::format("7500 -> {} -> sample {}", kto.records.size(), s1.size());
    });

    report("AC4", "mixture", [](Check& c) {
        twtest::TempDir d;
        std::vector<json> ext;
        for (std::size_t i = 0; i < 17000; ++i) ext.push_back(to_json(synthetic_dpo("ext", i, RecordSource::External)));
        write_jsonl(d / "external.jsonl", ext);
        std::vector<json> exp_rows, imp_rows;
        for (std::size_t i = 0; i < 7500; ++i) {
            exp_rows.push_back(to_json(synthetic_dpo("exp", i, RecordSource::Explicit)));
            imp_rows.push_back(to_json(synthetic_dpo("imp", i, RecordSource::ImplicitPrompt)));
        }
        auto mixed = merge_mixture({{"external", read_jsonl(d / "external.jsonl"), std::nullopt},
                                    {"explicit", exp_rows, 7500},
                                    {"implicit", imp_rows, 7500}},
                                   5);
        std::set<std::string> ids;
        std::map<std::string, std::size_t> per;
        for (const auto& r : mixed) {
            ids.insert(r["id"].get<std::string>());
            per[r["part"].get<std::string>()]++;
        }
        c.expect(mixed.size() == 32000, fmt::format("{} rows", mixed.size()));
        c.expect(ids.size() == 32000, fmt::format("{} unique ids", ids.size()));
        c.expect(per["external"] == 17000 && per["explicit"] == 7500 && per["implicit"] == 7500, "per-part counts");
        return fmt::format("{} rows, {} unique", mixed.size(), ids.size());
    });

    report("AC5", "group scoring", [](Check& c) {
        auto t0 = Clock::now();
        int text = 0, video = 0, group = 0;
        std::vector<QuadruplePrediction> all;
        for (int bits = 0; bits < 16; ++bits) {
            QuadruplePrediction q{"q", bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1};
            text += text_correct(q, {});
            video += video_correct(q, {});
            group += group_correct(q, {});
            all.push_back(q);
        }
        c.expect(text == 4 && video == 4 && group == 1, fmt::format("enumeration {}/{}/{}", text, video, group));
        auto r = random_group_baseline(100000, 2024);
        c.expect(std::abs(r.text - 25.0) <= 0.5, fmt::format("text {:.3f}", r.text));
        c.expect(std::abs(r.video - 25.0) <= 0.5, fmt::format("video {:.3f}", r.video));
        c.expect(std::abs(r.group - 6.25) <= 0.5, fmt::format("group {:.3f}", r.group));
        double dt = seconds_since(t0);
        c.expect(dt < 5.0, "runtime");
        return fmt::format("random text {:.2f}% video {:.2f}% group {:.2f}% (quoted {:.1f}%, diff {:+.2f}), {:.3f}s",
                           r.text, r.video, r.group, kQuotedRandomGroupScore, r.group - kQuotedRandomGroupScore, dt);
    });

    report("AC6", "order probes", [](Check& c) {
        auto corpus = load_corpus(twtest::data_dir() / "fixture_corpus.jsonl", CorpusFormat::CanonicalJsonl).corpus;
        std::vector<OrderStatement> st;
        std::size_t videos = 0;
        for (const auto& r : corpus.records) {
            if (r.scenes.size() < 7) continue;
            ++videos;
            auto pb = build_order_probes(r, r.media_path, 7);
            std::map<OrderCategory, std::size_t> per;
            std::map<std::string, std::size_t> yes;
            for (const auto& s : pb.statements) {
                per[s.category]++;
                yes[s.pair_id] += s.label;
            }
            for (auto cat : kOrderCategories)
                c.expect(per[cat] == 8, fmt::format("{} {} has {}", r.video_id, to_string(cat), per[cat]));
            for (const auto& [pid, y] : yes) c.expect(y == 2, pid + " yes count");
            st.insert(st.end(), pb.statements.begin(), pb.statements.end());
        }
        c.expect(videos > 0, "no fixture video with >= 7 captions");

        // one video, near: 3/4 + 2/4 (5/8), moderately_far: 4/4 + 0/4 (4/8)
        auto one = build_order_probes(corpus.records.front(), "x", 7).statements;
        std::vector<RawPrediction> preds;
        std::map<std::string, std::size_t> k;
        for (const auto& s : one) {
            std::size_t idx = k[s.pair_id]++;
            bool before = s.subtype == OrderSubtype::Before;
            std::size_t right = s.category == OrderCategory::Near ? (before ? 3 : 2)
                                : s.category == OrderCategory::ModeratelyFar ? (before ? 4 : 0)
                                                                            : 4;
            bool yes = idx < right ? s.label : !s.label;
            preds.push_back({s.id, yes ? "Yes" : "No"});
        }
        auto g = grade_order_probes(one, preds);
        c.expect(g.subcategories.at("near/before").passed == 1, "3/4 should pass");
        c.expect(g.subcategories.at("near/after").passed == 0, "2/4 should fail");
        c.expect(g.categories.at("near").passed == 1, "5/8 should pass");
        c.expect(g.categories.at("moderately_far").passed == 0, "4/8 should fail");

        std::vector<RawPrediction> no;
        for (const auto& s : st) no.push_back({s.id, "No"});
        auto all_no = grade_order_probes(st, no);
        c.expect(all_no.subcategory_overall.passed == 0, "all-No passes a subcategory");
        auto sw = strictness_sweep(st, no);
        c.expect(sw[0].pass_rate == 100.0 && sw[1].pass_rate == 100.0, "all-No fails at k=1 or k=2");
        Rng rng(derive_seed(6, "ac6"));
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<RawPrediction> rp;
            for (const auto& s : st) rp.push_back({s.id, uniform_below(rng, 2) ? "Yes" : "No"});
            auto w = strictness_sweep(st, rp);
            for (std::size_t i = 1; i < w.size(); ++i) c.expect(w[i].pass_rate <= w[i - 1].pass_rate, "sweep not monotone");
        }
        return fmt::format("{} videos, {} statements; all-No sweep k1..4 = {:.0f}/{:.0f}/{:.0f}/{:.0f}", videos,
                           st.size(), sw[0].pass_rate, sw[1].pass_rate, sw[2].pass_rate, sw[3].pass_rate);
    });

    report("AC7", "loss verification", [](Check& c) {
        auto t0 = Clock::now();
        std::vector<PolicyLogProbs> zero;
        for (int i = 0; i < 8; ++i) zero.push_back({-1.0 - i, -2.0 - i, -1.0 - i, -2.0 - i, 0.1 + 0.2 * i});
        double l0 = dpo_loss(zero);
        c.expect(std::abs(l0 - std::log(2.0)) <= 1e-12, fmt::format("zero-margin loss {:.15f}", l0));

        const double h = 1e-5;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            auto batch = random_policy_batch(1 + seed % 9, seed, 0.05 + 0.1 * static_cast<double>(seed % 6));
            auto grad = dpo_grad(batch);
            for (std::size_t i = 0; i < batch.size(); ++i) {
                double* f[4] = {&batch[i].lw_t, &batch[i].ll_t, &batch[i].lw_r, &batch[i].ll_r};
                double an[4] = {grad[i].lw_t, grad[i].ll_t, grad[i].lw_r, grad[i].ll_r};
                for (int k = 0; k < 4; ++k) {
                    double keep = *f[k];
                    *f[k] = keep + h;
                    double up = dpo_loss(batch);
                    *f[k] = keep - h;
                    double down = dpo_loss(batch);
                    *f[k] = keep;
                    double fd = (up - down) / (2 * h);
                    double rel = std::abs(fd - an[k]) / std::max(std::abs(an[k]), 1e-12);
                    worst = std::max(worst, rel);
                }
            }
        }
        c.expect(worst <= 1e-6, fmt::format("worst relative gradient error {:.3e}", worst));

        Rng rng(derive_seed(7, "ac7"));
        auto simplex = [&](std::size_t n) {
            std::vector<double> v(n);
            double s = 0.0;
            for (auto& x : v) s += (x = uniform_unit(rng) + 1e-3);
            for (auto& x : v) x /= s;
            return v;
        };
        double min_kl = 1.0;
        for (int t = 0; t < 1000; ++t) {
            std::size_t n = 2 + static_cast<std::size_t>(uniform_below(rng, 7));
            auto p = simplex(n), q = simplex(n);
            std::vector<double> r(n);
            for (auto& x : r) x = 4.0 * uniform_unit(rng) - 2.0;
            double er = 0.0;
            for (std::size_t i = 0; i < n; ++i) er += p[i] * r[i];
            auto same = rlhf_objective({r, p, p}, 0.3);
            c.expect(same.objective == er && same.kl == 0.0, "p_theta = p_ref should give E[r] exactly");
            double kl = kl_divergence(p, q);
            min_kl = std::min(min_kl, kl);
            c.expect(kl >= 0.0, "negative KL");
        }
        double dt = seconds_since(t0);
        c.expect(dt < 2.0, "runtime");
        return fmt::format("ln2 err {:.1e}, grad rel err {:.2e}, min KL {:.2e}, {:.3f}s", std::abs(l0 - std::log(2.0)),
                           worst, min_kl, dt);
    });

    report("AC8", "end-to-end hermetic run", [](Check& c) {
        twtest::TempDir a, b;
        double times[2];
        int i = 0;
        for (auto* d : {&a, &b}) {
            auto t0 = Clock::now();
            Pipeline p(fixture_run(d->path()));
            auto out = p.run_all();
            times[i++] = seconds_since(t0);
            c.expect(out.size() == 15, "stage count");
            for (const auto& o : out) c.expect(!o.skipped, o.stage + " skipped on a fresh tree");
        }
        c.expect(times[0] < 60.0 && times[1] < 60.0, "runtime");
        auto ta = tree_digests(a.path()), tb = tree_digests(b.path());
        c.expect(ta == tb, "output trees differ");
        std::ifstream in(a / "stats.txt");
        std::string stats((std::istreambuf_iterator<char>(in)), {});
        for (const auto* col : {"Total Videos", "Avg # of clips", "Clip Duration", "QA Pairs", "Shuffled", "Reversed"})
            c.expect(stats.find(col) != std::string::npos, std::string("stats lacks ") + col);
        auto st = read_json(a / "stats.json").at("table");
        auto shuffled = st.at("shuffled").get<std::size_t>(), reversed = st.at("reversed").get<std::size_t>();
        c.expect(shuffled > 0 && reversed > 0, "both negative kinds present");
        c.expect(shuffled + reversed == st.at("total_videos").get<std::size_t>(), "one negative per clip");
        return fmt::format("{} files identical, runs {:.2f}s / {:.2f}s, shuffled {} reversed {}", ta.size(), times[0],
                           times[1], shuffled, reversed);
    });

    report("AC9", "difficulty probe", [](Check& c) {
        auto pair = read_json(twtest::data_dir() / "difficulty_pair.json");
        PreferenceRecord p;
        p.id = "pair";
        p.chosen = pair.at("chosen").get<std::string>();
        p.rejected = pair.at("rejected").get<std::string>();
        auto rep = difficulty_probe({p});
        double s = rep.entries.at(0).similarity;
        c.expect(rep.entries.at(0).hard, fmt::format("similarity {:.4f} not flagged", s));
        c.expect(std::abs(s - 14.0 / 18.0) < 1e-12, "overlap should be 14/18");
        double disjoint = token_similarity("A red kite drifts overhead.", "Two dogs sleep inside");
        c.expect(disjoint == 0.0, "disjoint texts");
        return fmt::format("overlap {:.4f} > {:.1f}, jaccard {:.4f}, disjoint {:.1f}", s, kDefaultHardThreshold,
                           token_similarity(p.chosen, p.rejected, SimilarityMetric::Jaccard), disjoint);
    });

    fmt::print("{} of 9 criteria failed\n", n_failed);
    return n_failed == 0 ? 0 : 1;
}
