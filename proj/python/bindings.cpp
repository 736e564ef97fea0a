#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "timewarp/config.hpp"
#include "timewarp/datasets.hpp"
#include "timewarp/errors.hpp"
#include "timewarp/eval.hpp"
#include "timewarp/permute.hpp"
#include "timewarp/pipeline.hpp"
#include "timewarp/preprocess.hpp"
#include "timewarp/verify.hpp"

namespace py = pybind11;
using namespace timewarp;

// Structured values cross the boundary as JSON text; the Python side decodes.
namespace {

std::vector<json> rows(const std::string& text) {
    auto j = json::parse(text);
    if (!j.is_array()) throw InvalidInput("expected a JSON array");
    return {j.begin(), j.end()};
}

std::vector<PolicyLogProbs> batch(const std::string& text) {
    std::vector<PolicyLogProbs> out;
    for (const auto& r : rows(text)) out.push_back(policy_log_probs_from_json(r));
    return out;
}

std::string run_stages(const fs::path& config, const std::vector<std::string>& stages,
                       std::optional<fs::path> out_dir, std::optional<std::uint64_t> seed, bool dry_run,
                       bool force) {
    ConfigOverrides o;
    o.out_dir = std::move(out_dir);
    o.seed = seed;
    o.dry_run = dry_run;
    Pipeline p(load_config(config, o));
    json res = json::array();
    auto record = [&](const StageOutcome& s) {
        res.push_back({{"stage", s.stage}, {"skipped", s.skipped}, {"wall_time_s", s.wall_time_s}, {"summary", s.summary}});
    };
    if (stages.empty()) {
        py::gil_scoped_release nogil;
        for (const auto& s : p.run_all(force)) record(s);
    } else {
        py::gil_scoped_release nogil;
        for (const auto& s : stages) record(p.run(s, force));
    }
    return res.dump();
}

}  // namespace

PYBIND11_MODULE(_timewarp, m) {
    m.doc() = "timewarp core bindings";

    static py::exception<Error> exc(m, "TimewarpError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            exc(e.what());
        } catch (const json::exception& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.def("stage_names", &Pipeline::stage_names);
    m.def("run_stages", &run_stages, py::arg("config"), py::arg("stages"), py::arg("out_dir") = py::none(),
          py::arg("seed") = py::none(), py::arg("dry_run") = false, py::arg("force") = false);

    m.def("trim_video", [](const std::string& record, double max_s, std::size_t min_scenes) {
        return to_json(trim_video(video_record_from_json(json::parse(record)), max_s, min_scenes)).dump();
    }, py::arg("record"), py::arg("max_s") = kDefaultMaxClipS, py::arg("min_scenes") = kDefaultMinScenes);

    m.def("make_shuffle", [](std::size_t n, std::uint64_t seed) {
        ClipSpec clip;
        clip.video_id = "py";
        for (std::size_t i = 0; i < n; ++i) clip.kept_scene_indices.push_back(i);
        return make_shuffle(clip, seed).pi;
    }, py::arg("n"), py::arg("seed"));

    m.def("dpo_to_kto", [](const std::string& pairs) {
        std::vector<PreferenceRecord> in;
        for (const auto& r : rows(pairs)) in.push_back(preference_record_from_json(r));
        json out = json::array();
        for (const auto& k : dpo_to_kto(in).records) out.push_back(to_json(k));
        return out.dump();
    });

    m.def("token_similarity", [](const std::string& a, const std::string& b, const std::string& metric) {
        return token_similarity(a, b, parse_similarity_metric(metric));
    }, py::arg("a"), py::arg("b"), py::arg("metric") = "overlap");

    m.def("dpo_loss", [](const std::string& b) { return dpo_loss(batch(b)); });
    m.def("dpo_grad", [](const std::string& b) {
        std::vector<std::array<double, 4>> out;
        for (const auto& g : dpo_grad(batch(b))) out.push_back({g.lw_t, g.ll_t, g.lw_r, g.ll_r});
        return out;
    });

    m.def("score_group", [](const std::vector<std::array<int, 4>>& quads) {
        std::vector<QuadruplePrediction> q;
        for (const auto& a : quads) q.push_back({"", a[0], a[1], a[2], a[3]});
        return to_json(score_group(q)).dump();
    });
    m.def("random_group_baseline", [](std::size_t n, std::uint64_t seed) {
        return to_json(random_group_baseline(n, seed)).dump();
    });
}
