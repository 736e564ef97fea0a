#include "timewarp/config.hpp"

#include <set>
#include <sstream>

#include <fmt/format.h>
#include <toml.hpp>

#include "timewarp/errors.hpp"

namespace timewarp {

json BackendConfig::to_json() const {
    return {{"kind", kind == BackendKind::Mock ? "mock" : "http_openai_compatible"},
            {"endpoint", endpoint},
            {"model_id", model_id},
            {"temperature", temperature},
            {"max_tokens", max_tokens}};
}

namespace {

// Strict view over one TOML table: every key must be consumed.
class Section {
public:
    Section(const toml::table* tbl, std::string name) : tbl_(tbl), name_(std::move(name)) {}

    bool present() const { return tbl_ != nullptr; }

    const toml::node* node(const std::string& key) {
        used_.insert(key);
        return tbl_ ? tbl_->get(key) : nullptr;
    }

    template <typename T>
    std::optional<T> get(const std::string& key) {
        const auto* n = node(key);
        if (!n) return std::nullopt;
        if constexpr (std::is_same_v<T, double>) {
            if (auto v = n->value<double>()) return *v;  // accepts integers too
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
            if (n->is_integer()) return n->as_integer()->get();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (n->is_boolean()) return n->as_boolean()->get();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (n->is_string()) return n->as_string()->get();
        }
        throw ConfigError(fmt::format("[{}] {} has the wrong type", name_, key));
    }

    template <typename T>
    void read(const std::string& key, T& dst) {
        if (auto v = get<T>(key)) dst = *v;
    }

    void read_count(const std::string& key, std::size_t& dst) {
        if (auto v = get<std::int64_t>(key)) {
            if (*v < 0) throw ConfigError(fmt::format("[{}] {} must be >= 0", name_, key));
            dst = static_cast<std::size_t>(*v);
        }
    }

    void read_int(const std::string& key, int& dst) {
        if (auto v = get<std::int64_t>(key)) dst = static_cast<int>(*v);
    }

    void finish() const {
        if (!tbl_) return;
        for (auto&& [k, _] : *tbl_) {
            std::string key(k.str());
            if (!used_.count(key)) throw ConfigError(fmt::format("unknown key [{}] {}", name_, key));
        }
    }

    const std::string& name() const { return name_; }

private:
    const toml::table* tbl_;
    std::string name_;
    std::set<std::string> used_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

fs::path existing(const fs::path& base, const std::string& p, const std::string& what) {
    auto path = resolve(base, p);
    if (!fs::exists(path)) throw ConfigError(fmt::format("{} not found: {}", what, path.string()));
    return path;
}

BackendConfig read_backend(Section s, const fs::path& base, BackendConfig b) {
    if (auto kind = s.get<std::string>("kind")) {
        try {
            b.kind = parse_backend_kind(*kind);
        } catch (const Error& e) {
            throw ConfigError(fmt::format("[{}] {}", s.name(), e.what()));
        }
    }
    s.read("endpoint", b.endpoint);
    s.read("model_id", b.model_id);
    s.read("credential_env", b.credential_env);
    s.read_count("max_in_flight", b.max_in_flight);
    s.read_int("max_attempts", b.max_attempts);
    s.read_int("timeout_s", b.timeout_s);
    if (auto c = s.get<std::string>("cache_dir")) b.cache_dir = resolve(base, *c);
    s.read("temperature", b.temperature);
    s.read_int("max_tokens", b.max_tokens);
    s.finish();
    if (b.kind == BackendKind::HttpOpenAiCompatible && b.endpoint.empty()) {
        throw ConfigError(fmt::format("[{}] http backend needs an endpoint", s.name()));
    }
    if (b.max_in_flight == 0) throw ConfigError(fmt::format("[{}] max_in_flight must be >= 1", s.name()));
    if (b.max_attempts < 1) throw ConfigError(fmt::format("[{}] max_attempts must be >= 1", s.name()));
    return b;
}

const toml::table* subtable(const toml::table& root, const std::string& key) {
    const auto* n = root.get(key);
    if (!n) return nullptr;
    if (!n->is_table()) throw ConfigError("[" + key + "] must be a table");
    return n->as_table();
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir, const ConfigOverrides& overrides) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << e;
        throw ConfigError("config syntax error: " + msg.str());
    }
    static const std::set<std::string> sections = {"corpus",  "run",     "preprocess", "permute",
                                                   "media",   "backend", "subject",    "prompts",
                                                   "kto",     "mixture", "eval",       "verify"};
    for (auto&& [k, _] : root) {
        if (!sections.count(std::string(k.str()))) throw ConfigError("unknown section [" + std::string(k.str()) + "]");
    }

    RunConfig c;
    c.base_dir = base_dir;

    Section corpus(subtable(root, "corpus"), "corpus");
    auto corpus_path = corpus.get<std::string>("path");
    if (!corpus_path) throw ConfigError("[corpus] path is required");
    c.corpus_path = existing(base_dir, *corpus_path, "corpus");
    if (auto f = corpus.get<std::string>("format")) {
        try {
            c.corpus_format = parse_corpus_format(*f);
        } catch (const Error& e) {
            throw ConfigError(std::string("[corpus] ") + e.what());
        }
    }
    corpus.read("caption_field", c.ingest.caption_field);
    corpus.read("caption_fallback", c.ingest.caption_fallback);
    corpus.finish();

    Section run(subtable(root, "run"), "run");
    c.out_dir = resolve(base_dir, run.get<std::string>("out_dir").value_or("out"));
    if (auto s = run.get<std::int64_t>("seed")) {
        if (*s < 0) throw ConfigError("[run] seed must be >= 0");
        c.seed = static_cast<std::uint64_t>(*s);
    }
    run.read("dry_run", c.dry_run);
    run.finish();

    Section pre(subtable(root, "preprocess"), "preprocess");
    pre.read("max_s", c.max_s);
    pre.read_count("min_scenes", c.min_scenes);
    pre.finish();
    if (!(c.max_s > 0.0)) throw ConfigError("[preprocess] max_s must be > 0");
    if (c.min_scenes < 2) throw ConfigError("[preprocess] min_scenes must be >= 2");

    Section perm(subtable(root, "permute"), "permute");
    perm.read("shuffle_fraction", c.shuffle_fraction);
    perm.finish();
    if (c.shuffle_fraction < 0.0 || c.shuffle_fraction > 1.0) {
        throw ConfigError("[permute] shuffle_fraction must be within [0, 1]");
    }

    Section media(subtable(root, "media"), "media");
    media.read("toolkit", c.media.toolkit);
    media.read("video_codec", c.media.video_codec);
    media.read("preset", c.media.preset);
    media.read_int("crf", c.media.crf);
    media.read_int("fps", c.media.fps);
    media.read_count("n_frames", c.n_frames);
    media.read_count("workers", c.media_workers);
    media.read("downscale_factor", c.downscale_factor);
    if (const auto* n = media.node("channel_map")) {
        const auto* arr = n->as_array();
        if (!arr || arr->size() != 3) throw ConfigError("[media] channel_map must be an array of 3 integers");
        for (std::size_t i = 0; i < 3; ++i) {
            auto v = arr->get(i)->value<std::int64_t>();
            if (!v) throw ConfigError("[media] channel_map must be an array of 3 integers");
            c.channel_map[i] = static_cast<int>(*v);
        }
    }
    media.read("hue_shift_deg", c.hue_shift_deg);
    media.finish();
    if (c.n_frames == 0) throw ConfigError("[media] n_frames must be >= 1");
    try {
        validate_spec(PerturbationSpec::downscale(c.downscale_factor));
        validate_spec(PerturbationSpec::color_distort(c.channel_map, c.hue_shift_deg));
    } catch (const Error& e) {
        throw ConfigError(std::string("[media] ") + e.what());
    }

    c.generator = read_backend(Section(subtable(root, "backend"), "backend"), base_dir, BackendConfig{});
    {
        // The subject model defaults to the generator's transport settings.
        BackendConfig subject_defaults = c.generator;
        subject_defaults.model_id = c.generator.kind == BackendKind::Mock ? "mock-subject" : c.generator.model_id;
        c.subject = read_backend(Section(subtable(root, "subject"), "subject"), base_dir, subject_defaults);
    }

    Section prompts(subtable(root, "prompts"), "prompts");
    if (auto d = prompts.get<std::string>("dir")) c.prompt_dir = existing(base_dir, *d, "prompt directory");
    prompts.finish();

    Section kto(subtable(root, "kto"), "kto");
    kto.read_count("sample", c.kto_sample);
    kto.finish();

    if (const auto* mix = subtable(root, "mixture")) {
        Section ms(mix, "mixture");
        if (const auto* parts = ms.node("parts")) {
            const auto* arr = parts->as_array();
            if (!arr) throw ConfigError("[mixture] parts must be an array of tables");
            std::set<std::string> names;
            for (std::size_t i = 0; i < arr->size(); ++i) {
                const auto* t = arr->get(i)->as_table();
                if (!t) throw ConfigError("[mixture] parts must be an array of tables");
                Section ps(t, fmt::format("mixture.parts[{}]", i));
                MixturePartConfig p;
                p.source = ps.get<std::string>("source").value_or("file");
                if (p.source != "explicit" && p.source != "implicit" && p.source != "file") {
                    throw ConfigError(fmt::format("[{}] source must be explicit, implicit or file", ps.name()));
                }
                p.name = ps.get<std::string>("name").value_or(p.source);
                if (auto path = ps.get<std::string>("path")) p.path = existing(base_dir, *path, "mixture part");
                if (p.source == "file" && p.path.empty()) {
                    throw ConfigError(fmt::format("[{}] file parts need a path", ps.name()));
                }
                if (const auto* take = ps.node("take")) {
                    if (auto s = take->value<std::string>(); s && *s == "all") {
                    } else if (auto n = take->value<std::int64_t>(); n && *n >= 0) {
                        p.take = static_cast<std::size_t>(*n);
                    } else {
                        throw ConfigError(fmt::format("[{}] take must be a count or \"all\"", ps.name()));
                    }
                }
                ps.finish();
                if (!names.insert(p.name).second) throw ConfigError("duplicate mixture part name '" + p.name + "'");
                c.mixture.push_back(std::move(p));
            }
        }
        ms.finish();
    }
    if (c.mixture.empty()) {
        c.mixture.push_back({"explicit", "explicit", {}, std::nullopt});
        c.mixture.push_back({"implicit", "implicit", {}, std::nullopt});
    }

    Section ev(subtable(root, "eval"), "eval");
    if (auto p = ev.get<std::string>("mcqa_predictions")) c.mcqa_predictions = existing(base_dir, *p, "predictions");
    if (auto p = ev.get<std::string>("group_predictions")) c.group_predictions = existing(base_dir, *p, "predictions");
    if (auto p = ev.get<std::string>("probe_predictions")) c.probe_predictions = existing(base_dir, *p, "predictions");
    ev.read_count("probe_videos", c.probe_videos);
    ev.read_count("probe_min_captions", c.probe_min_captions);
    if (auto m = ev.get<std::string>("similarity")) {
        try {
            c.similarity = parse_similarity_metric(*m);
        } catch (const Error& e) {
            throw ConfigError(std::string("[eval] ") + e.what());
        }
    }
    ev.read("hard_threshold", c.hard_threshold);
    ev.finish();
    if (c.probe_min_captions < 4) throw ConfigError("[eval] probe_min_captions must be >= 4");

    Section ver(subtable(root, "verify"), "verify");
    if (auto p = ver.get<std::string>("batch")) c.verify_batch = existing(base_dir, *p, "verify batch");
    ver.read_count("toy_size", c.verify_toy_size);
    ver.read("lambda", c.verify_lambda);
    ver.finish();
    if (c.verify_toy_size == 0) throw ConfigError("[verify] toy_size must be >= 1");
    if (!(c.verify_lambda > 0.0)) throw ConfigError("[verify] lambda must be > 0");

    if (overrides.seed) c.seed = *overrides.seed;
    if (overrides.dry_run) c.dry_run = true;
    if (overrides.out_dir) c.out_dir = fs::absolute(*overrides.out_dir).lexically_normal();
    c.media.dry_run = c.dry_run;
    return c;
}

RunConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
    if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    auto abs = fs::absolute(path).lexically_normal();
    auto c = parse_config(read_file(abs), abs.parent_path(), overrides);
    c.config_path = abs;
    return c;
}

}  // namespace timewarp
