#pragma once

#include <unistd.h>

#include <atomic>
#include <string>
#include <vector>

#include "timewarp/corpus.hpp"
#include "timewarp/util.hpp"

namespace twtest {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(TIMEWARP_TEST_DATA); }

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "tw") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const fs::path& p) const { return path_ / p; }

private:
    fs::path path_;
};

// A record with one scene per caption, scene i spanning [10 i, 10 i + 8].
inline timewarp::VideoRecord make_record(const std::string& id, const std::vector<std::string>& captions,
                                         double scene_len = 8.0, double stride = 10.0) {
    timewarp::VideoRecord r;
    r.video_id = id;
    r.media_path = "media/" + id + ".mp4";
    for (std::size_t i = 0; i < captions.size(); ++i) {
        timewarp::Scene s;
        s.index = i;
        s.start_s = stride * static_cast<double>(i);
        s.end_s = s.start_s + scene_len;
        s.caption = captions[i];
        r.scenes.push_back(s);
    }
    r.duration_s = r.scenes.empty() ? 0.0 : r.scenes.back().end_s;
    return r;
}

// Scenes ending at the given times, back to back.
inline timewarp::VideoRecord record_with_ends(const std::string& id, const std::vector<double>& ends) {
    timewarp::VideoRecord r;
    r.video_id = id;
    r.media_path = id + ".mp4";
    double t = 0.0;
    for (std::size_t i = 0; i < ends.size(); ++i) {
        r.scenes.push_back({i, t, ends[i], "scene " + std::to_string(i)});
        t = ends[i];
    }
    r.duration_s = t;
    return r;
}

}  // namespace twtest
