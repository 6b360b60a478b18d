#pragma once

#include "teleassist/intent/network.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace teleassist::intent {

struct SampleMeta {
    std::uint64_t seed = 0;
    std::uint64_t scene_id = 0;
    int target = 0;  // color index of the true target
    bool pseudo_gaze = false;
};

struct IntentSample {
    Inputs inputs;
    Eigen::Vector3d label = Eigen::Vector3d::Zero();
    SampleMeta meta;
};

using Dataset = std::vector<IntentSample>;

/// Rows sorted by (x, y, z) so the network never sees spawn order.
inline std::vector<double> canonical_objects(std::vector<Eigen::Vector3d> objs) {
    std::sort(objs.begin(), objs.end(), [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
        if (a.x() != b.x()) return a.x() < b.x();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.z() < b.z();
    });
    std::vector<double> out;
    out.reserve(objs.size() * 3);
    for (const auto& o : objs) out.insert(out.end(), {o.x(), o.y(), o.z()});
    return out;
}

// --- base64 for the image bytes -------------------------------------------------

inline std::string base64_encode(const std::vector<std::uint8_t>& in) {
    static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const unsigned v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += tbl[(v >> 6) & 63];
        out += tbl[v & 63];
    }
    if (i < in.size()) {
        unsigned v = in[i] << 16;
        if (i + 1 < in.size()) v |= in[i + 1] << 8;
        out += tbl[(v >> 18) & 63];
        out += tbl[(v >> 12) & 63];
        out += i + 1 < in.size() ? tbl[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& s) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    if (s.size() % 4 != 0) throw std::invalid_argument("base64 length");
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 4 * 3);
    for (std::size_t i = 0; i < s.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            if (s[i + k] == '=' && i + 4 == s.size() && k >= 2) {
                v[k] = 0;
                ++pad;
            } else if ((v[k] = val(s[i + k])) < 0) {
                throw std::invalid_argument("base64 character");
            }
        }
        const unsigned x = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back((x >> 16) & 255);
        if (pad < 2) out.push_back((x >> 8) & 255);
        if (pad < 1) out.push_back(x & 255);
    }
    return out;
}

/// Images travel as 8-bit RGB; quantizing here keeps a stored dataset and the
/// in-memory one identical.
inline std::vector<float> quantize_image(const std::vector<float>& img) {
    std::vector<float> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const float v = std::clamp(img[i], 0.0f, 1.0f);
        out[i] = static_cast<float>(static_cast<int>(v * 255.0f + 0.5f)) / 255.0f;
    }
    return out;
}

inline std::string image_to_base64(const std::vector<float>& img) {
    std::vector<std::uint8_t> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
        bytes[i] = static_cast<std::uint8_t>(std::clamp(img[i], 0.0f, 1.0f) * 255.0f + 0.5f);
    return base64_encode(bytes);
}

inline std::vector<float> image_from_base64(const std::string& s) {
    const auto bytes = base64_decode(s);
    std::vector<float> img(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

// --- newline-delimited records ---------------------------------------------------

inline nlohmann::json sample_to_json(const IntentSample& s, int height, int width) {
    nlohmann::json j;
    j["image"] = {{"height", height}, {"width", width}, {"channels", 3}, {"encoding", "base64-u8-hwc"},
                  {"data", image_to_base64(s.inputs.image)}};
    j["pose_window"] = s.inputs.pose;
    j["objects"] = s.inputs.objects;
    j["gaze_window"] = s.inputs.gaze;
    j["label"] = {s.label.x(), s.label.y(), s.label.z()};
    j["meta"] = {{"seed", s.meta.seed}, {"scene_id", s.meta.scene_id}, {"target", s.meta.target},
                 {"pseudo_gaze", s.meta.pseudo_gaze}};
    return j;
}

inline IntentSample sample_from_json(const nlohmann::json& j) {
    IntentSample s;
    s.inputs.image = image_from_base64(j.at("image").at("data").get<std::string>());
    s.inputs.pose = j.at("pose_window").get<std::vector<double>>();
    s.inputs.objects = j.at("objects").get<std::vector<double>>();
    s.inputs.gaze = j.at("gaze_window").get<std::vector<double>>();
    const auto l = j.at("label").get<std::vector<double>>();
    if (l.size() != 3) throw std::invalid_argument("label must have 3 components");
    s.label = {l[0], l[1], l[2]};
    const auto& m = j.at("meta");
    s.meta.seed = m.at("seed").get<std::uint64_t>();
    s.meta.scene_id = m.at("scene_id").get<std::uint64_t>();
    s.meta.target = m.value("target", 0);
    s.meta.pseudo_gaze = m.value("pseudo_gaze", false);
    return s;
}

inline void write_dataset(const std::string& path, const Dataset& ds, int height, int width) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& s : ds) f << sample_to_json(s, height, width).dump() << '\n';
}

inline Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    Dataset ds;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ds.push_back(sample_from_json(nlohmann::json::parse(line)));
    return ds;
}

}  // namespace teleassist::intent
