#pragma once

#include "teleassist/simworld.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace teleassist {

/// The fixed third-person camera shared by the operator and the raster.
struct ViewModel {
    Eigen::Vector3d camera{0.68, 0.0, 0.23};
    Eigen::Vector3d look_at{0.45, 0.0, 0.0};
    double eye_baseline = 0.064;
    double fov = 1.2;  // image width in units of depth (tangent span)
    int height = 32, width = 32;
    double marker_px = 3.0;

    Eigen::Vector3d forward() const { return (look_at - camera).normalized(); }
    Eigen::Vector3d right() const { return forward().cross(Eigen::Vector3d::UnitZ()).normalized(); }
    Eigen::Vector3d up() const { return right().cross(forward()); }
    Eigen::Vector3d eye(int side) const { return camera + side * 0.5 * eye_baseline * right(); }
    /// Direction in which depth is misjudged when looking at p.
    Eigen::Vector3d view_axis(const Eigen::Vector3d& p) const { return (p - camera).normalized(); }
};

struct Projection {
    double u = 0.0, v = 0.0, depth = 0.0;  // pixel column, pixel row, depth along the optical axis
};

inline Projection project(const ViewModel& view, const Eigen::Vector3d& p) {
    const Eigen::Vector3d d = p - view.camera;
    const double z = d.dot(view.forward());
    return {(d.dot(view.right()) / z / view.fov + 0.5) * view.width,
            (0.5 - d.dot(view.up()) / z / view.fov) * view.height, z};
}

/// Flat-shaded raster: background, table top, one disc per cube, the
/// end-effector marker and its drop shadow on the table. HWC, values in [0, 1].
inline std::vector<float> render(const ViewModel& view, const SceneConfig& scene, const std::vector<SceneObject>& objs,
                                 const Eigen::Vector3d& ee) {
    const int H = view.height, W = view.width;
    std::vector<float> img(static_cast<std::size_t>(H) * W * 3, 0.15f);
    auto px = [&](int r, int c) { return &img[(static_cast<std::size_t>(r) * W + c) * 3]; };
    auto set = [&](int r, int c, const Eigen::Vector3f& rgb) {
        float* q = px(r, c);
        q[0] = rgb[0];
        q[1] = rgb[1];
        q[2] = rgb[2];
    };
    const Eigen::Vector3d f = view.forward(), rt = view.right(), up = view.up();
    const Eigen::Vector2d lo = scene.table_center - 0.5 * scene.table_size - Eigen::Vector2d::Constant(0.05);
    const Eigen::Vector2d hi = scene.table_center + 0.5 * scene.table_size + Eigen::Vector2d::Constant(0.05);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            const double dx = ((c + 0.5) / W - 0.5) * view.fov;
            const double dy = (0.5 - (r + 0.5) / H) * view.fov;
            const Eigen::Vector3d ray = f + dx * rt + dy * up;
            if (ray.z() >= 0.0) continue;
            const double t = (scene.table_z - view.camera.z()) / ray.z();
            const Eigen::Vector3d hit = view.camera + t * ray;
            if (t > 0.0 && hit.x() >= lo.x() && hit.x() <= hi.x() && hit.y() >= lo.y() && hit.y() <= hi.y())
                set(r, c, {0.55f, 0.45f, 0.35f});
        }
    auto disc = [&](const Projection& p, double rad, auto&& paint) {
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                const double du = c + 0.5 - p.u, dv = r + 0.5 - p.v;
                if (du * du + dv * dv <= rad * rad) paint(r, c);
            }
    };
    for (const auto& o : objs) {
        const Projection p = project(view, o.position);
        if (p.depth <= 0.0) continue;
        const double rad = 0.6 * o.edge / p.depth / view.fov * W;
        disc(p, rad, [&](int r, int c) { set(r, c, color_rgb(o.color)); });
    }
    const Projection sh = project(view, {ee.x(), ee.y(), scene.table_z});
    if (sh.depth > 0.0)
        disc(sh, view.marker_px, [&](int r, int c) {
            float* q = px(r, c);
            for (int k = 0; k < 3; ++k) q[k] *= 0.3f;
        });
    const Projection m = project(view, ee);
    if (m.depth > 0.0) disc(m, view.marker_px, [&](int r, int c) { set(r, c, {1.0f, 1.0f, 1.0f}); });
    return img;
}

/// Small random rotation of a unit vector: independent N(0, sigma) tilts about
/// two axes orthogonal to it.
inline Eigen::Vector3d perturb_direction(const Eigen::Vector3d& d, double sigma_rad, std::mt19937_64& rng) {
    if (sigma_rad <= 0.0) return d.normalized();
    std::normal_distribution<double> n(0.0, sigma_rad);
    Eigen::Vector3d u = d.cross(Eigen::Vector3d::UnitZ());
    if (u.norm() < 1e-9) u = d.cross(Eigen::Vector3d::UnitX());
    u.normalize();
    const Eigen::Vector3d w = u.cross(d).normalized();
    const double a = n(rng), b = n(rng);
    return (d.normalized() + std::tan(a) * u + std::tan(b) * w).normalized();
}

/// One binocular gaze sample: left origin, left direction, right origin, right direction.
inline std::array<double, 12> gaze_sample(const ViewModel& view, const Eigen::Vector3d& target, double sigma_deg,
                                          std::mt19937_64& rng) {
    std::array<double, 12> row{};
    const double sigma = sigma_deg * std::numbers::pi / 180.0;
    int k = 0;
    for (int side : {-1, 1}) {
        const Eigen::Vector3d o = view.eye(side);
        const Eigen::Vector3d d = perturb_direction(target - o, sigma, rng);
        for (int i = 0; i < 3; ++i) row[k++] = o[i];
        for (int i = 0; i < 3; ++i) row[k++] = d[i];
    }
    return row;
}

/// T rows of gaze samples toward a fixed target, flattened row-major.
inline std::vector<double> gaze_window(const ViewModel& view, const Eigen::Vector3d& target, double sigma_deg, int T,
                                       std::mt19937_64& rng) {
    if (T < 1) throw std::invalid_argument("gaze window needs T >= 1");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(T) * 12);
    for (int t = 0; t < T; ++t) {
        const auto row = gaze_sample(view, target, sigma_deg, rng);
        out.insert(out.end(), row.begin(), row.end());
    }
    return out;
}

}  // namespace teleassist
