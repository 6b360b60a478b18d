#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace teleassist::intent {

enum Modality : unsigned { kImage = 1u, kPose = 2u, kObjects = 4u, kGaze = 8u };
constexpr unsigned kAllModalities = kImage | kPose | kObjects | kGaze;

inline const char* modality_name(Modality m) {
    switch (m) {
        case kImage: return "image";
        case kPose: return "pose";
        case kObjects: return "objects";
        case kGaze: return "gaze";
    }
    return "?";
}

struct ShapeMismatch : std::invalid_argument {
    explicit ShapeMismatch(const std::string& what) : std::invalid_argument("shape mismatch: " + what) {}
};

struct NetworkConfig {
    int height = 32, width = 32;
    int window = 3;   // T
    int objects = 4;  // n
    int image_c1 = 8, image_c2 = 16;
    int pose_width = 8;
    int gaze_width = 16;
    int object_hidden = 16, object_width = 8;
    int fusion_width = 64;
    int kernel = 3;  // temporal kernel of the pose and gaze encoders
    bool coord_channels = true;  // append row/column ramps to the image so pooling keeps position

    int image_channels() const { return coord_channels ? 5 : 3; }

    int conv1_h() const { return (height - 1) / 2 + 1; }
    int conv1_w() const { return (width - 1) / 2 + 1; }
    int conv2_h() const { return (conv1_h() - 1) / 2 + 1; }
    int conv2_w() const { return (conv1_w() - 1) / 2 + 1; }
    int temporal_out() const { return window - kernel + 1; }

    int feature_width(unsigned mods) const {
        int w = 0;
        if (mods & kImage) w += image_c2;
        if (mods & kPose) w += pose_width * temporal_out();
        if (mods & kObjects) w += object_width;
        if (mods & kGaze) w += gaze_width * temporal_out();
        return w;
    }
};

/// One network input. Image is row-major H x W x 3 in [0, 1]; the series are
/// row-major T x 3 and T x 12; objects n x 3.
struct Inputs {
    std::vector<float> image;
    std::vector<double> pose;
    std::vector<double> objects;
    std::vector<double> gaze;
};

/// Parameters live in one flat vector; `Layout` records where each block starts.
struct Layout {
    struct Block {
        std::size_t w = 0, b = 0;
        int out = 0, in = 0;  // in = fan-in per output unit
    };
    Block conv1, conv2, pose, gaze, obj1, obj2, fusion, head;
    std::size_t size = 0;
    int feature_width = 0;

    static Layout make(const NetworkConfig& c, unsigned mods) {
        Layout l;
        std::size_t at = 0;
        auto add = [&](Block& blk, int out, int in) {
            blk.out = out;
            blk.in = in;
            blk.w = at;
            at += static_cast<std::size_t>(out) * in;
            blk.b = at;
            at += out;
        };
        if (mods & kImage) {
            add(l.conv1, c.image_c1, c.image_channels() * 9);
            add(l.conv2, c.image_c2, c.image_c1 * 9);
        }
        if (mods & kPose) add(l.pose, c.pose_width, 3 * c.kernel);
        if (mods & kGaze) add(l.gaze, c.gaze_width, 12 * c.kernel);
        if (mods & kObjects) {
            add(l.obj1, c.object_hidden, 3 * c.objects);
            add(l.obj2, c.object_width, c.object_hidden);
        }
        l.feature_width = c.feature_width(mods);
        add(l.fusion, c.fusion_width, l.feature_width);
        add(l.head, 3, c.fusion_width);
        l.size = at;
        return l;
    }
};

/// Four per-modality encoders, concatenation, one rectified fusion layer and a
/// linear 3-vector head. A removed modality has no encoder and no fusion columns.
class Network {
public:
    Network() = default;
    Network(const NetworkConfig& cfg, unsigned mods) : cfg_(cfg), mods_(mods), layout_(Layout::make(cfg, mods)) {
        if (mods == 0 || (mods & ~kAllModalities)) throw std::invalid_argument("bad modality mask");
        if (cfg.window < cfg.kernel) throw std::invalid_argument("window shorter than kernel");
        params_.assign(layout_.size, 0.0);
    }

    const NetworkConfig& config() const { return cfg_; }
    unsigned modalities() const { return mods_; }
    const Layout& layout() const { return layout_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    /// Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
    void init(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::fill(params_.begin(), params_.end(), 0.0);
        auto fill = [&](const Layout::Block& b, int fan_out_mult) {
            if (b.out == 0) return;
            const double lim = std::sqrt(6.0 / (b.in + b.out * fan_out_mult));
            std::uniform_real_distribution<double> u(-lim, lim);
            for (std::size_t i = 0; i < static_cast<std::size_t>(b.out) * b.in; ++i) params_[b.w + i] = u(rng);
        };
        fill(layout_.conv1, 9);
        fill(layout_.conv2, 9);
        fill(layout_.pose, cfg_.kernel);
        fill(layout_.gaze, cfg_.kernel);
        fill(layout_.obj1, 1);
        fill(layout_.obj2, 1);
        fill(layout_.fusion, 1);
        fill(layout_.head, 1);
    }

    void check(const Inputs& x) const {
        const auto t = static_cast<std::size_t>(cfg_.window);
        if ((mods_ & kImage) && x.image.size() != static_cast<std::size_t>(cfg_.height * cfg_.width * 3))
            throw ShapeMismatch("image");
        if ((mods_ & kPose) && x.pose.size() != t * 3) throw ShapeMismatch("pose window");
        if ((mods_ & kObjects) && x.objects.size() != static_cast<std::size_t>(cfg_.objects) * 3)
            throw ShapeMismatch("objects");
        if ((mods_ & kGaze) && x.gaze.size() != t * 12) throw ShapeMismatch("gaze window");
    }

    /// Scratch space for one forward/backward pass.
    struct Cache {
        std::vector<double> img, a1, a2, feat, hidden, obj_h;
        std::vector<double> d_feat, d_hidden, d_a1, d_a2, d_obj_h;
        Eigen::Vector3d out = Eigen::Vector3d::Zero();
    };

    Eigen::Vector3d forward(const Inputs& x, Cache& c) const {
        check(x);
        const double* p = params_.data();
        c.feat.assign(layout_.feature_width, 0.0);
        int f = 0;
        if (mods_ & kImage) {
            const int h = cfg_.height, w = cfg_.width;
            const int cin = cfg_.image_channels();
            c.img.resize(static_cast<std::size_t>(cin) * h * w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    for (int ch = 0; ch < 3; ++ch)
                        c.img[(ch * h + i) * w + j] = x.image[(static_cast<std::size_t>(i) * w + j) * 3 + ch];
                    if (cin == 5) {
                        c.img[(3 * h + i) * w + j] = h > 1 ? 2.0 * i / (h - 1) - 1.0 : 0.0;
                        c.img[(4 * h + i) * w + j] = w > 1 ? 2.0 * j / (w - 1) - 1.0 : 0.0;
                    }
                }
            conv_forward(c.img.data(), cin, h, w, p + layout_.conv1.w, p + layout_.conv1.b, cfg_.image_c1, c.a1);
            conv_forward(c.a1.data(), cfg_.image_c1, cfg_.conv1_h(), cfg_.conv1_w(), p + layout_.conv2.w,
                         p + layout_.conv2.b, cfg_.image_c2, c.a2);
            const int hw = cfg_.conv2_h() * cfg_.conv2_w();
            for (int ch = 0; ch < cfg_.image_c2; ++ch) {
                double s = 0.0;
                for (int k = 0; k < hw; ++k) s += c.a2[ch * hw + k];
                c.feat[f++] = s / hw;
            }
        }
        if (mods_ & kPose) {
            temporal_forward(x.pose.data(), 3, layout_.pose, c.feat.data() + f);
            f += layout_.pose.out * cfg_.temporal_out();
        }
        if (mods_ & kObjects) {
            dense_forward(x.objects.data(), layout_.obj1, true, c.obj_h);
            std::vector<double> tmp;
            dense_forward(c.obj_h.data(), layout_.obj2, true, tmp);
            std::copy(tmp.begin(), tmp.end(), c.feat.begin() + f);
            f += layout_.obj2.out;
        }
        if (mods_ & kGaze) {
            temporal_forward(x.gaze.data(), 12, layout_.gaze, c.feat.data() + f);
            f += layout_.gaze.out * cfg_.temporal_out();
        }
        dense_forward(c.feat.data(), layout_.fusion, true, c.hidden);
        std::vector<double> o;
        dense_forward(c.hidden.data(), layout_.head, false, o);
        c.out = Eigen::Vector3d(o[0], o[1], o[2]);
        return c.out;
    }

    Eigen::Vector3d forward(const Inputs& x) const {
        Cache c;
        return forward(x, c);
    }

    /// Accumulates dL/dparams into `grad` given dL/dout; `c` must hold the
    /// matching forward pass.
    void backward(const Inputs& x, Cache& c, const Eigen::Vector3d& d_out, std::vector<double>& grad) const {
        const double* p = params_.data();
        double* g = grad.data();
        c.d_hidden.assign(layout_.fusion.out, 0.0);
        dense_backward(c.hidden.data(), layout_.head, d_out.data(), c.d_hidden.data(), g);
        for (int i = 0; i < layout_.fusion.out; ++i)
            if (c.hidden[i] <= 0.0) c.d_hidden[i] = 0.0;
        c.d_feat.assign(layout_.feature_width, 0.0);
        dense_backward(c.feat.data(), layout_.fusion, c.d_hidden.data(), c.d_feat.data(), g);
        for (int i = 0; i < layout_.feature_width; ++i)
            if (c.feat[i] <= 0.0) c.d_feat[i] = 0.0;

        int f = 0;
        if (mods_ & kImage) {
            const int h2 = cfg_.conv2_h(), w2 = cfg_.conv2_w(), hw = h2 * w2;
            c.d_a2.assign(c.a2.size(), 0.0);
            for (int ch = 0; ch < cfg_.image_c2; ++ch) {
                const double gv = c.d_feat[f + ch] / hw;
                for (int k = 0; k < hw; ++k)
                    if (c.a2[ch * hw + k] > 0.0) c.d_a2[ch * hw + k] = gv;
            }
            f += cfg_.image_c2;
            c.d_a1.assign(c.a1.size(), 0.0);
            conv_backward(c.a1.data(), cfg_.image_c1, cfg_.conv1_h(), cfg_.conv1_w(), p + layout_.conv2.w,
                          cfg_.image_c2, c.d_a2.data(), g + layout_.conv2.w, g + layout_.conv2.b, c.d_a1.data());
            for (std::size_t k = 0; k < c.a1.size(); ++k)
                if (c.a1[k] <= 0.0) c.d_a1[k] = 0.0;
            conv_backward(c.img.data(), cfg_.image_channels(), cfg_.height, cfg_.width, p + layout_.conv1.w, cfg_.image_c1,
                          c.d_a1.data(), g + layout_.conv1.w, g + layout_.conv1.b, nullptr);
        }
        if (mods_ & kPose) {
            temporal_backward(x.pose.data(), 3, layout_.pose, c.d_feat.data() + f, g);
            f += layout_.pose.out * cfg_.temporal_out();
        }
        if (mods_ & kObjects) {
            c.d_obj_h.assign(layout_.obj1.out, 0.0);
            dense_backward(c.obj_h.data(), layout_.obj2, c.d_feat.data() + f, c.d_obj_h.data(), g);
            for (int i = 0; i < layout_.obj1.out; ++i)
                if (c.obj_h[i] <= 0.0) c.d_obj_h[i] = 0.0;
            dense_backward(x.objects.data(), layout_.obj1, c.d_obj_h.data(), nullptr, g);
            f += layout_.obj2.out;
        }
        if (mods_ & kGaze) {
            temporal_backward(x.gaze.data(), 12, layout_.gaze, c.d_feat.data() + f, g);
            f += layout_.gaze.out * cfg_.temporal_out();
        }
    }

private:
    // 3x3 convolution, stride 2, zero padding 1, rectified output.
    void conv_forward(const double* in, int cin, int h, int w, const double* wt, const double* b, int cout,
                      std::vector<double>& out) const {
        const int ho = (h - 1) / 2 + 1, wo = (w - 1) / 2 + 1;
        out.assign(static_cast<std::size_t>(cout) * ho * wo, 0.0);
        for (int o = 0; o < cout; ++o) {
            double* dst = out.data() + static_cast<std::size_t>(o) * ho * wo;
            for (int k = 0; k < ho * wo; ++k) dst[k] = b[o];
            for (int ci = 0; ci < cin; ++ci) {
                const double* src = in + static_cast<std::size_t>(ci) * h * w;
                const double* kw = wt + (static_cast<std::size_t>(o) * cin + ci) * 9;
                for (int i = 0; i < ho; ++i)
                    for (int ky = 0; ky < 3; ++ky) {
                        const int y = 2 * i + ky - 1;
                        if (y < 0 || y >= h) continue;
                        for (int j = 0; j < wo; ++j) {
                            double s = 0.0;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int xx = 2 * j + kx - 1;
                                if (xx < 0 || xx >= w) continue;
                                s += kw[ky * 3 + kx] * src[y * w + xx];
                            }
                            dst[i * wo + j] += s;
                        }
                    }
            }
            for (int k = 0; k < ho * wo; ++k) dst[k] = std::max(dst[k], 0.0);
        }
    }

    // d_out already masked by the rectifier of this layer.
    void conv_backward(const double* in, int cin, int h, int w, const double* wt, int cout, const double* d_out,
                       double* gw, double* gb, double* d_in) const {
        const int ho = (h - 1) / 2 + 1, wo = (w - 1) / 2 + 1;
        for (int o = 0; o < cout; ++o) {
            const double* dy = d_out + static_cast<std::size_t>(o) * ho * wo;
            double sb = 0.0;
            for (int k = 0; k < ho * wo; ++k) sb += dy[k];
            gb[o] += sb;
            for (int ci = 0; ci < cin; ++ci) {
                const double* src = in + static_cast<std::size_t>(ci) * h * w;
                const double* kw = wt + (static_cast<std::size_t>(o) * cin + ci) * 9;
                double* gk = gw + (static_cast<std::size_t>(o) * cin + ci) * 9;
                double* dx = d_in ? d_in + static_cast<std::size_t>(ci) * h * w : nullptr;
                for (int i = 0; i < ho; ++i)
                    for (int j = 0; j < wo; ++j) {
                        const double d = dy[i * wo + j];
                        if (d == 0.0) continue;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int y = 2 * i + ky - 1;
                            if (y < 0 || y >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int xx = 2 * j + kx - 1;
                                if (xx < 0 || xx >= w) continue;
                                gk[ky * 3 + kx] += d * src[y * w + xx];
                                if (dx) dx[y * w + xx] += d * kw[ky * 3 + kx];
                            }
                        }
                    }
            }
        }
    }

    // Series stored row-major T x ch; kernel slides over T with no padding.
    void temporal_forward(const double* x, int ch, const Layout::Block& blk, double* out) const {
        const double* p = params_.data();
        const int k = cfg_.kernel, to = cfg_.temporal_out();
        for (int o = 0; o < blk.out; ++o)
            for (int t = 0; t < to; ++t) {
                double s = p[blk.b + o];
                const double* wt = p + blk.w + static_cast<std::size_t>(o) * ch * k;
                for (int c = 0; c < ch; ++c)
                    for (int dk = 0; dk < k; ++dk) s += wt[c * k + dk] * x[(t + dk) * ch + c];
                out[o * to + t] = std::max(s, 0.0);
            }
    }

    void temporal_backward(const double* x, int ch, const Layout::Block& blk, const double* d_out, double* g) const {
        const int k = cfg_.kernel, to = cfg_.temporal_out();
        for (int o = 0; o < blk.out; ++o)
            for (int t = 0; t < to; ++t) {
                const double d = d_out[o * to + t];
                if (d == 0.0) continue;
                g[blk.b + o] += d;
                double* gw = g + blk.w + static_cast<std::size_t>(o) * ch * k;
                for (int c = 0; c < ch; ++c)
                    for (int dk = 0; dk < k; ++dk) gw[c * k + dk] += d * x[(t + dk) * ch + c];
            }
    }

    void dense_forward(const double* x, const Layout::Block& blk, bool relu, std::vector<double>& out) const {
        const double* p = params_.data();
        out.assign(blk.out, 0.0);
        for (int o = 0; o < blk.out; ++o) {
            double s = p[blk.b + o];
            const double* wt = p + blk.w + static_cast<std::size_t>(o) * blk.in;
            for (int i = 0; i < blk.in; ++i) s += wt[i] * x[i];
            out[o] = relu ? std::max(s, 0.0) : s;
        }
    }

    void dense_backward(const double* x, const Layout::Block& blk, const double* d_out, double* d_in,
                        double* g) const {
        const double* p = params_.data();
        for (int o = 0; o < blk.out; ++o) {
            const double d = d_out[o];
            if (d == 0.0) continue;
            g[blk.b + o] += d;
            double* gw = g + blk.w + static_cast<std::size_t>(o) * blk.in;
            const double* wt = p + blk.w + static_cast<std::size_t>(o) * blk.in;
            for (int i = 0; i < blk.in; ++i) {
                gw[i] += d * x[i];
                if (d_in) d_in[i] += d * wt[i];
            }
        }
    }

    NetworkConfig cfg_;
    unsigned mods_ = kAllModalities;
    Layout layout_;
    std::vector<double> params_;
};

}  // namespace teleassist::intent
