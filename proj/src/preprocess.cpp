#include "vrpcp/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "vrpcp/errors.hpp"

namespace vrpcp {

Image to_float_image(std::span<const std::uint8_t> pixels, int height, int width, int channels) {
    if (pixels.size() != static_cast<std::size_t>(height) * width * channels)
        throw DataError("pixel buffer does not match " + std::to_string(height) + "x" + std::to_string(width) + "x" +
                        std::to_string(channels));
    Image img(height, width, channels);
    for (std::size_t i = 0; i < pixels.size(); ++i) img.data[i] = static_cast<float>(pixels[i] / 127.5 - 1.0);
    return img;
}

Image sample_window(const Image& frame, const CropWindow& window, int out_h, int out_w) {
    Image out(out_h, out_w, frame.channels);
    const double sy = window.height() / out_h, sx = window.width() / out_w;
    for (int i = 0; i < out_h; ++i) {
        const double py = window.y0 + (i + 0.5) * sy;
        if (py < 0 || py >= frame.height) continue;
        const double fy = std::clamp(py - 0.5, 0.0, static_cast<double>(frame.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, frame.height - 1);
        const double ay = fy - y0;
        for (int j = 0; j < out_w; ++j) {
            const double px = window.x0 + (j + 0.5) * sx;
            if (px < 0 || px >= frame.width) continue;
            const double fx = std::clamp(px - 0.5, 0.0, static_cast<double>(frame.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, frame.width - 1);
            const double ax = fx - x0;
            for (int c = 0; c < frame.channels; ++c) {
                const double top = (1 - ax) * frame.at(y0, x0, c) + ax * frame.at(y0, x1, c);
                const double bottom = (1 - ax) * frame.at(y1, x0, c) + ax * frame.at(y1, x1, c);
                out.at(i, j, c) = static_cast<float>((1 - ay) * top + ay * bottom);
            }
        }
    }
    return out;
}

Image resize_bilinear(const Image& src, int out_h, int out_w) {
    return sample_window(src, {0, 0, static_cast<double>(src.width), static_cast<double>(src.height)}, out_h, out_w);
}

CropWindow context_window(const Box& box, double scale, int frame_h, int frame_w) {
    const double h = std::min(scale * box.h, static_cast<double>(frame_h));
    const double w = std::min(scale * box.w, static_cast<double>(frame_w));
    return {box.x - w / 2, box.y - h / 2, box.x + w / 2, box.y + h / 2};
}

Image crop_context(const Image& frame, const Box& box, double scale, int out_h, int out_w) {
    if (!(box.h > 0) || !(box.w > 0)) throw DataError("degenerate box (zero height or width)");
    return sample_window(frame, context_window(box, scale, frame.height, frame.width), out_h, out_w);
}

Image motion_field(const Image& current, const Image& previous) {
    if (current.height != previous.height || current.width != previous.width || current.channels != previous.channels)
        throw DataError("motion_field: frame shapes differ");
    const int H = current.height, W = current.width, C = current.channels;
    std::vector<double> mean_gray(static_cast<std::size_t>(H) * W), diff(mean_gray.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double a = 0, b = 0;
            for (int c = 0; c < C; ++c) {
                a += current.at(y, x, c);
                b += previous.at(y, x, c);
            }
            a /= C;
            b /= C;
            mean_gray[static_cast<std::size_t>(y) * W + x] = 0.5 * (a + b);
            diff[static_cast<std::size_t>(y) * W + x] = a - b;
        }
    auto g = [&](int y, int x) {
        return mean_gray[static_cast<std::size_t>(std::clamp(y, 0, H - 1)) * W + std::clamp(x, 0, W - 1)];
    };
    constexpr double eps = 1e-3;
    constexpr double limit = 4.0;
    Image out(H, W, 2);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double gx = (g(y - 1, x + 1) + 2 * g(y, x + 1) + g(y + 1, x + 1) - g(y - 1, x - 1) - 2 * g(y, x - 1) -
                               g(y + 1, x - 1)) / 8.0;
            const double gy = (g(y + 1, x - 1) + 2 * g(y + 1, x) + g(y + 1, x + 1) - g(y - 1, x - 1) - 2 * g(y - 1, x) -
                               g(y - 1, x + 1)) / 8.0;
            const double dt = diff[static_cast<std::size_t>(y) * W + x];
            const double denom = gx * gx + gy * gy + eps;
            out.at(y, x, 0) = static_cast<float>(std::clamp(-dt * gx / denom, -limit, limit));
            out.at(y, x, 1) = static_cast<float>(std::clamp(-dt * gy / denom, -limit, limit));
        }
    return out;
}

std::array<float, 4> normalize_box(const Box& box, FrameSize frame) {
    auto unit = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
    return {unit(box.x / frame.width), unit(box.y / frame.height), unit(box.h / frame.height), unit(box.w / frame.width)};
}

Box denormalize_box(const std::array<float, 4>& n, FrameSize frame) {
    return {n[0] * frame.width, n[1] * frame.height, n[2] * frame.height, n[3] * frame.width};
}

namespace {

void check_window(const AnnotatedSequence& seq, int t_start, std::size_t track, const ClipSpec& spec) {
    if (spec.n_frames < 2) throw ConfigError("clip needs at least 2 frames");
    if (track >= seq.tracks.size()) throw DataError("track index " + std::to_string(track) + " out of range");
    if (seq.tracks[track].boxes.size() != static_cast<std::size_t>(seq.length()))
        throw DataError("track " + std::to_string(track) + " does not cover every frame");
    if (t_start < 0 || t_start + spec.n_frames > seq.length())
        throw RangeError("observation window [" + std::to_string(t_start) + ", " +
                         std::to_string(t_start + spec.n_frames) + ") outside the sequence");
}

void append(std::vector<float>& dst, const Image& img) { dst.insert(dst.end(), img.data.begin(), img.data.end()); }

}  // namespace

ClipInputs assemble_boxes(const AnnotatedSequence& seq, int t_start, std::size_t track, const ClipSpec& spec) {
    check_window(seq, t_start, track, spec);
    const auto& tr = seq.tracks[track];
    ClipInputs clip;
    clip.n_frames = spec.n_frames;
    clip.obs_end = t_start + spec.n_frames - 1;
    clip.label = crossing_label(tr, clip.obs_end, spec.ttc);
    if (tr.crossing_frame) clip.frames_to_crossing = *tr.crossing_frame - clip.obs_end;
    clip.boxes.reserve(static_cast<std::size_t>(spec.n_frames) * 4);
    for (int k = 0; k < spec.n_frames; ++k) {
        const auto b = normalize_box(tr.boxes[static_cast<std::size_t>(t_start + k)], seq.config.frame_size);
        clip.boxes.insert(clip.boxes.end(), b.begin(), b.end());
    }
    return clip;
}

ClipInputs assemble_clip(const AnnotatedSequence& seq, int t_start, std::size_t track, const ClipSpec& spec,
                         const Scenario* scenario) {
    ClipInputs clip = assemble_boxes(seq, t_start, track, spec);
    if (spec.motion == MotionSource::ground_truth && scenario == nullptr)
        throw ConfigError("ground-truth motion needs the simulated scenario");
    const auto& tr = seq.tracks[track];
    const int P = spec.patch_size, N = spec.n_frames;
    clip.full_size = spec.full_size;
    clip.patch_size = P;

    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) frames.push_back(to_float_image(seq.frame(t_start + k), seq.height(), seq.width()));

    for (int k = 0; k < N; ++k) {
        const int t = t_start + k;
        const Box& box = tr.boxes[static_cast<std::size_t>(t)];
        if (!(box.h > 0) || !(box.w > 0)) throw DataError("degenerate box at frame " + std::to_string(t));
        append(clip.full, resize_bilinear(frames[static_cast<std::size_t>(k)], spec.full_size, spec.full_size));
        const CropWindow win = context_window(box, spec.context_scale, seq.height(), seq.width());
        const Image patch = sample_window(frames[static_cast<std::size_t>(k)], win, P, P);
        append(clip.context, patch);
        if (k == 0) continue;
        if (spec.motion == MotionSource::frame_difference) {
            append(clip.motion, motion_field(patch, sample_window(frames[static_cast<std::size_t>(k - 1)], win, P, P)));
        } else {
            const auto flow = render_motion(*scenario, t);
            Image field(seq.height(), seq.width(), 2);
            field.data.assign(flow.begin(), flow.end());
            Image m = sample_window(field, win, P, P);
            const float sx = static_cast<float>(P / win.width()), sy = static_cast<float>(P / win.height());
            for (std::size_t i = 0; i < m.data.size(); i += 2) {
                m.data[i] *= sx;
                m.data[i + 1] *= sy;
            }
            append(clip.motion, m);
        }
    }
    return clip;
}

std::vector<WindowRef> enumerate_windows(const AnnotatedSequence& seq, const ClipSpec& spec, int stride) {
    if (stride < 1) throw ConfigError("window stride must be >= 1");
    std::vector<WindowRef> out;
    for (std::size_t tr = 0; tr < seq.tracks.size(); ++tr) {
        for (int obs_end = spec.n_frames - 1; obs_end + spec.ttc[1] < seq.length(); obs_end += stride) {
            if (!window_is_sampleable(seq.tracks[tr], obs_end, spec.ttc)) continue;
            out.push_back({tr, obs_end - spec.n_frames + 1, crossing_label(seq.tracks[tr], obs_end, spec.ttc)});
        }
    }
    return out;
}

}  // namespace vrpcp
