#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vrpcp/scene.hpp"

namespace vrpcp {

/// Dense float image, row-major H x W x C.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, int c, float fill = 0.0f)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    bool operator==(const Image&) const = default;
};

/// Maps 8-bit pixels to [-1, 1].
Image to_float_image(std::span<const std::uint8_t> pixels, int height, int width, int channels = 3);

Image resize_bilinear(const Image& src, int out_h, int out_w);

/// Crop rectangle in continuous pixel coordinates (pixel k covers [k, k+1)).
struct CropWindow {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double center_x() const { return 0.5 * (x0 + x1); }
    double center_y() const { return 0.5 * (y0 + y1); }
};

/// Window centered on the box with `scale` times its extents, each extent
/// capped at the frame extent. May reach outside the frame.
CropWindow context_window(const Box& box, double scale, int frame_h, int frame_w);

/// Bilinear resampling of `window` to out_h x out_w; samples falling outside
/// the frame are zero.
Image sample_window(const Image& frame, const CropWindow& window, int out_h, int out_w);

/// Throws DataError for a box with zero height or width.
Image crop_context(const Image& frame, const Box& box, double scale, int out_h, int out_w);

/// Two-channel (horizontal, vertical) normal-flow estimate between frames:
/// temporal difference of the channel-averaged intensity projected on its
/// Sobel gradient. Antisymmetric under swapping the frames.
Image motion_field(const Image& current, const Image& previous);

enum class MotionSource { frame_difference, ground_truth };

struct ClipSpec {
    int n_frames = 16;
    int full_size = 32;   // F stream resolution (square)
    int patch_size = 32;  // C and M stream resolution (square)
    double context_scale = 1.5;
    std::array<int, 2> ttc{30, 60};
    MotionSource motion = MotionSource::frame_difference;
    bool operator==(const ClipSpec&) const = default;
};

std::array<float, 4> normalize_box(const Box& box, FrameSize frame);
Box denormalize_box(const std::array<float, 4>& normalized, FrameSize frame);

struct ClipInputs {
    int n_frames = 0;
    int full_size = 0;
    int patch_size = 0;
    std::vector<float> full;     // N x full x full x 3
    std::vector<float> context;  // N x patch x patch x 3
    std::vector<float> motion;   // (N-1) x patch x patch x 2
    std::vector<float> boxes;    // N x 4, normalized
    int label = 0;
    int obs_end = 0;
    std::optional<int> frames_to_crossing;
    bool operator==(const ClipInputs&) const = default;
};

/// Extracts the four input streams for frames [t_start, t_start + N) of one
/// track. Pixels after the last observed frame are never read. `scenario`
/// is required for ground-truth motion and ignored otherwise.
ClipInputs assemble_clip(const AnnotatedSequence& seq, int t_start, std::size_t track, const ClipSpec& spec,
                         const Scenario* scenario = nullptr);

/// Box-only variant for student-side examples (no pixel streams).
ClipInputs assemble_boxes(const AnnotatedSequence& seq, int t_start, std::size_t track, const ClipSpec& spec);

struct WindowRef {
    std::size_t track = 0;
    int t_start = 0;
    int label = 0;
    bool operator==(const WindowRef&) const = default;
};

/// Sliding observation windows with the given stride, keeping only windows
/// whose prediction horizon fits in the sequence and whose pedestrian has not
/// crossed before the horizon opens.
std::vector<WindowRef> enumerate_windows(const AnnotatedSequence& seq, const ClipSpec& spec, int stride = 8);

}  // namespace vrpcp
