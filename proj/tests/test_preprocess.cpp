#include <gtest/gtest.h>

#include <cmath>

#include "vrpcp/errors.hpp"
#include "vrpcp/preprocess.hpp"
#include "vrpcp/rng.hpp"

using namespace vrpcp;

namespace {

Image constant_image(int h, int w, float v) { return Image(h, w, 3, v); }

Image random_image(int h, int w, std::uint64_t seed) {
    CounterRng rng(seed);
    Image img(h, w, 3);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1, 1));
    return img;
}

AnnotatedSequence small_sequence(std::uint64_t seed, bool crossing = true) {
    ScenarioConfig c;
    c.crossing = crossing;
    c.seed = seed;
    c.frame_size = {48, 48};
    c.sequence_len = ScenarioConfig::default_length(crossing, 120);
    return generate_scenario(c);
}

}  // namespace

TEST(CropContext, WindowArithmeticMatchesIndependentFormula) {
    const Box box{50, 50, 20, 10};
    const auto win = context_window(box, 1.5, 100, 100);
    // Extents 1.5 * (20, 10) = (30, 15), centered at (50, 50).
    EXPECT_DOUBLE_EQ(win.height(), 30.0);
    EXPECT_DOUBLE_EQ(win.width(), 15.0);
    EXPECT_DOUBLE_EQ(win.center_x(), 50.0);
    EXPECT_DOUBLE_EQ(win.center_y(), 50.0);
    EXPECT_DOUBLE_EQ(win.y0, 35.0);
    EXPECT_DOUBLE_EQ(win.x0, 42.5);
}

TEST(CropContext, WholeFrameBoxClampsWithoutPadding) {
    const Image frame = constant_image(40, 40, 0.5f);
    const Box box{20, 20, 40, 40};
    const auto win = context_window(box, 1.5, 40, 40);
    EXPECT_DOUBLE_EQ(win.x0, 0.0);
    EXPECT_DOUBLE_EQ(win.y0, 0.0);
    EXPECT_DOUBLE_EQ(win.width(), 40.0);
    EXPECT_DOUBLE_EQ(win.height(), 40.0);
    const Image patch = crop_context(frame, box, 1.5, 16, 16);
    for (float v : patch.data) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(CropContext, CornerBoxPadsExactlyTheOutOfFrameArea) {
    const Image frame = constant_image(40, 40, 1.0f);
    const Box box{4, 4, 8, 8};  // window [-2, 10) on both axes
    const Image patch = crop_context(frame, box, 1.5, 12, 12);
    // Each output pixel spans one source pixel; the first two rows and
    // columns sample outside the frame.
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 12; ++x) {
            const bool outside = y < 2 || x < 2;
            EXPECT_FLOAT_EQ(patch.at(y, x, 0), outside ? 0.0f : 1.0f) << y << "," << x;
        }
}

TEST(CropContext, DegenerateBoxIsDataError) {
    const Image frame = constant_image(20, 20, 0.0f);
    EXPECT_THROW(crop_context(frame, Box{10, 10, 0, 5}, 1.5, 8, 8), DataError);
    EXPECT_THROW(crop_context(frame, Box{10, 10, 5, 0}, 1.5, 8, 8), DataError);
}

TEST(Resize, IdentityAndConstantPreserving) {
    const Image img = random_image(16, 16, 3);
    EXPECT_EQ(resize_bilinear(img, 16, 16), img);
    const Image c = resize_bilinear(constant_image(17, 23, -0.25f), 32, 32);
    for (float v : c.data) EXPECT_FLOAT_EQ(v, -0.25f);
}

TEST(MotionField, IdenticalFramesGiveZero) {
    const Image a = random_image(24, 24, 1);
    const Image m = motion_field(a, a);
    ASSERT_EQ(m.channels, 2);
    for (float v : m.data) EXPECT_EQ(v, 0.0f);
}

TEST(MotionField, SwappingFramesNegates) {
    const Image a = random_image(24, 24, 1), b = random_image(24, 24, 2);
    const Image ab = motion_field(a, b), ba = motion_field(b, a);
    for (std::size_t i = 0; i < ab.data.size(); ++i) EXPECT_FLOAT_EQ(ab.data[i], -ba.data[i]);
}

TEST(MotionField, HorizontalShiftDominatesHorizontalChannel) {
    // Smooth gradient image shifted right by one pixel.
    auto ramp = [](int shift) {
        Image img(32, 32, 3);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c)
                    img.at(y, x, c) = static_cast<float>(std::sin(0.2 * (x - shift)) * 0.8 + 0.05 * y / 32.0);
        return img;
    };
    const Image m = motion_field(ramp(1), ramp(0));
    double eu = 0, ev = 0, mean_u = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            eu += m.at(y, x, 0) * m.at(y, x, 0);
            ev += m.at(y, x, 1) * m.at(y, x, 1);
            mean_u += m.at(y, x, 0);
        }
    EXPECT_GT(eu, 5.0 * ev);
    EXPECT_GT(mean_u, 0.0);  // rightward motion has positive horizontal component
}

TEST(MotionField, ShapeMismatchIsDataError) {
    EXPECT_THROW(motion_field(Image(8, 8, 3), Image(8, 9, 3)), DataError);
}

TEST(Boxes, NormalizationExample) {
    const auto n = normalize_box(Box{32, 32, 16, 8}, FrameSize{64, 64});
    EXPECT_FLOAT_EQ(n[0], 0.5f);
    EXPECT_FLOAT_EQ(n[1], 0.5f);
    EXPECT_FLOAT_EQ(n[2], 0.25f);
    EXPECT_FLOAT_EQ(n[3], 0.125f);
}

TEST(Boxes, NormalizationRoundTripWithinHalfPixel) {
    CounterRng rng(17);
    const FrameSize f{64, 96};
    for (int i = 0; i < 1000; ++i) {
        const Box b{static_cast<float>(rng.uniform(0, 96)), static_cast<float>(rng.uniform(0, 64)),
                    static_cast<float>(rng.uniform(1, 64)), static_cast<float>(rng.uniform(1, 96))};
        const Box r = denormalize_box(normalize_box(b, f), f);
        EXPECT_NEAR(r.x, b.x, 0.5);
        EXPECT_NEAR(r.y, b.y, 0.5);
        EXPECT_NEAR(r.h, b.h, 0.5);
        EXPECT_NEAR(r.w, b.w, 0.5);
    }
}

TEST(AssembleClip, ShapesAndRanges) {
    const auto seq = small_sequence(4);
    ClipSpec spec;
    const ClipInputs clip = assemble_clip(seq, 10, 0, spec);
    EXPECT_EQ(clip.boxes.size(), 16u * 4u);
    EXPECT_EQ(clip.full.size(), 16u * 32u * 32u * 3u);
    EXPECT_EQ(clip.context.size(), 16u * 32u * 32u * 3u);
    EXPECT_EQ(clip.motion.size(), 15u * 32u * 32u * 2u);
    EXPECT_EQ(clip.obs_end, 25);
    for (float v : clip.boxes) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    for (float v : clip.full) {
        EXPECT_GE(v, -1.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(clip.label, crossing_label(seq.tracks[0], 25, spec.ttc));
}

TEST(AssembleClip, DeterministicBytes) {
    const auto seq = small_sequence(5);
    const ClipSpec spec;
    EXPECT_EQ(assemble_clip(seq, 20, 0, spec), assemble_clip(seq, 20, 0, spec));
}

TEST(AssembleClip, NeverReadsFutureFrames) {
    const auto seq = small_sequence(6);
    const ClipSpec spec;
    const int t_start = 12;
    auto tampered = seq;
    const std::size_t first_future = tampered.frame_bytes() * static_cast<std::size_t>(t_start + spec.n_frames);
    for (std::size_t i = first_future; i < tampered.frames.size(); ++i) tampered.frames[i] ^= 0x5A;
    for (std::size_t i = 0; i < tampered.frame_bytes() * t_start; ++i) tampered.frames[i] ^= 0x33;
    EXPECT_EQ(assemble_clip(seq, t_start, 0, spec), assemble_clip(tampered, t_start, 0, spec));
}

TEST(AssembleClip, ErrorPaths) {
    auto seq = small_sequence(7);
    const ClipSpec spec;
    EXPECT_THROW(assemble_clip(seq, -1, 0, spec), RangeError);
    EXPECT_THROW(assemble_clip(seq, seq.length() - 15, 0, spec), RangeError);
    // Horizon beyond the end of the sequence.
    EXPECT_THROW(assemble_clip(seq, seq.length() - 40, 0, spec), RangeError);
    EXPECT_THROW(assemble_clip(seq, 0, 3, spec), DataError);
    seq.tracks[0].boxes.pop_back();
    EXPECT_THROW(assemble_clip(seq, 0, 0, spec), DataError);
    ClipSpec gt = spec;
    gt.motion = MotionSource::ground_truth;
    EXPECT_THROW(assemble_clip(small_sequence(7), 0, 0, gt), ConfigError);
}

TEST(AssembleClip, GroundTruthMotionSwitch) {
    ScenarioConfig c;
    c.seed = 8;
    c.frame_size = {48, 48};
    c.sequence_len = 120;
    const Scenario sc = simulate_scenario(c);
    const auto seq = generate_scenario(c);
    ClipSpec spec;
    spec.motion = MotionSource::ground_truth;
    const ClipInputs gt = assemble_clip(seq, 30, 0, spec, &sc);
    const ClipInputs fd = assemble_clip(seq, 30, 0, ClipSpec{});
    EXPECT_EQ(gt.motion.size(), fd.motion.size());
    EXPECT_EQ(gt.context, fd.context);
    EXPECT_NE(gt.motion, fd.motion);
}

TEST(Windows, SlidingWindowsRespectHorizonAndExclusion) {
    const ClipSpec spec;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto seq = small_sequence(s);
        const auto windows = enumerate_windows(seq, spec, 8);
        for (const auto& w : windows) {
            const int obs_end = w.t_start + spec.n_frames - 1;
            EXPECT_LT(obs_end + spec.ttc[1], seq.length());
            EXPECT_GT(*seq.tracks[0].crossing_frame, obs_end + spec.ttc[0]);
            EXPECT_EQ(w.label, crossing_label(seq.tracks[0], obs_end, spec.ttc));
            EXPECT_EQ((w.t_start) % 8, 0);
        }
    }
    ScenarioConfig c;
    c.crossing = false;
    c.n_pedestrians = 2;
    c.seed = 1;
    c.frame_size = {48, 48};
    c.sequence_len = 80;
    const auto nc = generate_scenario(c);
    // 80-frame non-crossing sequence: obs_end = 15 is the only window.
    const auto w = enumerate_windows(nc, spec, 8);
    EXPECT_EQ(w.size(), nc.tracks.size());
    for (const auto& x : w) EXPECT_EQ(x.label, 0);
}
