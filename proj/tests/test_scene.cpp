#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <fstream>

#include "vrpcp/dataset.hpp"
#include "vrpcp/errors.hpp"
#include "vrpcp/rng.hpp"
#include "vrpcp/scene.hpp"

using namespace vrpcp;
namespace fs = std::filesystem;

namespace {

ScenarioConfig small_config(bool crossing, std::uint64_t seed) {
    ScenarioConfig c;
    c.crossing = crossing;
    c.n_pedestrians = crossing ? 1 : 3;
    c.seed = seed;
    c.frame_size = {32, 32};
    c.sequence_len = ScenarioConfig::default_length(crossing, 40);
    return c;
}

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("vrpcp_test_" + name);
    fs::remove_all(p);
    return p;
}

PedestrianTrack track_crossing_at(std::optional<int> cf, int length = 200) {
    PedestrianTrack t;
    t.boxes.resize(static_cast<std::size_t>(length));
    t.crossing = cf.has_value();
    t.crossing_frame = cf;
    return t;
}

bool box_on_road(const Scenario& sc, const PedestrianTrack& tr, int t) {
    const Box& b = tr.boxes[static_cast<std::size_t>(t)];
    return sc.geometry.on_road(t, b.x, b.y + b.h / 2);
}

}  // namespace

TEST(Scenario, SameConfigGivesIdenticalBytes) {
    for (bool crossing : {true, false}) {
        const auto cfg = small_config(crossing, 42);
        const auto a = generate_scenario(cfg);
        const auto b = generate_scenario(cfg);
        EXPECT_EQ(a, b);
        EXPECT_EQ(encode_blob(a), encode_blob(b));
    }
    EXPECT_NE(generate_scenario(small_config(true, 1)).frames, generate_scenario(small_config(true, 2)).frames);
}

TEST(Scenario, CrossingHasExactlyOneCrossingTrack) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto seq = generate_scenario(small_config(true, s));
        ASSERT_EQ(seq.tracks.size(), 1u);
        EXPECT_TRUE(seq.tracks[0].crossing);
        ASSERT_TRUE(seq.tracks[0].crossing_frame.has_value());
        EXPECT_GE(*seq.tracks[0].crossing_frame, 0);
        EXPECT_LT(*seq.tracks[0].crossing_frame, seq.length());
    }
}

TEST(Scenario, SequenceShapeAndVisibilityInvariants) {
    for (std::uint64_t s = 0; s < 40; ++s) {
        for (bool crossing : {true, false}) {
            auto cfg = small_config(crossing, s);
            cfg.n_pedestrians = crossing ? 1 : 1 + static_cast<int>(s % 3);
            const auto seq = generate_scenario(cfg);
            EXPECT_EQ(seq.frames.size(), seq.frame_bytes() * static_cast<std::size_t>(cfg.sequence_len));
            EXPECT_EQ(seq.tracks.size(), static_cast<std::size_t>(cfg.n_pedestrians));
            for (const auto& tr : seq.tracks) {
                ASSERT_EQ(tr.boxes.size(), static_cast<std::size_t>(cfg.sequence_len));
                EXPECT_EQ(tr.crossing, crossing);
                for (const auto& b : tr.boxes) {
                    EXPECT_GT(b.h, 0);
                    EXPECT_GT(b.w, 0);
                    EXPECT_GT(b.x + b.w / 2, 0);
                    EXPECT_LT(b.x - b.w / 2, 32);
                    EXPECT_GT(b.y + b.h / 2, 0);
                    EXPECT_LT(b.y - b.h / 2, 32);
                }
            }
        }
    }
}

TEST(Scenario, ConfigValidation) {
    auto c = small_config(true, 0);
    c.n_pedestrians = 2;
    EXPECT_THROW(generate_scenario(c), ConfigError);
    c = small_config(false, 0);
    c.n_pedestrians = 4;
    EXPECT_THROW(generate_scenario(c), ConfigError);
    c.n_pedestrians = 0;
    EXPECT_THROW(generate_scenario(c), ConfigError);
    c = small_config(true, 0);
    c.sequence_len = 41;
    EXPECT_THROW(generate_scenario(c), ConfigError);
    c = small_config(true, 0);
    c.frame_size = {8, 8};
    EXPECT_THROW(generate_scenario(c), ConfigError);
    EXPECT_EQ(ScenarioConfig::default_length(true), 200);
    EXPECT_EQ(ScenarioConfig::default_length(false), 100);
}

TEST(Scenario, EnumStringsRoundTrip) {
    for (auto w : {Weather::sunny, Weather::evening, Weather::night, Weather::rainy})
        EXPECT_EQ(parse_weather(to_string(w)), w);
    for (auto d : {Domain::virtual_, Domain::proxy_real}) EXPECT_EQ(parse_domain(to_string(d)), d);
    for (auto o : {Occasion::intersection, Occasion::main_road}) EXPECT_EQ(parse_occasion(to_string(o)), o);
    EXPECT_THROW(parse_domain("carla"), ConfigError);
}

TEST(Scenario, BoxHeightAuditOverThousandCrossingScenarios) {
    ExportConfig ec;
    ec.n_crossing = 1000;
    ec.n_noncrossing = 1;
    ec.base_seed = 2024;
    const int H = ec.frame_size.height;
    std::vector<long> hist(static_cast<std::size_t>(H / 4 + 1), 0);
    double lo = 1e9, hi = 0;
    long n = 0;
    for (int i = 0; i < ec.n_crossing; ++i) {
        const auto sc = simulate_scenario(scenario_for(ec, i));
        for (const auto& b : sc.tracks[0].boxes) {
            lo = std::min(lo, static_cast<double>(b.h));
            hi = std::max(hi, static_cast<double>(b.h));
            hist[std::min(hist.size() - 1, static_cast<std::size_t>(b.h / 4))]++;
            ++n;
        }
    }
    EXPECT_LE(lo, 8.0);
    EXPECT_GE(hi, H / 2.0);
    // Most boxes are small: the bins below H/4 hold the bulk of the mass, and
    // the histogram decays past its mode.
    long small = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(H / 16); ++k) small += hist[k];
    EXPECT_GT(static_cast<double>(small) / static_cast<double>(n), 0.8);
    const auto mode = static_cast<std::size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
    EXPECT_LT(mode, static_cast<std::size_t>(H / 16));
    for (std::size_t k = mode + 1; k + 1 < hist.size() / 2; ++k) EXPECT_GE(hist[k], hist[k + 1]) << "bin " << k;
}

TEST(CrossingLabel, WindowExamples) {
    const std::array<int, 2> ttc{30, 60};
    EXPECT_EQ(crossing_label(track_crossing_at(100 + 45), 100, ttc), 1);
    EXPECT_EQ(crossing_label(track_crossing_at(std::nullopt), 100, ttc), 0);
    EXPECT_EQ(crossing_label(track_crossing_at(100 + 10), 100, ttc), 0);
    EXPECT_FALSE(window_is_sampleable(track_crossing_at(100 + 10), 100, ttc));
    EXPECT_TRUE(window_is_sampleable(track_crossing_at(100 + 45), 100, ttc));
    EXPECT_TRUE(window_is_sampleable(track_crossing_at(std::nullopt), 100, ttc));
}

TEST(CrossingLabel, EnumeratedBoundaryCases) {
    // Independent restatement: offset d = cf - obs_end is positive iff
    // 30 < d <= 60; windows with d <= 30 are not sampled.
    const std::array<int, 2> ttc{30, 60};
    const int obs_end = 50;
    for (int cf = 0; cf < 200; ++cf) {
        const int d = cf - obs_end;
        const int expected = (d >= 31 && d <= 60) ? 1 : 0;
        EXPECT_EQ(crossing_label(track_crossing_at(cf), obs_end, ttc), expected) << "cf=" << cf;
        EXPECT_EQ(window_is_sampleable(track_crossing_at(cf), obs_end, ttc), d >= 31) << "cf=" << cf;
    }
}

TEST(CrossingLabel, WindowPastSequenceEndIsRangeError) {
    const std::array<int, 2> ttc{30, 60};
    EXPECT_NO_THROW(crossing_label(track_crossing_at(150), 139, ttc));
    EXPECT_THROW(crossing_label(track_crossing_at(150), 140, ttc), RangeError);
    EXPECT_THROW(crossing_label(track_crossing_at(150), -1, ttc), RangeError);
    EXPECT_THROW(crossing_label(track_crossing_at(150), 10, {60, 30}), RangeError);
}

TEST(Scenario, LabelSoundnessByReplay) {
    ExportConfig ec;
    ec.n_crossing = 200;
    ec.n_noncrossing = 200;
    ec.base_seed = 99;
    for (int i = 0; i < ec.n_crossing + ec.n_noncrossing; ++i) {
        const auto cfg = scenario_for(ec, i);
        const auto sc = simulate_scenario(cfg);
        for (const auto& tr : sc.tracks) {
            if (tr.crossing) {
                const int cf = *tr.crossing_frame;
                ASSERT_GE(cf, 1);
                EXPECT_FALSE(box_on_road(sc, tr, cf - 1)) << "seq " << i;
                EXPECT_TRUE(box_on_road(sc, tr, cf)) << "seq " << i;
                for (int t = 0; t < cf; ++t) EXPECT_FALSE(box_on_road(sc, tr, t)) << "seq " << i << " t " << t;
            } else {
                for (int t = 0; t < cfg.sequence_len; ++t) EXPECT_FALSE(box_on_road(sc, tr, t)) << "seq " << i;
            }
        }
    }
}

TEST(Scenario, GroundTruthMotionMatchesBoxDisplacement) {
    const auto cfg = small_config(true, 5);
    const auto sc = simulate_scenario(cfg);
    const auto zero = render_motion(sc, 0);
    EXPECT_TRUE(std::all_of(zero.begin(), zero.end(), [](float v) { return v == 0.0f; }));
    const int t = 20;
    const auto flow = render_motion(sc, t);
    ASSERT_EQ(flow.size(), 32u * 32u * 2u);
    const Box& b = sc.tracks[0].boxes[t];
    const Box& p = sc.tracks[0].boxes[t - 1];
    const int cx = std::clamp(static_cast<int>(b.x), 0, 31), cy = std::clamp(static_cast<int>(b.y), 0, 31);
    EXPECT_FLOAT_EQ(flow[(static_cast<std::size_t>(cy) * 32 + cx) * 2], b.x - p.x);
}

TEST(Dataset, DefaultClassShareAtDeskScale) {
    ExportConfig ec;
    EXPECT_EQ(ec.n_crossing, 300);
    EXPECT_EQ(ec.n_noncrossing, 190);
    const double share = 300.0 / 490.0;
    EXPECT_NEAR(share, 0.6122, 5e-5);
    EXPECT_NEAR(share, 2862.0 / 4666.0, 0.01);
}

TEST(Dataset, ExportWritesManifestAndBlobs) {
    ExportConfig ec;
    ec.n_crossing = 6;
    ec.n_noncrossing = 4;
    ec.frame_size = {16, 16};
    ec.crossing_length = 32;
    ec.base_seed = 7;
    const auto dir = temp_dir("export");
    const Manifest m = export_dataset(dir, ec);
    ASSERT_EQ(m.entries.size(), 10u);
    EXPECT_NEAR(m.crossing_share(), 0.6, 1e-12);
    const Manifest back = read_manifest(dir);
    EXPECT_EQ(back.entries, m.entries);
    EXPECT_EQ(back.hash(), m.hash());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto seq = load_sequence(dir, back, i);
        const auto fresh = generate_scenario(scenario_for(ec, static_cast<int>(i)));
        EXPECT_EQ(seq.frames, fresh.frames);
        EXPECT_EQ(seq.tracks, fresh.tracks);
        EXPECT_EQ(seq.config.sequence_len, m.entries[i].label ? 32 : 16);
    }
    fs::remove_all(dir);
}

TEST(Dataset, ReexportGivesIdenticalManifestHash) {
    ExportConfig ec;
    ec.n_crossing = 3;
    ec.n_noncrossing = 2;
    ec.frame_size = {16, 16};
    ec.crossing_length = 32;
    ec.base_seed = 11;
    const auto a = export_dataset(temp_dir("hash_a"), ec);
    const auto b = export_dataset(temp_dir("hash_b"), ec);
    EXPECT_EQ(a.hash(), b.hash());
    ec.base_seed = 12;
    EXPECT_NE(export_dataset(temp_dir("hash_c"), ec).hash(), a.hash());
    for (auto n : {"hash_a", "hash_b", "hash_c"}) fs::remove_all(temp_dir(n));
}

TEST(Dataset, DegenerateCountsAndBadPaths) {
    ExportConfig ec;
    ec.n_crossing = 0;
    EXPECT_THROW(export_dataset(temp_dir("degenerate"), ec), ConfigError);
    ec.n_crossing = 1;
    ec.n_noncrossing = 0;
    EXPECT_THROW(export_dataset(temp_dir("degenerate"), ec), ConfigError);

    const auto file = temp_dir("not_a_dir");
    std::ofstream(file) << "x";
    ec.n_noncrossing = 1;
    ec.frame_size = {16, 16};
    ec.crossing_length = 32;
    EXPECT_THROW(export_dataset(file / "sub", ec), IoError);
    fs::remove_all(file);
}

TEST(Dataset, CorruptBlobsAreRejected) {
    const auto seq = generate_scenario(small_config(true, 3));
    auto bytes = encode_blob(seq);
    EXPECT_EQ(decode_blob(bytes, seq.config), seq);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 3);
    EXPECT_THROW(decode_blob(truncated, seq.config), IoError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_blob(bad_magic, seq.config), DataError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(decode_blob(bad_version, seq.config), CompatibilityError);
}

TEST(Dataset, BlobHeaderLayoutIsLittleEndian) {
    const auto seq = generate_scenario(small_config(false, 3));
    const auto bytes = encode_blob(seq);
    ASSERT_GE(bytes.size(), 24u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VRPC");
    auto u32_at = [&](std::size_t off) {
        return std::uint32_t(bytes[off]) | std::uint32_t(bytes[off + 1]) << 8 | std::uint32_t(bytes[off + 2]) << 16 |
               std::uint32_t(bytes[off + 3]) << 24;
    };
    EXPECT_EQ(u32_at(4), kBlobVersion);
    EXPECT_EQ(u32_at(8), 20u);
    EXPECT_EQ(u32_at(12), 32u);
    EXPECT_EQ(u32_at(16), 32u);
    EXPECT_EQ(u32_at(20), 3u);
    EXPECT_EQ(bytes.size(), 24u + seq.frames.size() + 3u * (4u + 20u * 4u) * 4u);
}

TEST(DomainShift, PixelStatisticsDiffer) {
    // Colour cast shows up as a red-minus-blue offset; sensor noise as a larger
    // residual against the 4-neighbour mean in the sky.
    auto stats = [](Domain d) {
        double rb = 0, resid = 0;
        long n = 0, m = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            auto cfg = small_config(true, s);
            cfg.domain = d;
            cfg.weather = Weather::sunny;
            const auto seq = generate_scenario(cfg);
            const auto f = seq.frame(0);
            auto px = [&](int yy, int xx, int c) { return static_cast<double>(f[(yy * 32 + xx) * 3 + c]); };
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    rb += px(y, x, 0) - px(y, x, 2);
                    ++n;
                }
            // Sky rows above the horizon are smooth apart from sensor noise.
            for (int y = 1; y < 10; ++y)
                for (int x = 1; x < 31; ++x) {
                    const double r = px(y, x, 1) - 0.25 * (px(y - 1, x, 1) + px(y + 1, x, 1) + px(y, x - 1, 1) + px(y, x + 1, 1));
                    resid += r * r;
                    ++m;
                }
        }
        return std::pair{rb / n, resid / m};
    };
    const auto [rb_v, noise_v] = stats(Domain::virtual_);
    const auto [rb_p, noise_p] = stats(Domain::proxy_real);
    EXPECT_GT(rb_p - rb_v, 15.0);
    EXPECT_GT(noise_p, 2.0 * noise_v);
}

TEST(DomainShift, LinearProbeSeparatesDomains) {
    // Logistic regression on downsampled raw pixels of the first frame, 200
    // training and 200 held-out sequences.
    auto features = [](Domain d, std::uint64_t seed) {
        ExportConfig ec;
        ec.domain = d;
        ec.base_seed = seed;
        ec.frame_size = {32, 32};
        ec.crossing_length = 32;
        ec.n_crossing = 60;
        ec.n_noncrossing = 40;
        Eigen::MatrixXd X(100, 8 * 8 * 3);
        for (int i = 0; i < 100; ++i) {
            const auto seq = generate_scenario(scenario_for(ec, i));
            const auto f = seq.frame(0);
            for (int by = 0; by < 8; ++by)
                for (int bx = 0; bx < 8; ++bx)
                    for (int c = 0; c < 3; ++c) {
                        double acc = 0;
                        for (int y = 0; y < 4; ++y)
                            for (int x = 0; x < 4; ++x) acc += f[((by * 4 + y) * 32 + bx * 4 + x) * 3 + c];
                        X(i, (by * 8 + bx) * 3 + c) = acc / 16.0 / 255.0;
                    }
        }
        return X;
    };
    Eigen::MatrixXd train(200, 192), test(200, 192);
    train << features(Domain::virtual_, 1), features(Domain::proxy_real, 2);
    test << features(Domain::virtual_, 3), features(Domain::proxy_real, 4);
    Eigen::VectorXd y(200);
    y << Eigen::VectorXd::Zero(100), Eigen::VectorXd::Ones(100);
    const Eigen::RowVectorXd mu = train.colwise().mean();
    const Eigen::RowVectorXd sd = ((train.rowwise() - mu).array().square().colwise().mean().sqrt() + 1e-6).matrix();
    auto standardize = [&](const Eigen::MatrixXd& m) {
        return Eigen::MatrixXd((m.rowwise() - mu).array().rowwise() / sd.array());
    };
    const Eigen::MatrixXd Xtr = standardize(train), Xte = standardize(test);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(192);
    double b = 0;
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd p = (1.0 + (-((Xtr * w).array() + b)).exp()).inverse().matrix();
        const Eigen::VectorXd g = p - y;
        w -= 0.1 * (Xtr.transpose() * g / 200.0 + 1e-3 * w);
        b -= 0.1 * g.mean();
    }
    const Eigen::ArrayXd score = (Xte * w).array() + b;
    int correct = 0;
    for (int i = 0; i < 200; ++i) correct += ((score(i) > 0) == (i >= 100));
    EXPECT_GT(correct / 200.0, 0.9);
}
