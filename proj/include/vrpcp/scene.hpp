#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrpcp {

inline constexpr std::string_view kGeneratorVersion = "vrpc-sim/1.0";

enum class Domain { virtual_, proxy_real };
enum class Weather { sunny, evening, night, rainy };
enum class Occasion { intersection, main_road };

std::string to_string(Domain d);
std::string to_string(Weather w);
std::string to_string(Occasion o);
Domain parse_domain(std::string_view s);
Weather parse_weather(std::string_view s);
Occasion parse_occasion(std::string_view s);

struct FrameSize {
    int height = 64;
    int width = 64;
    bool operator==(const FrameSize&) const = default;
};

/// Sequence length of a crossing scenario at scale 1; non-crossing scenarios
/// are half as long.
inline constexpr int kCrossingSequenceLength = 200;

struct ScenarioConfig {
    Domain domain = Domain::virtual_;
    Weather weather = Weather::sunny;
    Occasion occasion = Occasion::main_road;
    int n_pedestrians = 1;
    bool crossing = true;
    std::uint64_t seed = 0;
    FrameSize frame_size{};
    int sequence_len = kCrossingSequenceLength;

    /// Throws ConfigError when a field is out of range or the length does not
    /// follow the 2:1 crossing/non-crossing ratio.
    void validate() const;

    static int default_length(bool crossing, int crossing_length = kCrossingSequenceLength) {
        return crossing ? crossing_length : crossing_length / 2;
    }
    bool operator==(const ScenarioConfig&) const = default;
};

/// Axis-aligned pedestrian box in pixels: center (x, y), height, width.
struct Box {
    float x = 0;
    float y = 0;
    float h = 0;
    float w = 0;
    bool operator==(const Box&) const = default;
};

struct PedestrianTrack {
    std::vector<Box> boxes;  // one per frame
    bool crossing = false;
    std::optional<int> crossing_frame;
    std::uint8_t gender = 0;  // metadata only: 0 female, 1 male
    std::uint8_t age = 1;     // metadata only: 0 child, 1 adult, 2 senior
    bool operator==(const PedestrianTrack&) const = default;
};

/// Per-frame camera state and static road layout of a simulated scene.
struct SceneGeometry {
    double focal = 0;      // pixels
    double principal_x = 0;  // image column of the optical axis before yaw
    double horizon = 0;    // image row of the horizon
    double camera_height = 1.4;
    double road_left = 0;  // lateral road edges on the ground plane, meters
    double road_right = 0;
    double zebra_start = 0;  // longitudinal start of the zebra band (intersection only)
    std::vector<double> ego_distance;  // meters travelled by the camera at frame t
    std::vector<double> yaw_shift;     // horizontal image shift at frame t, pixels

    /// True when the ground point seen at image column x (pixel units) on
    /// row `foot_y` lies on the road at frame t.
    bool on_road(int t, double x, double foot_y) const;
};

struct AnnotatedSequence {
    ScenarioConfig config;
    std::string generator_version{kGeneratorVersion};
    std::vector<std::uint8_t> frames;  // sequence_len x H x W x 3, row-major
    std::vector<PedestrianTrack> tracks;

    int length() const { return config.sequence_len; }
    int height() const { return config.frame_size.height; }
    int width() const { return config.frame_size.width; }
    std::size_t frame_bytes() const { return static_cast<std::size_t>(height()) * width() * 3; }
    std::span<const std::uint8_t> frame(int t) const {
        return {frames.data() + frame_bytes() * static_cast<std::size_t>(t), frame_bytes()};
    }
    bool operator==(const AnnotatedSequence&) const = default;
};

/// Pedestrian state on the ground plane (used for replay and motion rendering).
struct WalkerState {
    double lateral = 0;  // X, meters
    double depth = 0;    // world longitudinal position, meters
    double height_m = 1.7;
    double gait_phase = 0;
    bool walking = false;
};

/// Everything the rasterizer needs: the annotated tracks plus the ground
/// truth scene state they were projected from.
struct Scenario {
    ScenarioConfig config;
    SceneGeometry geometry;
    std::vector<PedestrianTrack> tracks;
    std::vector<std::vector<WalkerState>> walkers;  // [track][frame]
    std::vector<std::array<std::uint8_t, 3>> shirt_colors;
    std::vector<std::array<std::uint8_t, 3>> pants_colors;
};

/// Samples scene layout and pedestrian trajectories (no pixels).
Scenario simulate_scenario(const ScenarioConfig& config);

/// Rasterizes frame t (H x W x 3 bytes appended to `out`).
void render_frame(const Scenario& scenario, int t, std::vector<std::uint8_t>& out);

/// Simulator ground-truth image motion between frames t-1 and t, in pixels
/// per frame, laid out H x W x 2 (horizontal, vertical). Zero for t == 0.
std::vector<float> render_motion(const Scenario& scenario, int t);

/// Deterministic function of the config: same config and seed give a
/// byte-identical sequence.
AnnotatedSequence generate_scenario(const ScenarioConfig& config);

/// 1 iff the track's crossing frame lies in (obs_end + lo, obs_end + hi].
/// Throws RangeError when obs_end + hi does not fit in the sequence.
int crossing_label(const PedestrianTrack& track, int obs_end, std::array<int, 2> ttc_range);

/// False for windows whose crossing already happened at or before
/// obs_end + lo; such windows are excluded from example sampling.
bool window_is_sampleable(const PedestrianTrack& track, int obs_end, std::array<int, 2> ttc_range);

}  // namespace vrpcp
