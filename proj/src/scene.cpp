#include "vrpcp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vrpcp/errors.hpp"
#include "vrpcp/rng.hpp"

namespace vrpcp {

std::string to_string(Domain d) { return d == Domain::virtual_ ? "virtual" : "proxy_real"; }

std::string to_string(Weather w) {
    switch (w) {
        case Weather::sunny: return "sunny";
        case Weather::evening: return "evening";
        case Weather::night: return "night";
        case Weather::rainy: return "rainy";
    }
    return "sunny";
}

std::string to_string(Occasion o) { return o == Occasion::intersection ? "intersection" : "main_road"; }

Domain parse_domain(std::string_view s) {
    if (s == "virtual") return Domain::virtual_;
    if (s == "proxy_real") return Domain::proxy_real;
    throw ConfigError("unknown domain '" + std::string(s) + "' (expected virtual|proxy_real)");
}

Weather parse_weather(std::string_view s) {
    for (auto w : {Weather::sunny, Weather::evening, Weather::night, Weather::rainy})
        if (s == to_string(w)) return w;
    throw ConfigError("unknown weather '" + std::string(s) + "'");
}

Occasion parse_occasion(std::string_view s) {
    if (s == "intersection") return Occasion::intersection;
    if (s == "main_road") return Occasion::main_road;
    throw ConfigError("unknown occasion '" + std::string(s) + "'");
}

void ScenarioConfig::validate() const {
    if (frame_size.height < 16 || frame_size.width < 16 || frame_size.height > 1024 || frame_size.width > 1024)
        throw ConfigError("frame size must lie in [16, 1024] on both axes");
    if (sequence_len < 8) throw ConfigError("sequence_len must be >= 8");
    if (crossing) {
        if (n_pedestrians != 1) throw ConfigError("crossing scenarios contain exactly one pedestrian");
        if (sequence_len % 2 != 0) throw ConfigError("crossing sequence_len must be even (2:1 length ratio)");
    } else if (n_pedestrians < 1 || n_pedestrians > 3) {
        throw ConfigError("non-crossing scenarios contain 1 to 3 pedestrians");
    }
}

bool SceneGeometry::on_road(int t, double x, double foot_y) const {
    if (foot_y <= horizon) return false;
    const double depth = focal * camera_height / (foot_y - horizon);
    const double cx = principal_x + yaw_shift.at(static_cast<std::size_t>(t));
    const double lateral = (x - cx) * depth / focal;
    return lateral >= road_left && lateral <= road_right;
}

namespace {

// Ground-plane lateral coordinates are measured from the image center column,
// so pixel x = W/2 + yaw + focal * X / depth.

struct DomainProfile {
    double walk_lo, walk_hi;  // lateral walking speed, m/frame
    double ego_hi;            // camera forward speed, m/frame
    double sway_px;           // slow camera sway amplitude
    double shake_px;          // high-frequency camera shake amplitude
    double sensor_noise;      // additive pixel noise std
    std::array<double, 3> cast;
    std::array<double, 3> road, sidewalk, verge;
    double road_texture, tile_size;
    bool striped_sprites;
};

DomainProfile profile_for(Domain d) {
    if (d == Domain::virtual_)
        return {0.035, 0.060, 0.090, 1.0, 0.0, 1.5, {0, 0, 0},
                {70, 70, 76}, {172, 166, 158}, {78, 128, 70}, 8.0, 0.8, false};
    return {0.025, 0.050, 0.120, 0.5, 0.8, 6.0, {12, 2, -12},
            {88, 84, 80}, {150, 140, 124}, {96, 112, 82}, 14.0, 0.5, true};
}

struct WeatherLook {
    double gain, contrast;
    std::array<double, 3> tint;
    double noise;
    int rain_streaks;
    std::array<double, 3> sky_top, sky_bottom;
};

WeatherLook look_for(Weather w) {
    switch (w) {
        case Weather::sunny: return {1.0, 1.0, {1, 1, 1}, 0.0, 0, {110, 160, 230}, {185, 210, 240}};
        case Weather::evening: return {0.78, 0.9, {1.15, 0.92, 0.75}, 1.0, 0, {120, 80, 110}, {235, 150, 95}};
        case Weather::night: return {0.38, 0.7, {0.85, 0.9, 1.15}, 3.0, 0, {8, 10, 25}, {25, 30, 50}};
        case Weather::rainy: return {0.72, 0.8, {0.92, 0.95, 1.0}, 2.0, 40, {105, 110, 118}, {140, 145, 150}};
    }
    return look_for(Weather::sunny);
}

double hash01(std::int64_t a, std::int64_t b, std::uint64_t salt) {
    const auto h = mix64(combine_seed(salt, static_cast<std::uint64_t>(a)) ^ mix64(static_cast<std::uint64_t>(b)));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct AgeProfile {
    double height_lo, height_hi, speed_factor;
};

AgeProfile age_profile(std::uint8_t age) {
    switch (age) {
        case 0: return {1.05, 1.40, 0.95};
        case 2: return {1.50, 1.78, 0.75};
        default: return {1.55, 1.90, 1.0};
    }
}

struct Projector {
    const SceneGeometry& g;
    FrameSize size;

    // Box for a walker at frame t; gait modulates height/width slightly.
    Box project(int t, const WalkerState& s) const {
        const double depth = s.depth - g.ego_distance[static_cast<std::size_t>(t)];
        const double cx = g.principal_x + g.yaw_shift[static_cast<std::size_t>(t)];
        const double foot = g.horizon + g.focal * g.camera_height / depth;
        const double bob = s.walking ? 0.03 * std::sin(s.gait_phase) : 0.0;
        const double h = g.focal * s.height_m / depth * (1.0 + bob);
        const double w = 0.38 * h * (1.0 + (s.walking ? 0.08 * std::abs(std::sin(s.gait_phase)) : 0.0));
        return {static_cast<float>(cx + g.focal * s.lateral / depth), static_cast<float>(foot - h / 2.0),
                static_cast<float>(h), static_cast<float>(w)};
    }

    bool visible(const Box& b) const {
        return b.x + b.w / 2 > 0 && b.x - b.w / 2 < size.width && b.y + b.h / 2 > 0 && b.y - b.h / 2 < size.height;
    }
};

enum class Behavior { cross, stand, walk_along, approach_and_stop, walk_away };

// Lateral trajectory for one walker. `toward` is the unit direction from the
// walker's sidewalk toward the road; `boundary` the curb it faces.
struct WalkPlan {
    Behavior behavior = Behavior::stand;
    double boundary = 0;
    double toward = -1;
    double speed = 0.04;   // lateral, m/frame
    double along = 0;      // longitudinal, m/frame (walk_along only)
    double start_offset = 1.0;  // initial distance from the curb on the sidewalk, m
    double stop_offset = 0.3;
    double far_limit = 0;  // lateral position where a crosser stops after crossing
    int walk_start = 0;
    int cross_frame = -1;
};

std::vector<WalkerState> run_plan(const WalkPlan& p, double depth0, double height_m, int length) {
    std::vector<WalkerState> out(static_cast<std::size_t>(length));
    double phase = 0;
    for (int t = 0; t < length; ++t) {
        WalkerState s;
        s.height_m = height_m;
        s.depth = depth0;
        double x = p.boundary - p.toward * p.start_offset;
        bool walking = false;
        switch (p.behavior) {
            case Behavior::cross: {
                // Half-frame offset keeps the walker strictly off the road at
                // cross_frame - 1 and strictly on it at cross_frame.
                const double tt = std::max<double>(t, p.walk_start);
                x = p.boundary + p.toward * p.speed * (tt - p.cross_frame + 0.5);
                walking = t >= p.walk_start;
                if (p.toward * (x - p.far_limit) > 0) {
                    x = p.far_limit;
                    walking = false;
                }
                break;
            }
            case Behavior::stand: break;
            case Behavior::walk_along:
                s.depth = depth0 + p.along * t;
                walking = true;
                break;
            case Behavior::approach_and_stop: {
                const double travelled = std::max(0, t - p.walk_start) * p.speed;
                const double max_travel = p.start_offset - p.stop_offset;
                x = p.boundary - p.toward * (p.start_offset - std::min(travelled, max_travel));
                walking = t >= p.walk_start && travelled < max_travel;
                break;
            }
            case Behavior::walk_away: {
                const double travelled = std::min(std::max(0, t - p.walk_start) * p.speed, 4.0);
                x = p.boundary - p.toward * (p.start_offset + travelled);
                walking = t >= p.walk_start && travelled < 4.0;
                break;
            }
        }
        if (walking) phase += 2.0 * std::numbers::pi * std::max(p.speed, std::abs(p.along)) / 0.75;
        s.lateral = x;
        s.walking = walking;
        s.gait_phase = phase;
        out[static_cast<std::size_t>(t)] = s;
    }
    return out;
}

std::array<std::uint8_t, 3> sprite_color(CounterRng& rng, bool muted) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 8> vivid{{{220, 40, 40},
                                                                       {40, 90, 220},
                                                                       {240, 200, 30},
                                                                       {30, 170, 80},
                                                                       {230, 120, 20},
                                                                       {150, 50, 190},
                                                                       {240, 240, 240},
                                                                       {20, 20, 20}}};
    static constexpr std::array<std::array<std::uint8_t, 3>, 8> dull{{{120, 90, 80},
                                                                      {70, 80, 100},
                                                                      {140, 130, 110},
                                                                      {60, 70, 60},
                                                                      {100, 60, 60},
                                                                      {160, 150, 140},
                                                                      {50, 50, 55},
                                                                      {90, 100, 120}}};
    const auto& table = muted ? dull : vivid;
    return table[static_cast<std::size_t>(rng.uniform_int(0, 7))];
}

}  // namespace

Scenario simulate_scenario(const ScenarioConfig& config) {
    config.validate();
    const DomainProfile prof = profile_for(config.domain);
    const int L = config.sequence_len;
    const double time_scale = static_cast<double>(config.crossing ? L : 2 * L) / kCrossingSequenceLength;
    const FrameSize size = config.frame_size;

    Scenario sc;
    sc.config = config;
    CounterRng layout_rng = CounterRng(config.seed).child(1);

    SceneGeometry& g = sc.geometry;
    g.focal = 0.9 * size.width;
    g.principal_x = size.width / 2.0;
    g.horizon = size.height * layout_rng.uniform(0.36, 0.42);
    g.road_left = -layout_rng.uniform(1.5, 4.5);
    const double width = config.occasion == Occasion::main_road ? layout_rng.uniform(6.5, 9.0)
                                                               : layout_rng.uniform(8.0, 11.0);
    g.road_right = g.road_left + width;
    g.zebra_start = layout_rng.uniform(4.0, 18.0);
    const double ego_speed = layout_rng.uniform(0.0, prof.ego_hi) / time_scale;
    const double sway_period = layout_rng.uniform(60.0, 160.0) * time_scale;
    const double sway_phase = layout_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double shake_period = layout_rng.uniform(5.0, 9.0);
    const double shake_phase = layout_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double px_scale = size.width / 64.0;
    g.ego_distance.resize(static_cast<std::size_t>(L));
    g.yaw_shift.resize(static_cast<std::size_t>(L));
    for (int t = 0; t < L; ++t) {
        g.ego_distance[static_cast<std::size_t>(t)] = ego_speed * t;
        double yaw = prof.sway_px * std::sin(2.0 * std::numbers::pi * t / sway_period + sway_phase);
        if (prof.shake_px > 0)
            yaw += prof.shake_px * (std::sin(2.0 * std::numbers::pi * t / shake_period + shake_phase) +
                                    0.5 * layout_rng.normal());
        g.yaw_shift[static_cast<std::size_t>(t)] = yaw * px_scale;
    }

    Projector proj{g, size};
    const int n = config.crossing ? 1 : config.n_pedestrians;
    for (int i = 0; i < n; ++i) {
        CounterRng rng = CounterRng(config.seed).child(100 + static_cast<std::uint64_t>(i));
        PedestrianTrack track;
        track.gender = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
        const double age_draw = rng.uniform();
        track.age = age_draw < 0.15 ? 0 : (age_draw < 0.85 ? 1 : 2);
        const AgeProfile ap = age_profile(track.age);
        const double height_m = rng.uniform(ap.height_lo, ap.height_hi);
        const bool right_side = rng.bernoulli(0.6);

        WalkPlan plan;
        plan.boundary = right_side ? g.road_right : g.road_left;
        plan.toward = right_side ? -1.0 : 1.0;
        plan.speed = rng.uniform(prof.walk_lo, prof.walk_hi) * ap.speed_factor / time_scale;
        if (config.crossing) {
            plan.behavior = Behavior::cross;
            plan.cross_frame = std::clamp(static_cast<int>(std::lround(rng.uniform(60.0, 185.0) * time_scale)), 1, L - 1);
            const double walk_frames = rng.uniform(25.0, 110.0) * time_scale;
            plan.walk_start = plan.cross_frame - static_cast<int>(std::lround(walk_frames));
            plan.far_limit = (right_side ? g.road_left : g.road_right) + plan.toward * 1.0;
        } else {
            const double b = rng.uniform();
            plan.behavior = b < 0.25   ? Behavior::stand
                            : b < 0.5  ? Behavior::walk_along
                            : b < 0.8  ? Behavior::approach_and_stop
                                       : Behavior::walk_away;
            plan.start_offset = rng.uniform(0.3, 3.5);
            plan.walk_start = static_cast<int>(rng.uniform(0.0, 0.6 * L));
            if (plan.behavior == Behavior::approach_and_stop) {
                plan.start_offset = rng.uniform(1.5, 4.0);
                plan.stop_offset = rng.uniform(0.15, 0.6);
            }
            if (plan.behavior == Behavior::walk_along)
                plan.along = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(prof.walk_lo, prof.walk_hi) / time_scale;
        }

        // Depth is drawn heavy toward the far field (small boxes); rejection
        // keeps every frame's box at least partially visible, widening the
        // draw after repeated failures.
        std::vector<WalkerState> states;
        std::vector<Box> boxes;
        for (int attempt = 0;; ++attempt) {
            const double near = 2.8 + (attempt > 60 ? 0.4 * (attempt - 60) : 0.0);
            const double depth_at_end = near + (-std::log(1.0 - rng.uniform())) * 4.0;
            const double depth0 = std::min(depth_at_end, 30.0) + g.ego_distance.back() +
                                  (plan.behavior == Behavior::walk_along && plan.along < 0 ? -plan.along * L : 0.0);
            states = run_plan(plan, depth0, height_m, L);
            boxes.clear();
            bool ok = true;
            for (int t = 0; t < L && ok; ++t) {
                const double depth = states[static_cast<std::size_t>(t)].depth - g.ego_distance[static_cast<std::size_t>(t)];
                if (depth < 1.5) {
                    ok = false;
                    break;
                }
                Box bx = proj.project(t, states[static_cast<std::size_t>(t)]);
                if (!proj.visible(bx) && plan.behavior == Behavior::cross && t > plan.cross_frame + 1) {
                    // Having crossed, the walker halts at the edge of view
                    // (waiting at the median) instead of leaving the frame.
                    const WalkerState halt = states[static_cast<std::size_t>(t - 1)];
                    for (int u = t; u < L; ++u) {
                        auto& s = states[static_cast<std::size_t>(u)];
                        s.lateral = halt.lateral;
                        s.gait_phase = halt.gait_phase;
                        s.walking = false;
                    }
                    bx = proj.project(t, states[static_cast<std::size_t>(t)]);
                }
                ok = proj.visible(bx);
                boxes.push_back(bx);
            }
            if (ok) break;
            if (attempt > 400) throw DataError("could not place a visible pedestrian (seed " + std::to_string(config.seed) + ")");
        }
        track.boxes = std::move(boxes);
        track.crossing = config.crossing;
        if (config.crossing) track.crossing_frame = plan.cross_frame;
        sc.walkers.push_back(std::move(states));
        sc.tracks.push_back(std::move(track));
        sc.shirt_colors.push_back(sprite_color(rng, prof.striped_sprites));
        sc.pants_colors.push_back(sprite_color(rng, prof.striped_sprites));
    }
    return sc;
}

void render_frame(const Scenario& sc, int t, std::vector<std::uint8_t>& out) {
    const auto& cfg = sc.config;
    const auto& g = sc.geometry;
    const DomainProfile prof = profile_for(cfg.domain);
    const WeatherLook look = look_for(cfg.weather);
    const int H = cfg.frame_size.height, W = cfg.frame_size.width;
    const double cx = g.principal_x + g.yaw_shift[static_cast<std::size_t>(t)];
    const double ego = g.ego_distance[static_cast<std::size_t>(t)];
    const double road_mid = 0.5 * (g.road_left + g.road_right);
    const std::uint64_t salt = cfg.seed ^ 0x5EEDULL;

    std::vector<double> img(static_cast<std::size_t>(H) * W * 3);
    auto put = [&](int y, int x, const std::array<double, 3>& c) {
        auto* p = &img[(static_cast<std::size_t>(y) * W + x) * 3];
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    };

    for (int y = 0; y < H; ++y) {
        const double yc = y + 0.5;
        for (int x = 0; x < W; ++x) {
            const double xc = x + 0.5;
            if (yc <= g.horizon) {
                const double a = std::clamp(yc / std::max(g.horizon, 1.0), 0.0, 1.0);
                put(y, x, {look.sky_top[0] + a * (look.sky_bottom[0] - look.sky_top[0]),
                           look.sky_top[1] + a * (look.sky_bottom[1] - look.sky_top[1]),
                           look.sky_top[2] + a * (look.sky_bottom[2] - look.sky_top[2])});
                continue;
            }
            const double depth = g.focal * g.camera_height / (yc - g.horizon);
            const double lateral = (xc - cx) * depth / g.focal;
            const double along = depth + ego;
            std::array<double, 3> c;
            if (lateral >= g.road_left && lateral <= g.road_right) {
                const double n = hash01(static_cast<std::int64_t>(std::floor(along * 4)),
                                        static_cast<std::int64_t>(std::floor(lateral * 4)), salt);
                c = {prof.road[0] + prof.road_texture * (n - 0.5), prof.road[1] + prof.road_texture * (n - 0.5),
                     prof.road[2] + prof.road_texture * (n - 0.5)};
                const bool centre_dash = std::abs(lateral - road_mid) < 0.12 && std::fmod(along, 3.0) < 1.5;
                const bool edge_line = lateral - g.road_left < 0.12 || g.road_right - lateral < 0.12;
                const bool zebra = cfg.occasion == Occasion::intersection && along > g.zebra_start &&
                                   along < g.zebra_start + 3.0 && std::fmod(lateral - g.road_left, 1.0) < 0.5;
                if (centre_dash || edge_line || zebra) c = {215, 215, 205};
            } else {
                const double off = lateral > g.road_right ? lateral - g.road_right : g.road_left - lateral;
                if (off < 0.2) {
                    c = {200, 198, 190};  // curb
                } else if (off < 4.5) {
                    const auto ti = static_cast<std::int64_t>(std::floor(lateral / prof.tile_size)) +
                                    static_cast<std::int64_t>(std::floor(along / prof.tile_size));
                    const double shade = (ti & 1) ? 8.0 : -8.0;
                    c = {prof.sidewalk[0] + shade, prof.sidewalk[1] + shade, prof.sidewalk[2] + shade};
                } else {
                    const double n = hash01(static_cast<std::int64_t>(std::floor(along * 2)),
                                            static_cast<std::int64_t>(std::floor(lateral * 2)), salt + 1);
                    c = {prof.verge[0] + 20 * (n - 0.5), prof.verge[1] + 20 * (n - 0.5), prof.verge[2] + 20 * (n - 0.5)};
                }
            }
            put(y, x, c);
        }
    }

    // Pedestrian sprites, far to near.
    std::vector<std::size_t> order(sc.tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sc.walkers[a][static_cast<std::size_t>(t)].depth > sc.walkers[b][static_cast<std::size_t>(t)].depth;
    });
    for (std::size_t i : order) {
        const Box& b = sc.tracks[i].boxes[static_cast<std::size_t>(t)];
        const WalkerState& s = sc.walkers[i][static_cast<std::size_t>(t)];
        const double top = b.y - b.h / 2, left = b.x - b.w / 2;
        const int y0 = std::max(0, static_cast<int>(std::floor(top))), y1 = std::min(H, static_cast<int>(std::ceil(top + b.h)));
        const int x0 = std::max(0, static_cast<int>(std::floor(left))), x1 = std::min(W, static_cast<int>(std::ceil(left + b.w)));
        const auto& shirt = sc.shirt_colors[i];
        const auto& pants = sc.pants_colors[i];
        const double stride = s.walking ? 0.25 * std::sin(s.gait_phase) : 0.0;
        for (int y = y0; y < y1; ++y) {
            const double v = (y + 0.5 - top) / b.h;
            for (int x = x0; x < x1; ++x) {
                const double u = (x + 0.5 - left) / b.w;
                if (v < 0.18) {
                    if (u > 0.25 && u < 0.75) put(y, x, {205, 160, 130});
                } else if (v < 0.58) {
                    const bool stripe = prof.striped_sprites && (y % 2 == 0);
                    const double k = stripe ? 0.7 : 1.0;
                    put(y, x, {shirt[0] * k, shirt[1] * k, shirt[2] * k});
                } else {
                    // Two legs that scissor with the gait phase.
                    const double l1 = 0.3 + stride * (v - 0.58), l2 = 0.7 - stride * (v - 0.58);
                    if (std::abs(u - l1) < 0.17 || std::abs(u - l2) < 0.17)
                        put(y, x, {static_cast<double>(pants[0]), static_cast<double>(pants[1]), static_cast<double>(pants[2])});
                }
            }
        }
    }

    CounterRng noise_rng = CounterRng(cfg.seed).child(0x10000 + static_cast<std::uint64_t>(t));
    for (int k = 0; k < look.rain_streaks; ++k) {
        int x = static_cast<int>(noise_rng.uniform_int(0, W - 1));
        int y = static_cast<int>(noise_rng.uniform_int(0, H - 1));
        const int len = static_cast<int>(noise_rng.uniform_int(3, 7));
        for (int j = 0; j < len && y < H && x < W; ++j, ++y, x += (j % 2)) {
            auto* p = &img[(static_cast<std::size_t>(y) * W + x) * 3];
            for (int ch = 0; ch < 3; ++ch) p[ch] = 0.6 * p[ch] + 0.4 * 230.0;
        }
    }

    const double sigma = look.noise + prof.sensor_noise;
    const std::size_t base = out.size();
    out.resize(base + img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int ch = static_cast<int>(i % 3);
        double v = img[i] * look.tint[static_cast<std::size_t>(ch)] * look.gain;
        v = (v - 128.0) * look.contrast + 128.0 + prof.cast[static_cast<std::size_t>(ch)];
        if (sigma > 0) v += sigma * noise_rng.normal();
        out[base + i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
}

std::vector<float> render_motion(const Scenario& sc, int t) {
    const auto& g = sc.geometry;
    const int H = sc.config.frame_size.height, W = sc.config.frame_size.width;
    std::vector<float> flow(static_cast<std::size_t>(H) * W * 2, 0.0f);
    if (t <= 0) return flow;
    const auto ti = static_cast<std::size_t>(t);
    const double cx = g.principal_x + g.yaw_shift[ti], cx_prev = g.principal_x + g.yaw_shift[ti - 1];
    const double step = g.ego_distance[ti] - g.ego_distance[ti - 1];
    for (int y = 0; y < H; ++y) {
        const double yc = y + 0.5;
        for (int x = 0; x < W; ++x) {
            float* f = &flow[(static_cast<std::size_t>(y) * W + x) * 2];
            if (yc <= g.horizon) {
                f[0] = static_cast<float>(cx - cx_prev);
                continue;
            }
            const double depth = g.focal * g.camera_height / (yc - g.horizon);
            const double lateral = (x + 0.5 - cx) * depth / g.focal;
            const double prev_depth = depth + step;
            f[0] = static_cast<float>(x + 0.5 - (cx_prev + g.focal * lateral / prev_depth));
            f[1] = static_cast<float>(yc - (g.horizon + g.focal * g.camera_height / prev_depth));
        }
    }
    std::vector<std::size_t> order(sc.tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return sc.walkers[a][ti].depth > sc.walkers[b][ti].depth; });
    for (std::size_t i : order) {
        const Box& b = sc.tracks[i].boxes[ti];
        const Box& p = sc.tracks[i].boxes[ti - 1];
        const float du = b.x - p.x, dv = (b.y + b.h / 2) - (p.y + p.h / 2);
        const int y0 = std::max(0, static_cast<int>(std::floor(b.y - b.h / 2)));
        const int y1 = std::min(H, static_cast<int>(std::ceil(b.y + b.h / 2)));
        const int x0 = std::max(0, static_cast<int>(std::floor(b.x - b.w / 2)));
        const int x1 = std::min(W, static_cast<int>(std::ceil(b.x + b.w / 2)));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                float* f = &flow[(static_cast<std::size_t>(y) * W + x) * 2];
                f[0] = du;
                f[1] = dv;
            }
    }
    return flow;
}

AnnotatedSequence generate_scenario(const ScenarioConfig& config) {
    Scenario sc = simulate_scenario(config);
    AnnotatedSequence seq;
    seq.config = config;
    seq.frames.reserve(static_cast<std::size_t>(config.sequence_len) * config.frame_size.height *
                       config.frame_size.width * 3);
    for (int t = 0; t < config.sequence_len; ++t) render_frame(sc, t, seq.frames);
    seq.tracks = std::move(sc.tracks);
    return seq;
}

int crossing_label(const PedestrianTrack& track, int obs_end, std::array<int, 2> ttc_range) {
    const int length = static_cast<int>(track.boxes.size());
    if (ttc_range[0] < 0 || ttc_range[1] <= ttc_range[0])
        throw RangeError("ttc range must satisfy 0 <= lo < hi");
    if (obs_end < 0 || obs_end + ttc_range[1] >= length)
        throw RangeError("prediction window ends at frame " + std::to_string(obs_end + ttc_range[1]) +
                         " but the sequence has " + std::to_string(length) + " frames");
    if (!track.crossing_frame) return 0;
    const int cf = *track.crossing_frame;
    return (cf > obs_end + ttc_range[0] && cf <= obs_end + ttc_range[1]) ? 1 : 0;
}

bool window_is_sampleable(const PedestrianTrack& track, int obs_end, std::array<int, 2> ttc_range) {
    return !track.crossing_frame || *track.crossing_frame > obs_end + ttc_range[0];
}

}  // namespace vrpcp
