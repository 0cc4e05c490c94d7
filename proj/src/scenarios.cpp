#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fmnet/trainer.hpp"
#include "fmnet/util.hpp"
#include "json.hpp"

namespace fmnet {

using nlohmann::json;

namespace {

// Signal timing, one fixed-time controller for the whole intersection.
constexpr double kCycle = 24.0;
constexpr double kNsGreenEnd = 10.0;
constexpr double kNsYellowEnd = 12.0;  // NS red (EW green) afterwards
constexpr double kEwGreenEnd = 22.0;   // within the EW half [12, 24)

LightState ns_phase(double t) {
    const double tm = std::fmod(t, kCycle);
    if (tm < kNsGreenEnd) return LightState::green;
    if (tm < kNsYellowEnd) return LightState::yellow;
    return LightState::red;
}

LightState ew_phase(double t) {
    const double tm = std::fmod(t, kCycle);
    if (tm < kNsYellowEnd) return LightState::red;
    if (tm < kEwGreenEnd) return LightState::green;
    return LightState::yellow;
}

// Crosswalks span the NS road; their walk phase is the NS red half.
bool crosswalks_active(double t) { return std::fmod(t, kCycle) >= kNsYellowEnd; }

Polygon rect(double x0, double y0, double x1, double y1) {
    return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
}

// Path made of straight runs and circular arcs, walked by arc length.
struct PathSeg {
    bool arc = false;
    Point2 a, b;          // straight endpoints
    Point2 center;        // arc
    double r = 0, a0 = 0, a1 = 0;  // arc angles (signed sweep a0 -> a1)
    double length() const {
        return arc ? std::abs(a1 - a0) * r : dist(a, b);
    }
};

struct Path {
    std::vector<PathSeg> segs;
    double total = 0;
    explicit Path(std::vector<PathSeg> s) : segs(std::move(s)) {
        for (const auto& sg : segs) total += sg.length();
    }
    // position, heading, curvature (signed, 1/m) at arc length s
    void at(double s, Point2& p, double& heading, double& curvature) const {
        s = std::clamp(s, 0.0, total);
        for (const auto& sg : segs) {
            const double L = sg.length();
            if (s > L && &sg != &segs.back()) {
                s -= L;
                continue;
            }
            const double f = L > 0 ? std::min(s, L) / L : 0.0;
            if (!sg.arc) {
                p = {sg.a.x + (sg.b.x - sg.a.x) * f, sg.a.y + (sg.b.y - sg.a.y) * f};
                heading = std::atan2(sg.b.y - sg.a.y, sg.b.x - sg.a.x);
                curvature = 0.0;
            } else {
                const double ang = sg.a0 + (sg.a1 - sg.a0) * f;
                p = {sg.center.x + sg.r * std::cos(ang), sg.center.y + sg.r * std::sin(ang)};
                const double dir = sg.a1 > sg.a0 ? 1.0 : -1.0;
                heading = normalize_angle(ang + dir * kPi / 2.0);
                curvature = dir / sg.r;
            }
            return;
        }
    }
};

Path straight_path(Point2 a, Point2 b) {
    PathSeg s;
    s.a = a;
    s.b = b;
    return Path({s});
}

// Northbound right turn: x=5 approach, east exit on y=-5.
Path nb_right_turn() {
    PathSeg s1;
    s1.a = {5, -70};
    s1.b = {5, -12};
    PathSeg arc;
    arc.arc = true;
    arc.center = {12, -12};
    arc.r = 7;
    arc.a0 = kPi;           // at (5,-12), heading north
    arc.a1 = kPi / 2.0;     // at (12,-5), heading east
    PathSeg s2;
    s2.a = {12, -5};
    s2.b = {70, -5};
    return Path({s1, arc, s2});
}

// Eastbound right turn: y=-5 approach, south exit on x=-5.
Path eb_right_turn() {
    PathSeg s1;
    s1.a = {-70, -5};
    s1.b = {-12, -5};
    PathSeg arc;
    arc.arc = true;
    arc.center = {-12, -12};
    arc.r = 7;
    arc.a0 = kPi / 2.0;     // at (-12,-5), heading east
    arc.a1 = 0.0;           // at (-5,-12), heading south
    PathSeg s2;
    s2.a = {-5, -12};
    s2.b = {-5, -70};
    return Path({s1, arc, s2});
}

struct ScriptedActor {
    std::string id;
    ActorType type = ActorType::bicyclist;
    double length = 1.8, width = 0.6;
    Path path;
    double t0 = 0;                 // first emitted timestep
    double duration = 14.0;
    double s0 = 0;                 // initial arc-length position
    double cruise = 5.0;
    double stop_at_s = -1;         // stop-line position along the path, <0: none
    std::function<bool(double)> must_stop;  // light says stop, by time
};

// Longitudinal integration with light-aware stopping.
void emit_track(const ScriptedActor& sa, double dt, double noise, Rng& noise_rng,
                std::vector<ActorState>& out) {
    const int steps = static_cast<int>(std::llround(sa.duration / dt));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double s = sa.s0;
    double v = sa.cruise;
    constexpr double kBrakeComfort = 1.2, kBrakeMax = 3.5, kAccel = 1.5, kStopTol = 0.25;
    for (int k = 0; k <= steps; ++k) {
        const double t = sa.t0 + k * dt;
        double a_cmd = 0.0;
        if (sa.stop_at_s >= 0 && sa.must_stop && sa.must_stop(t)) {
            const double d = sa.stop_at_s - s;
            if (d > kStopTol && v > 0) {
                const double a_req = v * v / (2.0 * std::max(d, 0.05));
                if (a_req >= kBrakeComfort) a_cmd = -std::min(a_req, kBrakeMax);
            } else if (d > -kStopTol && d <= kStopTol) {
                a_cmd = 0.0;
                v = 0.0;  // hold at the line
            }
        } else if (v < sa.cruise) {
            a_cmd = kAccel;
        }
        Point2 p;
        double heading, curvature;
        sa.path.at(s, p, heading, curvature);
        ActorState st;
        st.actor_id = sa.id;
        st.t = t;
        double nx = p.x, ny = p.y, nh = heading;
        if (noise > 0) {
            nx += gauss(noise_rng) * noise;
            ny += gauss(noise_rng) * noise;
            nh += gauss(noise_rng) * noise * 0.5;
        }
        st.pose = Pose::make({nx, ny}, nh);
        st.velocity = v;
        st.acceleration = a_cmd;
        st.heading_change_rate = v * curvature;
        st.length = sa.length;
        st.width = sa.width;
        st.type = sa.type;
        out.push_back(std::move(st));
        // integrate
        double v_next = std::clamp(v + a_cmd * dt, 0.0, sa.cruise);
        s += (v + v_next) / 2.0 * dt;
        v = v_next;
    }
}

double pick(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

// quantize spawn times to the tracker grid
double snap(double t, double dt) { return std::round(t / dt) * dt; }

}  // namespace

SceneMap demo_intersection_map() {
    SceneMap m;
    m.roads.push_back(rect(-7, -60, 7, 60));   // north-south road
    m.roads.push_back(rect(-60, -7, 60, 7));   // east-west road
    m.driveways.push_back(rect(20, 7, 26, 13));
    m.crosswalks.push_back({rect(-7, 7.5, 7, 10.5), true});     // north leg
    m.crosswalks.push_back({rect(-7, -10.5, 7, -7.5), true});   // south leg
    auto lane = [](double x0, double y0, double x1, double y1, double dir) {
        LaneLine l;
        l.pts = {{x0, y0}, {x1, y1}};
        l.direction = normalize_angle(dir);
        return l;
    };
    m.lanes.push_back(lane(2, -60, 2, 60, kPi / 2));    // northbound through
    m.lanes.push_back(lane(5, -60, 5, 60, kPi / 2));    // northbound curb lane
    m.lanes.push_back(lane(-2, 60, -2, -60, -kPi / 2)); // southbound
    m.lanes.push_back(lane(-5, 60, -5, -60, -kPi / 2));
    m.lanes.push_back(lane(-60, -2, 60, -2, 0));        // eastbound
    m.lanes.push_back(lane(-60, -5, 60, -5, 0));
    m.lanes.push_back(lane(60, 2, -60, 2, kPi));        // westbound
    m.lanes.push_back(lane(60, 5, -60, 5, kPi));
    m.lights.push_back({{2, -8}, 0});    // northbound stop bar
    m.lights.push_back({{-2, 8}, 2});    // southbound
    m.lights.push_back({{-8, -2}, 4});   // eastbound
    m.lights.push_back({{8, 2}, 6});     // westbound
    return m;
}

GeneratedScenes generate_scenarios(const ScenarioSpec& spec) {
    GeneratedScenes out;
    out.map = demo_intersection_map();
    // curb-lane turn geometry, drawn so the raster shows where turns happen
    {
        LaneLine arc1;
        for (int i = 0; i <= 8; ++i) {
            const double a = kPi - (kPi / 2.0) * i / 8.0;
            arc1.pts.push_back({12 + 7 * std::cos(a), -12 + 7 * std::sin(a)});
        }
        arc1.direction = normalize_angle(kPi / 4.0);
        out.map.lanes.push_back(arc1);
        LaneLine arc2;
        for (int i = 0; i <= 8; ++i) {
            const double a = kPi / 2.0 - (kPi / 2.0) * i / 8.0;
            arc2.pts.push_back({-12 + 7 * std::cos(a), -12 + 7 * std::sin(a)});
        }
        arc2.direction = normalize_angle(-kPi / 4.0);
        out.map.lanes.push_back(arc2);
    }

    Rng rng = make_rng(spec.seed, "scenarios");
    Rng noise_rng = make_rng(spec.seed, "observation_noise");
    std::vector<ScriptedActor> actors;

    // (a) constant-velocity pedestrians on sidewalk segments away from roads
    for (int i = 0; i < spec.straight_pedestrians; ++i) {
        ScriptedActor sa{.path = straight_path({0, 0}, {1, 0})};
        sa.id = "ped_straight_" + std::to_string(i);
        sa.type = ActorType::pedestrian;
        sa.length = 0.6;
        sa.width = 0.6;
        sa.cruise = pick(rng, 0.8, 1.8);
        const int side = i % 4;
        const double off = pick(rng, -40, -18);
        const double run = sa.cruise * spec.duration + 5;
        switch (side) {
            case 0: sa.path = straight_path({off, 9}, {off + run, 9}); break;
            case 1: sa.path = straight_path({-off, -9}, {-off - run, -9}); break;
            case 2: sa.path = straight_path({9, off}, {9, off + run}); break;
            default: sa.path = straight_path({-9, -off}, {-9, -off - run}); break;
        }
        sa.t0 = snap(pick(rng, 0, 4), spec.dt);
        sa.duration = spec.duration;
        actors.push_back(std::move(sa));
    }

    // (b) pedestrians crossing the NS road on the north crosswalk; arrival
    // phase decides wait-at-curb vs immediate crossing
    for (int i = 0; i < spec.crossing_pedestrians; ++i) {
        ScriptedActor sa{.path = straight_path({0, 0}, {1, 0})};
        const bool waits = i % 2 == 0;
        sa.id = std::string(waits ? "ped_wait_" : "ped_go_") + std::to_string(i);
        sa.type = ActorType::pedestrian;
        sa.length = 0.6;
        sa.width = 0.6;
        sa.cruise = pick(rng, 1.0, 1.6);
        const bool eastward = i % 4 < 2;
        if (eastward)
            sa.path = straight_path({-30, 9}, {30, 9});
        else
            sa.path = straight_path({30, 9}, {-30, 9});
        sa.stop_at_s = 30 - 8.5;  // curb before the carriageway
        sa.must_stop = [](double t) { return !crosswalks_active(t); };
        // choose spawn so the curb arrival lands in the desired phase window
        const double arr = waits ? pick(rng, 2.0, 8.0) : pick(rng, 13.5, 19.5);
        const double approach = sa.stop_at_s / sa.cruise;
        double t_arr = arr;
        while (t_arr - approach < 0) t_arr += kCycle;
        sa.t0 = snap(t_arr - approach, spec.dt);
        sa.duration = spec.duration + 6;  // cover the wait and the crossing
        actors.push_back(std::move(sa));
    }

    // (c) bicyclists following lanes, half through, half turning right
    auto add_bike = [&](const std::string& id, const Path& path, double stop_s,
                        std::function<bool(double)> must_stop, double arr_lo, double arr_hi,
                        double duration) {
        ScriptedActor sa{.path = path};
        sa.id = id;
        sa.type = ActorType::bicyclist;
        sa.cruise = pick(rng, 3.0, 7.0);
        sa.stop_at_s = stop_s;
        sa.must_stop = std::move(must_stop);
        const double mark = stop_s >= 0 ? stop_s : path.total / 2;
        const double approach = pick(rng, 3.5, 5.5);
        double t_arr = pick(rng, arr_lo, arr_hi);
        while (t_arr - approach < 0) t_arr += kCycle;
        sa.t0 = snap(t_arr - approach, spec.dt);
        sa.s0 = mark - sa.cruise * approach;
        if (sa.s0 < 0) sa.s0 = 0;
        sa.duration = duration;
        actors.push_back(std::move(sa));
    };

    auto ns_stop = [](double t) { return ns_phase(t) != LightState::green; };
    auto ew_stop = [](double t) { return ew_phase(t) != LightState::green; };

    for (int i = 0; i < spec.through_bicyclists; ++i) {
        // through riders timed to arrive on green, alternating approaches
        switch (i % 4) {
            case 0:
                add_bike("bike_through_" + std::to_string(i), straight_path({2, -70}, {2, 70}),
                         70 - 11, ns_stop, 1.5, 8.0, spec.duration);
                break;
            case 1:
                add_bike("bike_through_" + std::to_string(i), straight_path({-2, 70}, {-2, -70}),
                         70 - 11, ns_stop, 1.5, 8.0, spec.duration);
                break;
            case 2:
                add_bike("bike_through_" + std::to_string(i), straight_path({-70, -2}, {70, -2}),
                         70 - 11, ew_stop, 13.5, 20.0, spec.duration);
                break;
            default:
                add_bike("bike_through_" + std::to_string(i), straight_path({70, 2}, {-70, 2}),
                         70 - 11, ew_stop, 13.5, 20.0, spec.duration);
                break;
        }
    }
    for (int i = 0; i < spec.turning_bicyclists; ++i) {
        if (i % 2 == 0)
            add_bike("bike_turn_" + std::to_string(i), nb_right_turn(), 70 - 11, ns_stop, 1.5, 7.0,
                     spec.duration);
        else
            add_bike("bike_turn_" + std::to_string(i), eb_right_turn(), 70 - 11, ew_stop, 13.5,
                     19.5, spec.duration);
    }

    // (d) red/green paired approaches on the northbound through lane
    for (int i = 0; i < spec.red_light_bicyclists; ++i) {
        const bool red = i % 2 == 0;
        const std::string id = std::string(red ? "bike_red_" : "bike_green_") + std::to_string(i);
        if (red)
            add_bike(id, straight_path({2, -70}, {2, 70}), 70 - 11, ns_stop, 15.0, 20.0,
                     spec.duration + 6);
        else
            add_bike(id, straight_path({2, -70}, {2, 70}), 70 - 11, ns_stop, 2.0, 7.0,
                     spec.duration);
    }

    for (const auto& sa : actors) emit_track(sa, spec.dt, spec.observation_noise, noise_rng,
                                             out.tracks);
    std::sort(out.tracks.begin(), out.tracks.end(), [](const ActorState& a, const ActorState& b) {
        return a.actor_id != b.actor_id ? a.actor_id < b.actor_id : a.t < b.t;
    });

    double t_max = 0;
    for (const auto& s : out.tracks) t_max = std::max(t_max, s.t);
    const int frames = static_cast<int>(std::llround(t_max / spec.dt));
    for (int k = 0; k <= frames; ++k) {
        LightFrame f;
        f.t = k * spec.dt;
        const LightState ns = ns_phase(f.t), ew = ew_phase(f.t);
        f.states = {ns, ns, ew, ew};
        if (!crosswalks_active(f.t)) f.inactive_crosswalks = {0, 1};
        out.lights.push_back(std::move(f));
    }
    return out;
}

void write_scenarios(const GeneratedScenes& g, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_map(g.map, dir + "/map.json");
    save_track_log(g.tracks, dir + "/tracks.jsonl");
    save_light_log(g.lights, dir + "/lights.jsonl");
}

std::string ScenarioSpec::to_json() const {
    json j{{"seed", seed},
           {"dt", dt},
           {"straight_pedestrians", straight_pedestrians},
           {"crossing_pedestrians", crossing_pedestrians},
           {"through_bicyclists", through_bicyclists},
           {"turning_bicyclists", turning_bicyclists},
           {"red_light_bicyclists", red_light_bicyclists},
           {"observation_noise", observation_noise},
           {"duration", duration}};
    return j.dump(2) + "\n";
}

ScenarioSpec ScenarioSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    ScenarioSpec s;
    s.seed = j.value("seed", 0ull);
    s.dt = j.value("dt", kTrackDt);
    s.straight_pedestrians = j.value("straight_pedestrians", 8);
    s.crossing_pedestrians = j.value("crossing_pedestrians", 8);
    s.through_bicyclists = j.value("through_bicyclists", 8);
    s.turning_bicyclists = j.value("turning_bicyclists", 8);
    s.red_light_bicyclists = j.value("red_light_bicyclists", 8);
    s.observation_noise = j.value("observation_noise", 0.0);
    s.duration = j.value("duration", 14.0);
    return s;
}

}  // namespace fmnet
