#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fmnet/geom.hpp"

namespace fmnet {

// Tracker cadence; the repo-wide timestep.
constexpr double kTrackDt = 0.1;

enum class ActorType { pedestrian, bicyclist, vehicle };

const char* to_string(ActorType t);
ActorType actor_type_from_string(const std::string& s);

enum class LightState { red, yellow, green, unknown };

const char* to_string(LightState s);
LightState light_state_from_string(const std::string& s);

// One tracker output row.
struct ActorState {
    std::string actor_id;
    double t = 0.0;
    Pose pose;
    double velocity = 0.0;             // m/s, signed scalar along heading
    double acceleration = 0.0;         // m/s^2
    double heading_change_rate = 0.0;  // rad/s
    double length = 0.0;               // bounding box, meters
    double width = 0.0;
    ActorType type = ActorType::pedestrian;

    ActorFrame frame() const { return ActorFrame::from_pose(pose); }
};

enum class LayerType {
    road_polygon,
    driveway,
    crosswalk,
    lane_line,
    actor_box,
    target_actor_box,
    traffic_light_marker,
};
constexpr int kNumLayerTypes = 7;

const char* to_string(LayerType t);

struct Polygon {
    std::vector<Point2> pts;
};

struct LaneLine {
    std::vector<Point2> pts;
    double direction = 0.0;  // radians, world frame, normalized
};

struct Crosswalk {
    Polygon poly;
    bool active = true;  // static default; per-frame state may override
};

struct TrafficLightPoint {
    Point2 position;
    int lane = -1;
};

struct SceneMap {
    std::vector<Polygon> roads;
    std::vector<Polygon> driveways;
    std::vector<Crosswalk> crosswalks;
    std::vector<LaneLine> lanes;
    std::vector<TrafficLightPoint> lights;
};

// Per-frame dynamic state: one light state per control point in map order,
// plus indices of crosswalks that are currently inactive.
struct LightFrame {
    double t = 0.0;
    std::vector<LightState> states;
    std::vector<int> inactive_crosswalks;
};

// One labeled prediction example: the target actor at t_j, every actor
// tracked at t_j, a short history for the auxiliary features, and H future
// positions in the t_j actor frame.
struct Example {
    ActorState target;
    std::vector<ActorState> context;  // all actors at t_j, target included
    std::vector<ActorState> past;     // oldest..current, padded at the front
    Trajectory ground_truth;
    int light_frame = -1;  // index into the light-frame table, -1 if none
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SceneMap load_map(const std::string& path);
void save_map(const SceneMap& map, const std::string& path);
std::string serialize_map(const SceneMap& map);

std::vector<ActorState> load_track_log(const std::string& path);
void save_track_log(const std::vector<ActorState>& states, const std::string& path);
std::string serialize_track_line(const ActorState& s);

std::vector<LightFrame> load_light_log(const std::string& path);
void save_light_log(const std::vector<LightFrame>& frames, const std::string& path);

struct WindowOptions {
    int horizon = 60;
    double dt = kTrackDt;
    int past_steps = 4;    // history length for auxiliary features
    int stride = 1;        // subsample t_j to control example counts
};

struct ExampleSet {
    std::vector<Example> examples;
    int skipped_windows = 0;  // windows dropped because of track gaps
};

// Sliding-window extraction over a (actor_id, t)-sorted track log. Actors
// with fewer than horizon future observations at t_j contribute nothing;
// missing timesteps invalidate the windows that would span them.
ExampleSet make_examples(const std::vector<ActorState>& log,
                         const std::vector<LightFrame>& lights,
                         const WindowOptions& opt);

}  // namespace fmnet
