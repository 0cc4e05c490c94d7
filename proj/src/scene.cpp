#include "fmnet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fmnet/util.hpp"
#include "json.hpp"

namespace fmnet {

using nlohmann::json;

const char* to_string(ActorType t) {
    switch (t) {
        case ActorType::pedestrian: return "pedestrian";
        case ActorType::bicyclist: return "bicyclist";
        case ActorType::vehicle: return "vehicle";
    }
    return "?";
}

ActorType actor_type_from_string(const std::string& s) {
    if (s == "pedestrian") return ActorType::pedestrian;
    if (s == "bicyclist") return ActorType::bicyclist;
    if (s == "vehicle") return ActorType::vehicle;
    throw ParseError("unknown actor type: " + s);
}

const char* to_string(LightState s) {
    switch (s) {
        case LightState::red: return "red";
        case LightState::yellow: return "yellow";
        case LightState::green: return "green";
        case LightState::unknown: return "unknown";
    }
    return "?";
}

LightState light_state_from_string(const std::string& s) {
    if (s == "red") return LightState::red;
    if (s == "yellow") return LightState::yellow;
    if (s == "green") return LightState::green;
    if (s == "unknown") return LightState::unknown;
    throw ParseError("unknown light state: " + s);
}

const char* to_string(LayerType t) {
    switch (t) {
        case LayerType::road_polygon: return "road_polygon";
        case LayerType::driveway: return "driveway";
        case LayerType::crosswalk: return "crosswalk";
        case LayerType::lane_line: return "lane_line";
        case LayerType::actor_box: return "actor_box";
        case LayerType::target_actor_box: return "target_actor_box";
        case LayerType::traffic_light_marker: return "traffic_light_marker";
    }
    return "?";
}

namespace {

// cross-product orientation test; polygons must be simple with >= 3 vertices
bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
    auto cross = [](Point2 o, Point2 p, Point2 q) {
        return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    };
    double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

void validate_polygon(const Polygon& p, const std::string& what) {
    if (p.pts.size() < 3)
        throw ValidationError(what + ": polygon needs at least 3 vertices");
    for (const auto& v : p.pts)
        if (!std::isfinite(v.x) || !std::isfinite(v.y))
            throw ValidationError(what + ": non-finite vertex");
    const size_t n = p.pts.size();
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // skip adjacent edges (shared endpoint)
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (segments_intersect(p.pts[i], p.pts[(i + 1) % n], p.pts[j], p.pts[(j + 1) % n]))
                throw ValidationError(what + ": self-intersecting polygon");
        }
    }
}

std::vector<Point2> parse_points(const json& arr, const std::string& what) {
    std::vector<Point2> pts;
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2)
            throw ParseError(what + ": coordinate must be [x, y]");
        pts.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return pts;
}

json points_json(const std::vector<Point2>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back({p.x, p.y});
    return arr;
}

}  // namespace

SceneMap load_map(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError("map " + path + ": " + e.what());
    }
    SceneMap map;
    if (!doc.contains("layers") || !doc["layers"].is_object())
        throw ParseError("map " + path + ": missing \"layers\" object");
    const json& layers = doc["layers"];
    for (auto it = layers.begin(); it != layers.end(); ++it) {
        const std::string& type = it.key();
        int idx = 0;
        for (const auto& el : it.value()) {
            const std::string where = type + "[" + std::to_string(idx++) + "]";
            if (type == "road_polygon" || type == "driveway") {
                if (!el.contains("polygon")) throw ParseError(where + ": missing \"polygon\"");
                Polygon poly{parse_points(el["polygon"], where)};
                validate_polygon(poly, where);
                (type == "road_polygon" ? map.roads : map.driveways).push_back(std::move(poly));
            } else if (type == "crosswalk") {
                if (!el.contains("polygon")) throw ParseError(where + ": missing \"polygon\"");
                Crosswalk cw;
                cw.poly = Polygon{parse_points(el["polygon"], where)};
                validate_polygon(cw.poly, where);
                if (el.contains("attrs") && el["attrs"].contains("active"))
                    cw.active = el["attrs"]["active"].get<bool>();
                map.crosswalks.push_back(std::move(cw));
            } else if (type == "lane_line") {
                if (!el.contains("polyline")) throw ParseError(where + ": missing \"polyline\"");
                LaneLine lane;
                lane.pts = parse_points(el["polyline"], where);
                if (lane.pts.size() < 2)
                    throw ValidationError(where + ": polyline needs at least 2 points");
                if (!el.contains("attrs") || !el["attrs"].contains("direction"))
                    throw ValidationError(where + ": lane_line requires attrs.direction");
                lane.direction = normalize_angle(el["attrs"]["direction"].get<double>());
                map.lanes.push_back(std::move(lane));
            } else {
                throw ParseError("map " + path + ": unknown layer type \"" + type + "\"");
            }
        }
    }
    if (doc.contains("traffic_lights")) {
        for (const auto& tl : doc["traffic_lights"]) {
            TrafficLightPoint p;
            if (!tl.contains("position")) throw ParseError("traffic light: missing position");
            p.position = {tl["position"][0].get<double>(), tl["position"][1].get<double>()};
            p.lane = tl.value("lane", -1);
            map.lights.push_back(p);
        }
    }
    return map;
}

std::string serialize_map(const SceneMap& map) {
    json layers = json::object();
    auto poly_entry = [](const Polygon& p) { return json{{"polygon", points_json(p.pts)}}; };
    if (!map.roads.empty()) {
        layers["road_polygon"] = json::array();
        for (const auto& r : map.roads) layers["road_polygon"].push_back(poly_entry(r));
    }
    if (!map.driveways.empty()) {
        layers["driveway"] = json::array();
        for (const auto& d : map.driveways) layers["driveway"].push_back(poly_entry(d));
    }
    if (!map.crosswalks.empty()) {
        layers["crosswalk"] = json::array();
        for (const auto& c : map.crosswalks) {
            json e = poly_entry(c.poly);
            e["attrs"] = {{"active", c.active}};
            layers["crosswalk"].push_back(e);
        }
    }
    if (!map.lanes.empty()) {
        layers["lane_line"] = json::array();
        for (const auto& l : map.lanes) {
            json e{{"polyline", points_json(l.pts)}};
            e["attrs"] = {{"direction", l.direction}};
            layers["lane_line"].push_back(e);
        }
    }
    json doc{{"layers", layers}};
    doc["traffic_lights"] = json::array();
    for (const auto& tl : map.lights)
        doc["traffic_lights"].push_back(
            {{"position", {tl.position.x, tl.position.y}}, {"lane", tl.lane}});
    return doc.dump(2) + "\n";
}

void save_map(const SceneMap& map, const std::string& path) {
    write_file(path, serialize_map(map));
}

std::string serialize_track_line(const ActorState& s) {
    json j{{"actor_id", s.actor_id},
           {"t", s.t},
           {"x", s.pose.position.x},
           {"y", s.pose.position.y},
           {"heading", s.pose.heading},
           {"v", s.velocity},
           {"a", s.acceleration},
           {"hcr", s.heading_change_rate},
           {"length", s.length},
           {"width", s.width},
           {"type", to_string(s.type)}};
    return j.dump();
}

std::vector<ActorState> load_track_log(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<ActorState> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("track log " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            ActorState s;
            s.actor_id = j.at("actor_id").get<std::string>();
            s.t = j.at("t").get<double>();
            s.pose = Pose::make({j.at("x").get<double>(), j.at("y").get<double>()},
                                j.at("heading").get<double>());
            s.velocity = j.at("v").get<double>();
            s.acceleration = j.at("a").get<double>();
            s.heading_change_rate = j.at("hcr").get<double>();
            s.length = j.at("length").get<double>();
            s.width = j.at("width").get<double>();
            s.type = actor_type_from_string(j.at("type").get<std::string>());
            if (s.length <= 0 || s.width <= 0)
                throw ValidationError("bounding box dimensions must be positive");
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError("track log " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_track_log(const std::vector<ActorState>& states, const std::string& path) {
    std::string out;
    for (const auto& s : states) {
        out += serialize_track_line(s);
        out += '\n';
    }
    write_file(path, out);
}

std::vector<LightFrame> load_light_log(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<LightFrame> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("light log " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        LightFrame f;
        f.t = j.at("t").get<double>();
        for (const auto& s : j.at("states")) f.states.push_back(light_state_from_string(s));
        if (j.contains("inactive_crosswalks"))
            for (const auto& i : j["inactive_crosswalks"]) f.inactive_crosswalks.push_back(i);
        out.push_back(std::move(f));
    }
    return out;
}

void save_light_log(const std::vector<LightFrame>& frames, const std::string& path) {
    std::string out;
    for (const auto& f : frames) {
        json states = json::array();
        for (auto s : f.states) states.push_back(to_string(s));
        json j{{"t", f.t}, {"states", states}, {"inactive_crosswalks", f.inactive_crosswalks}};
        out += j.dump();
        out += '\n';
    }
    write_file(path, out);
}

ExampleSet make_examples(const std::vector<ActorState>& log, const std::vector<LightFrame>& lights,
                         const WindowOptions& opt) {
    // group by actor; log is (actor_id, t)-sorted
    std::map<std::string, std::vector<const ActorState*>> by_actor;
    for (const auto& s : log) by_actor[s.actor_id].push_back(&s);

    // index of all actors per timestep for context assembly
    std::map<long long, std::vector<const ActorState*>> by_step;
    auto step_of = [&](double t) { return std::llround(t / opt.dt); };
    for (const auto& s : log) by_step[step_of(s.t)].push_back(&s);

    auto light_index = [&](double t) -> int {
        for (size_t i = 0; i < lights.size(); ++i)
            if (std::abs(lights[i].t - t) < opt.dt / 2) return static_cast<int>(i);
        return -1;
    };

    ExampleSet out;
    const double gap_tol = opt.dt * 0.5;
    for (auto& [id, track] : by_actor) {
        const int n = static_cast<int>(track.size());
        // timestamps must be strictly increasing; mark gap positions
        std::vector<bool> gap_after(n, false);
        bool has_gap = false;
        for (int i = 0; i + 1 < n; ++i) {
            const double d = track[i + 1]->t - track[i]->t;
            if (d <= 0) throw ValidationError("track " + id + ": timestamps not increasing");
            if (std::abs(d - opt.dt) > gap_tol) {
                gap_after[i] = true;
                has_gap = true;
            }
        }
        for (int j = 0; j < n - opt.horizon; j += opt.stride) {
            bool gapped = false;
            if (has_gap)
                for (int k = j; k < j + opt.horizon && !gapped; ++k) gapped = gap_after[k];
            if (gapped) {
                ++out.skipped_windows;
                continue;
            }
            Example ex;
            ex.target = *track[j];
            const ActorFrame frame = ex.target.frame();
            ex.ground_truth.points.reserve(opt.horizon);
            for (int k = 1; k <= opt.horizon; ++k)
                ex.ground_truth.points.push_back(
                    world_to_actor(track[j + k]->pose.position, frame));
            // history padded at the front with the oldest available state
            for (int k = opt.past_steps; k >= 0; --k) {
                int idx = j - k;
                if (idx < 0) idx = 0;
                // a gap inside the past window repeats the newest pre-gap state
                ex.past.push_back(*track[idx]);
            }
            for (const ActorState* s : by_step[step_of(ex.target.t)]) ex.context.push_back(*s);
            ex.light_frame = light_index(ex.target.t);
            out.examples.push_back(std::move(ex));
        }
    }
    return out;
}

}  // namespace fmnet
