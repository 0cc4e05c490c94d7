#include "fmnet/raster.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace fmnet {

void RasterConfig::validate() const {
    if (n <= 0) throw std::invalid_argument("raster size must be positive");
    if (resolution <= 0.0) throw std::invalid_argument("raster resolution must be > 0");
    if (target_w() < 0 || target_w() >= n || target_h() < 0 || target_h() >= n)
        throw std::invalid_argument("target placement outside the image");
}

ColorRGB hsv_to_rgb(double h, double s, double v) {
    if (h < 0.0 || h >= 360.0 || s < 0.0 || s > 1.0 || v < 0.0 || v > 1.0)
        throw std::invalid_argument("hsv_to_rgb: input out of range");
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    auto u8 = [](double f) { return static_cast<uint8_t>(std::lround(f * 255.0)); };
    return {u8(r + m), u8(g + m), u8(b + m)};
}

ColorRGB lane_color(double raster_frame_direction, const RasterConfig& cfg) {
    if (!cfg.encode_lane_heading) return cfg.colors.lane;
    double a = normalize_angle(raster_frame_direction);
    if (a < 0) a += 2.0 * kPi;  // [0, 2pi)
    double hue = a * 180.0 / kPi;
    if (hue >= 360.0) hue = 0.0;
    return hsv_to_rgb(hue, 1.0, 1.0);
}

ColorRGB light_color(LightState s, const ColorTable& colors) {
    switch (s) {
        case LightState::red: return {255, 0, 0};
        case LightState::yellow: return {255, 255, 0};
        case LightState::green: return {0, 255, 0};
        case LightState::unknown: return colors.light_unknown;
    }
    return colors.light_unknown;
}

namespace {

// Heckbert-style scanline fill sampling pixel centers: row y is sampled at
// y + 0.5 and covers x in [ceil(xl - 0.5), floor(xr - 0.5)].
void scan_polygon(const std::vector<Point2>& pts, int width, int height,
                  const std::function<void(int x, int y)>& emit, int* warnings) {
    std::vector<Point2> poly;
    for (const auto& p : pts)
        if (poly.empty() || std::abs(p.x - poly.back().x) > 1e-12 ||
            std::abs(p.y - poly.back().y) > 1e-12)
            poly.push_back(p);
    if (poly.size() > 1 && std::abs(poly.front().x - poly.back().x) < 1e-12 &&
        std::abs(poly.front().y - poly.back().y) < 1e-12)
        poly.pop_back();
    if (poly.size() < 3) {
        if (warnings) ++(*warnings);
        return;
    }

    double ymin = poly[0].y, ymax = poly[0].y;
    for (const auto& p : poly) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    int y0 = std::max(0, static_cast<int>(std::ceil(ymin - 0.5)));
    int y1 = std::min(height - 1, static_cast<int>(std::floor(ymax - 0.5)));
    const size_t n = poly.size();
    std::vector<double> xs;
    for (int y = y0; y <= y1; ++y) {
        const double sy = y + 0.5;
        xs.clear();
        for (size_t i = 0; i < n; ++i) {
            const Point2 a = poly[i], b = poly[(i + 1) % n];
            if ((a.y <= sy && b.y > sy) || (b.y <= sy && a.y > sy))
                xs.push_back(a.x + (sy - a.y) / (b.y - a.y) * (b.x - a.x));
        }
        std::sort(xs.begin(), xs.end());
        for (size_t i = 0; i + 1 < xs.size(); i += 2) {
            int xl = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
            int xr = std::min(width - 1, static_cast<int>(std::floor(xs[i + 1] - 0.5)));
            for (int x = xl; x <= xr; ++x) emit(x, y);
        }
    }
}

void plot_segment(Point2 a, Point2 b, int width, int height,
                  const std::function<void(int x, int y)>& emit) {
    int x0 = static_cast<int>(std::floor(a.x)), y0 = static_cast<int>(std::floor(a.y));
    int x1 = static_cast<int>(std::floor(b.x)), y1 = static_cast<int>(std::floor(b.y));
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && x0 < width && y0 >= 0 && y0 < height) emit(x0, y0);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void stroke_polyline(const std::vector<Point2>& pts, double width_px, int width, int height,
                     const std::function<void(int x, int y)>& emit) {
    if (pts.size() < 2) return;
    if (width_px <= 1.0) {
        for (size_t i = 0; i + 1 < pts.size(); ++i)
            plot_segment(pts[i], pts[i + 1], width, height, emit);
        return;
    }
    const double hw = width_px / 2.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        const Point2 a = pts[i], b = pts[i + 1];
        const double len = dist(a, b);
        if (len < 1e-9) continue;
        const Point2 d{(b.x - a.x) / len, (b.y - a.y) / len};
        const Point2 nrm{-d.y * hw, d.x * hw};
        std::vector<Point2> quad{{a.x + nrm.x, a.y + nrm.y},
                                 {b.x + nrm.x, b.y + nrm.y},
                                 {b.x - nrm.x, b.y - nrm.y},
                                 {a.x - nrm.x, a.y - nrm.y}};
        scan_polygon(quad, width, height, emit, nullptr);
    }
}

void stamp_circle(Point2 c, double radius_px, int width, int height,
                  const std::function<void(int x, int y)>& emit) {
    if (radius_px <= 0.0) {
        int x = static_cast<int>(std::floor(c.x)), y = static_cast<int>(std::floor(c.y));
        if (x >= 0 && x < width && y >= 0 && y < height) emit(x, y);
        return;
    }
    int x0 = std::max(0, static_cast<int>(std::floor(c.x - radius_px)));
    int x1 = std::min(width - 1, static_cast<int>(std::ceil(c.x + radius_px)));
    int y0 = std::max(0, static_cast<int>(std::floor(c.y - radius_px)));
    int y1 = std::min(height - 1, static_cast<int>(std::ceil(c.y + radius_px)));
    const double r2 = radius_px * radius_px;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
            if (dx * dx + dy * dy <= r2) emit(x, y);
        }
}

}  // namespace

void fill_polygon(const std::vector<Point2>& pts_px, RasterImage& img, ColorRGB color,
                  int* warnings) {
    scan_polygon(pts_px, img.width, img.height,
                 [&](int x, int y) { img.set_rgb(x, y, color); }, warnings);
}

void fill_polygon_channel(const std::vector<Point2>& pts_px, RasterImage& img, int channel,
                          int* warnings) {
    scan_polygon(pts_px, img.width, img.height,
                 [&](int x, int y) { img.at(x, y, channel) = 1; }, warnings);
}

void draw_polyline(const std::vector<Point2>& pts_px, double width_px, RasterImage& img,
                   ColorRGB color) {
    stroke_polyline(pts_px, width_px, img.width, img.height,
                    [&](int x, int y) { img.set_rgb(x, y, color); });
}

void draw_polyline_channel(const std::vector<Point2>& pts_px, double width_px, RasterImage& img,
                           int channel) {
    stroke_polyline(pts_px, width_px, img.width, img.height,
                    [&](int x, int y) { img.at(x, y, channel) = 1; });
}

void draw_circle(Point2 center_px, double radius_px, RasterImage& img, ColorRGB color) {
    stamp_circle(center_px, radius_px, img.width, img.height,
                 [&](int x, int y) { img.set_rgb(x, y, color); });
}

void draw_circle_channel(Point2 center_px, double radius_px, RasterImage& img, int channel) {
    stamp_circle(center_px, radius_px, img.width, img.height,
                 [&](int x, int y) { img.at(x, y, channel) = 1; });
}

namespace {

std::vector<Point2> to_pixels(const std::vector<Point2>& world, const ActorFrame& frame,
                              const RasterFraming& framing) {
    std::vector<Point2> px;
    px.reserve(world.size());
    for (const auto& p : world) {
        double wc, hc;
        world_to_pixel_continuous(p, frame, framing, wc, hc);
        px.push_back({wc, hc});
    }
    return px;
}

std::vector<Point2> actor_box_world(const ActorState& s) {
    const double hl = s.length / 2.0, hw = s.width / 2.0;
    const ActorFrame f = s.frame();
    return {actor_to_world({hl, hw}, f), actor_to_world({hl, -hw}, f),
            actor_to_world({-hl, -hw}, f), actor_to_world({-hl, hw}, f)};
}

// direction of a lane in the raster frame (hue source)
double raster_frame_direction(double world_dir, const ActorFrame& target,
                              const RasterConfig& cfg) {
    if (!cfg.rotated) return world_dir;
    // rotated rasters put the target heading along +h (the image "up");
    // measure directions from the +w axis so "up" is pi/2.
    return normalize_angle(world_dir - target.heading + kPi / 2.0);
}

struct Painter {
    const SceneMap& map;
    const std::vector<ActorState>& actors;
    const ActorState& target;
    const RasterConfig& cfg;
    const LightFrame* lights;
    RasterImage& img;
    bool binary;  // channel mode

    void paint_polygon(const std::vector<Point2>& world, ColorRGB color, LayerType layer) {
        const auto px = to_pixels(world, target.frame(), cfg.framing());
        if (binary)
            fill_polygon_channel(px, img, static_cast<int>(layer));
        else
            fill_polygon(px, img, color);
    }

    bool crosswalk_inactive(size_t index) const {
        if (lights) {
            for (int i : lights->inactive_crosswalks)
                if (i == static_cast<int>(index)) return true;
            return false;
        }
        return !map.crosswalks[index].active;
    }

    void run() {
        for (const auto& r : map.roads) paint_polygon(r.pts, cfg.colors.road, LayerType::road_polygon);
        for (const auto& d : map.driveways)
            paint_polygon(d.pts, cfg.colors.driveway, LayerType::driveway);
        for (size_t i = 0; i < map.crosswalks.size(); ++i) {
            ColorRGB c = cfg.colors.crosswalk;
            if (cfg.encode_traffic_lights && crosswalk_inactive(i))
                c = cfg.colors.inactive_crosswalk;
            paint_polygon(map.crosswalks[i].poly.pts, c, LayerType::crosswalk);
        }
        for (const auto& lane : map.lanes) {
            const auto px = to_pixels(lane.pts, target.frame(), cfg.framing());
            if (binary) {
                draw_polyline_channel(px, 1.0, img, static_cast<int>(LayerType::lane_line));
            } else {
                const double dir = raster_frame_direction(lane.direction, target.frame(), cfg);
                draw_polyline(px, 1.0, img, lane_color(dir, cfg));
            }
        }
        if (cfg.encode_traffic_lights) {
            const double radius_px = std::max(2.0, 1.0 / cfg.resolution);
            for (size_t i = 0; i < map.lights.size(); ++i) {
                double wc, hc;
                world_to_pixel_continuous(map.lights[i].position, target.frame(), cfg.framing(),
                                          wc, hc);
                LightState st = LightState::unknown;
                if (lights && i < lights->states.size()) st = lights->states[i];
                if (binary)
                    draw_circle_channel({wc, hc}, radius_px, img,
                                        static_cast<int>(LayerType::traffic_light_marker));
                else
                    draw_circle({wc, hc}, radius_px, img, light_color(st, cfg.colors));
            }
        }
        for (const auto& a : actors) {
            if (a.actor_id == target.actor_id) continue;
            paint_polygon(actor_box_world(a), cfg.colors.other_actor, LayerType::actor_box);
        }
        paint_polygon(actor_box_world(target), cfg.colors.target_actor,
                      LayerType::target_actor_box);
    }
};

const ActorState* find_target(const std::vector<ActorState>& actors, const ActorState& target) {
    for (const auto& a : actors)
        if (a.actor_id == target.actor_id) return &a;
    return nullptr;
}

}  // namespace

RasterImage rasterize(const SceneMap& map, const std::vector<ActorState>& actors,
                      const ActorState& target, const RasterConfig& cfg,
                      const LightFrame* lights) {
    cfg.validate();
    if (!find_target(actors, target))
        throw std::invalid_argument("rasterize: target actor not present in the frame");
    RasterImage img = RasterImage::make(cfg.n, cfg.n, 3);
    if (!(cfg.colors.background == ColorRGB{0, 0, 0}))
        for (int h = 0; h < cfg.n; ++h)
            for (int w = 0; w < cfg.n; ++w) img.set_rgb(w, h, cfg.colors.background);
    Painter{map, actors, target, cfg, lights, img, false}.run();
    return img;
}

RasterImage rasterize_multichannel(const SceneMap& map, const std::vector<ActorState>& actors,
                                   const ActorState& target, const RasterConfig& cfg,
                                   const LightFrame* lights) {
    cfg.validate();
    if (!find_target(actors, target))
        throw std::invalid_argument("rasterize: target actor not present in the frame");
    RasterImage img = RasterImage::make(cfg.n, cfg.n, kNumLayerTypes);
    Painter{map, actors, target, cfg, lights, img, true}.run();
    return img;
}

}  // namespace fmnet
