#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fmnet {

constexpr double kPi = 3.14159265358979323846;

// Normalize an angle to [-pi, pi).
inline double normalize_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0) a += 2.0 * kPi;
    return a - kPi;
}

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(Point2 a, double s) { return {a.x * s, a.y * s}; }
inline double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Pose {
    Point2 position;
    double heading = 0.0;  // radians CCW from world +x, in [-pi, pi)

    static Pose make(Point2 p, double heading) { return Pose{p, normalize_angle(heading)}; }
};

// Actor-centric frame: origin at the bounding-box centroid, +x forward, +y left.
struct ActorFrame {
    Point2 origin;
    double heading = 0.0;

    static ActorFrame from_pose(const Pose& p) { return ActorFrame{p.position, p.heading}; }
};

// R(-heading) * (p - origin)
inline Point2 world_to_actor(Point2 p, const ActorFrame& f) {
    const double c = std::cos(f.heading), s = std::sin(f.heading);
    const Point2 d = p - f.origin;
    return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

inline Point2 actor_to_world(Point2 p, const ActorFrame& f) {
    const double c = std::cos(f.heading), s = std::sin(f.heading);
    return {f.origin.x + c * p.x - s * p.y, f.origin.y + s * p.x + c * p.y};
}

// The geometric part of a raster configuration; the raster module layers
// colors and layer toggles on top of this.
struct RasterFraming {
    int size_px = 300;
    double resolution = 0.2;  // meters per pixel
    bool rotated = true;      // actor heading points toward increasing h

    // Target actor placement, (w, h) measured from the bottom-left corner.
    int target_w() const { return size_px / 2; }
    int target_h() const { return rotated ? size_px / 6 : size_px / 2; }
};

struct PixelCoord {
    int w = 0;  // from the left edge
    int h = 0;  // from the bottom edge
};

// Continuous pixel coordinates of a world point in the raster of `target`.
// Rotated rasters put the target forward direction along +h; unrotated
// rasters keep world north along +h. May fall outside [0, n); callers clip.
inline void world_to_pixel_continuous(Point2 p, const ActorFrame& target,
                                      const RasterFraming& cfg, double& wc, double& hc) {
    if (cfg.resolution <= 0.0) throw std::invalid_argument("raster resolution must be > 0");
    if (cfg.rotated) {
        const Point2 a = world_to_actor(p, target);
        // actor +x (forward) -> up, actor +y (left) -> image left
        wc = cfg.target_w() - a.y / cfg.resolution;
        hc = cfg.target_h() + a.x / cfg.resolution;
    } else {
        wc = cfg.target_w() + (p.x - target.origin.x) / cfg.resolution;
        hc = cfg.target_h() + (p.y - target.origin.y) / cfg.resolution;
    }
}

// Pixel assignment floors the continuous coordinate; a point exactly on a
// pixel boundary belongs to the higher-index pixel.
inline PixelCoord world_to_pixel(Point2 p, const ActorFrame& target, const RasterFraming& cfg) {
    double wc, hc;
    world_to_pixel_continuous(p, target, cfg, wc, hc);
    return {static_cast<int>(std::floor(wc)), static_cast<int>(std::floor(hc))};
}

// Future positions expressed in the frame of the actor at prediction time.
struct Trajectory {
    std::vector<Point2> points;

    size_t size() const { return points.size(); }
};

}  // namespace fmnet
