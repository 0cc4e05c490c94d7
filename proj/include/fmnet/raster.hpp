#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fmnet/geom.hpp"
#include "fmnet/scene.hpp"

namespace fmnet {

struct ColorRGB {
    uint8_t r = 0, g = 0, b = 0;
    bool operator==(const ColorRGB&) const = default;
};

// Manual layer colors. Exact values are a convention; they only need to be
// mutually distinct.
struct ColorTable {
    ColorRGB background{0, 0, 0};
    ColorRGB road{64, 64, 64};
    ColorRGB driveway{96, 72, 48};
    ColorRGB crosswalk{255, 0, 255};
    ColorRGB inactive_crosswalk{0, 255, 0};
    ColorRGB lane{128, 128, 128};  // used when lane-heading encoding is off
    ColorRGB other_actor{255, 255, 0};
    ColorRGB target_actor{255, 0, 0};
    ColorRGB light_unknown{128, 128, 255};
};

enum class ColorMode { manual_rgb, multichannel_binary };

struct RasterConfig {
    int n = 300;
    double resolution = 0.2;  // m/px; the study sweeps {0.1, 0.2, 0.3}
    bool rotated = true;
    bool encode_lane_heading = true;
    bool encode_traffic_lights = true;
    ColorMode color_mode = ColorMode::manual_rgb;
    ColorTable colors;

    RasterFraming framing() const { return RasterFraming{n, resolution, rotated}; }
    int target_w() const { return framing().target_w(); }
    int target_h() const { return framing().target_h(); }

    void validate() const;
};

// Row 0 is the bottom of the image; channel-major-last layout.
struct RasterImage {
    int width = 0, height = 0, channels = 3;
    std::vector<uint8_t> data;

    static RasterImage make(int w, int h, int c, uint8_t fill = 0) {
        RasterImage img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.data.assign(static_cast<size_t>(w) * h * c, fill);
        return img;
    }
    uint8_t& at(int w, int h, int c) {
        return data[(static_cast<size_t>(h) * width + w) * channels + c];
    }
    uint8_t at(int w, int h, int c) const {
        return data[(static_cast<size_t>(h) * width + w) * channels + c];
    }
    void set_rgb(int w, int h, ColorRGB col) {
        uint8_t* p = &data[(static_cast<size_t>(h) * width + w) * channels];
        p[0] = col.r;
        p[1] = col.g;
        p[2] = col.b;
    }
    ColorRGB rgb(int w, int h) const {
        const uint8_t* p = &data[(static_cast<size_t>(h) * width + w) * channels];
        return {p[0], p[1], p[2]};
    }
};

// h in [0,360), s and v in [0,1]; rounds to the nearest u8.
ColorRGB hsv_to_rgb(double h, double s, double v);

// Lane color for a direction expressed in the raster frame (after rotation
// when the raster is rotated). Heading encoding maps [0,2pi) linearly onto
// the hue circle at full saturation and value.
ColorRGB lane_color(double raster_frame_direction, const RasterConfig& cfg);

ColorRGB light_color(LightState s, const ColorTable& colors);

// --- rendering primitives (pixel-space geometry) ---

// Scanline fill sampling pixel centers with the half-open convention from the
// geometry module. Degenerate polygons (<3 distinct vertices) are skipped and
// counted in `warnings` when provided.
void fill_polygon(const std::vector<Point2>& pts_px, RasterImage& img, ColorRGB color,
                  int* warnings = nullptr);
void fill_polygon_channel(const std::vector<Point2>& pts_px, RasterImage& img, int channel,
                          int* warnings = nullptr);

void draw_polyline(const std::vector<Point2>& pts_px, double width_px, RasterImage& img,
                   ColorRGB color);
void draw_polyline_channel(const std::vector<Point2>& pts_px, double width_px, RasterImage& img,
                           int channel);

void draw_circle(Point2 center_px, double radius_px, RasterImage& img, ColorRGB color);
void draw_circle_channel(Point2 center_px, double radius_px, RasterImage& img, int channel);

// --- full scene rasterization ---

// Paint order, large areas first: road, driveway, crosswalk (inactive ones
// green when traffic lights are encoded), lane lines, light markers, other
// actor boxes, then the target box last.
RasterImage rasterize(const SceneMap& map, const std::vector<ActorState>& actors,
                      const ActorState& target, const RasterConfig& cfg,
                      const LightFrame* lights = nullptr);

// One binary channel per vector layer type, no inter-layer occlusion.
RasterImage rasterize_multichannel(const SceneMap& map, const std::vector<ActorState>& actors,
                                   const ActorState& target, const RasterConfig& cfg,
                                   const LightFrame* lights = nullptr);

// PNG export; raster rows are bottom-up and are flipped to conventional
// top-down order on disk. Multichannel images export one PNG per channel.
void write_png(const RasterImage& img, const std::string& path);
void write_channel_pngs(const RasterImage& img, const std::string& path_prefix);

}  // namespace fmnet
