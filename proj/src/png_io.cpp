#include <zlib.h>

#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "fmnet/raster.hpp"
#include "fmnet/util.hpp"

namespace fmnet {

namespace {

void put_u32(std::string& out, uint32_t v) {
    out.push_back(char(v >> 24));
    out.push_back(char(v >> 16));
    out.push_back(char(v >> 8));
    out.push_back(char(v));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    put_u32(out, static_cast<uint32_t>(crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                                             static_cast<uInt>(body.size()))));
}

std::string deflate_all(const std::string& raw) {
    uLongf cap = compressBound(static_cast<uLong>(raw.size()));
    std::string out(cap, '\0');
    if (compress2(reinterpret_cast<Bytef*>(out.data()), &cap,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(cap);
    return out;
}

void write_png_bytes(const std::string& path, int width, int height, int channels,
                     const std::string& scanlines_top_down) {
    std::string png("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, static_cast<uint32_t>(width));
    put_u32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);          // grayscale or truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", deflate_all(scanlines_top_down));
    put_chunk(png, "IEND", "");
    write_file(path, png);
}

}  // namespace

void write_png(const RasterImage& img, const std::string& path) {
    if (img.channels != 3) throw std::invalid_argument("write_png expects an RGB raster");
    std::string raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + img.width * 3));
    for (int h = img.height - 1; h >= 0; --h) {  // flip: row 0 is the raster bottom
        raw.push_back('\0');                     // filter type none
        for (int w = 0; w < img.width; ++w) {
            const ColorRGB c = img.rgb(w, h);
            raw.push_back(char(c.r));
            raw.push_back(char(c.g));
            raw.push_back(char(c.b));
        }
    }
    write_png_bytes(path, img.width, img.height, 3, raw);
}

void write_channel_pngs(const RasterImage& img, const std::string& path_prefix) {
    for (int c = 0; c < img.channels; ++c) {
        std::string raw;
        raw.reserve(static_cast<size_t>(img.height) * (1 + img.width));
        for (int h = img.height - 1; h >= 0; --h) {
            raw.push_back('\0');
            for (int w = 0; w < img.width; ++w)
                raw.push_back(img.at(w, h, c) ? char(255) : char(0));
        }
        write_png_bytes(path_prefix + "_c" + std::to_string(c) + ".png", img.width, img.height, 1,
                        raw);
    }
}

}  // namespace fmnet
