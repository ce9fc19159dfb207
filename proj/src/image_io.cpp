#include "protoseg/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "protoseg/error.hpp"

namespace protoseg {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& path) {
    try {
        long v = std::stol(tok);
        if (v <= 0) throw Error(ErrorKind::IoError, "non-positive dimension in " + path.string());
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw Error(ErrorKind::IoError, "bad netpbm header in " + path.string());
    }
}

void write_binary(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    os << header;
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace

Raster read_pnm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    const std::string magic = next_token(is);
    Raster r;
    if (magic != "P4" && magic != "P5" && magic != "P6") throw Error(ErrorKind::IoError, "unsupported netpbm type in " + path.string());
    r.width = parse_dim(next_token(is), path);
    r.height = parse_dim(next_token(is), path);
    if (magic == "P4") {
        const std::size_t row_bytes = (r.width + 7) / 8;
        std::vector<std::uint8_t> packed(row_bytes * r.height);
        is.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
        if (static_cast<std::size_t>(is.gcount()) != packed.size()) throw Error(ErrorKind::IoError, "truncated " + path.string());
        r.pixels.resize(r.width * r.height);
        for (std::size_t y = 0; y < r.height; ++y) {
            for (std::size_t x = 0; x < r.width; ++x) {
                const bool black = (packed[y * row_bytes + x / 8] >> (7 - x % 8)) & 1u;
                r.pixels[y * r.width + x] = black ? 255 : 0;  // PBM 1 = ink = foreground
            }
        }
        return r;
    }
    const std::size_t maxval = parse_dim(next_token(is), path);
    if (maxval != 255) throw Error(ErrorKind::IoError, "only 8-bit netpbm supported: " + path.string());
    r.channels = magic == "P6" ? 3 : 1;
    r.pixels.resize(r.width * r.height * r.channels);
    is.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
    if (static_cast<std::size_t>(is.gcount()) != r.pixels.size()) throw Error(ErrorKind::IoError, "truncated " + path.string());
    return r;
}

void write_ppm(const std::filesystem::path& path, const Raster& raster) {
    if (raster.channels != 3) throw Error(ErrorKind::IoError, "PPM needs 3 channels");
    write_binary(path, "P6\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n",
                 raster.pixels);
}

void write_pgm(const std::filesystem::path& path, const Raster& raster) {
    if (raster.channels != 1) throw Error(ErrorKind::IoError, "PGM needs 1 channel");
    write_binary(path, "P5\n" + std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n",
                 raster.pixels);
}

void write_pbm(const std::filesystem::path& path, const BinaryMask& mask) {
    const std::size_t w = mask.width(), h = mask.height(), row_bytes = (w + 7) / 8;
    std::vector<std::uint8_t> packed(row_bytes * h, 0);
    auto v = mask.values().data();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (v[y * w + x] == 1.0) packed[y * row_bytes + x / 8] |= static_cast<std::uint8_t>(1u << (7 - x % 8));
        }
    }
    write_binary(path, "P4\n" + std::to_string(w) + " " + std::to_string(h) + "\n", packed);
}

Tensor raster_to_image(const Raster& raster) {
    if (raster.channels != 3) throw Error(ErrorKind::IoError, "expected an RGB raster");
    const std::size_t plane = raster.width * raster.height;
    Tensor t({3, raster.height, raster.width});
    auto d = t.mutable_data();
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) d[c * plane + p] = raster.pixels[p * 3 + c] / 255.0;
    }
    return t;
}

Raster image_to_raster(const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) throw Error(ErrorKind::ShapeMismatch, "expected 3 x H x W image");
    Raster r{image.dim(2), image.dim(1), 3, {}};
    const std::size_t plane = r.width * r.height;
    r.pixels.resize(plane * 3);
    auto d = image.data();
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) r.pixels[p * 3 + c] = quantize(d[c * plane + p]);
    }
    return r;
}

BinaryMask raster_to_mask(const Raster& raster) {
    if (raster.channels != 1) throw Error(ErrorKind::IoError, "expected a gray raster for a mask");
    Tensor t({raster.height, raster.width});
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = raster.pixels[i] >= 128 ? 1.0 : 0.0;
    return BinaryMask(std::move(t));
}

Raster mask_to_raster(const BinaryMask& mask) {
    Raster r{mask.width(), mask.height(), 1, {}};
    for (double v : mask.values().data()) r.pixels.push_back(v == 1.0 ? 255 : 0);
    return r;
}

Raster signed_map_to_raster(const Tensor& map) {
    if (map.ndim() != 2) throw Error(ErrorKind::ShapeMismatch, "expected H x W map");
    Raster r{map.dim(1), map.dim(0), 1, {}};
    for (double v : map.data()) r.pixels.push_back(quantize((v + 1.0) / 2.0));
    return r;
}

Tensor read_image(const std::filesystem::path& path) { return raster_to_image(read_pnm(path)); }

BinaryMask read_mask(const std::filesystem::path& path) { return raster_to_mask(read_pnm(path)); }

}  // namespace protoseg
