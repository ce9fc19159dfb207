#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "protoseg/mask.hpp"
#include "protoseg/tensor.hpp"

namespace protoseg {

/// 8-bit raster, channel-interleaved as stored in the netpbm formats.
struct Raster {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

Raster read_pnm(const std::filesystem::path& path);  // P4, P5 or P6
void write_ppm(const std::filesystem::path& path, const Raster& raster);  // P6
void write_pgm(const std::filesystem::path& path, const Raster& raster);  // P5
void write_pbm(const std::filesystem::path& path, const BinaryMask& mask);  // P4

/// 3 x H x W tensor in [0, 1] from an RGB raster and back (values rounded).
Tensor raster_to_image(const Raster& raster);
Raster image_to_raster(const Tensor& image);

/// Gray raster to binary mask, foreground where value >= 128.
BinaryMask raster_to_mask(const Raster& raster);
Raster mask_to_raster(const BinaryMask& mask);

/// Map values in [-1, 1] to gray levels round(255 * (v + 1) / 2).
Raster signed_map_to_raster(const Tensor& map);

Tensor read_image(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);

}  // namespace protoseg
