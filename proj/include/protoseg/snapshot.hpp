#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "protoseg/tensor.hpp"

namespace protoseg {

// Tensor snapshot: an ASCII header line "TNSR v1 <ndim> <d0> <d1> ...\n"
// followed by the values as little-endian IEEE-754 doubles, row-major.

void write_snapshot(std::ostream& os, const Tensor& t);
Tensor read_snapshot(std::istream& is);

void save_snapshot(const std::filesystem::path& path, const Tensor& t);
Tensor load_snapshot(const std::filesystem::path& path);

/// FNV-1a 64 over the little-endian value bytes; used in checkpoint manifests.
std::uint64_t checksum(const Tensor& t);
std::string checksum_hex(const Tensor& t);

}  // namespace protoseg
