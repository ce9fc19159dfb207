#include "protoseg/snapshot.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "protoseg/error.hpp"

namespace protoseg {

namespace {

std::array<unsigned char, 8> to_le_bytes(double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<unsigned char, 8> out{};
    for (int i = 0; i < 8; ++i) out[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    return out;
}

double from_le_bytes(const unsigned char* b) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void write_snapshot(std::ostream& os, const Tensor& t) {
    os << "TNSR v1 " << t.ndim();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    for (double v : t.data()) {
        auto bytes = to_le_bytes(v);
        os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    }
    if (!os) throw Error(ErrorKind::IoError, "failed writing tensor snapshot");
}

Tensor read_snapshot(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error(ErrorKind::IoError, "missing snapshot header");
    std::istringstream header(line);
    std::string magic, version;
    std::size_t ndim = 0;
    if (!(header >> magic >> version >> ndim) || magic != "TNSR" || version != "v1" || ndim == 0) {
        throw Error(ErrorKind::IoError, "bad snapshot header: " + line);
    }
    Shape shape(ndim);
    for (auto& d : shape) {
        if (!(header >> d) || d == 0) throw Error(ErrorKind::IoError, "bad snapshot dimension in: " + line);
    }
    std::vector<double> data(shape_numel(shape));
    std::vector<unsigned char> raw(data.size() * 8);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw Error(ErrorKind::IoError, "truncated snapshot payload");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = from_le_bytes(raw.data() + 8 * i);
    return Tensor(std::move(shape), std::move(data));
}

void save_snapshot(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    write_snapshot(os, t);
}

Tensor load_snapshot(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return read_snapshot(is);
}

std::uint64_t checksum(const Tensor& t) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : t.data()) {
        for (unsigned char b : to_le_bytes(v)) {
            h ^= b;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::string checksum_hex(const Tensor& t) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << checksum(t);
    return os.str();
}

}  // namespace protoseg
