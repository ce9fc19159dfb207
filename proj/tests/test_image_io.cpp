#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "protoseg/error.hpp"
#include "protoseg/image_io.hpp"
#include "test_util.hpp"

using namespace protoseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("protoseg_test_io_" + name); }

}  // namespace

TEST(ImageIo, PpmRoundTrip) {
    Raster r{3, 2, 3, {}};
    for (int i = 0; i < 18; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 14));
    write_ppm(scratch("a.ppm"), r);
    Raster back = read_pnm(scratch("a.ppm"));
    EXPECT_EQ(back.width, 3u);
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.channels, 3u);
    EXPECT_EQ(back.pixels, r.pixels);
    Tensor img = raster_to_image(back);
    EXPECT_EQ(img.shape(), (Shape{3, 2, 3}));
    EXPECT_DOUBLE_EQ(img.at({1, 0, 0}), 14.0 / 255.0);
    EXPECT_EQ(image_to_raster(img).pixels, r.pixels);
}

TEST(ImageIo, PbmAndPgmMasks) {
    std::mt19937_64 rng(1);
    SegmentationMask m(protoseg::testing::random_mask(5, 11, rng));
    write_pbm(scratch("m.pbm"), m);
    write_pgm(scratch("m.pgm"), mask_to_raster(m));
    for (const char* f : {"m.pbm", "m.pgm"}) {
        BinaryMask back = read_mask(scratch(f));
        EXPECT_EQ(protoseg::testing::values(back.values()), protoseg::testing::values(m.values())) << f;
    }
}

TEST(ImageIo, GraymapThresholdAndSignedMap) {
    Raster g{4, 1, 1, {0, 127, 128, 255}};
    EXPECT_EQ(protoseg::testing::values(raster_to_mask(g).values()), (std::vector<double>{0, 0, 1, 1}));
    Raster s = signed_map_to_raster(Tensor({1, 3}, std::vector<double>{-1.0, 0.0, 1.0}));
    EXPECT_EQ(s.pixels, (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(ImageIo, CommentsInHeader) {
    {
        std::ofstream os(scratch("c.pgm"), std::ios::binary);
        os << "P5\n# made by hand\n2 1\n255\n";
        os.put(static_cast<char>(10)).put(static_cast<char>(200));
    }
    Raster r = read_pnm(scratch("c.pgm"));
    EXPECT_EQ(r.pixels, (std::vector<std::uint8_t>{10, 200}));
}

TEST(ImageIo, Errors) {
    try {
        read_pnm(scratch("absent.pgm"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IoError);
    }
    {
        std::ofstream os(scratch("bad.pgm"), std::ios::binary);
        os << "P5\n4 4\n255\nab";
    }
    EXPECT_THROW(read_pnm(scratch("bad.pgm")), Error);
    {
        std::ofstream os(scratch("p3.ppm"));
        os << "P3\n1 1\n255\n1 2 3\n";
    }
    EXPECT_THROW(read_pnm(scratch("p3.ppm")), Error);
}
