#include <gtest/gtest.h>

#include <filesystem>

#include "protoseg/config.hpp"
#include "protoseg/error.hpp"
#include "protoseg/model.hpp"
#include "protoseg/synthetic.hpp"
#include "protoseg/train.hpp"

using namespace protoseg;

TEST(KeyValue, ParseCommentsAndWhitespace) {
    auto kv = KeyValueConfig::parse("# header\n lr = 0.01  # inline\n\nlevels=3\r\nname = a b\n");
    EXPECT_EQ(kv.get_double("lr", 0), 0.01);
    EXPECT_EQ(kv.get_int("levels", 0), 3);
    EXPECT_EQ(kv.get_string("name", ""), "a b");
    EXPECT_EQ(kv.get_int("missing", 7), 7);
    EXPECT_TRUE(kv.unread().empty());
}

TEST(KeyValue, Errors) {
    EXPECT_THROW(KeyValueConfig::parse("novalue\n"), Error);
    EXPECT_THROW(KeyValueConfig::parse("= 3\n"), Error);
    auto kv = KeyValueConfig::parse("a = x\nb = maybe\nc = 1,,2\n");
    try {
        kv.get_int("a", 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
    }
    EXPECT_THROW(kv.get_bool("b", false), Error);
    EXPECT_EQ(kv.get_int_list("c", {}), (std::vector<std::int64_t>{1, 2}));
    EXPECT_THROW(KeyValueConfig::load("/nonexistent/protoseg.cfg"), Error);
}

TEST(KeyValue, AssignmentMergeAndUnread) {
    auto kv = KeyValueConfig::parse("a = 1\nb = 2\n");
    KeyValueConfig over;
    over.set_assignment("b=5");
    kv.merge(over);
    EXPECT_EQ(kv.get_int("b", 0), 5);
    EXPECT_EQ(kv.unread(), (std::vector<std::string>{"a"}));
    EXPECT_THROW(over.set_assignment("nothing"), Error);
    EXPECT_EQ(kv.to_text(), "a = 1\nb = 5\n");
}

TEST(ModelConfigText, RoundTrip) {
    ModelConfig c;
    c.levels = 3;
    c.stage_widths = {8, 16, 16, 32};
    c.prototypes = 5;
    c.erase = false;
    c.init_gain = 2.449;
    KeyValueConfig kv;
    write_model_config(c, kv);
    EXPECT_EQ(read_model_config(KeyValueConfig::parse(kv.to_text())), c);
    EXPECT_THROW(read_model_config(KeyValueConfig::parse("prototypes = 0\n")), Error);
    EXPECT_THROW(read_model_config(KeyValueConfig::parse("levels = -1\n")), Error);
}

TEST(TrainConfigText, RoundTripKeepsExactDoubles) {
    TrainConfig c;
    c.lr = 0.1 + 0.2;
    c.seed = 18446744073709551615ull;
    c.train_classes = {4, 5, 6};
    c.flip = false;
    KeyValueConfig kv;
    write_train_config(c, kv);
    TrainConfig back = read_train_config(KeyValueConfig::parse(kv.to_text()));
    EXPECT_EQ(back.lr, c.lr);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.train_classes, c.train_classes);
    EXPECT_FALSE(back.flip);
    EXPECT_THROW(read_train_config(KeyValueConfig::parse("lr = 0\n")), Error);
    EXPECT_THROW(read_train_config(KeyValueConfig::parse("batch = 0\n")), Error);
}

TEST(SyntheticSpecText, Families) {
    auto s = read_synthetic_spec(KeyValueConfig::parse("families = 1,4\nimage_size = 20\n"));
    EXPECT_EQ(s.shape_families, (std::vector<ShapeFamily>{ShapeFamily::Disc, ShapeFamily::Ring}));
    EXPECT_EQ(s.image_size, 20u);
    EXPECT_THROW(read_synthetic_spec(KeyValueConfig::parse("families = 7\n")), Error);
    EXPECT_EQ(s.distractor_folds, 1u);
    auto f = read_synthetic_spec(KeyValueConfig::parse("distractor_folds = 2\nsplit_mode = interleaved\n"));
    EXPECT_EQ(f.distractor_folds, 2u);
    EXPECT_EQ(f.distractor_split, SplitMode::Interleaved);
    EXPECT_THROW(read_synthetic_spec(KeyValueConfig::parse("split_mode = diagonal\n")), Error);
    EXPECT_THROW(read_synthetic_spec(KeyValueConfig::parse("max_radius = 0.9\n")), Error);
}

TEST(Format, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.001), "0.001");
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(join_ints({1, 2, 3}), "1,2,3");
    EXPECT_EQ(join_ints({}), "");
}
