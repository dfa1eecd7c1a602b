#include <gtest/gtest.h>

#include "maskmend/io.hpp"
#include "test_util.hpp"

using namespace maskmend;
using test::mask_of;

TEST(Grid, RejectsBadDimensions)
{
    EXPECT_THROW(BinaryMask(0, 3, {}), InvariantError);
    EXPECT_THROW(BinaryMask(2, 2, {0, 1, 1}), InvariantError);
}

TEST(BinaryMask, RejectsNonBinaryLabels)
{
    EXPECT_THROW(BinaryMask(1, 2, {0, 2}), InvariantError);
    EXPECT_NO_THROW(BinaryMask(1, 2, {0, 1}));
}

TEST(ProbMap, RangeToleranceIsOneE9)
{
    EXPECT_NO_THROW(ProbMap(1, 2, {-5e-10, 1.0 + 5e-10}));
    const ProbMap p(1, 2, {-5e-10, 1.0 + 5e-10});
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], 1.0);
    EXPECT_THROW(ProbMap(1, 1, {1.0 + 1e-6}), InvariantError);
    EXPECT_THROW(ProbMap(1, 1, {-1e-6}), InvariantError);
}

TEST(UncertaintyMap, RejectsNegative)
{
    EXPECT_THROW(UncertaintyMap(1, 1, {-0.1}), InvariantError);
}

TEST(PredictionEnsemble, Invariants)
{
    EXPECT_THROW(PredictionEnsemble(std::vector<ProbMap>{}), InvariantError);
    std::vector<ProbMap> mixed{ProbMap(2, 2, std::vector<double>(4, 0.5)),
                               ProbMap(3, 3, std::vector<double>(9, 0.5))};
    EXPECT_THROW(PredictionEnsemble(std::move(mixed)), InvariantError);
}

TEST(Polygon, Invariants)
{
    EXPECT_THROW(Polygon({{0, 0}, {1, 0}}), InvariantError);
    EXPECT_THROW(Polygon({{0, 0}, {0, 0}, {1, 1}}), InvariantError);
    EXPECT_THROW(Polygon({{0, 0}, {1, 0}, {0, 0}}), InvariantError);
    const Polygon ccw({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
    EXPECT_DOUBLE_EQ(ccw.signed_area(), 1.0);
}

TEST(MaskIo, ThresholdsStoredValues)
{
    const auto dir = test::scratch("mask_threshold");
    test::write_bytes(dir / "m.pgm", std::string("P5\n2 2\n255\n") + '\0' + '\xff' + '\xff' + '\0');
    EXPECT_EQ(read_mask(dir / "m.pgm"), mask_of({"01", "10"}));
    test::write_bytes(dir / "one.pgm", std::string("P5\n1 1\n255\n") + '\0');
    EXPECT_EQ(read_mask(dir / "one.pgm"), mask_of({"0"}));
    test::write_bytes(dir / "low.pgm", std::string("P5\n2 1\n255\n") + '\x01' + '\x80');
    EXPECT_EQ(read_mask(dir / "low.pgm"), mask_of({"11"}));
}

TEST(MaskIo, AcceptsAsciiGraymap)
{
    const auto dir = test::scratch("mask_p2");
    test::write_bytes(dir / "m.pgm", "P2\n# comment\n3 1\n255\n0 7 255\n");
    EXPECT_EQ(read_mask(dir / "m.pgm"), mask_of({"011"}));
}

TEST(MaskIo, TruncatedPayload)
{
    const auto dir = test::scratch("mask_trunc");
    test::write_bytes(dir / "m.pgm", std::string("P5\n4 4\n255\n") + "abc");
    try {
        read_mask(dir / "m.pgm");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("payload shorter than header dims"), std::string::npos);
    }
}

TEST(MaskIo, MalformedHeaderAndMissingFile)
{
    const auto dir = test::scratch("mask_bad");
    test::write_bytes(dir / "m.pgm", "P6\n1 1\n255\n\0");
    EXPECT_THROW(read_mask(dir / "m.pgm"), FormatError);
    test::write_bytes(dir / "big.pgm", "P5\n1 1\n65535\n\0\0");
    EXPECT_THROW(read_mask(dir / "big.pgm"), FormatError);
    EXPECT_THROW(read_mask(dir / "absent.pgm"), IoError);
}

TEST(MaskIo, RoundTrip)
{
    const auto dir = test::scratch("mask_roundtrip");
    const auto m = mask_of({"01", "10"});
    write_mask(m, dir / "a.pgm");
    EXPECT_EQ(read_mask(dir / "a.pgm"), m);
    const BinaryMask ones(8, 8, std::vector<std::uint8_t>(64, 1));
    write_mask(ones, dir / "b.pgm");
    EXPECT_EQ(read_mask(dir / "b.pgm"), ones);
    EXPECT_THROW(write_mask(m, dir / "no" / "such" / "dir.pgm"), IoError);
}

TEST(ImageIo, EightBitRoundTrip)
{
    const auto dir = test::scratch("image_roundtrip");
    std::vector<double> v;
    for (int i = 0; i < 12; ++i)
        v.push_back(i * 20 / 255.0);
    const GrayImage img(3, 4, v);
    write_image(img, dir / "i.pgm");
    const auto back = read_image(dir / "i.pgm");
    for (std::size_t i = 0; i < v.size(); ++i)
        EXPECT_DOUBLE_EQ(back[i], v[i]);
}

TEST(EnsembleIo, RoundTripConstants)
{
    const auto dir = test::scratch("ens_roundtrip");
    const PredictionEnsemble ens({ProbMap(2, 2, std::vector<double>(4, 0.5)),
                                  ProbMap(2, 2, std::vector<double>(4, 0.5))});
    write_ensemble(ens, dir / "e.uens");
    const auto back = read_ensemble(dir / "e.uens");
    ASSERT_EQ(back.n(), 2u);
    for (std::size_t k = 0; k < 2; ++k)
        EXPECT_EQ(back[k], ens[k]);
}

TEST(EnsembleIo, RoundTripIsBitExactAtFloatPrecision)
{
    const auto dir = test::scratch("ens_float");
    std::vector<double> v{0.1f, 0.25f, 0.333f, 0.9999f, 0.0f, 1.0f};
    const PredictionEnsemble ens({ProbMap(2, 3, v)});
    write_ensemble(ens, dir / "e.uens");
    write_ensemble(read_ensemble(dir / "e.uens"), dir / "f.uens");
    EXPECT_EQ(read_ensemble(dir / "f.uens")[0], ens[0]);
}

namespace {

std::string tensor_bytes(const char* magic, std::uint32_t n, std::uint32_t h, std::uint32_t w,
                         std::size_t floats)
{
    std::string s(magic, 4);
    s.push_back('\x01');
    for (std::uint32_t v : {n, h, w})
        for (int b = 0; b < 4; ++b)
            s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    s.append(floats * 4, '\0');
    return s;
}

} // namespace

TEST(EnsembleIo, ZeroMembersRejected)
{
    const auto dir = test::scratch("ens_zero");
    test::write_bytes(dir / "e.uens", tensor_bytes("UENS", 0, 2, 2, 0));
    try {
        read_ensemble(dir / "e.uens");
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("ensemble must have n >= 1"), std::string::npos);
    }
}

TEST(EnsembleIo, MagicAndSizeMismatch)
{
    const auto dir = test::scratch("ens_bad");
    test::write_bytes(dir / "a.uens", tensor_bytes("XENS", 1, 2, 2, 4));
    EXPECT_THROW(read_ensemble(dir / "a.uens"), FormatError);
    // Declares 2x2 members but carries a 3x3 payload: the dims cannot agree.
    test::write_bytes(dir / "b.uens", tensor_bytes("UENS", 2, 2, 2, 4 + 9));
    EXPECT_THROW(read_ensemble(dir / "b.uens"), FormatError);
}

TEST(UncertaintyIo, SingleMemberContainer)
{
    const auto dir = test::scratch("umap_io");
    const UncertaintyMap u(1, 3, {0.0, 0.125, 0.25});
    write_uncertainty(u, dir / "u.f32");
    EXPECT_EQ(read_tensor(dir / "u.f32").n, 1u);
    EXPECT_EQ(read_uncertainty(dir / "u.f32"), u);
    const PredictionEnsemble two({ProbMap(1, 1, {0.5}), ProbMap(1, 1, {0.5})});
    write_ensemble(two, dir / "two.uens");
    EXPECT_THROW(read_uncertainty(dir / "two.uens"), FormatError);
}

TEST(Manifest, RoundTripAndResolve)
{
    const auto dir = test::scratch("manifest");
    Manifest m{dir, {{"images/a.pgm", "clean/a.pgm", std::nullopt, Split::train},
                     {"images/b.pgm", "clean/b.pgm", fs::path("noisy/b.pgm"), Split::test}}};
    write_manifest(m, dir / "manifest.csv");
    const auto back = read_manifest(dir / "manifest.csv");
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_FALSE(back.entries[0].noisy_mask);
    EXPECT_EQ(*back.entries[1].noisy_mask, fs::path("noisy/b.pgm"));
    EXPECT_EQ(back.entries[1].split, Split::test);
    EXPECT_EQ(back.resolve(back.entries[0].image), dir / "images/a.pgm");
}

TEST(Manifest, Errors)
{
    const auto dir = test::scratch("manifest_bad");
    test::write_bytes(dir / "h.csv", "image,mask\n");
    EXPECT_THROW(read_manifest(dir / "h.csv"), ManifestError);
    test::write_bytes(dir / "s.csv", "image,clean_mask,noisy_mask,split\na.pgm,b.pgm,,val\n");
    EXPECT_THROW(read_manifest(dir / "s.csv"), ManifestError);
    test::write_bytes(dir / "c.csv", "image,clean_mask,noisy_mask,split\na.pgm,b.pgm\n");
    EXPECT_THROW(read_manifest(dir / "c.csv"), ManifestError);
}
