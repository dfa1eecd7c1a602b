#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "maskmend/epoch_detector.hpp"
#include "test_util.hpp"

using namespace maskmend;

namespace {

// sigma_u[0] = 1, then each later value is the previous one times
// (1 + delta[t-1]).
TrainingTrace trace_from_deltas(const std::vector<double>& deltas, double start = 1.0)
{
    TrainingTrace t;
    double s = start;
    t.append(0, s);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        s *= 1.0 + deltas[i];
        t.append(static_cast<int>(i) + 1, s);
    }
    return t;
}

} // namespace

TEST(RelativeChange, Examples)
{
    const std::vector<double> a{4.0, 2.0};
    const auto da = relative_change(a);
    EXPECT_FALSE(da[0]);
    EXPECT_DOUBLE_EQ(*da[1], -0.5);

    const std::vector<double> c{3.0, 3.0, 3.0};
    for (std::size_t t = 1; t < c.size(); ++t)
        EXPECT_EQ(*relative_change(c)[t], 0.0);

    const std::vector<double> z{1.0, 0.0, 0.0};
    const auto dz = relative_change(z);
    EXPECT_DOUBLE_EQ(*dz[1], -1.0);
    EXPECT_FALSE(dz[2]);
}

TEST(Trace, AppendComputesDelta)
{
    TrainingTrace t;
    t.append(0, 4.0);
    t.append(1, 2.0, 0.5, 0.6);
    EXPECT_FALSE(t[0].delta_sigma_u);
    EXPECT_DOUBLE_EQ(*t[1].delta_sigma_u, -0.5);
    EXPECT_EQ(*t[1].d_clean, 0.5);
    EXPECT_THROW(t.append(1, 1.0), InvariantError);
    EXPECT_THROW(t.append(2, -1.0), InvariantError);
}

TEST(Detect, ArgminWithWarmupZero)
{
    // Delta = [-0.1, -0.6, -0.2, 0.0] at epochs 1..4.
    EXPECT_EQ(detect_relabel_epoch(trace_from_deltas({-0.1, -0.6, -0.2, 0.0}), 0), 2);
}

TEST(Detect, TiesGoToEarliestEligible)
{
    const auto t = trace_from_deltas({-0.25, -0.25, -0.25, -0.25});
    EXPECT_EQ(detect_relabel_epoch(t, 0), 1);
    EXPECT_EQ(detect_relabel_epoch(t, 1), 2);
    EXPECT_EQ(detect_relabel_epoch(t, 2), 3);
}

TEST(Detect, ShapedLikeTrainingCurve)
{
    // Slow start, one steep drop at epoch 4, then flattening toward zero
    // change; the constructed D_clean peaks at the same epoch.
    const std::vector<double> deltas{-0.30, -0.05, -0.08, -0.45, -0.10, -0.03, -0.01, -0.004, -0.001};
    TrainingTrace t;
    double s = 100.0;
    t.append(0, s, 0.2, 0.1);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        s *= 1.0 + deltas[i];
        const int epoch = static_cast<int>(i) + 1;
        const double d_clean = 0.8 - 0.04 * std::abs(epoch - 4);
        t.append(epoch, s, d_clean, 0.5 + 0.02 * epoch);
    }
    const int detected = detect_relabel_epoch(t, 1);
    EXPECT_EQ(detected, 4);
    int peak = 0;
    for (const auto& r : t.records())
        if (*r.d_clean > *t[static_cast<std::size_t>(peak)].d_clean)
            peak = r.epoch;
    EXPECT_EQ(detected, peak);
}

TEST(Detect, NeverReturnsWarmupEpochAndIsScaleFree)
{
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> dd(-0.6, 0.2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> deltas(6);
        for (auto& d : deltas)
            d = dd(rng);
        const int warmup = trial % 4;
        const auto t = trace_from_deltas(deltas);
        const int e = detect_relabel_epoch(t, warmup);
        EXPECT_GT(e, warmup);
        EXPECT_EQ(detect_relabel_epoch(trace_from_deltas(deltas, 37.5), warmup), e);
        EXPECT_EQ(detect_relabel_epoch(trace_from_deltas(deltas, 0.002), warmup), e);
    }
}

TEST(Detect, MonotoneFlatteningReturnsGlobalArgmin)
{
    const auto t = trace_from_deltas({-0.2, -0.5, -0.3, -0.1, -0.01, 0.0, 0.0});
    EXPECT_EQ(detect_relabel_epoch(t, 0), 2);
}

TEST(Detect, NotEnoughData)
{
    TrainingTrace t;
    t.append(0, 1.0);
    t.append(1, 0.5);
    EXPECT_THROW(detect_relabel_epoch(t, 1), NotEnoughData);
    EXPECT_EQ(detect_relabel_epoch(t, 0), 1);
    EXPECT_THROW(detect_relabel_epoch(TrainingTrace{}, 0), NotEnoughData);
    TrainingTrace z;
    z.append(0, 1.0);
    z.append(1, 0.0);
    z.append(2, 0.0);
    EXPECT_THROW(detect_relabel_epoch(z, 1), NotEnoughData);
}

TEST(Online, FiresAfterPatience)
{
    OnlineEpochDetector det(1, 2);
    EXPECT_FALSE(det.observe(1, -0.9)); // warmup
    EXPECT_FALSE(det.observe(2, -0.3));
    EXPECT_FALSE(det.observe(3, -0.5));
    EXPECT_FALSE(det.observe(4, -0.2));
    const auto fired = det.observe(5, -0.1);
    ASSERT_TRUE(fired);
    EXPECT_EQ(*fired, 3);
    EXPECT_TRUE(det.fired());
    EXPECT_FALSE(det.observe(6, -5.0));
}

TEST(Online, EqualValuesDoNotResetPatience)
{
    OnlineEpochDetector det(0, 2);
    EXPECT_FALSE(det.observe(1, -0.4));
    EXPECT_FALSE(det.observe(2, -0.4));
    EXPECT_EQ(det.observe(3, -0.4), 1);
}

TEST(Online, AgreesWithOfflineOnFlatteningTraces)
{
    std::mt19937_64 rng(32);
    std::uniform_real_distribution<double> dd(-0.6, -0.05);
    for (int trial = 0; trial < 50; ++trial) {
        // Steepening up to a random peak, shallower afterwards.
        std::vector<double> deltas(8);
        const int peak = 2 + trial % 4;
        for (int i = 0; i < 8; ++i)
            deltas[static_cast<std::size_t>(i)] = i + 1 == peak ? -0.7
                                                  : i + 1 < peak ? -0.1 - 0.1 * i
                                                                 : dd(rng) * 0.5;
        const auto t = trace_from_deltas(deltas);
        OnlineEpochDetector det(1, 2);
        std::optional<int> fired;
        for (const auto& r : t.records())
            if (auto f = det.observe(r.epoch, r.delta_sigma_u))
                fired = f;
        ASSERT_TRUE(fired);
        EXPECT_EQ(*fired, detect_relabel_epoch(t, 1));
    }
}

TEST(Online, ParameterChecks)
{
    EXPECT_THROW(OnlineEpochDetector(-1, 2), ParameterError);
    EXPECT_THROW(OnlineEpochDetector(1, 0), ParameterError);
}

TEST(TraceCsv, RoundTripIsExact)
{
    const auto dir = test::scratch("trace_csv");
    TrainingTrace t;
    t.append(0, 249.61734, 0.2241, 0.0761);
    t.append(1, 93.877, 0.1 + 0.2, std::nullopt);
    t.append(2, 71.805);
    write_trace(t, dir / "t.csv");
    EXPECT_EQ(read_trace(dir / "t.csv"), t);
    std::ifstream in(dir / "t.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "epoch,sigma_u,delta_sigma_u,d_clean,d_noisy");
}

TEST(TraceCsv, MissingDeltaRecomputedAndErrors)
{
    const auto dir = test::scratch("trace_csv_bad");
    test::write_bytes(dir / "t.csv", "epoch,sigma_u,delta_sigma_u,d_clean,d_noisy\n0,4,,,\n1,2,,,\n");
    const auto t = read_trace(dir / "t.csv");
    EXPECT_DOUBLE_EQ(*t[1].delta_sigma_u, -0.5);
    test::write_bytes(dir / "h.csv", "epoch,sigma\n");
    EXPECT_THROW(read_trace(dir / "h.csv"), FormatError);
    test::write_bytes(dir / "n.csv", "epoch,sigma_u,delta_sigma_u,d_clean,d_noisy\n0,abc,,,\n");
    EXPECT_THROW(read_trace(dir / "n.csv"), FormatError);
    test::write_bytes(dir / "o.csv", "epoch,sigma_u,delta_sigma_u,d_clean,d_noisy\n1,4,,,\n0,2,,,\n");
    EXPECT_THROW(read_trace(dir / "o.csv"), InvariantError);
}
