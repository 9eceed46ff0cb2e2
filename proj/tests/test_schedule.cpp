#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "panotok/errors.hpp"
#include "panotok/schedule.hpp"

using namespace panotok;

TEST_CASE("mask_count closed forms") {
    CHECK(mask_count(0.0, 256) == 256);
    CHECK(mask_count(1.0 / 3.0, 256) == 222);  // ceil(cos(pi/6)*256) = ceil(221.70)
    CHECK(mask_count(0.9999, 64) == 1);
    CHECK(mask_count(0.0, 1) == 1);
    CHECK_THROWS_AS(mask_count(1.0, 64), ConfigError);
    CHECK_THROWS_AS(mask_count(-0.1, 64), ConfigError);
}

TEST_CASE("mask_count nonincreasing in r") {
    for (int n : {1, 7, 64, 256}) {
        int prev = mask_count(0.0, n);
        for (int k = 1; k < 400; ++k) {
            const int cur = mask_count(k / 400.0, n);
            CHECK(cur <= prev);
            CHECK(cur >= 1);
            prev = cur;
        }
    }
}

TEST_CASE("keep_count closed forms and laws") {
    CHECK(keep_count(0, 8, 256) == 0);
    CHECK(keep_count(8, 8, 256) == 256);
    CHECK(keep_count(4, 8, 256) == 75);  // ceil((1-cos(pi/4))*256) = ceil(74.98)
    for (int n : {1, 13, 64, 256}) {
        for (int T : {1, 3, 8, 17}) {
            int prev = keep_count(0, T, n);
            CHECK(prev == 0);
            for (int t = 1; t <= T; ++t) {
                const int cur = keep_count(t, T, n);
                CHECK(cur >= prev);
                prev = cur;
            }
            CHECK(prev == n);
        }
    }
}

TEST_CASE("sample_mask contract") {
    Rng rng(42);
    for (int count : {1, 3, 4}) {
        auto mask = sample_mask(rng, 4, count);
        CHECK(int(std::count(mask.begin(), mask.end(), true)) == count);
    }
    auto all = sample_mask(rng, 16, 16);
    CHECK(std::count(all.begin(), all.end(), true) == 16);

    Rng a(7), b(7);
    CHECK(sample_mask(a, 64, 17) == sample_mask(b, 64, 17));

    CHECK_THROWS_AS(sample_mask(rng, 4, 0), ConfigError);
    CHECK_THROWS_AS(sample_mask(rng, 4, 5), ConfigError);
}

TEST_CASE("sample_mask is roughly uniform") {
    std::vector<int> hits(8, 0);
    for (int trial = 0; trial < 4000; ++trial) {
        Rng rng(1000 + trial);
        auto mask = sample_mask(rng, 8, 2);
        for (int i = 0; i < 8; ++i) hits[i] += mask[i];
    }
    for (int i = 0; i < 8; ++i) {
        CHECK(hits[i] > 800);  // expectation 1000
        CHECK(hits[i] < 1200);
    }
}

TEST_CASE("select_keeps confidence ordering and tie-break") {
    const std::vector<double> conf{0.1, 0.9, 0.5, 0.9};
    const std::vector<bool> none(4, false);
    auto picked = select_keeps(conf, none, 2);
    CHECK(picked == std::vector<bool>{false, true, false, true});

    auto unchanged = select_keeps(conf, picked, 2);
    CHECK(unchanged == picked);

    auto tie = select_keeps({0.5, 0.5, 0.5}, std::vector<bool>(3, false), 1);
    CHECK(tie == std::vector<bool>{true, false, false});

    CHECK_THROWS_AS(select_keeps(conf, none, 5), ConfigError);
    CHECK_THROWS_AS(select_keeps(conf, picked, 1), ConfigError);
}

TEST_CASE("select_keeps forms a chain under inclusion across a full pass") {
    const int n = 64, T = 8;
    Rng rng(5);
    std::vector<double> conf(n);
    std::vector<bool> kept(n, false);
    int prev_kept = 0;
    for (int t = 1; t <= T; ++t) {
        for (auto& c : conf) c = rng.uniform_real();
        const auto next = select_keeps(conf, kept, keep_count(t, T, n));
        for (int i = 0; i < n; ++i) {
            if (kept[i]) CHECK(next[i]);  // never un-kept
        }
        const int now = int(std::count(next.begin(), next.end(), true));
        CHECK(now >= prev_kept);
        prev_kept = now;
        kept = next;
    }
    CHECK(prev_kept == n);
}
