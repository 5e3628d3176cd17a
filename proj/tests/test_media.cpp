#include <doctest.h>

#include <cmath>
#include <random>

#include "longvid/error.hpp"
#include "longvid/media.hpp"

using namespace longvid;

namespace {

VideoMeta meta_of(double duration_s, const std::string& id = "v1") {
  VideoMeta m;
  m.video_id = id;
  m.duration_s = duration_s;
  return m;
}

}  // namespace

TEST_CASE("uniform_sample midpoints for 610 s at n=32") {
  // Midpoint rule: t_i = (i + 0.5) * 610 / 32 with exact spacing 19.0625.
  FrameSet fs = uniform_sample(meta_of(610.0), 32);
  REQUIRE(fs.count() == 32);
  CHECK(fs.frames.front().timestamp_s == doctest::Approx(9.53125).epsilon(1e-12));
  CHECK(fs.frames.back().timestamp_s == doctest::Approx(600.46875).epsilon(1e-12));
  for (int i = 0; i + 1 < 32; ++i) {
    double gap = fs.frames[i + 1].timestamp_s - fs.frames[i].timestamp_s;
    CHECK(std::abs(gap - 19.0625) < 1e-9);
  }
}

TEST_CASE("uniform_sample spacing equals duration/n on random inputs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    double L = 1.0 + (rng() % 720000) / 100.0;  // up to 2 hours
    int n = 1 + static_cast<int>(rng() % 64);
    FrameSet fs = uniform_sample(meta_of(L), n);
    REQUIRE(fs.count() == n);
    double want = L / n;
    for (int i = 0; i + 1 < n; ++i) {
      CHECK(std::abs((fs.frames[i + 1].timestamp_s - fs.frames[i].timestamp_s) - want) <
            1e-9);
    }
    CHECK(fs.frames.front().timestamp_s > 0.0);
    CHECK(fs.frames.back().timestamp_s < L);
  }
}

TEST_CASE("uniform_sample rejects n < 1") {
  CHECK_THROWS_AS(uniform_sample(meta_of(10.0), 0), Error);
}

TEST_CASE("resample_interval default 8 frames over [600, 610]") {
  // Midpoints of 1.25 s sub-intervals: 600.625, 601.875, ..., 609.375.
  FrameSet fs = resample_interval(meta_of(1200.0), {600.0, 610.0}, 8);
  REQUIRE(fs.count() == 8);
  const double expected[] = {600.625, 601.875, 603.125, 604.375,
                             605.625, 606.875, 608.125, 609.375};
  for (int i = 0; i < 8; ++i) {
    CHECK(fs.frames[i].timestamp_s == doctest::Approx(expected[i]).epsilon(1e-12));
  }
  REQUIRE(fs.source_interval.has_value());
  CHECK(*fs.source_interval == TimeInterval{600.0, 610.0});
}

TEST_CASE("resample_interval clamps to the video") {
  FrameSet fs = resample_interval(meta_of(10.0), {-5.0, 20.0}, 4);
  REQUIRE(fs.source_interval.has_value());
  CHECK(*fs.source_interval == TimeInterval{0.0, 10.0});
  for (const auto& f : fs.frames) {
    CHECK(f.timestamp_s > 0.0);
    CHECK(f.timestamp_s < 10.0);
  }
}

TEST_CASE("resample_interval refuses an interval that clamps to nothing") {
  CHECK_THROWS_AS(resample_interval(meta_of(10.0), {20.0, 20.0}, 4), Error);
  CHECK_THROWS_AS(resample_interval(meta_of(10.0), {12.0, 11.0}, 4), Error);
  CHECK_THROWS_AS(resample_interval(meta_of(10.0), {15.0, 25.0}, 4), Error);
}

TEST_CASE("resample timestamps stay strictly inside the clamped interval") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    double L = 30.0 + (rng() % 100000) / 10.0;
    double a = (rng() % 1000) / 100.0;
    double b = a + 0.5 + (rng() % 5000) / 100.0;
    int n = 1 + static_cast<int>(rng() % 16);
    FrameSet fs = resample_interval(meta_of(L), {a, b}, n);
    REQUIRE(fs.count() == n);
    for (const auto& f : fs.frames) {
      CHECK(f.timestamp_s > fs.source_interval->start_s);
      CHECK(f.timestamp_s < fs.source_interval->end_s);
    }
  }
}

TEST_CASE("clip_grid splits 95 s into ten cells with a short tail") {
  auto grid = clip_grid(95.0);
  REQUIRE(grid.size() == 10);
  CHECK(grid.front() == TimeInterval{0.0, 10.0});
  CHECK(grid.back() == TimeInterval{90.0, 95.0});
}

TEST_CASE("clip_grid on an exact multiple keeps full-length cells") {
  auto grid = clip_grid(600.0);
  REQUIRE(grid.size() == 60);
  CHECK(grid.back() == TimeInterval{590.0, 600.0});
  CHECK(grid.back().length() == 10.0);
}

TEST_CASE("clip_grid covers the 357.11 s case-study timestamp") {
  auto grid = clip_grid(3600.0);
  const TimeInterval& cell = grid[35];
  CHECK(cell.start_s == 350.0);
  CHECK(cell.end_s == 360.0);
  CHECK(cell.start_s <= 357.11);
  CHECK(357.11 < cell.end_s);
}

TEST_CASE("clip_grid chains bit-exactly on random durations") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 500; ++trial) {
    double L = 0.01 + (rng() % 1000000) / 100.0;
    auto grid = clip_grid(L);
    // Independent count: ceil(L / 10).
    size_t want = static_cast<size_t>(std::ceil(L / 10.0));
    REQUIRE(grid.size() == want);
    CHECK(grid.front().start_s == 0.0);
    CHECK(grid.back().end_s == L);
    for (size_t i = 0; i + 1 < grid.size(); ++i) {
      CHECK(grid[i].end_s == grid[i + 1].start_s);  // exact, no tolerance
      CHECK(grid[i].length() == 10.0);
    }
    CHECK(grid.back().length() > 0.0);
    CHECK(grid.back().length() <= 10.0);
  }
}

TEST_CASE("clip_grid rejects degenerate inputs") {
  CHECK_THROWS_AS(clip_grid(0.0), Error);
  CHECK_THROWS_AS(clip_grid(-3.0), Error);
  CHECK_THROWS_AS(clip_grid(10.0, 0.0), Error);
}

TEST_CASE("make_interval enforces ordering") {
  CHECK_THROWS_AS(make_interval(5.0, 5.0), Error);
  CHECK_THROWS_AS(make_interval(-1.0, 5.0), Error);
  CHECK(make_interval(0.0, 0.5).length() == 0.5);
}

TEST_CASE("overlap length is symmetric and positive only on real overlap") {
  TimeInterval a{0.0, 10.0};
  TimeInterval b{10.0, 20.0};
  CHECK_FALSE(a.overlaps(b));  // touching is not overlapping
  TimeInterval c{9.0, 11.0};
  CHECK(a.overlaps(c));
  CHECK(a.overlap_length(c) == doctest::Approx(1.0));
  CHECK(c.overlap_length(a) == doctest::Approx(1.0));
}
