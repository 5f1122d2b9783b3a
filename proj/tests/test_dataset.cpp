#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "coifnet/dataset.hpp"
#include "coifnet/errors.hpp"
#include "support.hpp"

using namespace coifnet;
using testing::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::usage;
}

SeriesDataset ramp(std::size_t T, std::size_t D) {
    std::vector<std::int64_t> ts(T);
    std::vector<double> v(T * D);
    for (std::size_t t = 0; t < T; ++t) {
        ts[t] = static_cast<std::int64_t>(t) * 3600;
        for (std::size_t d = 0; d < D; ++d) v[t * D + d] = static_cast<double>(t * 10 + d);
    }
    std::vector<std::string> names;
    for (std::size_t d = 0; d < D; ++d) names.push_back("c" + std::to_string(d));
    return SeriesDataset::from_columns(ts, D, v, std::vector<std::uint8_t>(T * D, 1), names);
}

}  // namespace

TEST_CASE("calendar arithmetic") {
    std::int64_t s = 0;
    REQUIRE(parse_timestamp("2020-07-01 00:10", s));
    CHECK(hour_of_day(s) == 0);
    REQUIRE(parse_timestamp("2016-07-04T13:00:00Z", s));
    CHECK(day_of_week(s) == 0);  // Monday
    CHECK(hour_of_day(s) == 13);
    REQUIRE(parse_timestamp("1970-01-01", s));
    CHECK(s == 0);
    CHECK(day_of_week(0) == 3);  // Thursday
    CHECK(days_from_civil(2000, 3, 1) == 11017);
    CHECK(format_timestamp(951782400) == "2000-02-29 00:00:00");
    CHECK_FALSE(parse_timestamp("2020-13-01", s));
    CHECK_FALSE(parse_timestamp("not a date", s));
}

TEST_CASE("calendar agrees with a naive day counter") {
    // Walk forward one day at a time from 1970-01-01 (a Thursday).
    int y = 1970, m = 1, d = 1;
    const auto leap = [](int yr) { return (yr % 4 == 0 && yr % 100 != 0) || yr % 400 == 0; };
    const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    for (std::int64_t day = 0; day < 30000; ++day) {
        CHECK(days_from_civil(y, m, d) == day);
        const auto c = civil_from_epoch(day * 86400 + 7200);
        CHECK((c.year == y && c.month == m && c.day == d && c.hour == 2));
        CHECK(day_of_week(day * 86400) == static_cast<int>((day + 3) % 7));
        if (++d > mdays[m - 1] + (m == 2 && leap(y) ? 1 : 0)) {
            d = 1;
            if (++m > 12) {
                m = 1;
                ++y;
            }
        }
    }
}

TEST_CASE("CSV with an empty cell marks exactly that entry missing") {
    TempDir dir("csv");
    write(dir / "a.csv", "date,x,y\n2020-01-01 00:00,1.5,2\n2020-01-01 01:00,,3\n2020-01-01 02:00,4,NaN\n");
    const auto ds = load_csv(dir / "a.csv", "date");
    REQUIRE(ds.length == 3);
    REQUIRE(ds.width == 2);
    CHECK(ds.variate_names == std::vector<std::string>{"x", "y"});
    const std::vector<std::uint8_t> expected{1, 1, 0, 1, 1, 0};
    CHECK(ds.observed == expected);
    CHECK(ds.value(1, 0) == 0.0);
    CHECK(ds.value(2, 1) == 0.0);
    CHECK(ds.value(0, 0) == 1.5);
}

TEST_CASE("CSV column selection and errors") {
    TempDir dir("csv_err");
    write(dir / "a.csv", "date,x,y\n2020-01-01 00:00,1,2\n2020-01-01 01:00,3,4\n");
    const auto only_y = load_csv(dir / "a.csv", "date", {"y"});
    CHECK(only_y.width == 1);
    CHECK(only_y.value(1, 0) == 4.0);

    CHECK(kind_of([&] { load_csv(dir / "a.csv", "date", {"z"}); }) == ErrorKind::data);
    CHECK(kind_of([&] { load_csv(dir / "a.csv", "time"); }) == ErrorKind::data);
    CHECK(kind_of([&] { load_csv(dir / "nope.csv", "date"); }) == ErrorKind::data);

    write(dir / "bad.csv", "date,x\n2020-01-01 00:00,1\n2020-01-01 01:00,abc\n");
    try {
        load_csv(dir / "bad.csv", "date");
        FAIL("expected a data error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
        CHECK(std::string(e.what()).find("3") != std::string::npos);  // line number
    }
    write(dir / "order.csv", "date,x\n2020-01-01 01:00,1\n2020-01-01 00:00,2\n");
    CHECK(kind_of([&] { load_csv(dir / "order.csv", "date"); }) == ErrorKind::data);
    write(dir / "empty.csv", "date,x\n");
    CHECK(kind_of([&] { load_csv(dir / "empty.csv", "date"); }) == ErrorKind::data);
    write(dir / "ragged.csv", "date,x,y\n2020-01-01 00:00,1\n");
    CHECK(kind_of([&] { load_csv(dir / "ragged.csv", "date"); }) == ErrorKind::data);
}

TEST_CASE("hourly file from a Monday gives day-of-week 0 then 1") {
    TempDir dir("dow");
    std::string text = "date,v\n";
    for (int t = 0; t < 48; ++t) text += format_timestamp(days_from_civil(2016, 7, 4) * 86400 + t * 3600) + ",1\n";
    write(dir / "a.csv", text);
    const auto ds = load_csv(dir / "a.csv", "date");
    for (int t = 0; t < 48; ++t) {
        CHECK(ds.day_of_week[t] == t / 24);
        CHECK(ds.hour_of_day[t] == t % 24);
    }
}

TEST_CASE("CSV round-trip is bit-exact") {
    TempDir dir("rt");
    SynthSpec spec;
    spec.length = 300;
    spec.width = 4;
    SeriesDataset ds = synthesize(spec);
    Rng rng(8);
    for (std::size_t i = 0; i < ds.observed.size(); ++i)
        if (rng.uniform() < 0.2) {
            ds.observed[i] = 0;
            ds.values[i] = 0.0;
        }
    ds.values[5] = -0.0 + 1e-300;
    ds.values[6] = 123456789.123456789;
    write_csv(ds, dir / "a.csv");
    const auto back = load_csv(dir / "a.csv", "date");
    CHECK(back.values == ds.values);
    CHECK(back.observed == ds.observed);
    CHECK(back.timestamps == ds.timestamps);
    CHECK(back.variate_names == ds.variate_names);
}

TEST_CASE("split lengths") {
    SplitSpec spec;
    auto l = split_lengths(100, spec);
    CHECK((l.train == 60 && l.val == 20 && l.test == 20));
    l = split_lengths(101, spec);
    CHECK((l.train == 60 && l.val == 20 && l.test == 21));
    CHECK(kind_of([&] { chronological_split(ramp(10, 1), spec, 192); }) == ErrorKind::config);
    SplitSpec bad{0.7, 0.2, 0.2};
    CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::config);
}

TEST_CASE("splits partition the series without gap or overlap") {
    const auto ds = ramp(1003, 2);
    const auto s = chronological_split(ds, SplitSpec{}, 10);
    CHECK(s.train.length + s.val.length + s.test.length == ds.length);
    CHECK(s.train.timestamps.front() == ds.timestamps[0]);
    CHECK(s.val.timestamps.front() == ds.timestamps[s.train.length]);
    CHECK(s.test.timestamps.front() == ds.timestamps[s.train.length + s.val.length]);
    CHECK(s.test.timestamps.back() == ds.timestamps.back());
}

TEST_CASE("window counts") {
    CHECK(window_starts(200, 96, 96).size() == 9);
    CHECK(window_starts(192, 96, 96).size() == 1);
    CHECK(window_starts(200, 96, 96, 3).size() == 3);
    CHECK_THROWS_AS(window_starts(100, 96, 96), Error);
}

TEST_CASE("windows match their source entries") {
    auto ds = ramp(40, 3);
    ds.observed[7] = 0;
    ds.values[7] = 0.0;
    const auto starts = window_starts(ds.length, 5, 4, 2);
    const auto b = collate(ds, starts, 5, 4);
    REQUIRE(b.X.shape() == Shape{starts.size(), 5, 3});
    REQUIRE(b.Y.shape() == Shape{starts.size(), 4, 3});
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const std::size_t s = starts[w];
        for (std::size_t t = 0; t < 5; ++t) {
            for (std::size_t d = 0; d < 3; ++d) {
                CHECK(b.X(w, t, d) == ds.value(s + t, d));
                CHECK(b.Mx(w, t, d) == (ds.is_observed(s + t, d) ? 1.0 : 0.0));
                CHECK(b.X(w, t, d) * (1.0 - b.Mx(w, t, d)) == 0.0);
            }
            CHECK(b.dow[w * 5 + t] == static_cast<std::size_t>(ds.day_of_week[s + t]));
            CHECK(b.hod[w * 5 + t] == static_cast<std::size_t>(ds.hour_of_day[s + t]));
        }
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t d = 0; d < 3; ++d) CHECK(b.Y(w, t, d) == ds.value(s + 5 + t, d));
    }
}

TEST_CASE("fully observed data gives all-ones masks") {
    const auto b = collate(ramp(20, 2), window_starts(20, 4, 3), 4, 3);
    CHECK(b.Mx.sum() == static_cast<double>(b.Mx.size()));
    CHECK(b.My.sum() == static_cast<double>(b.My.size()));
}

TEST_CASE("standardizer uses observed entries only") {
    auto ds = ramp(4, 1);  // 0, 10, 20, 30
    ds.observed[3] = 0;
    ds.values[3] = 0.0;
    const auto s = Standardizer::fit(ds);
    CHECK(s.mean[0] == doctest::Approx(10.0));
    CHECK(s.scale[0] == doctest::Approx(std::sqrt(200.0 / 3.0)));
    const auto z = s.apply(ds);
    CHECK(z.values[3] == 0.0);
    CHECK(z.values[1] == doctest::Approx(0.0));
}

TEST_CASE("synth is deterministic and matches its closed form without noise") {
    SynthSpec spec;
    spec.length = 500;
    spec.width = 3;
    spec.seed = 9;
    CHECK(synthesize(spec).values == synthesize(spec).values);

    spec.noise = 0.0;
    const auto ds = synthesize(spec);
    // Coefficient draws in the documented order: level, a, phi, b, psi, c per variate.
    Rng rng(spec.seed);
    const double tau = 2.0 * std::numbers::pi;
    for (std::size_t d = 0; d < spec.width; ++d) {
        const double level = rng.uniform(-1, 1), a = rng.uniform(0.5, 1.5), phi = rng.uniform(0, tau),
                     b = rng.uniform(0.2, 0.8), psi = rng.uniform(0, tau), c = rng.uniform(0, 0.3);
        for (std::size_t t = 0; t < spec.length; ++t) {
            const double x = static_cast<double>(t);
            const double v = level + a * std::sin(tau * x / 24 + phi) + b * std::sin(tau * x / 168 + psi) +
                             c * std::sin(tau * x / 12 + phi);
            CHECK(ds.value(t, d) == doctest::Approx(v).epsilon(1e-14));
        }
    }
    CHECK(ds.day_of_week[0] == 0);
    CHECK(ds.hour_of_day[0] == 0);
    CHECK(ds.day_of_week[24] == 1);
}
