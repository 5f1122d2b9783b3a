#include "coifnet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "coifnet/errors.hpp"
#include "coifnet/rng.hpp"

namespace coifnet {

// ----------------------------------------------------------------------------
// Calendar

std::int64_t days_from_civil(int y, int m, int d) noexcept {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool is_leap(int y) noexcept { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) noexcept {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

}  // namespace

CivilTime civil_from_epoch(std::int64_t epoch_seconds) noexcept {
    const std::int64_t days = floor_div(epoch_seconds, 86400);
    const std::int64_t secs = epoch_seconds - days * 86400;
    const std::int64_t z = days + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    CivilTime c;
    c.day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    c.month = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    c.year = static_cast<int>(yoe + era * 400 + (c.month <= 2));
    c.hour = static_cast<int>(secs / 3600);
    c.minute = static_cast<int>((secs % 3600) / 60);
    c.second = static_cast<int>(secs % 60);
    return c;
}

std::int64_t to_epoch_seconds(const CivilTime& c) noexcept {
    return days_from_civil(c.year, c.month, c.day) * 86400 + c.hour * 3600 + c.minute * 60 + c.second;
}

int day_of_week(std::int64_t epoch_seconds) noexcept {
    // 1970-01-01 was a Thursday (index 3 with Monday = 0).
    const std::int64_t days = floor_div(epoch_seconds, 86400);
    return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

int hour_of_day(std::int64_t epoch_seconds) noexcept { return civil_from_epoch(epoch_seconds).hour; }

namespace {

bool take_int(std::string_view& s, std::size_t digits, int& out) {
    if (s.size() < digits) return false;
    for (std::size_t i = 0; i < digits; ++i)
        if (s[i] < '0' || s[i] > '9') return false;
    std::from_chars(s.data(), s.data() + digits, out);
    s.remove_prefix(digits);
    return true;
}

bool take_char(std::string_view& s, char c) {
    if (s.empty() || s.front() != c) return false;
    s.remove_prefix(1);
    return true;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
    return s;
}

}  // namespace

bool parse_timestamp(std::string_view text, std::int64_t& epoch_seconds) {
    std::string_view s = trim(text);
    CivilTime c;
    if (!take_int(s, 4, c.year) || !take_char(s, '-') || !take_int(s, 2, c.month) || !take_char(s, '-') ||
        !take_int(s, 2, c.day)) {
        return false;
    }
    if (!s.empty()) {
        if (!take_char(s, ' ') && !take_char(s, 'T')) return false;
        if (!take_int(s, 2, c.hour) || !take_char(s, ':') || !take_int(s, 2, c.minute)) return false;
        if (take_char(s, ':')) {
            if (!take_int(s, 2, c.second)) return false;
            if (take_char(s, '.')) {
                while (!s.empty() && s.front() >= '0' && s.front() <= '9') s.remove_prefix(1);
            }
        }
        take_char(s, 'Z');
        if (!s.empty()) return false;
    }
    if (c.month < 1 || c.month > 12 || c.day < 1 || c.day > days_in_month(c.year, c.month) || c.hour > 23 ||
        c.minute > 59 || c.second > 59) {
        return false;
    }
    epoch_seconds = to_epoch_seconds(c);
    return true;
}

std::string format_timestamp(std::int64_t epoch_seconds) {
    const CivilTime c = civil_from_epoch(epoch_seconds);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", c.year, c.month, c.day, c.hour, c.minute, c.second);
    return buf;
}

// ----------------------------------------------------------------------------
// SeriesDataset

SeriesDataset SeriesDataset::from_columns(std::vector<std::int64_t> timestamps, std::size_t width,
                                          std::vector<double> values, std::vector<std::uint8_t> observed,
                                          std::vector<std::string> names) {
    SeriesDataset ds;
    ds.length = timestamps.size();
    ds.width = width;
    ds.values = std::move(values);
    ds.observed = std::move(observed);
    ds.timestamps = std::move(timestamps);
    ds.variate_names = std::move(names);
    if (ds.variate_names.empty())
        for (std::size_t d = 0; d < width; ++d) ds.variate_names.push_back("x" + std::to_string(d));
    ds.day_of_week.reserve(ds.length);
    ds.hour_of_day.reserve(ds.length);
    for (const auto ts : ds.timestamps) {
        ds.day_of_week.push_back(coifnet::day_of_week(ts));
        ds.hour_of_day.push_back(coifnet::hour_of_day(ts));
    }
    ds.validate();
    return ds;
}

void SeriesDataset::validate() const {
    const std::size_t n = length * width;
    if (values.size() != n || observed.size() != n || timestamps.size() != length || day_of_week.size() != length ||
        hour_of_day.size() != length || variate_names.size() != width) {
        fail(ErrorKind::data, "dataset arrays disagree on T=" + std::to_string(length) + ", D=" + std::to_string(width));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (observed[i] > 1) fail(ErrorKind::data, "observation mask holds a value other than 0/1");
        if (!observed[i] && values[i] != 0.0) fail(ErrorKind::data, "missing entry carries a nonzero value");
        if (!std::isfinite(values[i])) fail(ErrorKind::data, "non-finite value in dataset");
    }
    for (std::size_t t = 1; t < length; ++t)
        if (timestamps[t] <= timestamps[t - 1]) fail(ErrorKind::data, "timestamps are not strictly increasing");
}

SeriesDataset SeriesDataset::slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > length) fail(ErrorKind::usage, "dataset slice out of range");
    SeriesDataset out;
    out.length = end - begin;
    out.width = width;
    out.values.assign(values.begin() + begin * width, values.begin() + end * width);
    out.observed.assign(observed.begin() + begin * width, observed.begin() + end * width);
    out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
    out.day_of_week.assign(day_of_week.begin() + begin, day_of_week.begin() + end);
    out.hour_of_day.assign(hour_of_day.begin() + begin, hour_of_day.begin() + end);
    out.time_column = time_column;
    out.variate_names = variate_names;
    return out;
}

double SeriesDataset::observed_fraction() const {
    if (observed.empty()) return 0.0;
    std::size_t count = 0;
    for (const auto m : observed) count += m;
    return static_cast<double>(count) / static_cast<double>(observed.size());
}

// ----------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            cells.push_back(trim(line.substr(pos)));
            return cells;
        }
        cells.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
}

bool is_missing_token(std::string_view cell) {
    return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NAN" || cell == "NA";
}

}  // namespace

SeriesDataset load_csv(const std::filesystem::path& path, const std::string& time_column,
                       const std::vector<std::string>& value_columns) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::data, "cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::data, path.string() + ": empty file");
    const auto header = split_commas(line);
    std::size_t time_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == time_column) time_idx = i;
    if (time_idx == header.size()) fail(ErrorKind::data, path.string() + ": no time column '" + time_column + "'");

    std::vector<std::size_t> cols;
    std::vector<std::string> names;
    if (value_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == time_idx) continue;
            cols.push_back(i);
            names.emplace_back(header[i]);
        }
    } else {
        for (const auto& name : value_columns) {
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) fail(ErrorKind::data, path.string() + ": no column '" + name + "'");
            cols.push_back(static_cast<std::size_t>(it - header.begin()));
            names.push_back(name);
        }
    }
    const std::size_t width = cols.size();

    std::vector<std::int64_t> stamps;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            fail(ErrorKind::data, path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                      " cells, header has " + std::to_string(header.size()));
        }
        std::int64_t ts = 0;
        if (!parse_timestamp(cells[time_idx], ts)) {
            fail(ErrorKind::data, path.string() + ": unparseable timestamp '" + std::string(cells[time_idx]) + "' at row " +
                                      std::to_string(row));
        }
        if (!stamps.empty() && ts <= stamps.back()) {
            fail(ErrorKind::data, path.string() + ": non-monotonic time at row " + std::to_string(row));
        }
        stamps.push_back(ts);
        for (const auto c : cols) {
            const auto cell = cells[c];
            if (is_missing_token(cell)) {
                values.push_back(0.0);
                observed.push_back(0);
                continue;
            }
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                fail(ErrorKind::data, path.string() + ": non-numeric cell '" + std::string(cell) + "' at row " +
                                          std::to_string(row));
            }
            if (std::isnan(v)) {
                values.push_back(0.0);
                observed.push_back(0);
            } else {
                values.push_back(v);
                observed.push_back(1);
            }
        }
    }
    if (stamps.empty()) fail(ErrorKind::data, path.string() + ": no data rows");
    auto ds = SeriesDataset::from_columns(std::move(stamps), width, std::move(values), std::move(observed), std::move(names));
    ds.time_column = time_column;
    return ds;
}

void write_csv(const SeriesDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cannot write " + path.string());
    out << ds.time_column;
    for (const auto& name : ds.variate_names) out << ',' << name;
    out << '\n';
    char buf[64];
    for (std::size_t t = 0; t < ds.length; ++t) {
        out << format_timestamp(ds.timestamps[t]);
        for (std::size_t d = 0; d < ds.width; ++d) {
            out << ',';
            if (!ds.is_observed(t, d)) continue;
            // Shortest representation that round-trips exactly.
            const auto res = std::to_chars(buf, buf + sizeof buf, ds.value(t, d));
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) fail(ErrorKind::data, "write failed for " + path.string());
}

// ----------------------------------------------------------------------------
// Splits and windows

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) fail(ErrorKind::config, "split fractions must be >= 0");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) fail(ErrorKind::config, "split fractions must sum to 1");
}

SplitLengths split_lengths(std::size_t total, const SplitSpec& spec) {
    spec.validate();
    const auto part = [total](double frac) {
        // Guard against products like 0.6 * 100 landing a hair below an integer.
        return static_cast<std::size_t>(std::floor(static_cast<double>(total) * frac + 1e-9));
    };
    SplitLengths out;
    out.train = std::min(part(spec.train_frac), total);
    out.val = std::min(part(spec.val_frac), total - out.train);
    out.test = total - out.train - out.val;
    return out;
}

DatasetSplits chronological_split(const SeriesDataset& ds, const SplitSpec& spec, std::size_t min_length) {
    const auto len = split_lengths(ds.length, spec);
    const auto check = [min_length](std::size_t n, const char* name) {
        if (n < min_length) {
            fail(ErrorKind::config, std::string(name) + " split has " + std::to_string(n) +
                                        " rows; at least " + std::to_string(min_length) + " (L+H) are required");
        }
    };
    check(len.train, "train");
    check(len.val, "validation");
    check(len.test, "test");
    return DatasetSplits{ds.slice(0, len.train), ds.slice(len.train, len.train + len.val),
                         ds.slice(len.train + len.val, ds.length)};
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride) {
    if (lookback == 0 || horizon == 0 || stride == 0) fail(ErrorKind::config, "L, H and stride must be positive");
    if (length < lookback + horizon) {
        fail(ErrorKind::config, "series of length " + std::to_string(length) + " is shorter than L+H=" +
                                    std::to_string(lookback + horizon));
    }
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + lookback + horizon <= length; s += stride) starts.push_back(s);
    return starts;
}

WindowBatch collate(const SeriesDataset& input, const SeriesDataset& target, std::span<const std::size_t> starts,
                    std::size_t lookback, std::size_t horizon) {
    if (input.length != target.length || input.width != target.width) {
        fail(ErrorKind::dimension, "collate: input and target datasets differ in shape");
    }
    const std::size_t B = starts.size();
    const std::size_t D = input.width;
    WindowBatch w;
    w.batch = B;
    w.lookback = lookback;
    w.horizon = horizon;
    w.width = D;
    w.X = Tensor(Shape{B, lookback, D});
    w.Mx = Tensor(Shape{B, lookback, D});
    w.Y = Tensor(Shape{B, horizon, D});
    w.My = Tensor(Shape{B, horizon, D});
    w.dow.reserve(B * lookback);
    w.hod.reserve(B * lookback);
    w.starts.assign(starts.begin(), starts.end());
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t s = starts[b];
        if (s + lookback + horizon > input.length) fail(ErrorKind::usage, "collate: window runs past the series end");
        for (std::size_t t = 0; t < lookback; ++t) {
            for (std::size_t d = 0; d < D; ++d) {
                const bool obs = input.is_observed(s + t, d);
                w.Mx(b, t, d) = obs ? 1.0 : 0.0;
                w.X(b, t, d) = obs ? input.value(s + t, d) : 0.0;
            }
            w.dow.push_back(static_cast<std::size_t>(input.day_of_week[s + t]));
            w.hod.push_back(static_cast<std::size_t>(input.hour_of_day[s + t]));
        }
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t d = 0; d < D; ++d) {
                const bool obs = target.is_observed(s + lookback + t, d);
                w.My(b, t, d) = obs ? 1.0 : 0.0;
                w.Y(b, t, d) = obs ? target.value(s + lookback + t, d) : 0.0;
            }
        }
    }
    return w;
}

std::vector<WindowBatch> make_windows(const SeriesDataset& ds, std::size_t lookback, std::size_t horizon,
                                      std::size_t stride) {
    std::vector<WindowBatch> out;
    for (const auto s : window_starts(ds.length, lookback, horizon, stride)) {
        const std::size_t one[] = {s};
        out.push_back(collate(ds, one, lookback, horizon));
    }
    return out;
}

// ----------------------------------------------------------------------------
// Scaling

Standardizer Standardizer::fit(const SeriesDataset& ds) {
    Standardizer s;
    s.mean.assign(ds.width, 0.0);
    s.scale.assign(ds.width, 1.0);
    for (std::size_t d = 0; d < ds.width; ++d) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < ds.length; ++t) {
            if (!ds.is_observed(t, d)) continue;
            sum += ds.value(t, d);
            ++n;
        }
        if (n == 0) continue;
        const double mu = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t t = 0; t < ds.length; ++t) {
            if (!ds.is_observed(t, d)) continue;
            const double r = ds.value(t, d) - mu;
            ss += r * r;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n));
        s.mean[d] = mu;
        s.scale[d] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

SeriesDataset Standardizer::apply(const SeriesDataset& ds) const {
    if (mean.size() != ds.width) fail(ErrorKind::dimension, "standardizer width does not match dataset");
    SeriesDataset out = ds;
    for (std::size_t t = 0; t < ds.length; ++t)
        for (std::size_t d = 0; d < ds.width; ++d)
            if (ds.is_observed(t, d)) out.values[t * ds.width + d] = (ds.value(t, d) - mean[d]) / scale[d];
    return out;
}

// ----------------------------------------------------------------------------
// Synthetic data

SeriesDataset synthesize(const SynthSpec& spec) {
    if (spec.length == 0 || spec.width == 0) fail(ErrorKind::config, "synth: T and D must be positive");
    if (!(spec.noise >= 0.0) || !(spec.drift >= 0.0)) fail(ErrorKind::config, "synth: noise and drift must be >= 0");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Rng rng(spec.seed);
    const std::size_t D = spec.width;
    std::vector<double> level(D), a(D), phi(D), b(D), psi(D), c(D);
    for (std::size_t d = 0; d < D; ++d) {
        level[d] = rng.uniform(-1.0, 1.0);
        a[d] = rng.uniform(0.5, 1.5);
        phi[d] = rng.uniform(0.0, two_pi);
        b[d] = rng.uniform(0.2, 0.8);
        psi[d] = rng.uniform(0.0, two_pi);
        c[d] = rng.uniform(0.0, 0.3);
    }
    // Monday 2016-07-04 00:00:00 UTC.
    const std::int64_t start = days_from_civil(2016, 7, 4) * 86400;
    std::vector<std::int64_t> stamps(spec.length);
    std::vector<double> values(spec.length * D);
    std::vector<double> walk(D, 0.0);
    for (std::size_t t = 0; t < spec.length; ++t) {
        stamps[t] = start + static_cast<std::int64_t>(t) * 3600;
        const double tt = static_cast<double>(t);
        for (std::size_t d = 0; d < D; ++d) {
            if (spec.drift > 0.0 && t > 0) walk[d] += spec.drift * rng.normal();
            double v = level[d] + a[d] * std::sin(two_pi * tt / 24.0 + phi[d]) +
                       b[d] * std::sin(two_pi * tt / 168.0 + psi[d]) + c[d] * std::sin(two_pi * tt / 12.0 + phi[d]) +
                       walk[d];
            if (spec.noise > 0.0) v += spec.noise * rng.normal();
            values[t * D + d] = v;
        }
    }
    std::vector<std::string> names;
    for (std::size_t d = 0; d < D; ++d) names.push_back("v" + std::to_string(d));
    return SeriesDataset::from_columns(std::move(stamps), D, std::move(values),
                                       std::vector<std::uint8_t>(spec.length * D, 1), std::move(names));
}

}  // namespace coifnet
