#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coifnet/tensor.hpp"

namespace coifnet {

// Civil-calendar helpers (proleptic Gregorian, UTC, no time zones).
struct CivilTime {
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;
    int second = 0;
};

std::int64_t days_from_civil(int year, int month, int day) noexcept;
CivilTime civil_from_epoch(std::int64_t epoch_seconds) noexcept;
std::int64_t to_epoch_seconds(const CivilTime& c) noexcept;
// Monday = 0 ... Sunday = 6.
int day_of_week(std::int64_t epoch_seconds) noexcept;
int hour_of_day(std::int64_t epoch_seconds) noexcept;

// Parses `YYYY-MM-DD`, `YYYY-MM-DD HH:MM[:SS[.fff]]` or the ISO-8601 `T` form with
// an optional trailing `Z`. Returns false on malformed input.
bool parse_timestamp(std::string_view text, std::int64_t& epoch_seconds);
std::string format_timestamp(std::int64_t epoch_seconds);

// T x D series. Missing entries (observed == 0) hold value 0.
struct SeriesDataset {
    std::size_t length = 0;  // T
    std::size_t width = 0;   // D
    std::vector<double> values;
    std::vector<std::uint8_t> observed;
    std::vector<std::int64_t> timestamps;  // epoch seconds
    std::vector<int> day_of_week;
    std::vector<int> hour_of_day;
    std::string time_column = "date";
    std::vector<std::string> variate_names;

    double value(std::size_t t, std::size_t d) const { return values[t * width + d]; }
    bool is_observed(std::size_t t, std::size_t d) const { return observed[t * width + d] != 0; }

    // Rows [begin, end).
    SeriesDataset slice(std::size_t begin, std::size_t end) const;
    double observed_fraction() const;

    // Throws a data error if any invariant is broken.
    void validate() const;

    static SeriesDataset from_columns(std::vector<std::int64_t> timestamps, std::size_t width,
                                      std::vector<double> values, std::vector<std::uint8_t> observed,
                                      std::vector<std::string> names);
};

// `value_columns` empty selects every non-time column.
SeriesDataset load_csv(const std::filesystem::path& path, const std::string& time_column,
                       const std::vector<std::string>& value_columns = {});
void write_csv(const SeriesDataset& ds, const std::filesystem::path& path);

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;

    void validate() const;
};

struct SplitLengths {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// floor(T * frac) rows for train and val, the remainder to test.
SplitLengths split_lengths(std::size_t total, const SplitSpec& spec);

struct DatasetSplits {
    SeriesDataset train;
    SeriesDataset val;
    SeriesDataset test;
};

// Contiguous train -> val -> test partition. `min_length` (L + H) is the
// smallest admissible split; shorter splits are a config error.
DatasetSplits chronological_split(const SeriesDataset& ds, const SplitSpec& spec, std::size_t min_length);

// Aligned lookback / forecast windows. X, Mx: B x L x D; Y, My: B x H x D;
// dow, hod: B*L calendar indices of the lookback steps.
struct WindowBatch {
    std::size_t batch = 0;
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t width = 0;
    Tensor X;
    Tensor Mx;
    Tensor Y;
    Tensor My;
    std::vector<std::size_t> dow;
    std::vector<std::size_t> hod;
    std::vector<std::size_t> starts;
};

// Start offsets 0, stride, 2*stride, ...; count = floor((T - L - H) / stride) + 1.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t lookback, std::size_t horizon,
                                       std::size_t stride = 1);

// Lookback from `input`, forecast targets from `target` (same shape and timeline).
WindowBatch collate(const SeriesDataset& input, const SeriesDataset& target, std::span<const std::size_t> starts,
                    std::size_t lookback, std::size_t horizon);
inline WindowBatch collate(const SeriesDataset& ds, std::span<const std::size_t> starts, std::size_t lookback,
                           std::size_t horizon) {
    return collate(ds, ds, starts, lookback, horizon);
}

// One single-window batch per start offset.
std::vector<WindowBatch> make_windows(const SeriesDataset& ds, std::size_t lookback, std::size_t horizon,
                                      std::size_t stride = 1);

// Per-variate affine scaling fitted on observed entries of a reference split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const SeriesDataset& ds);
    SeriesDataset apply(const SeriesDataset& ds) const;
};

// Sinusoid-mixture generator with hourly timestamps starting Monday 2016-07-04 00:00.
//
// For variate d and step t:
//   x_d(t) = level_d + a_d sin(2 pi t / 24 + phi_d) + b_d sin(2 pi t / 168 + psi_d)
//            + c_d sin(2 pi t / 12 + phi_d) + w_d(t) + noise * e_{t,d}
// with level_d ~ U(-1, 1), a_d ~ U(0.5, 1.5), b_d ~ U(0.2, 0.8), c_d ~ U(0, 0.3),
// phi_d, psi_d ~ U(0, 2 pi), e ~ N(0, 1), and w_d a random walk with N(0, drift^2)
// increments (w_d(0) = 0). Draw order: for each d the six coefficients
// in the order level, a, phi, b, psi, c, then row-major over (t, d): the walk increment when
// drift > 0 and t >= 1, then the noise draw when noise > 0.
struct SynthSpec {
    std::size_t length = 2000;
    std::size_t width = 7;
    std::uint64_t seed = 1;
    double noise = 0.1;
    double drift = 0.0;
};

SeriesDataset synthesize(const SynthSpec& spec);

}  // namespace coifnet
