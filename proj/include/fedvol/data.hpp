#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "fedvol/dates.hpp"
#include "fedvol/errors.hpp"

namespace fedvol::data {

/// Dated closing-price series for one market. Dates are strictly increasing
/// and every close is positive; construction enforces both.
struct PriceSeries {
    std::string market_id;
    std::vector<Date> dates;
    std::vector<double> closes;

    std::size_t size() const { return dates.size(); }
    void validate() const;
};

/// Dated scalar series (log-returns, smoothed returns, volatility proxies).
struct ReturnSeries {
    std::string market_id;
    std::vector<Date> dates;
    std::vector<double> values;

    std::size_t size() const { return dates.size(); }
};

/// One supervised instance: a (horizon x d) feature window whose rows cover
/// the `horizon` days ending at `date`, and a volatility target observed on
/// `target_date` (the next business day). `label` is -1 until labeling.
struct Sample {
    Date date;        // last feature day
    Date target_date; // day the volatility target refers to
    Eigen::MatrixXd window;
    double target_vol = 0.0;
    int label = -1;
    std::string market_id;
};

struct SampleSet {
    std::vector<Sample> samples;
    std::optional<double> threshold; // labeling threshold, set by label_by_median

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    /// Fraction of label-1 samples; requires a labeled set.
    double label_one_fraction() const;
};

struct Partition {
    int client_id = 0;
    SampleSet samples;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Reads a Yahoo-Finance style CSV (`Date,Open,High,Low,Close,Adj Close,Volume`).
/// Only Date and Close are consumed; rows with an empty or `null` Close are
/// skipped; output is sorted by date. Throws FormatError on a bad header and
/// ValidationError (naming the row) on non-positive prices or bad dates.
PriceSeries load_price_csv(std::istream& in, const std::string& market_id);
PriceSeries load_price_csv_file(const std::string& path, const std::string& market_id);

// ---------------------------------------------------------------------------
// Feature engineering
// ---------------------------------------------------------------------------

/// value_t = ln(close_t / close_{t-1}), dated by day t. Output length is
/// input length - 1.
ReturnSeries log_returns(const PriceSeries& p);

/// Trailing (valid-mode) moving average: output_t = mean of the `window`
/// values ending at t, dated by the window-end day.
ReturnSeries rolling_mean(const ReturnSeries& r, int window = 5);

/// Trailing population standard deviation over `window` raw values, dated by
/// the window-end day. This is the per-day volatility statistic whose train
/// median later defines the high/low label.
ReturnSeries volatility_proxy(const ReturnSeries& r, int window = 5);

/// Running sum of values since the series start (same dates as the input).
ReturnSeries cumulative_sum(const ReturnSeries& r);

/// Six cyclical calendar encodings for one date:
/// (sin, cos) of day-of-week / 7, of (month-1) / 12, and of (day-of-month-1) / 31,
/// with Monday = 0 so that a Monday January 1st is the zero-phase anchor.
Eigen::Matrix<double, 6, 1> calendar_features(const Date& d);

/// Assembles sliding-window samples from aligned series. Row j of a window
/// holds (smoothed return, 6 calendar features[, extra feature columns]) for
/// the j-th day of the window; the target volatility is the proxy value one
/// day past the window. All series must share dates exactly.
SampleSet build_samples(const ReturnSeries& smoothed, const ReturnSeries& vols, int horizon = 5,
                        const std::vector<ReturnSeries>& extra_features = {});

// ---------------------------------------------------------------------------
// Splitting, labeling, partitioning
// ---------------------------------------------------------------------------

/// Chronological split: first floor(train_fraction * n) samples go to train.
std::pair<SampleSet, SampleSet> chrono_split(const SampleSet& s, double train_fraction = 0.8);

/// Labels both sets against the median of the TRAIN target volatilities
/// (mean of the middle two for even counts). label = 1 iff target >= threshold.
/// Returns the threshold; the same value is stored on both sets.
double label_by_median(SampleSet& train, SampleSet& test);

/// Seeded uniform shuffle followed by near-equal contiguous chunks; sizes
/// differ by at most one and the partitions exactly cover the input.
std::vector<Partition> partition_iid(const SampleSet& train, int n_clients, std::uint64_t seed);

/// Client q in {0..3} receives the samples whose target-date month falls in
/// calendar quarter q. Empty quarters are allowed.
std::vector<Partition> partition_quarters(const SampleSet& train);

/// Chronologically contiguous prefix of floor(fraction * n) samples.
SampleSet subsample_fraction(const SampleSet& s, double fraction);

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-feature affine normalization fitted on a training set and applied to
/// any set. Features with (near) zero variance are passed through unscaled.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const SampleSet& train);
    SampleSet apply(const SampleSet& s) const;
};

} // namespace fedvol::data
