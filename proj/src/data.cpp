#include "fedvol/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fedvol/rng.hpp"

namespace fedvol::data {

void PriceSeries::validate() const {
    if (dates.size() != closes.size())
        throw ValidationError("price series: dates/closes length mismatch");
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (!(closes[i] > 0.0))
            throw ValidationError("price series '" + market_id + "': non-positive close at " +
                                  format_date(dates[i]));
        if (i > 0 && !(dates[i - 1] < dates[i]))
            throw ValidationError("price series '" + market_id + "': dates not strictly increasing at " +
                                  format_date(dates[i]));
    }
}

double SampleSet::label_one_fraction() const {
    if (samples.empty()) throw SizeError("label_one_fraction: empty sample set");
    std::size_t ones = 0;
    for (const auto& s : samples) {
        if (s.label < 0) throw ValidationError("label_one_fraction: unlabeled sample present");
        ones += static_cast<std::size_t>(s.label);
    }
    return static_cast<double>(ones) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

PriceSeries load_price_csv(std::istream& in, const std::string& market_id) {
    static const char* kHeader = "Date,Open,High,Low,Close,Adj Close,Volume";
    std::string line;
    if (!std::getline(in, line)) throw FormatError("price csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        throw FormatError("price csv: malformed header '" + line + "' (expected '" + kHeader + "')");

    std::vector<std::pair<Date, double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 7)
            throw ValidationError("price csv row " + std::to_string(line_no) + ": expected 7 fields, got " +
                                  std::to_string(fields.size()));
        const std::string& close_text = fields[4];
        if (close_text.empty() || close_text == "null") continue;
        Date d;
        try {
            d = parse_date(fields[0]);
        } catch (const ValidationError& e) {
            throw ValidationError("price csv row " + std::to_string(line_no) + ": " + e.what());
        }
        std::size_t pos = 0;
        double close = 0.0;
        try {
            close = std::stod(close_text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != close_text.size())
            throw ValidationError("price csv row " + std::to_string(line_no) + ": unparseable Close '" +
                                  close_text + "'");
        if (!(close > 0.0))
            throw ValidationError("price csv row " + std::to_string(line_no) + ": non-positive Close " +
                                  close_text);
        rows.emplace_back(d, close);
    }

    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    PriceSeries out;
    out.market_id = market_id;
    out.dates.reserve(rows.size());
    out.closes.reserve(rows.size());
    for (const auto& [d, c] : rows) {
        out.dates.push_back(d);
        out.closes.push_back(c);
    }
    out.validate(); // catches duplicate dates after the sort
    return out;
}

PriceSeries load_price_csv_file(const std::string& path, const std::string& market_id) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open price csv '" + path + "'");
    return load_price_csv(in, market_id);
}

// ---------------------------------------------------------------------------
// Feature engineering
// ---------------------------------------------------------------------------

ReturnSeries log_returns(const PriceSeries& p) {
    if (p.size() < 2) throw SizeError("log_returns: need at least 2 prices");
    ReturnSeries out;
    out.market_id = p.market_id;
    out.dates.assign(p.dates.begin() + 1, p.dates.end());
    out.values.resize(p.size() - 1);
    for (std::size_t t = 1; t < p.size(); ++t)
        out.values[t - 1] = std::log(p.closes[t] / p.closes[t - 1]);
    return out;
}

ReturnSeries rolling_mean(const ReturnSeries& r, int window) {
    if (window < 1) throw ParameterError("rolling_mean: window must be >= 1");
    if (r.size() < static_cast<std::size_t>(window))
        throw SizeError("rolling_mean: window exceeds series length");
    const std::size_t n_out = r.size() - static_cast<std::size_t>(window) + 1;
    ReturnSeries out;
    out.market_id = r.market_id;
    out.dates.assign(r.dates.begin() + (window - 1), r.dates.end());
    out.values.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        double sum = 0.0;
        for (int j = 0; j < window; ++j) sum += r.values[i + static_cast<std::size_t>(j)];
        out.values[i] = sum / window;
    }
    return out;
}

ReturnSeries volatility_proxy(const ReturnSeries& r, int window) {
    if (window < 2) throw ParameterError("volatility_proxy: window must be >= 2");
    if (r.size() < static_cast<std::size_t>(window))
        throw SizeError("volatility_proxy: window exceeds series length");
    const std::size_t n_out = r.size() - static_cast<std::size_t>(window) + 1;
    ReturnSeries out;
    out.market_id = r.market_id;
    out.dates.assign(r.dates.begin() + (window - 1), r.dates.end());
    out.values.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        double mean = 0.0, mean_sq = 0.0;
        for (int j = 0; j < window; ++j) {
            const double v = r.values[i + static_cast<std::size_t>(j)];
            mean += v;
            mean_sq += v * v;
        }
        mean /= window;
        mean_sq /= window;
        out.values[i] = std::sqrt(std::max(0.0, mean_sq - mean * mean));
    }
    return out;
}

ReturnSeries cumulative_sum(const ReturnSeries& r) {
    ReturnSeries out;
    out.market_id = r.market_id;
    out.dates = r.dates;
    out.values.resize(r.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        acc += r.values[i];
        out.values[i] = acc;
    }
    return out;
}

Eigen::Matrix<double, 6, 1> calendar_features(const Date& d) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double dow_phase = two_pi * day_of_week(d) / 7.0;
    const double month_phase = two_pi * (d.month - 1) / 12.0;
    const double dom_phase = two_pi * (d.day - 1) / 31.0;
    Eigen::Matrix<double, 6, 1> f;
    f << std::sin(dow_phase), std::cos(dow_phase), std::sin(month_phase), std::cos(month_phase),
        std::sin(dom_phase), std::cos(dom_phase);
    return f;
}

SampleSet build_samples(const ReturnSeries& smoothed, const ReturnSeries& vols, int horizon,
                        const std::vector<ReturnSeries>& extra_features) {
    if (horizon < 1) throw ParameterError("build_samples: horizon must be >= 1");
    if (smoothed.dates != vols.dates)
        throw ValidationError("build_samples: smoothed/volatility series are not date-aligned");
    for (const auto& ex : extra_features)
        if (ex.dates != smoothed.dates)
            throw ValidationError("build_samples: extra feature series not date-aligned");
    const std::size_t n = smoothed.size();
    if (n < static_cast<std::size_t>(horizon) + 1)
        throw SizeError("build_samples: need at least horizon+1 aligned days");

    const int d = 7 + static_cast<int>(extra_features.size());
    SampleSet out;
    out.samples.reserve(n - static_cast<std::size_t>(horizon));
    // Window ends at index j; the target is the proxy value at j+1, so no
    // feature may postdate the sample's own date.
    for (std::size_t j = static_cast<std::size_t>(horizon) - 1; j + 1 < n; ++j) {
        Sample s;
        s.market_id = smoothed.market_id;
        s.date = smoothed.dates[j];
        s.target_date = smoothed.dates[j + 1];
        s.target_vol = vols.values[j + 1];
        s.window.resize(horizon, d);
        for (int row = 0; row < horizon; ++row) {
            const std::size_t idx = j - static_cast<std::size_t>(horizon) + 1 + static_cast<std::size_t>(row);
            s.window(row, 0) = smoothed.values[idx];
            s.window.block<1, 6>(row, 1) = calendar_features(smoothed.dates[idx]).transpose();
            for (std::size_t e = 0; e < extra_features.size(); ++e)
                s.window(row, 7 + static_cast<int>(e)) = extra_features[e].values[idx];
        }
        if (!s.window.allFinite())
            throw ValidationError("build_samples: non-finite feature at " + format_date(s.date));
        out.samples.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting, labeling, partitioning
// ---------------------------------------------------------------------------

std::pair<SampleSet, SampleSet> chrono_split(const SampleSet& s, double train_fraction) {
    if (s.empty()) throw SizeError("chrono_split: empty sample set");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ParameterError("chrono_split: train_fraction must be in (0, 1)");
    const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(s.size()));
    SampleSet train, test;
    train.samples.assign(s.samples.begin(), s.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.samples.assign(s.samples.begin() + static_cast<std::ptrdiff_t>(n_train), s.samples.end());
    return {std::move(train), std::move(test)};
}

double label_by_median(SampleSet& train, SampleSet& test) {
    if (train.empty()) throw SizeError("label_by_median: empty training set");
    std::vector<double> targets;
    targets.reserve(train.size());
    for (const auto& s : train.samples) targets.push_back(s.target_vol);
    std::sort(targets.begin(), targets.end());
    const std::size_t n = targets.size();
    const double threshold =
        (n % 2 == 1) ? targets[n / 2] : 0.5 * (targets[n / 2 - 1] + targets[n / 2]);

    auto apply = [threshold](SampleSet& set) {
        for (auto& s : set.samples) s.label = (s.target_vol >= threshold) ? 1 : 0;
        set.threshold = threshold;
    };
    apply(train);
    apply(test);
    return threshold;
}

std::vector<Partition> partition_iid(const SampleSet& train, int n_clients, std::uint64_t seed) {
    if (n_clients < 1) throw ParameterError("partition_iid: n_clients must be >= 1");
    if (static_cast<std::size_t>(n_clients) > train.size())
        throw SizeError("partition_iid: more clients than samples");

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n = train.size();
    const std::size_t base = n / static_cast<std::size_t>(n_clients);
    const std::size_t extra = n % static_cast<std::size_t>(n_clients);
    std::vector<Partition> parts(static_cast<std::size_t>(n_clients));
    std::size_t pos = 0;
    for (int k = 0; k < n_clients; ++k) {
        auto& part = parts[static_cast<std::size_t>(k)];
        part.client_id = k;
        const std::size_t sz = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        part.samples.samples.reserve(sz);
        for (std::size_t i = 0; i < sz; ++i)
            part.samples.samples.push_back(train.samples[order[pos++]]);
        part.samples.threshold = train.threshold;
    }
    return parts;
}

std::vector<Partition> partition_quarters(const SampleSet& train) {
    std::vector<Partition> parts(4);
    for (int q = 0; q < 4; ++q) {
        parts[static_cast<std::size_t>(q)].client_id = q;
        parts[static_cast<std::size_t>(q)].samples.threshold = train.threshold;
    }
    for (const auto& s : train.samples)
        parts[static_cast<std::size_t>(quarter_of(s.target_date))].samples.samples.push_back(s);
    return parts;
}

SampleSet subsample_fraction(const SampleSet& s, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ParameterError("subsample_fraction: fraction must be in (0, 1]");
    const auto n_keep = static_cast<std::size_t>(fraction * static_cast<double>(s.size()));
    if (n_keep == 0) throw SizeError("subsample_fraction: empty result");
    SampleSet out;
    out.samples.assign(s.samples.begin(), s.samples.begin() + static_cast<std::ptrdiff_t>(n_keep));
    out.threshold = s.threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const SampleSet& train) {
    if (train.empty()) throw SizeError("Standardizer::fit: empty training set");
    const auto d = train.samples.front().window.cols();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mean_sq = Eigen::VectorXd::Zero(d);
    double count = 0.0;
    for (const auto& s : train.samples) {
        if (s.window.cols() != d) throw ValidationError("Standardizer::fit: inconsistent feature width");
        for (Eigen::Index r = 0; r < s.window.rows(); ++r) {
            mean += s.window.row(r).transpose();
            mean_sq += s.window.row(r).transpose().cwiseProduct(s.window.row(r).transpose());
            count += 1.0;
        }
    }
    mean /= count;
    mean_sq /= count;
    Standardizer out;
    out.mean = mean;
    out.scale.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double var = std::max(0.0, mean_sq(i) - mean(i) * mean(i));
        const double sd = std::sqrt(var);
        out.scale(i) = (sd < 1e-12) ? 1.0 : sd;
    }
    return out;
}

SampleSet Standardizer::apply(const SampleSet& s) const {
    SampleSet out = s;
    for (auto& sample : out.samples) {
        if (sample.window.cols() != mean.size())
            throw ValidationError("Standardizer::apply: feature width mismatch");
        sample.window = (sample.window.rowwise() - mean.transpose()).array().rowwise() /
                        scale.transpose().array();
    }
    return out;
}

} // namespace fedvol::data
