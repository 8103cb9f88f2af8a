#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fedvol/data.hpp"
#include "fedvol/rng.hpp"
#include "fedvol/synthetic.hpp"
#include "test_util.hpp"

using namespace fedvol;
using namespace fedvol::data;

namespace {

ReturnSeries make_series(std::vector<double> values, Date start = {2020, 1, 6}) {
    ReturnSeries r;
    r.market_id = "T";
    Date d = start;
    for (double v : values) {
        r.dates.push_back(d);
        r.values.push_back(v);
        d = next_business_day(d);
    }
    return r;
}

PriceSeries make_prices(std::vector<double> closes, Date start = {2020, 1, 6}) {
    PriceSeries p;
    p.market_id = "T";
    Date d = start;
    for (double c : closes) {
        p.dates.push_back(d);
        p.closes.push_back(c);
        d = next_business_day(d);
    }
    return p;
}

double autocorr_lag1(const std::vector<double>& x) {
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        if (i + 1 < n) num += (x[i] - mean) * (x[i + 1] - mean);
    }
    return num / den;
}

} // namespace

TEST_CASE("dates: day-of-week and business days") {
    CHECK(day_of_week(Date{2015, 1, 1}) == 3);  // Thursday
    CHECK(day_of_week(Date{2024, 1, 1}) == 0);  // Monday
    CHECK(day_of_week(Date{2020, 1, 5}) == 6);  // Sunday
    CHECK(next_business_day(Date{2015, 1, 2}) == Date{2015, 1, 5}); // Fri -> Mon
    CHECK(parse_date("2015-01-02") == Date{2015, 1, 2});
    CHECK(format_date(Date{2015, 1, 2}) == "2015-01-02");
    CHECK_THROWS_AS(parse_date("2015-02-30"), ValidationError);
    CHECK_THROWS_AS(parse_date("2015/01/02"), ValidationError);
    CHECK(quarter_of(Date{2016, 2, 10}) == 0);
    CHECK(quarter_of(Date{2016, 12, 31}) == 3);
}

TEST_CASE("rng: determinism and rough distribution") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(7);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);

    Rng u(9);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("load_price_csv: field extraction, sorting, skipping") {
    const std::string text =
        "Date,Open,High,Low,Close,Adj Close,Volume\n"
        "2015-01-05,1,1,1,105.0,105.0,10\n"
        "2015-01-02,1,1,1,100.0,100.0,10\n"
        "2015-01-06,1,1,1,null,null,0\n"
        "2015-01-07,1,1,1,,,0\n";
    std::istringstream in(text);
    const PriceSeries p = load_price_csv(in, "SPX");
    REQUIRE(p.size() == 2);
    CHECK(p.closes[0] == 100.0);
    CHECK(p.closes[1] == 105.0);
    CHECK(p.dates[0] == Date{2015, 1, 2});
    CHECK(p.market_id == "SPX");
}

TEST_CASE("load_price_csv: errors") {
    std::istringstream bad_header("Date,Close\n");
    CHECK_THROWS_AS(load_price_csv(bad_header, "X"), FormatError);

    std::istringstream neg(
        "Date,Open,High,Low,Close,Adj Close,Volume\n"
        "2015-01-02,1,1,1,-5.0,1,0\n");
    CHECK_THROWS_WITH_AS(load_price_csv(neg, "X"), doctest::Contains("row 2"), ValidationError);

    std::istringstream bad_date(
        "Date,Open,High,Low,Close,Adj Close,Volume\n"
        "01/02/2015,1,1,1,5.0,1,0\n");
    CHECK_THROWS_AS(load_price_csv(bad_date, "X"), ValidationError);

    std::istringstream dup(
        "Date,Open,High,Low,Close,Adj Close,Volume\n"
        "2015-01-02,1,1,1,5.0,1,0\n"
        "2015-01-02,1,1,1,6.0,1,0\n");
    CHECK_THROWS_AS(load_price_csv(dup, "X"), ValidationError);
}

TEST_CASE("generate_synthetic: determinism and degenerate case") {
    const GarchParams degenerate{1e-4, 0.0, 0.0};
    const PriceSeries a = generate_synthetic(2000, degenerate, 0.0, Date{2015, 1, 2}, 99);
    const PriceSeries b = generate_synthetic(2000, degenerate, 0.0, Date{2015, 1, 2}, 99);
    CHECK(a.closes == b.closes);
    CHECK(a.dates == b.dates);

    for (const Date& d : a.dates) CHECK(!is_weekend(d));

    // alpha = beta = 0 collapses to i.i.d. normal returns with variance omega.
    const ReturnSeries r = log_returns(a);
    double mean = 0.0, mean_sq = 0.0;
    for (double v : r.values) {
        mean += v;
        mean_sq += v * v;
    }
    mean /= static_cast<double>(r.size());
    mean_sq /= static_cast<double>(r.size());
    const double var = mean_sq - mean * mean;
    CHECK(var == doctest::Approx(1e-4).epsilon(0.2));

    CHECK_THROWS_AS(generate_synthetic(2000, GarchParams{1e-5, 0.5, 0.5}, 0.0, Date{2015, 1, 2}, 1),
                    ParameterError);
    CHECK_THROWS_AS(generate_synthetic(10, degenerate, 0.0, Date{2015, 1, 2}, 1), ParameterError);
}

TEST_CASE("generate_synthetic: volatility clustering") {
    const GarchParams params{8e-6, 0.10, 0.85};
    const PriceSeries p = generate_synthetic(2000, params, 0.0, Date{2015, 1, 2}, 11);
    const ReturnSeries r = log_returns(p);
    std::vector<double> sq(r.values.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = r.values[i] * r.values[i];
    const double ac_ret = autocorr_lag1(r.values);
    const double ac_sq = autocorr_lag1(sq);
    CHECK(ac_sq > ac_ret); // squared returns carry the persistence
    CHECK(ac_sq > 0.05);
}

TEST_CASE("log_returns: values and telescoping") {
    const ReturnSeries r = log_returns(make_prices({100.0, 105.0, 100.0}));
    REQUIRE(r.size() == 2);
    CHECK(r.values[0] == doctest::Approx(0.04879016416943205).epsilon(1e-12));
    CHECK(r.values[1] == doctest::Approx(-0.04879016416943205).epsilon(1e-12));

    const ReturnSeries flat = log_returns(make_prices({50.0, 50.0, 50.0}));
    CHECK(flat.values[0] == 0.0);
    CHECK(flat.values[1] == 0.0);

    const ReturnSeries e = log_returns(make_prices({1.0, std::numbers::e}));
    CHECK(e.values[0] == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(log_returns(make_prices({100.0})), SizeError);

    // Telescoping over a random series.
    Rng rng(5);
    std::vector<double> closes{100.0};
    for (int i = 0; i < 200; ++i) closes.push_back(closes.back() * std::exp(0.01 * rng.normal()));
    const PriceSeries p = make_prices(closes);
    const ReturnSeries rr = log_returns(p);
    double total = 0.0;
    for (double v : rr.values) total += v;
    CHECK(std::abs(total - std::log(p.closes.back() / p.closes.front())) < 1e-12);
}

TEST_CASE("rolling_mean") {
    const ReturnSeries out = rolling_mean(make_series({1, 2, 3, 4, 5, 6}), 5);
    REQUIRE(out.size() == 2);
    CHECK(out.values[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(out.values[1] == doctest::Approx(4.0).epsilon(1e-15));

    const ReturnSeries src = make_series({1.5, -2.0, 0.25});
    const ReturnSeries ident = rolling_mean(src, 1);
    CHECK(ident.values == src.values);
    CHECK(ident.dates == src.dates);

    const ReturnSeries constant = rolling_mean(make_series({2.0, 2.0, 2.0, 2.0}), 3);
    REQUIRE(constant.size() == 2);
    CHECK(constant.values[0] == doctest::Approx(2.0));

    CHECK_THROWS_AS(rolling_mean(make_series({1, 2}), 5), SizeError);

    // Dated by window end.
    const ReturnSeries dated = rolling_mean(src, 3);
    CHECK(dated.dates[0] == src.dates[2]);
}

TEST_CASE("volatility_proxy") {
    const ReturnSeries zeros = volatility_proxy(make_series({0.5, 0.5, 0.5, 0.5, 0.5}), 5);
    REQUIRE(zeros.size() == 1);
    CHECK(zeros.values[0] == doctest::Approx(0.0).epsilon(1e-15));

    const ReturnSeries alt = volatility_proxy(make_series({1, -1, 1, -1, 1}), 5);
    REQUIRE(alt.size() == 1);
    CHECK(alt.values[0] == doctest::Approx(0.9797958971132712).epsilon(1e-12));

    // Homogeneity: scaling inputs by c scales outputs by |c|.
    const ReturnSeries base = make_series({0.1, -0.3, 0.2, 0.05, -0.15, 0.4});
    ReturnSeries scaled = base;
    for (double& v : scaled.values) v *= -2.5;
    const ReturnSeries vb = volatility_proxy(base, 3);
    const ReturnSeries vs = volatility_proxy(scaled, 3);
    for (std::size_t i = 0; i < vb.size(); ++i)
        CHECK(vs.values[i] == doctest::Approx(2.5 * vb.values[i]).epsilon(1e-12));

    CHECK_THROWS_AS(volatility_proxy(make_series({1, 2, 3}), 1), ParameterError);
}

TEST_CASE("calendar_features") {
    // 2024-01-01 is a Monday: every phase is zero.
    const auto monday = calendar_features(Date{2024, 1, 1});
    CHECK(monday(0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(monday(1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(monday(2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(monday(3) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(monday(4) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(monday(5) == doctest::Approx(1.0).epsilon(1e-15));

    // 2015-01-01 is a Thursday (dow = 3).
    const auto thursday = calendar_features(Date{2015, 1, 1});
    CHECK(thursday(0) == doctest::Approx(0.43388373911755823).epsilon(1e-12));
    CHECK(thursday(1) == doctest::Approx(-0.900968867902419).epsilon(1e-12));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const Date d = from_serial(15000 + static_cast<std::int64_t>(rng.index(8000)));
        const auto f = calendar_features(d);
        for (int pair = 0; pair < 3; ++pair)
            CHECK(f(2 * pair) * f(2 * pair) + f(2 * pair + 1) * f(2 * pair + 1) ==
                  doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("build_samples: counts, windows, and no look-ahead") {
    // Values encode the serial day so the test can detect any future leak.
    auto encoded = [](int n) {
        ReturnSeries r;
        r.market_id = "T";
        Date d{2020, 1, 6};
        for (int i = 0; i < n; ++i) {
            r.dates.push_back(d);
            r.values.push_back(static_cast<double>(to_serial(d)));
            d = next_business_day(d);
        }
        return r;
    };

    const ReturnSeries six = encoded(6);
    const SampleSet one = build_samples(six, six, 5);
    REQUIRE(one.size() == 1);
    CHECK(one.samples[0].date == six.dates[4]);
    CHECK(one.samples[0].target_date == six.dates[5]);
    CHECK(one.samples[0].window.rows() == 5);
    CHECK(one.samples[0].window.cols() == 7);

    const ReturnSeries seven = encoded(7);
    const SampleSet two = build_samples(seven, seven, 5);
    REQUIRE(two.size() == 2);
    // Overlapping windows shifted by one day.
    CHECK(two.samples[0].window.block(1, 0, 4, 7) == two.samples[1].window.block(0, 0, 4, 7));

    const SampleSet many = build_samples(encoded(40), encoded(40), 5);
    for (const auto& s : many.samples) {
        const double sample_serial = static_cast<double>(to_serial(s.date));
        for (Eigen::Index row = 0; row < s.window.rows(); ++row)
            CHECK(s.window(row, 0) <= sample_serial); // feature days never postdate the sample
        CHECK(s.target_vol == static_cast<double>(to_serial(s.target_date)));
        CHECK(s.target_date == next_business_day(s.date));
    }

    CHECK_THROWS_AS(build_samples(encoded(5), encoded(5), 5), SizeError);

    ReturnSeries misaligned = encoded(10);
    misaligned.dates[3] = next_business_day(misaligned.dates[3]);
    CHECK_THROWS_AS(build_samples(encoded(10), misaligned, 5), ValidationError);
}

TEST_CASE("chrono_split") {
    const SampleSet ten = testutil::random_set(10, 2, 3, 1);
    auto [train, test] = chrono_split(ten, 0.8);
    CHECK(train.size() == 8);
    CHECK(test.size() == 2);
    CHECK(train.samples.back().date < test.samples.front().date);

    const SampleSet nine = testutil::random_set(9, 2, 3, 1);
    auto [train9, test9] = chrono_split(nine, 0.8);
    CHECK(train9.size() == 7);
    CHECK(test9.size() == 2);

    CHECK_THROWS_AS(chrono_split(SampleSet{}, 0.8), SizeError);
}

TEST_CASE("label_by_median") {
    SampleSet train = testutil::random_set(4, 2, 3, 2);
    for (std::size_t i = 0; i < 4; ++i) train.samples[i].target_vol = static_cast<double>(i + 1);
    SampleSet test = testutil::random_set(2, 2, 3, 3);
    test.samples[0].target_vol = 3.0;
    test.samples[1].target_vol = 2.0;

    const double threshold = label_by_median(train, test);
    CHECK(threshold == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(test.samples[0].label == 1);
    CHECK(test.samples[1].label == 0);
    CHECK(train.threshold.has_value());

    SampleSet equal = testutil::random_set(5, 2, 3, 4);
    for (auto& s : equal.samples) s.target_vol = 7.0;
    SampleSet dummy = testutil::random_set(1, 2, 3, 5);
    label_by_median(equal, dummy);
    for (const auto& s : equal.samples) CHECK(s.label == 1); // >= rule on ties

    SampleSet empty;
    CHECK_THROWS_AS(label_by_median(empty, dummy), SizeError);
}

TEST_CASE("label balance within 1/n on distinct targets") {
    for (int n : {999, 1000}) {
        SampleSet train = testutil::random_set(n, 2, 3, 6);
        Rng rng(static_cast<std::uint64_t>(n));
        for (auto& s : train.samples) s.target_vol = rng.uniform(0.0, 1.0); // distinct a.s.
        SampleSet test = testutil::random_set(2, 2, 3, 7);
        label_by_median(train, test);
        const double frac = train.label_one_fraction();
        CHECK(std::abs(frac - 0.5) <= 1.0 / static_cast<double>(n));
        CHECK(frac >= 0.48);
        CHECK(frac <= 0.52);
    }
}

TEST_CASE("partition_iid") {
    const SampleSet nine = testutil::random_set(9, 2, 3, 8);
    const auto parts9 = partition_iid(nine, 3, 42);
    REQUIRE(parts9.size() == 3);
    for (const auto& p : parts9) CHECK(p.samples.size() == 3);

    const SampleSet ten = testutil::random_set(10, 2, 3, 9);
    const auto parts10 = partition_iid(ten, 3, 42);
    std::size_t mx = 0, mn = ten.size();
    std::size_t total = 0;
    for (const auto& p : parts10) {
        mx = std::max(mx, p.samples.size());
        mn = std::min(mn, p.samples.size());
        total += p.samples.size();
    }
    CHECK(mx - mn <= 1);
    CHECK(total == 10);

    const auto again = partition_iid(ten, 3, 42);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(testutil::identity_multiset(again[k].samples) ==
              testutil::identity_multiset(parts10[k].samples));

    // Disjoint cover.
    std::vector<std::string> merged;
    for (const auto& p : parts10) {
        const auto ids = testutil::identity_multiset(p.samples);
        merged.insert(merged.end(), ids.begin(), ids.end());
    }
    std::sort(merged.begin(), merged.end());
    CHECK(merged == testutil::identity_multiset(ten));

    CHECK_THROWS_AS(partition_iid(nine, 100, 1), SizeError);
}

TEST_CASE("partition_quarters") {
    SampleSet train = testutil::random_set(8, 2, 3, 10);
    train.samples[0].target_date = Date{2016, 2, 10};
    train.samples[1].target_date = Date{2016, 12, 31};
    const auto parts = partition_quarters(train);
    REQUIRE(parts.size() == 4);

    auto contains = [](const SampleSet& s, const Date& d) {
        for (const auto& sample : s.samples)
            if (sample.target_date == d) return true;
        return false;
    };
    CHECK(contains(parts[0].samples, Date{2016, 2, 10}));
    CHECK(contains(parts[3].samples, Date{2016, 12, 31}));

    std::vector<std::string> merged;
    for (const auto& p : parts) {
        const auto ids = testutil::identity_multiset(p.samples);
        merged.insert(merged.end(), ids.begin(), ids.end());
    }
    std::sort(merged.begin(), merged.end());
    CHECK(merged == testutil::identity_multiset(train));
}

TEST_CASE("subsample_fraction") {
    const SampleSet hundred = testutil::random_set(100, 2, 3, 11);
    const SampleSet ten = subsample_fraction(hundred, 0.1);
    REQUIRE(ten.size() == 10);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(ten.samples[i].date == hundred.samples[i].date); // chronological prefix

    CHECK(subsample_fraction(hundred, 1.0).size() == 100);
    CHECK(subsample_fraction(testutil::random_set(55, 2, 3, 12), 0.1).size() == 5);
    CHECK_THROWS_AS(subsample_fraction(testutil::random_set(5, 2, 3, 13), 0.1), SizeError);
}

TEST_CASE("standardizer normalizes train features") {
    const SampleSet train = testutil::random_set(200, 3, 4, 14);
    const Standardizer sc = Standardizer::fit(train);
    const SampleSet scaled = sc.apply(train);

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    Eigen::VectorXd mean_sq = Eigen::VectorXd::Zero(4);
    double count = 0.0;
    for (const auto& s : scaled.samples)
        for (Eigen::Index r = 0; r < s.window.rows(); ++r) {
            mean += s.window.row(r).transpose();
            mean_sq += s.window.row(r).cwiseProduct(s.window.row(r)).transpose();
            count += 1.0;
        }
    mean /= count;
    mean_sq /= count;
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(mean(i) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(mean_sq(i) - mean(i) * mean(i) == doctest::Approx(1.0).epsilon(1e-9));
    }

    // A constant feature passes through unscaled.
    SampleSet constant = testutil::random_set(50, 2, 2, 15);
    for (auto& s : constant.samples) s.window.col(1).setConstant(3.25);
    const Standardizer sc2 = Standardizer::fit(constant);
    CHECK(sc2.scale(1) == 1.0);
}

TEST_CASE("synthetic csv round-trips through the loader") {
    const PriceSeries p =
        generate_synthetic(120, GarchParams{8e-6, 0.12, 0.8}, 0.5, Date{2015, 1, 2}, 77, "RT");
    std::ostringstream out;
    write_price_csv(out, p);
    std::istringstream in(out.str());
    const PriceSeries back = load_price_csv(in, "RT");
    REQUIRE(back.size() == p.size());
    CHECK(back.dates == p.dates);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(back.closes[i] == doctest::Approx(p.closes[i]).epsilon(1e-10));
}
