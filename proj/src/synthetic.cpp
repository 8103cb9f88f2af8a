#include "fedvol/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fedvol/rng.hpp"

namespace fedvol::data {

PriceSeries generate_synthetic(int n_days, const GarchParams& params, double seasonal_amp,
                               Date start_date, std::uint64_t seed, const std::string& market_id) {
    if (n_days < 30) throw ParameterError("generate_synthetic: need at least 30 days");
    if (!(params.omega > 0.0) || params.alpha < 0.0 || params.beta < 0.0)
        throw ParameterError("generate_synthetic: omega must be positive, alpha/beta nonnegative");
    if (params.alpha + params.beta >= 1.0)
        throw ParameterError("generate_synthetic: alpha + beta must be < 1 for stationarity");
    if (seasonal_amp < 0.0) throw ParameterError("generate_synthetic: seasonal_amp must be >= 0");
    if (!is_valid(start_date)) throw ParameterError("generate_synthetic: invalid start date");

    // Quarter multipliers are zero-mean and monotone so quarters are
    // statistically distinct but the yearly average level is unchanged.
    const double quarter_weight[4] = {-0.5, -1.0 / 6.0, 1.0 / 6.0, 0.5};

    Rng rng(seed);
    PriceSeries out;
    out.market_id = market_id;
    out.dates.reserve(static_cast<std::size_t>(n_days));
    out.closes.reserve(static_cast<std::size_t>(n_days));

    Date d = start_date;
    while (is_weekend(d)) d = next_business_day(d);

    double price = 100.0;
    // The recursion starts from the unconditional variance.
    double var = params.omega / (1.0 - params.alpha - params.beta);
    double prev_ret = 0.0;

    for (int t = 0; t < n_days; ++t) {
        if (t > 0) {
            if (t > 1) var = params.omega + params.alpha * prev_ret * prev_ret + params.beta * var;
            const double z = rng.normal();
            prev_ret = std::sqrt(var) * z;
            const double m = 1.0 + seasonal_amp * quarter_weight[quarter_of(d)];
            price *= std::exp(m * prev_ret);
        }
        out.dates.push_back(d);
        out.closes.push_back(price);
        d = next_business_day(d);
    }
    out.validate();
    return out;
}

void write_price_csv(std::ostream& out, const PriceSeries& p) {
    out << "Date,Open,High,Low,Close,Adj Close,Volume\n";
    char buf[64];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.12f", p.closes[i]);
        const std::string c(buf);
        out << format_date(p.dates[i]) << ',' << c << ',' << c << ',' << c << ',' << c << ',' << c
            << ",0\n";
    }
    if (!out) throw std::runtime_error("write_price_csv: stream failure");
}

void write_price_csv_file(const std::string& path, const PriceSeries& p) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_price_csv(out, p);
}

} // namespace fedvol::data
