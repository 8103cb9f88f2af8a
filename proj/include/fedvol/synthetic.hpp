#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "fedvol/data.hpp"

namespace fedvol::data {

/// GARCH(1,1) innovation variance: sigma_t^2 = omega + alpha * r_{t-1}^2 + beta * sigma_{t-1}^2.
/// Requires alpha + beta < 1 (covariance stationarity).
struct GarchParams {
    double omega = 8e-6;
    double alpha = 0.12;
    double beta = 0.80;
};

/// Generates a business-day price series with volatility clustering.
/// Each day's log-return is m_q * sigma_t * z_t where z_t is standard normal
/// and m_q = 1 + seasonal_amp * {-1/2, -1/6, +1/6, +1/2}[quarter] scales the
/// innovation by calendar quarter (the GARCH recursion itself runs on the
/// unscaled return, so seasonal_amp = 0 reproduces plain GARCH). Deterministic
/// for a fixed seed.
PriceSeries generate_synthetic(int n_days, const GarchParams& params, double seasonal_amp,
                               Date start_date, std::uint64_t seed,
                               const std::string& market_id = "SYNTH");

/// Writes a series in the Yahoo-Finance CSV layout consumed by load_price_csv
/// (Open/High/Low/Adj Close mirror Close, Volume is zero).
void write_price_csv(std::ostream& out, const PriceSeries& p);
void write_price_csv_file(const std::string& path, const PriceSeries& p);

} // namespace fedvol::data
