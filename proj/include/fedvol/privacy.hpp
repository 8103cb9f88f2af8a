#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "fedvol/errors.hpp"

namespace fedvol::privacy {

/// Gaussian-mechanism settings for communicated client updates. No privacy
/// accountant is attached; clip_norm and noise_std are reported as configured.
struct DpConfig {
    double clip_norm = 1.0; // L2 bound on the update delta, must be > 0 (may be +inf)
    double noise_std = 1.0; // per-coordinate Gaussian sigma, >= 0
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rescales x so its L2 norm does not exceed c; inputs already within the
/// bound (up to 1e-12 relative slack, which makes the operation idempotent
/// bitwise) are returned unchanged.
Eigen::VectorXd clip_l2(const Eigen::VectorXd& x, double c);

/// Adds i.i.d. N(0, sigma^2) per coordinate from the seeded generator.
/// sigma = 0 returns the input unchanged.
Eigen::VectorXd add_gaussian(const Eigen::VectorXd& x, double sigma, std::uint64_t seed);

/// Client-side update processing: clips the delta (update - global) to
/// cfg.clip_norm, adds Gaussian noise, and returns global + processed delta.
/// The noise stream derives from (cfg.seed, client_id, round). The no-op
/// configuration (sigma = 0, norm within bound) returns the update bitwise.
Eigen::VectorXd dp_process(const Eigen::VectorXd& global, const Eigen::VectorXd& client_update,
                           const DpConfig& cfg, int round, int client_id);

} // namespace fedvol::privacy
