#include "fedvol/privacy.hpp"

#include <cmath>

#include "fedvol/rng.hpp"

namespace fedvol::privacy {

namespace {
// Relative slack on the clip bound; keeps re-clipping an already clipped
// vector a bitwise no-op despite rounding in the rescale.
constexpr double kClipSlack = 1e-12;
} // namespace

void DpConfig::validate() const {
    if (!(clip_norm > 0.0)) throw ParameterError("dp config: clip_norm must be > 0");
    if (!(noise_std >= 0.0)) throw ParameterError("dp config: noise_std must be >= 0");
}

Eigen::VectorXd clip_l2(const Eigen::VectorXd& x, double c) {
    if (!(c > 0.0)) throw ParameterError("clip_l2: bound must be > 0");
    if (!x.allFinite()) throw ValidationError("clip_l2: non-finite input");
    const double norm = x.norm();
    if (norm <= c * (1.0 + kClipSlack)) return x;
    return x * (c / norm);
}

Eigen::VectorXd add_gaussian(const Eigen::VectorXd& x, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ParameterError("add_gaussian: sigma must be >= 0");
    if (sigma == 0.0) return x;
    Rng rng(seed);
    Eigen::VectorXd out = x;
    for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += sigma * rng.normal();
    return out;
}

Eigen::VectorXd dp_process(const Eigen::VectorXd& global, const Eigen::VectorXd& client_update,
                           const DpConfig& cfg, int round, int client_id) {
    cfg.validate();
    if (global.size() != client_update.size())
        throw ValidationError("dp_process: global/update length mismatch");

    const Eigen::VectorXd delta = client_update - global;
    if (!delta.allFinite()) throw ValidationError("dp_process: non-finite update delta");
    // No-op configuration must reproduce the plain update exactly, so skip the
    // global + (update - global) round-trip in that case.
    if (cfg.noise_std == 0.0 && delta.norm() <= cfg.clip_norm * (1.0 + kClipSlack))
        return client_update;

    const std::uint64_t noise_seed = seeds::for_dp(cfg.seed, client_id, round);
    return global + add_gaussian(clip_l2(delta, cfg.clip_norm), cfg.noise_std, noise_seed);
}

} // namespace fedvol::privacy
