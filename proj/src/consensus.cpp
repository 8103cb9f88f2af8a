#include "fedvol/consensus.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

#include "fedvol/rng.hpp"

namespace fedvol::consensus {

void MixingMatrix::validate() const {
    if (entries.rows() != entries.cols()) throw ValidationError("mixing matrix must be square");
    if (entries.rows() < 1) throw ParameterError("mixing matrix must be at least 1x1");
}

MixingMatrix uniform_matrix(Eigen::Index n) {
    if (n < 1) throw ParameterError("uniform_matrix: n must be >= 1");
    MixingMatrix a;
    a.entries = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    return a;
}

bool is_row_stochastic(const MixingMatrix& a, double tol) {
    a.validate();
    if ((a.entries.array() < 0.0).any()) return false;
    const Eigen::VectorXd row_sums = a.entries.rowwise().sum();
    return (row_sums.array() - 1.0).abs().maxCoeff() <= tol;
}

bool is_doubly_stochastic(const MixingMatrix& a, double tol) {
    if (!is_row_stochastic(a, tol)) return false;
    const Eigen::VectorXd col_sums = a.entries.colwise().sum();
    return (col_sums.array() - 1.0).abs().maxCoeff() <= tol;
}

namespace {

std::vector<bool> reachable_from_zero(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const Eigen::Index i = stack.back();
        stack.pop_back();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (m(i, j) > 0.0 && !seen[static_cast<std::size_t>(j)]) {
                seen[static_cast<std::size_t>(j)] = true;
                stack.push_back(j);
            }
        }
    }
    return seen;
}

} // namespace

bool is_strongly_connected(const MixingMatrix& a) {
    a.validate();
    // Node 0 reaches everyone and everyone reaches node 0 iff strongly connected.
    const auto fwd = reachable_from_zero(a.entries);
    const auto bwd = reachable_from_zero(a.entries.transpose());
    return std::all_of(fwd.begin(), fwd.end(), [](bool b) { return b; }) &&
           std::all_of(bwd.begin(), bwd.end(), [](bool b) { return b; });
}

StackedState consensus_apply(const MixingMatrix& a, const StackedState& x) {
    a.validate();
    if (a.n() != x.n())
        throw ValidationError("consensus_apply: matrix size " + std::to_string(a.n()) +
                              " does not match state count " + std::to_string(x.n()));
    StackedState out;
    out.blocks = x.blocks * a.entries.transpose();
    return out;
}

StackedState consensus_apply_dense_kronecker(const MixingMatrix& a, const StackedState& x) {
    a.validate();
    if (a.n() != x.n()) throw ValidationError("dense kronecker: dimension mismatch");
    const Eigen::Index n = x.n(), p = x.block_dim();
    if (n * p > 64) throw ParameterError("dense kronecker: reference path limited to n*p <= 64");

    Eigen::MatrixXd lifted = Eigen::MatrixXd::Zero(n * p, n * p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            lifted.block(i * p, j * p, p, p) = a.entries(i, j) * Eigen::MatrixXd::Identity(p, p);

    Eigen::VectorXd stacked(n * p);
    for (Eigen::Index i = 0; i < n; ++i) stacked.segment(i * p, p) = x.blocks.col(i);
    const Eigen::VectorXd mixed = lifted * stacked;

    StackedState out;
    out.blocks.resize(p, n);
    for (Eigen::Index i = 0; i < n; ++i) out.blocks.col(i) = mixed.segment(i * p, p);
    return out;
}

StackedState degroot_iterate(const MixingMatrix& a, const StackedState& x, int k) {
    if (k < 0) throw ParameterError("degroot_iterate: k must be >= 0");
    if (!is_row_stochastic(a))
        throw ParameterError("degroot_iterate: matrix is not row-stochastic");
    StackedState cur = x;
    for (int step = 0; step < k; ++step) cur = consensus_apply(a, cur);
    return cur;
}

bool OneShotReport::all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckResult& c) { return c.passed; });
}

OneShotReport run_one_shot_checks(const MixingMatrix& a, int trials, std::uint64_t seed) {
    a.validate();
    if (trials < 1) throw ParameterError("one-shot checks: trials must be >= 1");
    const Eigen::Index n = a.n();
    constexpr Eigen::Index p = 16; // block dimension for the random states

    Rng rng(seed);
    double worst_agreement = 0.0;
    double worst_idempotence = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        StackedState x;
        x.blocks.resize(p, n);
        for (Eigen::Index i = 0; i < p; ++i)
            for (Eigen::Index j = 0; j < n; ++j) x.blocks(i, j) = rng.uniform(-1.0, 1.0);

        const Eigen::VectorXd mean = x.blocks.rowwise().mean();
        const StackedState once = consensus_apply(a, x);
        const StackedState twice = consensus_apply(a, once);

        const double mean_scale = 1.0 + mean.norm();
        for (Eigen::Index j = 0; j < n; ++j) {
            worst_agreement =
                std::max(worst_agreement, (once.blocks.col(j) - mean).norm() / mean_scale);
        }
        worst_idempotence =
            std::max(worst_idempotence, (twice.blocks - once.blocks).cwiseAbs().maxCoeff());
    }

    // The uniform matrix is symmetric, so the spectrum is real.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.entries);
    if (es.info() != Eigen::Success) throw VerificationError("spectrum: eigensolver failed");
    Eigen::VectorXd evs = es.eigenvalues();
    std::sort(evs.data(), evs.data() + evs.size(), std::greater<double>());
    double worst_spectrum = std::abs(evs(0) - 1.0);
    for (Eigen::Index i = 1; i < evs.size(); ++i)
        worst_spectrum = std::max(worst_spectrum, std::abs(evs(i)));

    OneShotReport report;
    report.checks.push_back(
        {"one-shot agreement", worst_agreement <= kStochasticTol, worst_agreement, kStochasticTol});
    report.checks.push_back(
        {"idempotence", worst_idempotence <= kStochasticTol, worst_idempotence, kStochasticTol});
    report.checks.push_back(
        {"spectrum {1, 0^(n-1)}", worst_spectrum <= kSpectrumTol, worst_spectrum, kSpectrumTol});
    return report;
}

OneShotReport verify_one_shot(const MixingMatrix& a, int trials, std::uint64_t seed) {
    OneShotReport report = run_one_shot_checks(a, trials, seed);
    for (const auto& check : report.checks)
        if (!check.passed)
            throw VerificationError("one-shot consensus check failed: " + check.name +
                                    " (observed " + std::to_string(check.observed) + ")");
    return report;
}

} // namespace fedvol::consensus
