#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "fedvol/errors.hpp"

namespace fedvol::consensus {

/// Nonnegative mixing matrix over the client communication digraph: entry
/// (i, j) is the weight client i places on client j's state.
struct MixingMatrix {
    Eigen::MatrixXd entries;

    Eigen::Index n() const { return entries.rows(); }
    void validate() const;
};

/// Block vector of n per-client states, stored as the columns of a p x n
/// matrix (column i is client i's parameter vector).
struct StackedState {
    Eigen::MatrixXd blocks;

    Eigen::Index n() const { return blocks.cols(); }
    Eigen::Index block_dim() const { return blocks.rows(); }
};

inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kSpectrumTol = 1e-9;

/// All entries 1/n: the complete uniformly weighted digraph with self-loops.
MixingMatrix uniform_matrix(Eigen::Index n);

bool is_row_stochastic(const MixingMatrix& a, double tol = kStochasticTol);
bool is_doubly_stochastic(const MixingMatrix& a, double tol = kStochasticTol);

/// Strong connectivity of the digraph with an edge (i, j) iff entries(i, j) > 0,
/// via reachability from node 0 in the graph and its transpose.
bool is_strongly_connected(const MixingMatrix& a);

/// One mixing step: block i of the output is sum_j A(i,j) * block j. Acts as
/// the Kronecker lift (A (x) I_p) without materializing the np x np matrix.
StackedState consensus_apply(const MixingMatrix& a, const StackedState& x);

/// Reference implementation of the same step that does materialize the
/// np x np Kronecker product; cross-checks consensus_apply on small sizes.
StackedState consensus_apply_dense_kronecker(const MixingMatrix& a, const StackedState& x);

/// k mixing steps of the averaging dynamics x <- A x (per block coordinate).
/// Requires a row-stochastic matrix.
StackedState degroot_iterate(const MixingMatrix& a, const StackedState& x, int k);

struct CheckResult {
    std::string name;
    bool passed = false;
    double observed = 0.0; // worst deviation seen
    double tolerance = 0.0;
};

struct OneShotReport {
    std::vector<CheckResult> checks;
    bool all_passed() const;
};

/// Verifies, on `trials` random stacked states, that one application of the
/// uniform matrix (a) replaces every block with the arithmetic mean, (b) is
/// idempotent, and (c) that the matrix spectrum is {1, 0, ..., 0}.
/// Returns the report; throws VerificationError naming the first failed check.
OneShotReport verify_one_shot(const MixingMatrix& a, int trials, std::uint64_t seed);

/// Same checks without throwing; used by reporting code that wants the full
/// table even on failure.
OneShotReport run_one_shot_checks(const MixingMatrix& a, int trials, std::uint64_t seed);

} // namespace fedvol::consensus
