#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedvol/data.hpp"
#include "fedvol/errors.hpp"

namespace fedvol::model {

/// Flat parameter vector of the classifier; segment layout comes from ParamLayout.
using ParamVector = Eigen::VectorXd;

struct ModelConfig {
    int input_dim = 7;   // features per day
    int hidden_dim = 32; // LSTM state size
    int horizon = 5;     // window length in days
    double clamp_eps = 1e-7;

    void validate() const;
    Eigen::Index param_count() const;
};

/// Maps named segments onto the flat parameter vector. Gate order is i, f, g, o;
/// matrices are column-major. Segments tile [0, p) exactly.
struct ParamLayout {
    struct Segment {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;

        Eigen::Index size() const { return rows * cols; }
    };

    std::vector<Segment> segments;
    Eigen::Index total = 0;

    static ParamLayout make(const ModelConfig& cfg);
    const Segment& at(std::string_view name) const;

    Eigen::Map<const Eigen::MatrixXd> matrix(const ParamVector& p, std::string_view name) const;
    Eigen::Map<Eigen::MatrixXd> matrix(ParamVector& p, std::string_view name) const;
    Eigen::Map<const Eigen::VectorXd> vector(const ParamVector& p, std::string_view name) const;
    Eigen::Map<Eigen::VectorXd> vector(ParamVector& p, std::string_view name) const;
};

/// Structured view of the weights; flatten/unflatten round-trips bitwise.
struct LstmWeights {
    Eigen::MatrixXd Wi, Wf, Wg, Wo; // input weights, H x d
    Eigen::MatrixXd Ui, Uf, Ug, Uo; // recurrent weights, H x H
    Eigen::VectorXd bi, bf, bg, bo; // gate biases
    Eigen::VectorXd v;              // dense head weight
    double c = 0.0;                 // dense head bias
};

LstmWeights unflatten(const ModelConfig& cfg, const ParamVector& params);
ParamVector flatten(const ModelConfig& cfg, const LstmWeights& w);

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t t = 0;
    AdamParams hyper;

    static AdamState make(Eigen::Index p, AdamParams hyper = {});
};

struct Metrics {
    double bce = 0.0;
    double accuracy = 0.0;
    std::size_t n = 0;
};

/// Seeded initialization: weights uniform in (-1/sqrt(H), 1/sqrt(H)), forget
/// gate bias 1, every other bias 0.
ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Single-sample LSTM forward pass from zero initial state; returns the head
/// sigmoid clamped to [clamp_eps, 1 - clamp_eps].
double forward(const ModelConfig& cfg, const ParamVector& params, const Eigen::MatrixXd& window);

/// Per-sample binary cross-entropy in nats.
inline double bce_loss(double prob, int label) {
    return label == 1 ? -std::log(prob) : -std::log(1.0 - prob);
}

/// Gradient of the mean BCE over the batch w.r.t. every parameter, computed by
/// backpropagation through all horizon steps. Layout matches the parameters.
ParamVector backward(const ModelConfig& cfg, const ParamVector& params,
                     std::span<const data::Sample> batch);

/// Standard Adam with bias correction; mutates params and state in place.
void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad);

/// Seeded shuffle, then sequential mini-batches (the last one may be short),
/// one adam_step per batch. A grad_mask (same length as params) is multiplied
/// into every batch gradient before the optimizer step; zeroed coordinates
/// stay bit-identical, which is how the frozen-body fine-tune works.
void train_epoch(const ModelConfig& cfg, ParamVector& params, AdamState& opt,
                 const data::SampleSet& set, int batch_size, std::uint64_t seed,
                 const ParamVector* grad_mask = nullptr);

/// Mask that trains only the dense head (v, c).
ParamVector head_only_mask(const ModelConfig& cfg);

/// Mean BCE and 0.5-thresholded accuracy (prob >= 0.5 predicts 1).
Metrics evaluate(const ModelConfig& cfg, const ParamVector& params, const data::SampleSet& set);

/// Max relative error of backward() against central finite differences over
/// all coordinates on a small random batch. Intended for small configs.
double grad_check(const ModelConfig& cfg, std::uint64_t seed, double fd_step = 1e-5);

// ---------------------------------------------------------------------------
// Checkpoints: magic, config header, then p little-endian 64-bit floats in
// layout order. Round-trips bit-exactly.
// ---------------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const ModelConfig& cfg, const ParamVector& params);
void save_checkpoint_file(const std::string& path, const ModelConfig& cfg, const ParamVector& params);
std::pair<ModelConfig, ParamVector> load_checkpoint(std::istream& in);
std::pair<ModelConfig, ParamVector> load_checkpoint_file(const std::string& path);

} // namespace fedvol::model
