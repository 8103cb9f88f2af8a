#include "fedvol/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedvol/rng.hpp"

namespace fedvol::model {

void ModelConfig::validate() const {
    if (input_dim < 1 || hidden_dim < 1 || horizon < 1)
        throw ParameterError("model config: dimensions must be >= 1");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
        throw ParameterError("model config: clamp_eps must be in (0, 0.5)");
}

Eigen::Index ModelConfig::param_count() const {
    const Eigen::Index d = input_dim, H = hidden_dim;
    return 4 * (H * d + H * H + H) + H + 1;
}

ParamLayout ParamLayout::make(const ModelConfig& cfg) {
    cfg.validate();
    const Eigen::Index d = cfg.input_dim, H = cfg.hidden_dim;
    ParamLayout layout;
    Eigen::Index offset = 0;
    auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
        layout.segments.push_back({std::move(name), offset, rows, cols});
        offset += rows * cols;
    };
    for (const char* g : {"W_i", "W_f", "W_g", "W_o"}) add(g, H, d);
    for (const char* g : {"U_i", "U_f", "U_g", "U_o"}) add(g, H, H);
    for (const char* g : {"b_i", "b_f", "b_g", "b_o"}) add(g, H, 1);
    add("v", H, 1);
    add("c", 1, 1);
    layout.total = offset;
    return layout;
}

const ParamLayout::Segment& ParamLayout::at(std::string_view name) const {
    for (const auto& s : segments)
        if (s.name == name) return s;
    throw ValidationError("param layout: unknown segment '" + std::string(name) + "'");
}

Eigen::Map<const Eigen::MatrixXd> ParamLayout::matrix(const ParamVector& p,
                                                      std::string_view name) const {
    const Segment& s = at(name);
    return {p.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> ParamLayout::matrix(ParamVector& p, std::string_view name) const {
    const Segment& s = at(name);
    return {p.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Eigen::VectorXd> ParamLayout::vector(const ParamVector& p,
                                                      std::string_view name) const {
    const Segment& s = at(name);
    return {p.data() + s.offset, s.size()};
}

Eigen::Map<Eigen::VectorXd> ParamLayout::vector(ParamVector& p, std::string_view name) const {
    const Segment& s = at(name);
    return {p.data() + s.offset, s.size()};
}

LstmWeights unflatten(const ModelConfig& cfg, const ParamVector& params) {
    const auto layout = ParamLayout::make(cfg);
    if (params.size() != layout.total)
        throw ValidationError("unflatten: parameter vector has wrong length");
    LstmWeights w;
    w.Wi = layout.matrix(params, "W_i");
    w.Wf = layout.matrix(params, "W_f");
    w.Wg = layout.matrix(params, "W_g");
    w.Wo = layout.matrix(params, "W_o");
    w.Ui = layout.matrix(params, "U_i");
    w.Uf = layout.matrix(params, "U_f");
    w.Ug = layout.matrix(params, "U_g");
    w.Uo = layout.matrix(params, "U_o");
    w.bi = layout.vector(params, "b_i");
    w.bf = layout.vector(params, "b_f");
    w.bg = layout.vector(params, "b_g");
    w.bo = layout.vector(params, "b_o");
    w.v = layout.vector(params, "v");
    w.c = params(layout.at("c").offset);
    return w;
}

ParamVector flatten(const ModelConfig& cfg, const LstmWeights& w) {
    const auto layout = ParamLayout::make(cfg);
    ParamVector p(layout.total);
    layout.matrix(p, "W_i") = w.Wi;
    layout.matrix(p, "W_f") = w.Wf;
    layout.matrix(p, "W_g") = w.Wg;
    layout.matrix(p, "W_o") = w.Wo;
    layout.matrix(p, "U_i") = w.Ui;
    layout.matrix(p, "U_f") = w.Uf;
    layout.matrix(p, "U_g") = w.Ug;
    layout.matrix(p, "U_o") = w.Uo;
    layout.vector(p, "b_i") = w.bi;
    layout.vector(p, "b_f") = w.bf;
    layout.vector(p, "b_g") = w.bg;
    layout.vector(p, "b_o") = w.bo;
    layout.vector(p, "v") = w.v;
    p(layout.at("c").offset) = w.c;
    return p;
}

AdamState AdamState::make(Eigen::Index p, AdamParams hyper) {
    AdamState s;
    s.m = Eigen::VectorXd::Zero(p);
    s.v = Eigen::VectorXd::Zero(p);
    s.t = 0;
    s.hyper = hyper;
    return s;
}

ParamVector init_params(const ModelConfig& cfg, std::uint64_t seed) {
    const auto layout = ParamLayout::make(cfg);
    ParamVector p = ParamVector::Zero(layout.total);
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    for (const auto& seg : layout.segments) {
        const bool is_weight = seg.name[0] == 'W' || seg.name[0] == 'U' || seg.name == "v";
        if (is_weight) {
            for (Eigen::Index i = 0; i < seg.size(); ++i)
                p(seg.offset + i) = rng.uniform(-bound, bound);
        } else if (seg.name == "b_f") {
            p.segment(seg.offset, seg.size()).setConstant(1.0); // stabilizes early gate flow
        }
    }
    return p;
}

namespace {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct GateViews {
    Eigen::Map<const Eigen::MatrixXd> Wi, Wf, Wg, Wo, Ui, Uf, Ug, Uo;
    Eigen::Map<const Eigen::VectorXd> bi, bf, bg, bo, v;
    double c;

    GateViews(const ParamLayout& L, const ParamVector& p)
        : Wi(L.matrix(p, "W_i")), Wf(L.matrix(p, "W_f")), Wg(L.matrix(p, "W_g")),
          Wo(L.matrix(p, "W_o")), Ui(L.matrix(p, "U_i")), Uf(L.matrix(p, "U_f")),
          Ug(L.matrix(p, "U_g")), Uo(L.matrix(p, "U_o")), bi(L.vector(p, "b_i")),
          bf(L.vector(p, "b_f")), bg(L.vector(p, "b_g")), bo(L.vector(p, "b_o")),
          v(L.vector(p, "v")), c(p(L.at("c").offset)) {}
};

// Per-step activations kept for backpropagation.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> i, f, g, o, cell, tanh_cell, h;
    double z = 0.0;    // head pre-activation
    double prob = 0.0; // clamped output
};

ForwardTrace run_forward(const ModelConfig& cfg, const GateViews& w, const Eigen::MatrixXd& window,
                         bool keep_trace) {
    if (window.rows() != cfg.horizon || window.cols() != cfg.input_dim)
        throw ValidationError("forward: window shape mismatch (expected " +
                              std::to_string(cfg.horizon) + "x" + std::to_string(cfg.input_dim) + ")");
    if (!window.allFinite()) throw ValidationError("forward: non-finite input");

    const int T = cfg.horizon;
    const Eigen::Index H = cfg.hidden_dim;
    ForwardTrace tr;
    if (keep_trace) {
        tr.i.resize(static_cast<std::size_t>(T));
        tr.f.resize(static_cast<std::size_t>(T));
        tr.g.resize(static_cast<std::size_t>(T));
        tr.o.resize(static_cast<std::size_t>(T));
        tr.cell.resize(static_cast<std::size_t>(T));
        tr.tanh_cell.resize(static_cast<std::size_t>(T));
        tr.h.resize(static_cast<std::size_t>(T));
    }

    Eigen::VectorXd h = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd cell = Eigen::VectorXd::Zero(H);
    for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd x = window.row(t).transpose();
        Eigen::VectorXd ai = w.Wi * x + w.Ui * h + w.bi;
        Eigen::VectorXd af = w.Wf * x + w.Uf * h + w.bf;
        Eigen::VectorXd ag = w.Wg * x + w.Ug * h + w.bg;
        Eigen::VectorXd ao = w.Wo * x + w.Uo * h + w.bo;
        Eigen::VectorXd gi = ai.unaryExpr([](double z) { return sigmoid(z); });
        Eigen::VectorXd gf = af.unaryExpr([](double z) { return sigmoid(z); });
        Eigen::VectorXd gg = ag.array().tanh();
        Eigen::VectorXd go = ao.unaryExpr([](double z) { return sigmoid(z); });
        cell = gf.cwiseProduct(cell) + gi.cwiseProduct(gg);
        Eigen::VectorXd tc = cell.array().tanh();
        h = go.cwiseProduct(tc);
        if (keep_trace) {
            const auto ti = static_cast<std::size_t>(t);
            tr.i[ti] = std::move(gi);
            tr.f[ti] = std::move(gf);
            tr.g[ti] = std::move(gg);
            tr.o[ti] = std::move(go);
            tr.cell[ti] = cell;
            tr.tanh_cell[ti] = std::move(tc);
            tr.h[ti] = h;
        }
    }
    tr.z = w.v.dot(h) + w.c;
    tr.prob = std::clamp(sigmoid(tr.z), cfg.clamp_eps, 1.0 - cfg.clamp_eps);
    return tr;
}

} // namespace

double forward(const ModelConfig& cfg, const ParamVector& params, const Eigen::MatrixXd& window) {
    const auto layout = ParamLayout::make(cfg);
    if (params.size() != layout.total) throw ValidationError("forward: parameter length mismatch");
    const GateViews w(layout, params);
    return run_forward(cfg, w, window, false).prob;
}

ParamVector backward(const ModelConfig& cfg, const ParamVector& params,
                     std::span<const data::Sample> batch) {
    if (batch.empty()) throw SizeError("backward: empty batch");
    const auto layout = ParamLayout::make(cfg);
    if (params.size() != layout.total) throw ValidationError("backward: parameter length mismatch");
    const GateViews w(layout, params);

    ParamVector grad = ParamVector::Zero(layout.total);
    auto gWi = layout.matrix(grad, "W_i");
    auto gWf = layout.matrix(grad, "W_f");
    auto gWg = layout.matrix(grad, "W_g");
    auto gWo = layout.matrix(grad, "W_o");
    auto gUi = layout.matrix(grad, "U_i");
    auto gUf = layout.matrix(grad, "U_f");
    auto gUg = layout.matrix(grad, "U_g");
    auto gUo = layout.matrix(grad, "U_o");
    auto gbi = layout.vector(grad, "b_i");
    auto gbf = layout.vector(grad, "b_f");
    auto gbg = layout.vector(grad, "b_g");
    auto gbo = layout.vector(grad, "b_o");
    auto gv = layout.vector(grad, "v");
    double& gc = grad(layout.at("c").offset);

    const int T = cfg.horizon;
    const Eigen::Index H = cfg.hidden_dim;

    for (const auto& sample : batch) {
        if (sample.label != 0 && sample.label != 1)
            throw ValidationError("backward: sample is unlabeled");
        const ForwardTrace tr = run_forward(cfg, w, sample.window, true);

        // Head: d(bce)/dz for the sigmoid head is prob - label.
        const double dz = tr.prob - static_cast<double>(sample.label);
        gv += dz * tr.h[static_cast<std::size_t>(T - 1)];
        gc += dz;

        Eigen::VectorXd dh = w.v * dz;
        Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(H);
        for (int t = T - 1; t >= 0; --t) {
            const auto ti = static_cast<std::size_t>(t);
            const Eigen::VectorXd& tc = tr.tanh_cell[ti];
            const Eigen::VectorXd do_ = dh.cwiseProduct(tc);
            const Eigen::VectorXd dc =
                dc_next +
                dh.cwiseProduct(tr.o[ti]).cwiseProduct((1.0 - tc.array().square()).matrix());
            const Eigen::VectorXd prev_cell =
                t > 0 ? tr.cell[ti - 1] : Eigen::VectorXd::Zero(H).eval();
            const Eigen::VectorXd prev_h = t > 0 ? tr.h[ti - 1] : Eigen::VectorXd::Zero(H).eval();

            const Eigen::VectorXd di = dc.cwiseProduct(tr.g[ti]);
            const Eigen::VectorXd df = dc.cwiseProduct(prev_cell);
            const Eigen::VectorXd dg = dc.cwiseProduct(tr.i[ti]);

            const Eigen::VectorXd dai =
                di.cwiseProduct(tr.i[ti]).cwiseProduct((1.0 - tr.i[ti].array()).matrix());
            const Eigen::VectorXd daf =
                df.cwiseProduct(tr.f[ti]).cwiseProduct((1.0 - tr.f[ti].array()).matrix());
            const Eigen::VectorXd dag = dg.cwiseProduct((1.0 - tr.g[ti].array().square()).matrix());
            const Eigen::VectorXd dao =
                do_.cwiseProduct(tr.o[ti]).cwiseProduct((1.0 - tr.o[ti].array()).matrix());

            const Eigen::RowVectorXd xt = sample.window.row(t);
            gWi += dai * xt;
            gWf += daf * xt;
            gWg += dag * xt;
            gWo += dao * xt;
            gUi += dai * prev_h.transpose();
            gUf += daf * prev_h.transpose();
            gUg += dag * prev_h.transpose();
            gUo += dao * prev_h.transpose();
            gbi += dai;
            gbf += daf;
            gbg += dag;
            gbo += dao;

            dh = w.Ui.transpose() * dai + w.Uf.transpose() * daf + w.Ug.transpose() * dag +
                 w.Uo.transpose() * dao;
            dc_next = dc.cwiseProduct(tr.f[ti]);
        }
    }

    grad *= 1.0 / static_cast<double>(batch.size());
    return grad;
}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad) {
    if (state.m.size() != params.size() || grad.size() != params.size())
        throw ValidationError("adam_step: length mismatch");
    const auto& h = state.hyper;
    state.t += 1;
    state.m = h.beta1 * state.m + (1.0 - h.beta1) * grad;
    state.v = h.beta2 * state.v + (1.0 - h.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    params.array() -=
        h.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + h.eps);
}

void train_epoch(const ModelConfig& cfg, ParamVector& params, AdamState& opt,
                 const data::SampleSet& set, int batch_size, std::uint64_t seed,
                 const ParamVector* grad_mask) {
    if (set.empty()) throw SizeError("train_epoch: empty data");
    if (batch_size < 1) throw ParameterError("train_epoch: batch_size must be >= 1");
    if (grad_mask && grad_mask->size() != params.size())
        throw ValidationError("train_epoch: grad_mask length mismatch");

    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<data::Sample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        batch.clear();
        for (std::size_t i = start; i < end; ++i) batch.push_back(set.samples[order[i]]);
        ParamVector grad = backward(cfg, params, batch);
        if (grad_mask) grad = grad.cwiseProduct(*grad_mask);
        adam_step(opt, params, grad);
    }
}

ParamVector head_only_mask(const ModelConfig& cfg) {
    const auto layout = ParamLayout::make(cfg);
    ParamVector mask = ParamVector::Zero(layout.total);
    layout.vector(mask, "v").setOnes();
    mask(layout.at("c").offset) = 1.0;
    return mask;
}

Metrics evaluate(const ModelConfig& cfg, const ParamVector& params, const data::SampleSet& set) {
    if (set.empty()) throw SizeError("evaluate: empty data");
    const auto layout = ParamLayout::make(cfg);
    if (params.size() != layout.total) throw ValidationError("evaluate: parameter length mismatch");
    const GateViews w(layout, params);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& sample : set.samples) {
        if (sample.label != 0 && sample.label != 1)
            throw ValidationError("evaluate: sample is unlabeled");
        const double prob = run_forward(cfg, w, sample.window, false).prob;
        loss_sum += bce_loss(prob, sample.label);
        const int pred = prob >= 0.5 ? 1 : 0;
        correct += static_cast<std::size_t>(pred == sample.label);
    }
    Metrics m;
    m.n = set.size();
    m.bce = loss_sum / static_cast<double>(m.n);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
    return m;
}

double grad_check(const ModelConfig& cfg, std::uint64_t seed, double fd_step) {
    cfg.validate();
    const auto layout = ParamLayout::make(cfg);
    Rng rng(seeds::derive(seed, {seeds::kGradCheck}));

    ParamVector params(layout.total);
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = rng.uniform(-0.4, 0.4);

    std::vector<data::Sample> batch(2);
    for (std::size_t k = 0; k < batch.size(); ++k) {
        batch[k].window.resize(cfg.horizon, cfg.input_dim);
        for (Eigen::Index r = 0; r < batch[k].window.rows(); ++r)
            for (Eigen::Index c = 0; c < batch[k].window.cols(); ++c)
                batch[k].window(r, c) = rng.normal();
        batch[k].label = static_cast<int>(rng.index(2));
    }

    auto batch_loss = [&](const ParamVector& p) {
        double sum = 0.0;
        for (const auto& s : batch) sum += bce_loss(forward(cfg, p, s.window), s.label);
        return sum / static_cast<double>(batch.size());
    };

    const ParamVector analytic = backward(cfg, params, batch);
    double max_rel = 0.0;
    ParamVector probe = params;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        probe(i) = params(i) + fd_step;
        const double up = batch_loss(probe);
        probe(i) = params(i) - fd_step;
        const double down = batch_loss(probe);
        probe(i) = params(i);
        const double fd = (up - down) / (2.0 * fd_step);
        const double rel =
            std::abs(analytic(i) - fd) / std::max({std::abs(analytic(i)), std::abs(fd), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'V', 'O', 'L', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw VerificationError("checkpoint: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw VerificationError("checkpoint: truncated data");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

} // namespace

void save_checkpoint(std::ostream& out, const ModelConfig& cfg, const ParamVector& params) {
    if (params.size() != cfg.param_count())
        throw ValidationError("save_checkpoint: parameter length mismatch");
    out.write(kMagic, sizeof kMagic);
    put_u32(out, static_cast<std::uint32_t>(cfg.input_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.hidden_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.horizon));
    put_f64(out, cfg.clamp_eps);
    put_u64(out, static_cast<std::uint64_t>(params.size()));
    for (Eigen::Index i = 0; i < params.size(); ++i) put_f64(out, params(i));
    if (!out) throw std::runtime_error("save_checkpoint: stream failure");
}

void save_checkpoint_file(const std::string& path, const ModelConfig& cfg,
                          const ParamVector& params) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    save_checkpoint(out, cfg, params);
}

std::pair<ModelConfig, ParamVector> load_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw VerificationError("checkpoint: bad magic");
    ModelConfig cfg;
    cfg.input_dim = static_cast<int>(get_u32(in));
    cfg.hidden_dim = static_cast<int>(get_u32(in));
    cfg.horizon = static_cast<int>(get_u32(in));
    cfg.clamp_eps = get_f64(in);
    cfg.validate();
    const std::uint64_t p = get_u64(in);
    if (p != static_cast<std::uint64_t>(cfg.param_count()))
        throw VerificationError("checkpoint: parameter count does not match config");
    ParamVector params(static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < params.size(); ++i) params(i) = get_f64(in);
    return {cfg, std::move(params)};
}

std::pair<ModelConfig, ParamVector> load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    return load_checkpoint(in);
}

} // namespace fedvol::model
