// fedvol: deterministic federated-learning experiments on volatility-regime
// classification. Subcommands: run, synth, consensus-check, grad-check.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <string>

#include "fedvol/consensus.hpp"
#include "fedvol/model.hpp"
#include "fedvol/rng.hpp"
#include "fedvol/scenario.hpp"
#include "fedvol/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path) {
    fedvol::scenario::ScenarioConfig cfg = fedvol::scenario::parse_config_file(config_path);
    if (fedvol::scenario::apply_env_seed_override(cfg))
        std::cout << "seed overridden by FEDVOL_SEED = " << cfg.seed << "\n";
    const auto result = fedvol::scenario::run_scenario(cfg);
    fedvol::scenario::print_summary(std::cout, cfg, result.summary);
    std::cout << "metrics written to " << cfg.out << "\n";
    return kExitOk;
}

int cmd_synth(const std::string& out, int days, std::uint64_t seed, double omega, double alpha,
              double beta, double seasonal_amp, const std::string& market_id,
              const std::string& start) {
    fedvol::data::GarchParams params{omega, alpha, beta};
    const fedvol::Date start_date = fedvol::parse_date(start);
    const auto series =
        fedvol::data::generate_synthetic(days, params, seasonal_amp, start_date, seed, market_id);
    fedvol::data::write_price_csv_file(out, series);
    std::cout << "wrote " << series.size() << " business days to " << out << "\n";
    return kExitOk;
}

void print_check(const std::string& name, bool passed, double observed, double tolerance) {
    std::printf("[consensus] %-28s %s  (max dev %.3e, tol %.0e)\n", name.c_str(),
                passed ? "PASS" : "FAIL", observed, tolerance);
}

int cmd_consensus_check(int n) {
    using namespace fedvol::consensus;
    bool all_ok = true;

    const MixingMatrix uniform = uniform_matrix(n);
    const OneShotReport report = run_one_shot_checks(uniform, /*trials=*/16, /*seed=*/2024);
    for (const auto& check : report.checks) {
        print_check(check.name, check.passed, check.observed, check.tolerance);
        all_ok = all_ok && check.passed;
    }

    // Blockwise application against the materialized Kronecker lift on random
    // row-stochastic matrices.
    double worst_kron = 0.0;
    fedvol::Rng rng(7);
    for (Eigen::Index nn = 1; nn <= 4; ++nn) {
        for (Eigen::Index p : {2, 5, 8}) {
            MixingMatrix a;
            a.entries.resize(nn, nn);
            for (Eigen::Index i = 0; i < nn; ++i) {
                double row_sum = 0.0;
                for (Eigen::Index j = 0; j < nn; ++j) {
                    a.entries(i, j) = rng.uniform(0.05, 1.0);
                    row_sum += a.entries(i, j);
                }
                a.entries.row(i) /= row_sum;
            }
            StackedState x;
            x.blocks.resize(p, nn);
            for (Eigen::Index i = 0; i < p; ++i)
                for (Eigen::Index j = 0; j < nn; ++j) x.blocks(i, j) = rng.uniform(-1.0, 1.0);
            const StackedState fast = consensus_apply(a, x);
            const StackedState dense = consensus_apply_dense_kronecker(a, x);
            worst_kron = std::max(worst_kron, (fast.blocks - dense.blocks).cwiseAbs().maxCoeff());
        }
    }
    const bool kron_ok = worst_kron <= kStochasticTol;
    print_check("kronecker equivalence", kron_ok, worst_kron, kStochasticTol);
    all_ok = all_ok && kron_ok;

    // DeGroot demo: lazy directed ring, n = 4. The iterates must keep the mean
    // and converge to it.
    {
        const Eigen::Index ring_n = 4;
        MixingMatrix ring;
        ring.entries = 0.5 * Eigen::MatrixXd::Identity(ring_n, ring_n);
        for (Eigen::Index i = 0; i < ring_n; ++i) {
            ring.entries(i, (i + 1) % ring_n) += 0.25;
            ring.entries(i, (i + ring_n - 1) % ring_n) += 0.25;
        }
        StackedState x;
        x.blocks.resize(3, ring_n);
        fedvol::Rng ring_rng(11);
        for (Eigen::Index i = 0; i < x.blocks.rows(); ++i)
            for (Eigen::Index j = 0; j < ring_n; ++j) x.blocks(i, j) = ring_rng.uniform(-2.0, 2.0);
        const Eigen::VectorXd mean = x.blocks.rowwise().mean();

        double worst_mean_drift = 0.0;
        StackedState cur = x;
        for (int step = 0; step < 200; ++step) {
            cur = degroot_iterate(ring, cur, 1);
            worst_mean_drift =
                std::max(worst_mean_drift, (cur.blocks.rowwise().mean() - mean).cwiseAbs().maxCoeff());
        }
        double worst_dev = 0.0;
        for (Eigen::Index j = 0; j < ring_n; ++j)
            worst_dev = std::max(worst_dev, (cur.blocks.col(j) - mean).cwiseAbs().maxCoeff());

        const bool mean_ok = worst_mean_drift <= kStochasticTol;
        const bool conv_ok = worst_dev <= 1e-9;
        print_check("degroot mean preservation", mean_ok, worst_mean_drift, kStochasticTol);
        print_check("degroot convergence", conv_ok, worst_dev, 1e-9);
        all_ok = all_ok && mean_ok && conv_ok;
    }

    std::printf("[consensus] overall: %s\n", all_ok ? "PASS" : "FAIL");
    return all_ok ? kExitOk : kExitRuntime;
}

int cmd_grad_check() {
    fedvol::model::ModelConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden_dim = 4;
    cfg.horizon = 3;
    bool all_ok = true;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const double err = fedvol::model::grad_check(cfg, seed);
        const bool ok = err < 1e-4;
        std::printf("[grad-check] seed %llu: max relative error %.3e  %s\n",
                    static_cast<unsigned long long>(seed), err, ok ? "PASS" : "FAIL");
        all_ok = all_ok && ok;
    }
    return all_ok ? kExitOk : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated volatility-regime lab"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "run a scenario from a config file");
    run->add_option("--config", config_path, "path to the scenario config")->required();

    std::string synth_out = "synth.csv";
    int synth_days = 2000;
    std::uint64_t synth_seed = 42;
    double omega = 8e-6, alpha = 0.12, beta = 0.80, seasonal_amp = 0.0;
    std::string market_id = "SYNTH", start = "2015-01-02";
    auto* synth = app.add_subcommand("synth", "generate a synthetic price CSV");
    synth->add_option("--out", synth_out, "output CSV path")->required();
    synth->add_option("--days", synth_days, "number of business days")->required();
    synth->add_option("--seed", synth_seed, "generator seed")->required();
    synth->add_option("--omega", omega, "variance constant");
    synth->add_option("--alpha", alpha, "shock persistence");
    synth->add_option("--beta", beta, "variance persistence");
    synth->add_option("--seasonal-amp", seasonal_amp, "quarterly variance modulation");
    synth->add_option("--market-id", market_id, "market identifier");
    synth->add_option("--start", start, "first calendar day (YYYY-MM-DD)");

    int consensus_n = 3;
    auto* consensus = app.add_subcommand("consensus-check", "verify the averaging operator");
    consensus->add_option("--n", consensus_n, "number of agents")->check(CLI::PositiveNumber);

    app.add_subcommand("grad-check", "verify gradients against finite differences");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (run->parsed()) return cmd_run(config_path);
        if (synth->parsed())
            return cmd_synth(synth_out, synth_days, synth_seed, omega, alpha, beta, seasonal_amp,
                             market_id, start);
        if (consensus->parsed()) return cmd_consensus_check(consensus_n);
        return cmd_grad_check();
    } catch (const fedvol::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
