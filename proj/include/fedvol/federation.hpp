#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedvol/consensus.hpp"
#include "fedvol/data.hpp"
#include "fedvol/model.hpp"
#include "fedvol/privacy.hpp"

namespace fedvol::federation {

namespace scheme {
inline constexpr const char* kLocal = "local";
inline constexpr const char* kFedAvg = "fedavg";
inline constexpr const char* kFedAvgDp = "fedavg_dp";
inline constexpr const char* kCentralized = "centralized";
inline constexpr const char* kTransferLastLayer = "transfer_lastlayer";
inline constexpr const char* kTransferScratch = "transfer_scratch";
} // namespace scheme

struct RoundConfig {
    int n_clients = 3;    // N
    int rounds = 50;      // T
    int local_epochs = 1; // E
    int batch_size = 32;
    std::uint64_t base_seed = 42;
    bool hetero_enabled = false;
    std::optional<privacy::DpConfig> dp;

    model::ModelConfig model;
    model::AdamParams adam;
    bool adam_reset_per_round = false; // default: optimizer state persists across rounds
    bool record_locals = true;         // per-client local-only baselines alongside the run

    void validate() const;
};

struct ClientState {
    int client_id = 0;
    data::SampleSet partition;
    model::ParamVector params;
    model::AdamState opt;
};

/// One evaluation row. `train_bce` is kept for best-round selection and is not
/// part of the CSV schema.
struct MetricsRecord {
    int round = 0;
    std::string scheme;
    int client = -1; // -1 for global schemes
    double bce = 0.0;
    double accuracy = 0.0;
    double train_bce = 0.0;
};

struct RoundHistory {
    std::vector<MetricsRecord> records;
    std::vector<int> empty_clients; // clients that held no data and echoed the global

    void merge(RoundHistory&& other);
    /// Orders records by (round, scheme, client) — the CSV row order.
    void sort();
};

/// Copies the global parameters into the client and runs E local epochs on the
/// client's partition; epoch seeds derive from (base_seed, client_id, round,
/// epoch). An empty partition echoes the global unchanged.
model::ParamVector local_update(const RoundConfig& cfg, ClientState& client,
                                const model::ParamVector& global, int round);

/// Unweighted coordinate-wise mean; summation follows list order, which
/// callers fix to ascending client id.
model::ParamVector aggregate(const std::vector<model::ParamVector>& updates);

/// Participation schedule under client heterogeneity: client k (1-based)
/// trains on round t iff t is a multiple of k.
bool hetero_participates(int client_id, int round);

struct FedState {
    model::ParamVector global;
    std::vector<ClientState> clients;
};

FedState make_fed_state(const RoundConfig& cfg, const std::vector<data::Partition>& partitions);

/// One federated round: participating clients train locally (skippers echo the
/// global), updates are optionally DP-processed, then averaged in client order
/// and broadcast. Returns the list of (possibly processed) client updates.
std::vector<model::ParamVector> run_round(const RoundConfig& cfg, FedState& state, int round);

/// Per-client data for the local-only baselines when their preprocessing
/// differs from the federated clients' (e.g. per-scheme standardization).
struct LocalBaselineData {
    data::SampleSet train;
    data::SampleSet test;
};

struct FedAvgResult {
    RoundHistory history;
    model::ParamVector final_global;
};

/// Full FedAvg run: T rounds of run_round with per-round evaluation of the
/// global model on the shared test set, plus (by default) independently
/// trained local-only trajectories for the comparison band. The local models
/// reuse the federated clients' partitions, seeds, and participation schedule
/// unless `locals` supplies scheme-specific data.
FedAvgResult run_fedavg(const RoundConfig& cfg, const std::vector<data::Partition>& partitions,
                        const data::SampleSet& test,
                        const std::vector<LocalBaselineData>* locals = nullptr);

struct CentralizedResult {
    RoundHistory history;
    model::ParamVector final_params;
};

/// Pooled baseline: one model, T x E epochs on the full training set, seeded
/// identically to a single federated client so the N = 1 federated run and
/// this baseline produce the same trajectory.
CentralizedResult run_centralized(const RoundConfig& cfg, const data::SampleSet& train,
                                  const data::SampleSet& test);

/// Retrains only the dense head (v, c) on new data, with every LSTM segment
/// frozen bit-exactly. Appends one record per epoch to `history` when given.
model::ParamVector personalize_last_layer(const RoundConfig& cfg, const model::ParamVector& global,
                                          const data::SampleSet& new_train, int epochs,
                                          const data::SampleSet* eval_test = nullptr,
                                          RoundHistory* history = nullptr);

/// Fresh-initialization baseline trained on the same small budget.
model::ParamVector train_scratch(const RoundConfig& cfg, const data::SampleSet& new_train,
                                 int epochs, const data::SampleSet* eval_test = nullptr,
                                 RoundHistory* history = nullptr);

} // namespace fedvol::federation
