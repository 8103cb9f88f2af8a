#include "fedvol/federation.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <tuple>

#include "fedvol/rng.hpp"

namespace fedvol::federation {

void RoundConfig::validate() const {
    if (n_clients < 1) throw ParameterError("round config: n_clients must be >= 1");
    if (rounds < 1) throw ParameterError("round config: rounds must be >= 1");
    if (local_epochs < 1) throw ParameterError("round config: local_epochs must be >= 1");
    if (batch_size < 1) throw ParameterError("round config: batch_size must be >= 1");
    model.validate();
    if (dp) dp->validate();
}

void RoundHistory::merge(RoundHistory&& other) {
    records.insert(records.end(), std::make_move_iterator(other.records.begin()),
                   std::make_move_iterator(other.records.end()));
    empty_clients.insert(empty_clients.end(), other.empty_clients.begin(),
                         other.empty_clients.end());
}

void RoundHistory::sort() {
    std::stable_sort(records.begin(), records.end(),
                     [](const MetricsRecord& a, const MetricsRecord& b) {
                         return std::tie(a.round, a.scheme, a.client) <
                                std::tie(b.round, b.scheme, b.client);
                     });
}

model::ParamVector local_update(const RoundConfig& cfg, ClientState& client,
                                const model::ParamVector& global, int round) {
    if (client.partition.empty()) return global;
    client.params = global;
    if (cfg.adam_reset_per_round)
        client.opt = model::AdamState::make(global.size(), cfg.adam);
    for (int e = 0; e < cfg.local_epochs; ++e) {
        const std::uint64_t seed = seeds::for_epoch(cfg.base_seed, client.client_id, round, e);
        model::train_epoch(cfg.model, client.params, client.opt, client.partition, cfg.batch_size,
                           seed);
    }
    return client.params;
}

model::ParamVector aggregate(const std::vector<model::ParamVector>& updates) {
    if (updates.empty()) throw SizeError("aggregate: no updates");
    model::ParamVector sum = updates.front();
    for (std::size_t k = 1; k < updates.size(); ++k) {
        if (updates[k].size() != sum.size())
            throw ValidationError("aggregate: update length mismatch at position " +
                                  std::to_string(k));
        sum += updates[k];
    }
    return sum / static_cast<double>(updates.size());
}

bool hetero_participates(int client_id, int round) {
    if (client_id < 1 || round < 1)
        throw ParameterError("hetero_participates: ids and rounds are 1-based");
    return round % client_id == 0;
}

FedState make_fed_state(const RoundConfig& cfg, const std::vector<data::Partition>& partitions) {
    cfg.validate();
    if (static_cast<int>(partitions.size()) != cfg.n_clients)
        throw ValidationError("fed state: expected " + std::to_string(cfg.n_clients) +
                              " partitions, got " + std::to_string(partitions.size()));
    FedState state;
    state.global = model::init_params(cfg.model, seeds::derive(cfg.base_seed, {seeds::kInit}));
    state.clients.reserve(partitions.size());
    for (const auto& part : partitions) {
        ClientState c;
        c.client_id = part.client_id;
        c.partition = part.samples;
        c.params = state.global;
        c.opt = model::AdamState::make(state.global.size(), cfg.adam);
        state.clients.push_back(std::move(c));
    }
    return state;
}

std::vector<model::ParamVector> run_round(const RoundConfig& cfg, FedState& state, int round) {
    std::vector<model::ParamVector> updates;
    updates.reserve(state.clients.size());
    for (auto& client : state.clients) { // ascending client id fixes the summation order
        const bool participates =
            !cfg.hetero_enabled || hetero_participates(client.client_id + 1, round);
        model::ParamVector update =
            participates ? local_update(cfg, client, state.global, round) : state.global;
        if (cfg.dp) update = privacy::dp_process(state.global, update, *cfg.dp, round, client.client_id);
        updates.push_back(std::move(update));
    }
    state.global = aggregate(updates);

#ifndef NDEBUG
    {
        consensus::StackedState stacked;
        stacked.blocks.resize(updates.front().size(), static_cast<Eigen::Index>(updates.size()));
        for (std::size_t k = 0; k < updates.size(); ++k)
            stacked.blocks.col(static_cast<Eigen::Index>(k)) = updates[k];
        const consensus::StackedState mixed = consensus_apply(
            consensus::uniform_matrix(static_cast<Eigen::Index>(updates.size())), stacked);
        const double dev = (mixed.blocks.col(0) - state.global).cwiseAbs().maxCoeff();
        assert(dev <= 1e-12 * (1.0 + state.global.cwiseAbs().maxCoeff()));
    }
#endif
    return updates;
}

namespace {

data::SampleSet pool_partitions(const std::vector<data::Partition>& partitions) {
    data::SampleSet pooled;
    for (const auto& part : partitions) {
        pooled.samples.insert(pooled.samples.end(), part.samples.samples.begin(),
                              part.samples.samples.end());
        if (part.samples.threshold) pooled.threshold = part.samples.threshold;
    }
    return pooled;
}

} // namespace

FedAvgResult run_fedavg(const RoundConfig& cfg, const std::vector<data::Partition>& partitions,
                        const data::SampleSet& test,
                        const std::vector<LocalBaselineData>* locals) {
    cfg.validate();
    if (test.empty()) throw SizeError("run_fedavg: empty test set");
    if (locals && locals->size() != partitions.size())
        throw ValidationError("run_fedavg: locals size mismatch");

    FedState state = make_fed_state(cfg, partitions);
    const data::SampleSet pooled_train = pool_partitions(partitions);
    const char* fed_tag = cfg.dp ? scheme::kFedAvgDp : scheme::kFedAvg;

    FedAvgResult result;
    for (const auto& client : state.clients)
        if (client.partition.empty()) result.history.empty_clients.push_back(client.client_id);

    // Independent local-only models for the comparison band: same starting
    // point, partitions, seeds, and participation schedule, never aggregated.
    std::vector<ClientState> local_models;
    if (cfg.record_locals) {
        local_models.reserve(state.clients.size());
        for (const auto& client : state.clients) {
            ClientState lm;
            lm.client_id = client.client_id;
            lm.partition = locals ? (*locals)[static_cast<std::size_t>(client.client_id)].train
                                  : client.partition;
            lm.params = state.global;
            lm.opt = model::AdamState::make(state.global.size(), cfg.adam);
            local_models.push_back(std::move(lm));
        }
    }

    for (int round = 1; round <= cfg.rounds; ++round) {
        run_round(cfg, state, round);
        MetricsRecord rec;
        rec.round = round;
        rec.scheme = fed_tag;
        rec.client = -1;
        const model::Metrics test_m = model::evaluate(cfg.model, state.global, test);
        rec.bce = test_m.bce;
        rec.accuracy = test_m.accuracy;
        rec.train_bce = model::evaluate(cfg.model, state.global, pooled_train).bce;
        result.history.records.push_back(std::move(rec));

        for (auto& lm : local_models) {
            if (lm.partition.empty()) continue;
            const bool participates =
                !cfg.hetero_enabled || hetero_participates(lm.client_id + 1, round);
            if (participates) {
                for (int e = 0; e < cfg.local_epochs; ++e) {
                    const std::uint64_t seed =
                        seeds::for_epoch(cfg.base_seed, lm.client_id, round, e);
                    model::train_epoch(cfg.model, lm.params, lm.opt, lm.partition, cfg.batch_size,
                                       seed);
                }
            }
            const data::SampleSet& local_test =
                locals ? (*locals)[static_cast<std::size_t>(lm.client_id)].test : test;
            MetricsRecord lrec;
            lrec.round = round;
            lrec.scheme = scheme::kLocal;
            lrec.client = lm.client_id;
            const model::Metrics lm_test = model::evaluate(cfg.model, lm.params, local_test);
            lrec.bce = lm_test.bce;
            lrec.accuracy = lm_test.accuracy;
            lrec.train_bce = model::evaluate(cfg.model, lm.params, lm.partition).bce;
            result.history.records.push_back(std::move(lrec));
        }
    }
    result.history.sort();
    result.final_global = state.global;
    return result;
}

CentralizedResult run_centralized(const RoundConfig& cfg, const data::SampleSet& train,
                                  const data::SampleSet& test) {
    cfg.validate();
    if (train.empty() || test.empty()) throw SizeError("run_centralized: empty data");

    CentralizedResult result;
    model::ParamVector params =
        model::init_params(cfg.model, seeds::derive(cfg.base_seed, {seeds::kInit}));
    model::AdamState opt = model::AdamState::make(params.size(), cfg.adam);

    for (int round = 1; round <= cfg.rounds; ++round) {
        if (cfg.adam_reset_per_round) opt = model::AdamState::make(params.size(), cfg.adam);
        for (int e = 0; e < cfg.local_epochs; ++e) {
            const std::uint64_t seed = seeds::for_epoch(cfg.base_seed, 0, round, e);
            model::train_epoch(cfg.model, params, opt, train, cfg.batch_size, seed);
        }
        MetricsRecord rec;
        rec.round = round;
        rec.scheme = scheme::kCentralized;
        rec.client = -1;
        const model::Metrics test_m = model::evaluate(cfg.model, params, test);
        rec.bce = test_m.bce;
        rec.accuracy = test_m.accuracy;
        rec.train_bce = model::evaluate(cfg.model, params, train).bce;
        result.history.records.push_back(std::move(rec));
    }
    result.final_params = std::move(params);
    return result;
}

namespace {

// Fixed channel ids decorrelate the personalization epoch streams from any
// federated client's stream.
constexpr int kFinetuneChannel = 1001;
constexpr int kScratchChannel = 1002;

model::ParamVector train_small_budget(const RoundConfig& cfg, model::ParamVector params,
                                      const data::SampleSet& new_train, int epochs,
                                      int seed_channel, const char* tag,
                                      const model::ParamVector* mask,
                                      const data::SampleSet* eval_test, RoundHistory* history) {
    if (new_train.empty()) throw SizeError("transfer training: empty data");
    if (epochs < 0) throw ParameterError("transfer training: epochs must be >= 0");
    model::AdamState opt = model::AdamState::make(params.size(), cfg.adam);
    for (int e = 1; e <= epochs; ++e) {
        const std::uint64_t seed = seeds::for_epoch(cfg.base_seed, seed_channel, e, 0);
        model::train_epoch(cfg.model, params, opt, new_train, cfg.batch_size, seed, mask);
        if (history && eval_test) {
            MetricsRecord rec;
            rec.round = e;
            rec.scheme = tag;
            rec.client = -1;
            const model::Metrics m = model::evaluate(cfg.model, params, *eval_test);
            rec.bce = m.bce;
            rec.accuracy = m.accuracy;
            rec.train_bce = model::evaluate(cfg.model, params, new_train).bce;
            history->records.push_back(std::move(rec));
        }
    }
    return params;
}

} // namespace

model::ParamVector personalize_last_layer(const RoundConfig& cfg, const model::ParamVector& global,
                                          const data::SampleSet& new_train, int epochs,
                                          const data::SampleSet* eval_test, RoundHistory* history) {
    const model::ParamVector mask = model::head_only_mask(cfg.model);
    return train_small_budget(cfg, global, new_train, epochs, kFinetuneChannel,
                              scheme::kTransferLastLayer, &mask, eval_test, history);
}

model::ParamVector train_scratch(const RoundConfig& cfg, const data::SampleSet& new_train,
                                 int epochs, const data::SampleSet* eval_test,
                                 RoundHistory* history) {
    model::ParamVector params =
        model::init_params(cfg.model, seeds::derive(cfg.base_seed, {seeds::kScratch}));
    return train_small_budget(cfg, std::move(params), new_train, epochs, kScratchChannel,
                              scheme::kTransferScratch, nullptr, eval_test, history);
}

} // namespace fedvol::federation
