#include "fedvol/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "fedvol/rng.hpp"

namespace fedvol::scenario {

const char* to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::Iid: return "iid";
        case ScenarioKind::Quarters: return "quarters";
        case ScenarioKind::Hetero: return "hetero";
        case ScenarioKind::Dp: return "dp";
        case ScenarioKind::Transfer: return "transfer";
        case ScenarioKind::Centralized: return "centralized";
        case ScenarioKind::Local: return "local";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

struct RawEntry {
    std::string value;
    int line = 0;
};

[[noreturn]] void bad_key(const std::string& key, int line, const std::string& what) {
    throw ConfigError("config line " + std::to_string(line) + ", key '" + key + "': " + what);
}

long long to_int(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad_key(key, e.line, "expected an integer, got '" + e.value + "'");
    }
}

double to_double(const std::string& key, const RawEntry& e) {
    if (e.value == "inf") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        const double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad_key(key, e.line, "expected a number, got '" + e.value + "'");
    }
}

bool to_bool(const std::string& key, const RawEntry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    bad_key(key, e.line, "expected true or false, got '" + e.value + "'");
}

std::uint64_t to_u64(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        bad_key(key, e.line, "expected a nonnegative integer, got '" + e.value + "'");
    }
}

MarketSpec parse_market_spec(const std::string& key, const std::string& token, int line) {
    const auto c1 = token.find(':');
    if (c1 == std::string::npos) bad_key(key, line, "market spec '" + token + "' needs ID:kind:arg");
    const auto c2 = token.find(':', c1 + 1);
    if (c2 == std::string::npos) bad_key(key, line, "market spec '" + token + "' needs ID:kind:arg");
    MarketSpec spec;
    spec.id = trim(token.substr(0, c1));
    const std::string kind = trim(token.substr(c1 + 1, c2 - c1 - 1));
    const std::string arg = trim(token.substr(c2 + 1));
    if (spec.id.empty()) bad_key(key, line, "market spec has an empty id");
    if (kind == "synth") {
        spec.kind = MarketSpec::Kind::Synth;
        try {
            std::size_t pos = 0;
            spec.days = std::stoi(arg, &pos);
            if (pos != arg.size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            bad_key(key, line, "synth day count '" + arg + "' is not an integer");
        }
        if (spec.days < 30) bad_key(key, line, "synth market needs at least 30 days");
    } else if (kind == "csv") {
        spec.kind = MarketSpec::Kind::Csv;
        spec.path = arg;
        if (spec.path.empty()) bad_key(key, line, "csv market spec has an empty path");
    } else {
        bad_key(key, line, "unknown market kind '" + kind + "' (expected synth or csv)");
    }
    return spec;
}

std::vector<MarketSpec> parse_market_list(const std::string& key, const RawEntry& e) {
    std::vector<MarketSpec> out;
    std::stringstream ss(e.value);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (token.empty()) bad_key(key, e.line, "empty market spec in list");
        out.push_back(parse_market_spec(key, token, e.line));
    }
    if (out.empty()) bad_key(key, e.line, "no market specs given");
    return out;
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "scenario",        "data",
        "target",          "clients",
        "rounds",          "local_epochs",
        "batch_size",      "hidden_dim",
        "learning_rate",   "clamp_eps",
        "seed",            "out",
        "checkpoint",      "synth_omega",
        "synth_alpha",     "synth_beta",
        "synth_seasonal_amp", "synth_start",
        "dp_clip",         "dp_sigma",
        "dp_seed",         "transfer_fraction",
        "transfer_epochs", "horizon",
        "smooth_window",   "vol_window",
        "train_fraction",  "standardize",
        "features_cumulative", "adam_reset_per_round",
    };
    return keys;
}

} // namespace

ScenarioConfig parse_config(const std::string& text) {
    std::map<std::string, RawEntry> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (!known_keys().count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
        if (entries.count(key))
            throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                              "' (first set on line " + std::to_string(entries[key].line) + ")");
        entries[key] = RawEntry{value, line_no};
    }

    auto take = [&](const char* key) -> std::optional<RawEntry> {
        auto it = entries.find(key);
        if (it == entries.end()) return std::nullopt;
        RawEntry e = it->second;
        entries.erase(it);
        return e;
    };

    ScenarioConfig cfg;

    const auto scenario_entry = take("scenario");
    if (!scenario_entry) throw ConfigError("config: missing required key 'scenario'");
    static const std::map<std::string, ScenarioKind> kinds = {
        {"iid", ScenarioKind::Iid},           {"quarters", ScenarioKind::Quarters},
        {"hetero", ScenarioKind::Hetero},     {"dp", ScenarioKind::Dp},
        {"transfer", ScenarioKind::Transfer}, {"centralized", ScenarioKind::Centralized},
        {"local", ScenarioKind::Local},
    };
    const auto kind_it = kinds.find(scenario_entry->value);
    if (kind_it == kinds.end())
        bad_key("scenario", scenario_entry->line, "unknown scenario '" + scenario_entry->value + "'");
    cfg.scenario = kind_it->second;

    const auto data_entry = take("data");
    if (!data_entry) throw ConfigError("config: missing required key 'data'");
    cfg.markets = parse_market_list("data", *data_entry);

    if (const auto e = take("target")) cfg.target = parse_market_spec("target", e->value, e->line);

    if (const auto e = take("clients")) {
        cfg.clients = static_cast<int>(to_int("clients", *e));
    } else {
        switch (cfg.scenario) {
            case ScenarioKind::Quarters:
            case ScenarioKind::Hetero: cfg.clients = 4; break;
            case ScenarioKind::Transfer: cfg.clients = static_cast<int>(cfg.markets.size()); break;
            default: cfg.clients = 3; break;
        }
    }

    if (const auto e = take("rounds")) cfg.rounds = static_cast<int>(to_int("rounds", *e));
    if (const auto e = take("local_epochs"))
        cfg.local_epochs = static_cast<int>(to_int("local_epochs", *e));
    if (const auto e = take("batch_size")) cfg.batch_size = static_cast<int>(to_int("batch_size", *e));
    if (const auto e = take("hidden_dim")) cfg.hidden_dim = static_cast<int>(to_int("hidden_dim", *e));
    if (const auto e = take("learning_rate")) cfg.learning_rate = to_double("learning_rate", *e);
    if (const auto e = take("clamp_eps")) cfg.clamp_eps = to_double("clamp_eps", *e);
    if (const auto e = take("seed")) cfg.seed = to_u64("seed", *e);
    if (const auto e = take("out")) cfg.out = e->value;
    if (const auto e = take("checkpoint")) cfg.checkpoint = e->value;
    if (const auto e = take("synth_omega")) cfg.garch.omega = to_double("synth_omega", *e);
    if (const auto e = take("synth_alpha")) cfg.garch.alpha = to_double("synth_alpha", *e);
    if (const auto e = take("synth_beta")) cfg.garch.beta = to_double("synth_beta", *e);
    if (const auto e = take("synth_seasonal_amp"))
        cfg.synth_seasonal_amp = to_double("synth_seasonal_amp", *e);
    if (const auto e = take("synth_start")) {
        try {
            cfg.synth_start = parse_date(e->value);
        } catch (const ValidationError& err) {
            bad_key("synth_start", e->line, err.what());
        }
    }
    if (const auto e = take("dp_clip")) cfg.dp_clip = to_double("dp_clip", *e);
    if (const auto e = take("dp_sigma")) cfg.dp_sigma = to_double("dp_sigma", *e);
    if (const auto e = take("dp_seed")) cfg.dp_seed = to_u64("dp_seed", *e);
    if (const auto e = take("transfer_fraction"))
        cfg.transfer_fraction = to_double("transfer_fraction", *e);
    if (const auto e = take("transfer_epochs"))
        cfg.transfer_epochs = static_cast<int>(to_int("transfer_epochs", *e));
    if (const auto e = take("horizon")) cfg.horizon = static_cast<int>(to_int("horizon", *e));
    if (const auto e = take("smooth_window"))
        cfg.smooth_window = static_cast<int>(to_int("smooth_window", *e));
    if (const auto e = take("vol_window")) cfg.vol_window = static_cast<int>(to_int("vol_window", *e));
    if (const auto e = take("train_fraction")) cfg.train_fraction = to_double("train_fraction", *e);
    if (const auto e = take("standardize")) cfg.standardize = to_bool("standardize", *e);
    if (const auto e = take("features_cumulative"))
        cfg.features_cumulative = to_bool("features_cumulative", *e);
    if (const auto e = take("adam_reset_per_round"))
        cfg.adam_reset_per_round = to_bool("adam_reset_per_round", *e);

    cfg.validate();
    return cfg;
}

ScenarioConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

bool apply_env_seed_override(ScenarioConfig& cfg) {
    const char* env = std::getenv("FEDVOL_SEED");
    if (!env) return false;
    try {
        std::size_t pos = 0;
        const std::uint64_t seed = std::stoull(env, &pos);
        if (pos != std::string(env).size()) throw std::invalid_argument("");
        cfg.seed = seed;
    } catch (const std::exception&) {
        throw ConfigError(std::string("FEDVOL_SEED is not a valid seed: '") + env + "'");
    }
    return true;
}

void ScenarioConfig::validate() const {
    if (markets.empty()) throw ConfigError("config: at least one data market is required");
    if (scenario == ScenarioKind::Transfer) {
        if (markets.size() < 2)
            throw ConfigError("config: transfer needs at least 2 training markets");
        if (!target) throw ConfigError("config: transfer needs a 'target' market");
        if (clients != static_cast<int>(markets.size()))
            throw ConfigError("config: transfer requires clients == number of markets (" +
                              std::to_string(markets.size()) + ")");
    } else {
        if (markets.size() != 1)
            throw ConfigError(std::string("config: scenario '") + to_string(scenario) +
                              "' requires exactly one data market");
        if (target) throw ConfigError("config: 'target' is only valid for the transfer scenario");
    }
    if (scenario == ScenarioKind::Quarters && clients != 4)
        throw ConfigError("config: the quarters scenario requires clients = 4");
    if (clients < 1) throw ConfigError("config: clients must be >= 1");
    if (rounds < 1) throw ConfigError("config: rounds must be >= 1");
    if (local_epochs < 1) throw ConfigError("config: local_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (hidden_dim < 1) throw ConfigError("config: hidden_dim must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
        throw ConfigError("config: clamp_eps must be in (0, 0.5)");
    if (out.empty()) throw ConfigError("config: out path must not be empty");
    if (!(dp_clip > 0.0)) throw ConfigError("config: dp_clip must be > 0");
    if (!(dp_sigma >= 0.0)) throw ConfigError("config: dp_sigma must be >= 0");
    if (!(transfer_fraction > 0.0 && transfer_fraction <= 1.0))
        throw ConfigError("config: transfer_fraction must be in (0, 1]");
    if (transfer_epochs < 0) throw ConfigError("config: transfer_epochs must be >= 0");
    if (horizon < 1) throw ConfigError("config: horizon must be >= 1");
    if (smooth_window < 1) throw ConfigError("config: smooth_window must be >= 1");
    if (vol_window < 2) throw ConfigError("config: vol_window must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("config: train_fraction must be in (0, 1)");
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

data::ReturnSeries drop_before(const data::ReturnSeries& r, const Date& first) {
    std::size_t k = 0;
    while (k < r.size() && r.dates[k] < first) ++k;
    data::ReturnSeries out;
    out.market_id = r.market_id;
    out.dates.assign(r.dates.begin() + static_cast<std::ptrdiff_t>(k), r.dates.end());
    out.values.assign(r.values.begin() + static_cast<std::ptrdiff_t>(k), r.values.end());
    return out;
}

data::PriceSeries load_market(const ScenarioConfig& cfg, const MarketSpec& spec) {
    if (spec.kind == MarketSpec::Kind::Synth)
        return data::generate_synthetic(spec.days, cfg.garch, cfg.synth_seasonal_amp,
                                        cfg.synth_start, seeds::for_market(cfg.seed, spec.id),
                                        spec.id);
    return data::load_price_csv_file(spec.path, spec.id);
}

data::SampleSet assemble_samples(const ScenarioConfig& cfg, const data::PriceSeries& prices) {
    const data::ReturnSeries returns = data::log_returns(prices);
    data::ReturnSeries smoothed = data::rolling_mean(returns, cfg.smooth_window);
    data::ReturnSeries vols = data::volatility_proxy(returns, cfg.vol_window);
    const Date first = std::max(smoothed.dates.front(), vols.dates.front());
    smoothed = drop_before(smoothed, first);
    vols = drop_before(vols, first);
    std::vector<data::ReturnSeries> extras;
    if (cfg.features_cumulative) extras.push_back(drop_before(data::cumulative_sum(returns), first));
    return data::build_samples(smoothed, vols, cfg.horizon, extras);
}

} // namespace

MarketDataset build_market_dataset(const ScenarioConfig& cfg, const MarketSpec& spec) {
    const data::PriceSeries prices = load_market(cfg, spec);
    const data::SampleSet samples = assemble_samples(cfg, prices);
    auto [train, test] = data::chrono_split(samples, cfg.train_fraction);
    MarketDataset ds;
    ds.threshold = data::label_by_median(train, test);
    ds.market_id = spec.id;
    ds.train = std::move(train);
    ds.test = std::move(test);
    return ds;
}

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

namespace {

federation::RoundConfig make_round_config(const ScenarioConfig& cfg) {
    federation::RoundConfig rc;
    rc.n_clients = cfg.clients;
    rc.rounds = cfg.rounds;
    rc.local_epochs = cfg.local_epochs;
    rc.batch_size = cfg.batch_size;
    rc.base_seed = cfg.seed;
    rc.hetero_enabled = cfg.scenario == ScenarioKind::Hetero;
    rc.model.input_dim = cfg.features_cumulative ? 8 : 7;
    rc.model.hidden_dim = cfg.hidden_dim;
    rc.model.horizon = cfg.horizon;
    rc.model.clamp_eps = cfg.clamp_eps;
    rc.adam.lr = cfg.learning_rate;
    rc.adam_reset_per_round = cfg.adam_reset_per_round;
    if (cfg.scenario == ScenarioKind::Dp) {
        privacy::DpConfig dp;
        dp.clip_norm = cfg.dp_clip;
        dp.noise_std = cfg.dp_sigma;
        dp.seed = cfg.dp_seed ? *cfg.dp_seed : seeds::derive(cfg.seed, {seeds::kDpNoise});
        rc.dp = dp;
    }
    return rc;
}

/// Per-client local baseline data: each scheme standardizes on the data it
/// actually trains on, so client k's scaler is fitted on its own partition.
std::vector<federation::LocalBaselineData> make_local_baselines(
    bool standardize, const std::vector<data::Partition>& raw_parts, const data::SampleSet& test) {
    std::vector<federation::LocalBaselineData> locals;
    locals.reserve(raw_parts.size());
    for (const auto& part : raw_parts) {
        federation::LocalBaselineData lb;
        if (part.samples.empty()) {
            lb.train = part.samples;
            lb.test = test;
        } else if (standardize) {
            const auto scaler = data::Standardizer::fit(part.samples);
            lb.train = scaler.apply(part.samples);
            lb.test = scaler.apply(test);
        } else {
            lb.train = part.samples;
            lb.test = test;
        }
        locals.push_back(std::move(lb));
    }
    return locals;
}

federation::RoundHistory run_local_only(const federation::RoundConfig& cfg,
                                        const std::vector<federation::LocalBaselineData>& locals) {
    federation::RoundHistory history;
    const model::ParamVector w0 =
        model::init_params(cfg.model, seeds::derive(cfg.base_seed, {seeds::kInit}));
    for (std::size_t k = 0; k < locals.size(); ++k) {
        const auto& lb = locals[k];
        const int client_id = static_cast<int>(k);
        if (lb.train.empty()) {
            history.empty_clients.push_back(client_id);
            continue;
        }
        model::ParamVector params = w0;
        model::AdamState opt = model::AdamState::make(params.size(), cfg.adam);
        for (int round = 1; round <= cfg.rounds; ++round) {
            for (int e = 0; e < cfg.local_epochs; ++e)
                model::train_epoch(cfg.model, params, opt, lb.train, cfg.batch_size,
                                   seeds::for_epoch(cfg.base_seed, client_id, round, e));
            federation::MetricsRecord rec;
            rec.round = round;
            rec.scheme = federation::scheme::kLocal;
            rec.client = client_id;
            const model::Metrics m = model::evaluate(cfg.model, params, lb.test);
            rec.bce = m.bce;
            rec.accuracy = m.accuracy;
            rec.train_bce = model::evaluate(cfg.model, params, lb.train).bce;
            history.records.push_back(std::move(rec));
        }
    }
    history.sort();
    return history;
}

struct ExecutionOutcome {
    federation::RoundHistory history;
    std::optional<model::ParamVector> final_global;
    model::ModelConfig model;
};

ExecutionOutcome run_single_market(const ScenarioConfig& cfg) {
    const MarketDataset ds = build_market_dataset(cfg, cfg.markets.front());
    const federation::RoundConfig rc = make_round_config(cfg);

    ExecutionOutcome outcome;
    outcome.model = rc.model;

    if (cfg.scenario == ScenarioKind::Centralized) {
        std::optional<data::Standardizer> scaler;
        if (cfg.standardize) scaler = data::Standardizer::fit(ds.train);
        auto cen = federation::run_centralized(rc, scaler ? scaler->apply(ds.train) : ds.train,
                                               scaler ? scaler->apply(ds.test) : ds.test);
        outcome.history = std::move(cen.history);
        outcome.final_global = std::move(cen.final_params);
        return outcome;
    }

    std::vector<data::Partition> raw_parts =
        cfg.scenario == ScenarioKind::Quarters
            ? data::partition_quarters(ds.train)
            : data::partition_iid(ds.train, cfg.clients,
                                  seeds::derive(cfg.seed, {seeds::kPartition}));

    if (cfg.scenario == ScenarioKind::Local) {
        outcome.history = run_local_only(rc, make_local_baselines(cfg.standardize, raw_parts, ds.test));
        return outcome;
    }

    // Federated + centralized on identical splits. The federated clients and
    // the pooled baseline share the full-train scaler; the local baselines fit
    // their own.
    std::optional<data::Standardizer> scaler;
    if (cfg.standardize) scaler = data::Standardizer::fit(ds.train);
    auto scale = [&](const data::SampleSet& s) { return scaler ? scaler->apply(s) : s; };

    std::vector<data::Partition> parts_g;
    parts_g.reserve(raw_parts.size());
    for (const auto& part : raw_parts)
        parts_g.push_back({part.client_id, scale(part.samples)});
    const data::SampleSet train_g = scale(ds.train);
    const data::SampleSet test_g = scale(ds.test);
    const auto locals = make_local_baselines(cfg.standardize, raw_parts, ds.test);

    auto fed = federation::run_fedavg(rc, parts_g, test_g, &locals);
    auto cen = federation::run_centralized(rc, train_g, test_g);
    outcome.history = std::move(fed.history);
    outcome.history.merge(std::move(cen.history));
    outcome.final_global = std::move(fed.final_global);
    return outcome;
}

ExecutionOutcome run_transfer(const ScenarioConfig& cfg) {
    federation::RoundConfig rc = make_round_config(cfg);

    // Each training market is one client; preprocessing (labeling threshold
    // and scaler) is market-local, and the shared test set is the union of the
    // per-market test splits.
    std::vector<data::Partition> parts;
    data::SampleSet union_test;
    data::SampleSet pooled_train;
    for (std::size_t k = 0; k < cfg.markets.size(); ++k) {
        const MarketDataset ds = build_market_dataset(cfg, cfg.markets[k]);
        std::optional<data::Standardizer> scaler;
        if (cfg.standardize) scaler = data::Standardizer::fit(ds.train);
        auto scale = [&](const data::SampleSet& s) { return scaler ? scaler->apply(s) : s; };
        const data::SampleSet train_k = scale(ds.train);
        const data::SampleSet test_k = scale(ds.test);
        parts.push_back({static_cast<int>(k), train_k});
        union_test.samples.insert(union_test.samples.end(), test_k.samples.begin(),
                                  test_k.samples.end());
        pooled_train.samples.insert(pooled_train.samples.end(), train_k.samples.begin(),
                                    train_k.samples.end());
    }

    std::vector<federation::LocalBaselineData> locals;
    for (const auto& part : parts) locals.push_back({part.samples, union_test});

    auto fed = federation::run_fedavg(rc, parts, union_test, &locals);
    auto cen = federation::run_centralized(rc, pooled_train, union_test);

    // Target market: the personalization budget is a chronological prefix of
    // its training split; the labeling threshold and scaler come from that
    // prefix only.
    const data::PriceSeries target_prices = load_market(cfg, *cfg.target);
    const data::SampleSet target_samples = assemble_samples(cfg, target_prices);
    auto [target_train, target_test] = data::chrono_split(target_samples, cfg.train_fraction);
    data::SampleSet target_sub = data::subsample_fraction(target_train, cfg.transfer_fraction);
    data::label_by_median(target_sub, target_test);
    if (cfg.standardize) {
        const auto scaler = data::Standardizer::fit(target_sub);
        target_sub = scaler.apply(target_sub);
        target_test = scaler.apply(target_test);
    }

    ExecutionOutcome outcome;
    outcome.model = rc.model;
    outcome.history = std::move(fed.history);
    outcome.history.merge(std::move(cen.history));
    federation::personalize_last_layer(rc, fed.final_global, target_sub, cfg.transfer_epochs,
                                       &target_test, &outcome.history);
    federation::train_scratch(rc, target_sub, cfg.transfer_epochs, &target_test, &outcome.history);
    outcome.final_global = std::move(fed.final_global);
    return outcome;
}

std::string default_checkpoint_path(const std::string& out) {
    const auto dot = out.find_last_of('.');
    const auto slash = out.find_last_of("/\\");
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return out + ".ckpt";
    return out.substr(0, dot) + ".ckpt";
}

} // namespace

// ---------------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------------

namespace {

struct TrajectoryPoint {
    int round;
    double bce;
    double accuracy;
    double train_bce;
};

std::vector<TrajectoryPoint> scheme_trajectory(const federation::RoundHistory& history,
                                               const std::string& tag) {
    std::vector<TrajectoryPoint> points;
    if (tag == federation::scheme::kLocal) {
        // Mean over live clients at each round.
        std::map<int, std::vector<const federation::MetricsRecord*>> by_round;
        for (const auto& rec : history.records)
            if (rec.scheme == tag) by_round[rec.round].push_back(&rec);
        for (const auto& [round, recs] : by_round) {
            TrajectoryPoint pt{round, 0.0, 0.0, 0.0};
            for (const auto* r : recs) {
                pt.bce += r->bce;
                pt.accuracy += r->accuracy;
                pt.train_bce += r->train_bce;
            }
            const auto n = static_cast<double>(recs.size());
            pt.bce /= n;
            pt.accuracy /= n;
            pt.train_bce /= n;
            points.push_back(pt);
        }
    } else {
        for (const auto& rec : history.records)
            if (rec.scheme == tag) points.push_back({rec.round, rec.bce, rec.accuracy, rec.train_bce});
        std::sort(points.begin(), points.end(),
                  [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.round < b.round; });
    }
    return points;
}

std::optional<SummaryRow> best_round_row(const federation::RoundHistory& history,
                                         const std::string& label, const std::string& tag) {
    const auto traj = scheme_trajectory(history, tag);
    if (traj.empty()) return std::nullopt;
    const TrajectoryPoint* best = &traj.front();
    for (const auto& pt : traj)
        if (pt.train_bce < best->train_bce) best = &pt;
    return SummaryRow{label, tag, best->round, best->bce, best->accuracy};
}

} // namespace

std::vector<SummaryRow> summarize(const federation::RoundHistory& history, ScenarioKind kind) {
    namespace sch = federation::scheme;
    std::vector<std::pair<std::string, std::string>> wanted;
    switch (kind) {
        case ScenarioKind::Iid:
        case ScenarioKind::Quarters:
        case ScenarioKind::Hetero:
            wanted = {{"Local (Mean)", sch::kLocal},
                      {"Federated (FedAvg)", sch::kFedAvg},
                      {"Centralized (Global)", sch::kCentralized}};
            break;
        case ScenarioKind::Dp:
            wanted = {{"Local (Mean)", sch::kLocal},
                      {"Federated (FedAvg)", sch::kFedAvgDp},
                      {"Centralized (Global)", sch::kCentralized}};
            break;
        case ScenarioKind::Transfer:
            wanted = {{"Local (Mean)", sch::kLocal},
                      {"Federated (FedAvg)", sch::kFedAvg},
                      {"Centralized (Global)", sch::kCentralized},
                      {"Federated + (Last layer)", sch::kTransferLastLayer},
                      {"Scratch", sch::kTransferScratch}};
            break;
        case ScenarioKind::Centralized:
            wanted = {{"Centralized (Global)", sch::kCentralized}};
            break;
        case ScenarioKind::Local: wanted = {{"Local (Mean)", sch::kLocal}}; break;
    }
    std::vector<SummaryRow> rows;
    for (const auto& [label, tag] : wanted) {
        const auto row = best_round_row(history, label, tag);
        if (!row)
            throw VerificationError("summary: no records for scheme '" + tag + "'");
        rows.push_back(*row);
    }
    return rows;
}

void write_metrics_csv(const federation::RoundHistory& history, std::ostream& out) {
    federation::RoundHistory sorted = history;
    sorted.sort();
    out << "round,scheme,client,bce,accuracy\n";
    char buf[160];
    for (const auto& rec : sorted.records) {
        std::snprintf(buf, sizeof buf, "%d,%s,%d,%.6f,%.6f\n", rec.round, rec.scheme.c_str(),
                      rec.client, rec.bce, rec.accuracy);
        out << buf;
    }
    if (!out) throw std::runtime_error("metrics csv: stream failure");
}

void emit_metrics_csv(const federation::RoundHistory& history, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary); // binary keeps line endings stable
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_metrics_csv(history, out);
}

void print_summary(std::ostream& out, const ScenarioConfig& cfg,
                   const std::vector<SummaryRow>& rows) {
    out << "scenario: " << to_string(cfg.scenario) << "  (seed " << cfg.seed << ")\n";
    if (cfg.scenario == ScenarioKind::Dp) {
        out << "dp: clip_norm " << cfg.dp_clip << ", noise_std " << cfg.dp_sigma << "\n";
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %10s %10s %10s\n", "Training Scheme", "Best round", "BCE",
                  "Accuracy");
    out << buf;
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%-28s %10d %10.4f %10.4f\n", row.label.c_str(),
                      row.best_round, row.bce, row.accuracy);
        out << buf;
    }
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    ExecutionOutcome outcome = cfg.scenario == ScenarioKind::Transfer ? run_transfer(cfg)
                                                                      : run_single_market(cfg);
    outcome.history.sort();

    ScenarioResult result;
    result.history = std::move(outcome.history);
    result.summary = summarize(result.history, cfg.scenario);

    emit_metrics_csv(result.history, cfg.out);
    if (outcome.final_global && cfg.checkpoint != "none") {
        const std::string path =
            cfg.checkpoint.empty() ? default_checkpoint_path(cfg.out) : cfg.checkpoint;
        model::save_checkpoint_file(path, outcome.model, *outcome.final_global);
    }
    return result;
}

} // namespace fedvol::scenario
