#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedvol/dates.hpp"
#include "fedvol/federation.hpp"
#include "fedvol/synthetic.hpp"

namespace fedvol::scenario {

enum class ScenarioKind { Iid, Quarters, Hetero, Dp, Transfer, Centralized, Local };

const char* to_string(ScenarioKind kind);

/// One data source: either a seeded synthetic series (`ID:synth:<days>`) or a
/// CSV file (`ID:csv:<path>`).
struct MarketSpec {
    enum class Kind { Synth, Csv };
    std::string id;
    Kind kind = Kind::Synth;
    int days = 0;     // synth only
    std::string path; // csv only
};

struct ScenarioConfig {
    ScenarioKind scenario = ScenarioKind::Iid;
    std::vector<MarketSpec> markets;
    std::optional<MarketSpec> target; // transfer only

    int clients = 3;
    int rounds = 50;
    int local_epochs = 1;
    int batch_size = 32;
    int hidden_dim = 32;
    double learning_rate = 1e-3;
    double clamp_eps = 1e-7;
    std::uint64_t seed = 42;

    std::string out = "metrics.csv";
    std::string checkpoint; // empty = derive from `out`; "none" disables

    data::GarchParams garch;
    double synth_seasonal_amp = 0.0;
    Date synth_start{2015, 1, 2};

    double dp_clip = 1.0; // "inf" accepted in config files
    double dp_sigma = 1.0;
    std::optional<std::uint64_t> dp_seed;

    double transfer_fraction = 0.1;
    int transfer_epochs = 30;

    int horizon = 5;
    int smooth_window = 5;
    int vol_window = 5;
    double train_fraction = 0.8;
    bool standardize = true;
    bool features_cumulative = false;
    bool adam_reset_per_round = false;

    void validate() const;
};

/// Parses the flat `key = value` config format (`#` starts a comment). Unknown
/// or duplicate keys, missing required keys, and type mismatches raise
/// ConfigError naming the key and line. Key reference lives in the README.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig parse_config_file(const std::string& path);

/// Replaces cfg.seed with FEDVOL_SEED when that variable is set. Returns true
/// if an override happened; a malformed value raises ConfigError.
bool apply_env_seed_override(ScenarioConfig& cfg);

/// Labeled, unstandardized train/test split for one market, plus the labeling
/// threshold.
struct MarketDataset {
    std::string market_id;
    data::SampleSet train;
    data::SampleSet test;
    double threshold = 0.0;
};

/// Runs the full pipeline (load/generate, features, split, label) for a spec.
MarketDataset build_market_dataset(const ScenarioConfig& cfg, const MarketSpec& spec);

struct SummaryRow {
    std::string label;  // display name, e.g. "Federated (FedAvg)"
    std::string scheme; // record tag the row was computed from
    int best_round = 0; // round with the lowest training BCE
    double bce = 0.0;   // test BCE at the best round
    double accuracy = 0.0;
};

struct ScenarioResult {
    federation::RoundHistory history;
    std::vector<SummaryRow> summary;
};

/// Executes the scenario's scheme set on identical splits, writes the metrics
/// CSV (and the final global checkpoint where one exists), and returns the
/// merged history with the per-scheme best-round summary.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

/// Writes `round,scheme,client,bce,accuracy` rows sorted by (round, scheme,
/// client), floats with 6 decimals. Byte-stable for identical histories.
void emit_metrics_csv(const federation::RoundHistory& history, const std::string& path);
void write_metrics_csv(const federation::RoundHistory& history, std::ostream& out);

void print_summary(std::ostream& out, const ScenarioConfig& cfg,
                   const std::vector<SummaryRow>& rows);

/// Best-round summaries for the scheme set of `kind`; exposed for tests.
std::vector<SummaryRow> summarize(const federation::RoundHistory& history, ScenarioKind kind);

} // namespace fedvol::scenario
