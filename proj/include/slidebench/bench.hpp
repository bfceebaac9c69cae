#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slidebench/checkpoint.hpp"
#include "slidebench/dataset_store.hpp"
#include "slidebench/error.hpp"
#include "slidebench/mil_core.hpp"

namespace slidebench {

// ---------------------------------------------------------------------------
// Patient-wise splits

struct SplitRatios {
    double train = 7.0;
    double val = 1.0;
    double test = 2.0;
};

struct SplitOptions {
    SplitRatios ratios;
    std::uint64_t seed = 0;
    std::optional<std::string> stratify_column;  ///< off by default
};

struct SplitAssignment {
    SplitMap by_slide;
    std::map<std::string, Subset> by_patient;
    std::uint64_t seed = 0;
    SplitRatios ratios;
};

/// Patient counts per subset: largest-remainder apportionment of P by the
/// ratios, then val and test are raised to at least one patient each (taken
/// from train). Requires P >= 3.
std::array<std::size_t, 3> split_counts(std::size_t patients, const SplitRatios& ratios);

/// Sorts patient ids, shuffles them with CounterRng(seed), and deals them out
/// train / val / test by `split_counts`. Every slide follows its patient.
SplitAssignment make_splits(const LabelTable& labels, const SplitOptions& options = {});

// ---------------------------------------------------------------------------
// Training

struct Sample {
    std::string slide_id;
    std::shared_ptr<const FeatureBag> bag;
    std::vector<std::optional<LabelValue>> targets;  ///< one per task
};

struct TrainConfig {
    ModelKind kind = ModelKind::ABMIL;
    int hidden = 128;
    int max_epochs = 200;
    int patience = 20;
    AdamConfig adam;
    std::uint64_t seed = 0;
    bool log_timestamps = true;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_metric;  ///< mean selection score over tasks
    std::string timestamp;
};

struct TrainResult {
    Checkpoint checkpoint;  ///< best-validation parameters
    std::vector<EpochLog> log;
    int best_epoch = 0;
};

/// Single-bag Adam updates in a seeded per-epoch order. Multi-task loss is the
/// sum over tasks with a label; regression targets are standardized with
/// train statistics. Selection keeps the first epoch with the best mean val
/// score (accuracy fraction or correlation); stops after `patience` epochs
/// without improvement.
TrainResult train_bags(const std::vector<TaskConfig>& tasks, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainConfig& config, const std::string& embedder_id);

std::string epoch_log_jsonl(const std::vector<EpochLog>& log);

/// Dataset-backed samples for `subset` (every slide with a split, a label for
/// at least one task, and a feature file).
std::vector<Sample> load_samples(const Dataset& ds, const std::vector<TaskConfig>& tasks, Subset subset);

/// Loads train/val from the dataset, trains, and writes `checkpoint.bin`,
/// `train_log.jsonl` under `out_dir`.
TrainResult train_model(const Dataset& ds, const std::vector<std::string>& task_names, const TrainConfig& config,
                        const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Metrics and reports

/// Head outputs with regression predictions mapped back to label units.
std::vector<std::vector<float>> predict(const Checkpoint& ckpt, const FeatureBag& bag);

/// argmax with ties to the lowest index.
int argmax(std::span<const float> values);

/// 100 * correct / n.
double accuracy_percent(std::span<const int> predicted, std::span<const int> truth);

/// Pearson r; nullopt when either input has zero variance (or n < 2).
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// Spearman rho (Pearson on average ranks).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

enum class CorrelationKind { Pearson, Spearman };

struct MetricEntry {
    std::string task;
    std::string metric;  ///< "accuracy", "pearson" or "spearman"
    std::optional<double> value;
    std::optional<ErrorCode> error;  ///< ZeroVariance / NoLabeledSlides
    std::size_t n = 0;
};

struct MetricsReport {
    std::string model;
    std::uint64_t seed = 0;
    std::vector<MetricEntry> entries;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

MetricsReport evaluate_samples(const Checkpoint& ckpt, std::span<const Sample> samples,
                               CorrelationKind correlation = CorrelationKind::Pearson);

MetricsReport evaluate(const Dataset& ds, const Checkpoint& ckpt, Subset subset,
                       CorrelationKind correlation = CorrelationKind::Pearson);

struct BenchTables {
    std::string markdown;
    std::string csv;
};

/// Task x model grid. Accuracy to two decimals, correlation to three; the
/// best displayed value in each row is bolded (all of them on ties).
/// `models` / `tasks` fix the column / row order; empty means order of
/// first appearance.
BenchTables report(std::span<const MetricsReport> metrics, std::vector<std::string> models = {},
                   std::vector<std::string> tasks = {});

}  // namespace slidebench
