#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nmt/checkpoint.hpp"
#include "nmt/config.hpp"
#include "nmt/metrics.hpp"

namespace nmt {

// Early-stopping bookkeeping. The streak counts consecutive validations without a strict
// improvement over the best value seen so far.
struct TrainerState {
    std::string run_name;
    std::uint64_t updates = 0;
    std::size_t epoch = 1;
    std::size_t validations = 0;
    std::vector<MetricValue> history;
    std::int64_t bad_streak = 0;
    std::optional<MetricValue> best;
    std::vector<std::string> best_checkpoints;  // oldest first, at most save_best_n

    // Appends v to the history. Returns true on strict improvement (the streak resets),
    // otherwise the streak grows by one.
    bool record(const MetricValue& v);
    // patience 0 disables early stopping.
    bool patience_exhausted(std::int64_t patience) const { return patience > 0 && bad_streak >= patience; }

    std::string to_json() const;
    static TrainerState from_json(const std::string& text);
};

// Training and validation data, already numericalized.
struct TrainingData {
    Vocabulary src_vocab;
    Vocabulary trg_vocab;
    ParallelCorpus train;
    ParallelCorpus valid;                     // used for perplexity
    std::vector<std::vector<int>> valid_src;  // beam-search inputs (ending in <eos>)
    std::vector<std::string> valid_refs;      // post-processed references
};

// Reads vocabularies (or builds them from the training data when no dictionary is
// configured) and the train/valid corpora named in the config.
TrainingData load_training_data(const ExperimentConfig& config);

enum class StopReason { max_epochs, max_updates, patience, target };
std::string to_string(StopReason r);

struct TrainingReport {
    std::string run_name;
    std::uint64_t updates = 0;
    std::size_t epochs_completed = 0;
    StopReason reason = StopReason::max_epochs;
    std::optional<MetricValue> best;
    std::string best_checkpoint;
    std::vector<double> losses;  // per update
    std::vector<MetricValue> validations;
};

struct TrainingHooks {
    // Replaces the built-in validation (beam search or perplexity). Receives the 1-based
    // validation index.
    std::function<MetricValue(const Model&, std::size_t)> validator;
    std::ostream* log = nullptr;
    std::optional<std::filesystem::path> resume_from;
    // Write a snapshot when the run ends, whatever the reason.
    bool final_snapshot = false;
    ArrayDtype checkpoint_dtype = ArrayDtype::f64;
    // Ends training as soon as a validation value satisfies it.
    std::function<bool(const MetricValue&)> target;
    // Receives the model after every update (tests).
    std::function<void(const Model&, std::uint64_t)> on_update;
};

TrainingReport run_training(const ExperimentConfig& config, const TrainingData& data, const TrainingHooks& hooks = {});
TrainingReport run_training(const ExperimentConfig& config, const TrainingHooks& hooks = {});

// Built-in validation metrics. Neither touches the model's parameters.
MetricValue validate_perplexity(const Model& model, const ParallelCorpus& valid, std::size_t batch_size);
MetricValue validate_bleu(const Model& model, const TrainingData& data, const ExperimentConfig& config,
                          std::vector<std::string>* hypotheses = nullptr);

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const std::string& run_name, std::size_t k);
std::filesystem::path snapshot_path(const ExperimentConfig& config, const std::string& run_name);

}  // namespace nmt
