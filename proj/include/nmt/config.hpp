#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nmt/model.hpp"
#include "nmt/optim.hpp"

namespace nmt {

// Typed mirror of the experiment file. Section and key names follow the reference
// configuration format ([training], [model], [model.dicts], [model.data]).
struct ExperimentConfig {
    // [training]
    std::string model_type = "attention";
    std::int64_t patience = 10;
    std::int64_t valid_freq = 0;  // 0: validate at the end of every epoch
    std::string valid_metric = "bleu";
    std::int64_t valid_start = 1;  // first epoch (inclusive) allowed to validate
    std::int64_t valid_beam = 12;
    std::int64_t valid_njobs = 1;
    bool valid_save_hyp = false;
    double decay_c = 0.0;
    double clip_c = 5.0;
    std::uint64_t seed = 1234;
    std::int64_t save_best_n = 4;
    std::string device_id = "auto";
    std::int64_t snapshot_freq = 0;
    std::int64_t max_epochs = 100;
    std::int64_t max_updates = 0;  // 0: unlimited
    std::int64_t disp_freq = 10;
    double grad_noise_eta = 0.0;
    double grad_noise_gamma = 0.55;

    // [model]
    std::string tied_emb = "False";
    bool layer_norm = false;
    std::string shuffle_mode = "simple";
    std::string filter = "";
    std::int64_t n_words_src = 0;
    std::int64_t n_words_trg = 0;
    std::string save_path = ".";
    std::int64_t rnn_dim = 100;
    std::int64_t embedding_dim = 100;
    std::string weight_init = "xavier";
    std::string recurrent_init = "orthogonal";  // not in the reference file; dl4mt default
    std::int64_t batch_size = 32;
    std::string optimizer = "adam";
    std::optional<double> lrate;  // optimizer default when unset
    double emb_dropout = 0.0;
    double ctx_dropout = 0.0;
    double out_dropout = 0.0;
    std::int64_t n_enc_layers = 0;
    std::string init_cgru = "mean_ctx";
    std::int64_t max_seq_len = 100;  // training pairs longer than this are skipped; 0: no limit
    std::string pretrained = "";

    // [model.dicts]
    std::string dict_src;
    std::string dict_trg;

    // [model.data]
    std::string train_src;
    std::string train_trg;
    std::string valid_src;
    std::string valid_trg;
    std::string valid_trg_orig;

    // Non-fatal notes produced while parsing (e.g. GPU selection ignored).
    std::vector<std::string> warnings;

    double effective_lrate() const;
    ModelOptions model_options() const;
    OptimizerOptions optimizer_options() const;

    // Section -> key -> canonical value text. Used for hashing and for embedding the
    // configuration in checkpoints.
    std::map<std::string, std::map<std::string, std::string>> to_map() const;
    static ExperimentConfig from_map(const std::map<std::string, std::map<std::string, std::string>>& m);
    std::string to_ini() const;

    // Run-time checks that go beyond parsing (metric support, dimension consistency...).
    void validate() const;
};

// Parses "key: value" lines grouped under [section] headers; '#' starts a comment.
// Overrides are "key:value" strings applied afterwards, matched by key name.
ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {},
                                   const std::string& source_name = "<config>");
ExperimentConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Leading "~/" is replaced by $HOME.
std::filesystem::path expand_path(const std::string& p);

// <model_type>-e<emb>-r<rnn>-<optimizer>_<lrate>-<8 hex digits of the config hash>
std::string checkpoint_name(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace nmt
