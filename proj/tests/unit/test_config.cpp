#include <cstdlib>

#include "doctest.h"
#include "nmt/config.hpp"
#include "toy.hpp"

using namespace nmt;

namespace {

const std::filesystem::path kReference = std::filesystem::path(NMT_TEST_DATA_DIR) / "reference.conf";

const char* kMinimal = "[training]\nmodel_type: attention\n[model]\nrnn_dim: 8\nembedding_dim: 6\n";

}  // namespace

TEST_CASE("reference configuration parses with its documented values") {
    const ExperimentConfig c = parse_config(kReference);
    CHECK(c.model_type == "attention");
    CHECK(c.patience == 20);
    CHECK(c.valid_freq == 1000);
    CHECK(c.valid_metric == "meteor");
    CHECK(c.valid_start == 2);
    CHECK(c.valid_beam == 3);
    CHECK(c.valid_njobs == 16);
    CHECK(c.valid_save_hyp);
    CHECK(c.decay_c == 1e-5);
    CHECK(c.clip_c == 5.0);
    CHECK(c.seed == 1235);
    CHECK(c.save_best_n == 2);
    CHECK(c.device_id == "auto");
    CHECK(c.snapshot_freq == 10000);
    CHECK(c.max_epochs == 100);
    CHECK(c.tied_emb == "2way");
    CHECK(c.layer_norm);
    CHECK(c.shuffle_mode == "trglen");
    CHECK(c.filter == "bpe");
    CHECK(c.n_words_src == 0);
    CHECK(c.save_path == "~/models");
    CHECK(c.rnn_dim == 100);
    CHECK(c.embedding_dim == 100);
    CHECK(c.batch_size == 32);
    CHECK(c.optimizer == "adam");
    CHECK(c.effective_lrate() == 0.0004);
    CHECK(c.emb_dropout == 0.2);
    CHECK(c.ctx_dropout == 0.4);
    CHECK(c.out_dropout == 0.4);
    CHECK(c.dict_src == "~/data/train.norm.max50.tok.lc.bpe.en.pkl");
    CHECK(c.valid_trg_orig == "~/data/val.norm.tok.lc.de");
    CHECK(c.warnings.empty());
    CHECK(c.model_options().tied_emb == TiedEmb::two_way);

    // METEOR is a known value but cannot be computed here.
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("unsupported in this artifact"), ConfigError);
    CHECK_NOTHROW(parse_config(kReference, {"valid_metric:bleu"}).validate());
}

TEST_CASE("overrides") {
    const ExperimentConfig c = parse_config(kReference, {"rnn_dim:500", "embedding_dim: 300", "lrate:0.001"});
    CHECK(c.rnn_dim == 500);
    CHECK(c.embedding_dim == 300);
    CHECK(c.effective_lrate() == 0.001);
    CHECK_THROWS_AS(parse_config(kReference, {"no_such_key:1"}), ConfigError);
    CHECK_THROWS_AS(parse_config(kReference, {"rnn_dim"}), ConfigError);
    CHECK_THROWS_AS(parse_config(kReference, {"rnn_dim:abc"}), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(kReference, {"model_type:my_amazing_nmt"}), doctest::Contains("my_amazing_nmt"),
                         ConfigError);
}

TEST_CASE("parse errors name the key and line") {
    CHECK_THROWS_WITH_AS(parse_config_text("[training]\nmodel_type: attention\nbogus: 1\n[model]\n", {}, "x.conf"),
                         doctest::Contains("x.conf:3"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[training]\nmodel_type: attention\nbogus: 1\n[model]\n"),
                         doctest::Contains("bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[training]\nrnn_dim: 4\n[model]\n"), doctest::Contains("rnn_dim"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[training]\npatience: many\n[model]\n"), doctest::Contains(":2"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[model]\nrnn_dim: 4\n"), doctest::Contains("training"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[training]\n[model]\n[extra]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[training]\nseed: 1\nseed: 2\n[model]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[training]\nlayer_norm: maybe\n[model]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[training]\nvalid_metric: rouge\n[model]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config(std::filesystem::path(NMT_TEST_DATA_DIR) / "missing.conf"), ConfigError);
}

TEST_CASE("booleans, comments and cross-field checks") {
    const ExperimentConfig c =
        parse_config_text("[training]\n# comment\nvalid_save_hyp: False  # trailing\n[model]\nlayer_norm: True\n");
    CHECK_FALSE(c.valid_save_hyp);
    CHECK(c.layer_norm);

    const ExperimentConfig gpu = parse_config_text(kMinimal, {"device_id:gpu5"});
    REQUIRE(gpu.warnings.size() == 1);
    CHECK(gpu.warnings[0].find("CPU-only") != std::string::npos);

    CHECK_THROWS_AS(parse_config_text(kMinimal, {"tied_emb:3way", "src:a", "trg:b"}).validate(), ConfigError);
    CHECK_NOTHROW(parse_config_text(kMinimal, {"tied_emb:3way", "src:a", "trg:a"}).validate());
    CHECK_THROWS_AS(parse_config_text(kMinimal, {"grad_noise_eta:0.01", "optimizer:sgd"}).validate(), ConfigError);
    CHECK_NOTHROW(parse_config_text(kMinimal, {"grad_noise_eta:0.01"}).validate());
}

TEST_CASE("map and ini roundtrips") {
    const ExperimentConfig c = parse_config(kReference, {"valid_metric:bleu"});
    const ExperimentConfig m = ExperimentConfig::from_map(c.to_map());
    CHECK(m.to_ini() == c.to_ini());
    const ExperimentConfig i = parse_config_text(c.to_ini());
    CHECK(i.to_map() == c.to_map());
    CHECK(config_hash(i) == config_hash(c));
}

TEST_CASE("checkpoint names") {
    const ExperimentConfig c = parse_config(kReference);
    const std::string name = checkpoint_name(c);
    CHECK(name.rfind("attention-e100-r100-adam_0.0004-", 0) == 0);
    CHECK(name.size() == std::string("attention-e100-r100-adam_0.0004-").size() + 8);

    const std::string other = checkpoint_name(parse_config(kReference, {"seed:7"}));
    CHECK(other != name);
    CHECK(other.substr(0, other.size() - 8) == name.substr(0, name.size() - 8));
    CHECK(checkpoint_name(parse_config(kReference)) == name);

    const std::string odd = checkpoint_name(parse_config_text(kMinimal, {"optimizer:sgd", "lrate:1e-3"}));
    for (char ch : odd) {
        CHECK(ch != ' ');
        CHECK(ch != '/');
        CHECK(ch != '\\');
    }
}

TEST_CASE("optimizer defaults and home expansion") {
    const ExperimentConfig sgd = parse_config_text(kMinimal, {"optimizer:sgd"});
    CHECK(sgd.effective_lrate() == default_lrate(OptimizerKind::sgd));
    const char* old = std::getenv("HOME");
    const std::string saved = old ? old : "";
    ::setenv("HOME", "/home/tester", 1);
    CHECK(expand_path("~/models") == std::filesystem::path("/home/tester/models"));
    CHECK(expand_path("rel/x") == std::filesystem::path("rel/x"));
    if (old) ::setenv("HOME", saved.c_str(), 1);
    else ::unsetenv("HOME");
}
