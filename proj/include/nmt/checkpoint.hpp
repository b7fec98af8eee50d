#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nmt/config.hpp"
#include "nmt/model.hpp"

namespace nmt {

// On-disk element type of the raw arrays. f64 is lossless for this toolkit's double
// parameters; f32 halves the file size at the cost of bit-exact reloads.
enum class ArrayDtype { f64, f32 };
ArrayDtype parse_dtype(const std::string& name);
std::string to_string(ArrayDtype d);

struct NamedArray {
    std::string name;
    Tensor value;
    ParamKind kind = ParamKind::weight;
};

// Everything beyond parameters that a resumed run needs.
struct SnapshotState {
    std::uint64_t optimizer_steps = 0;
    std::map<std::string, Tensor> optimizer_slots;
    std::string trainer_state;  // JSON text owned by the trainer
    std::size_t iterator_epoch = 1;
    std::size_t iterator_position = 0;
    std::uint64_t dropout_rng_counter = 0;
    std::uint64_t noise_rng_counter = 0;
};

struct Checkpoint {
    ExperimentConfig config;
    ModelOptions model_options;
    Vocabulary src_vocab;
    Vocabulary trg_vocab;
    std::vector<NamedArray> arrays;
    std::optional<SnapshotState> snapshot;
};

// Layout: 8-byte magic "NMTKIT01", uint64 LE header length, JSON header, then the arrays
// back to back in little-endian order at the offsets listed in the header manifest.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const ExperimentConfig& config,
                     const SnapshotState* snapshot = nullptr, ArrayDtype dtype = ArrayDtype::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Builds the model described by the checkpoint and copies its parameters in. A name or
// shape mismatch raises DataError listing the missing and extra parameters.
std::unique_ptr<Model> instantiate(const Checkpoint& ckpt);
std::unique_ptr<Model> load_model(const std::filesystem::path& path);
void assign_parameters(Model& model, const std::vector<NamedArray>& arrays);

// Bare named-array archive (same container, no config or vocabularies).
void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays,
                 ArrayDtype dtype = ArrayDtype::f64);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

// Arrays whose name matches any glob pattern, either in full or as a trailing
// dot-separated suffix ("E_trg" matches "emb.E_trg"). No match raises DataError.
std::vector<NamedArray> select_arrays(const std::vector<NamedArray>& arrays, const std::vector<std::string>& patterns);
void extract_weights(const std::filesystem::path& checkpoint, const std::vector<std::string>& patterns,
                     const std::filesystem::path& out, ArrayDtype dtype = ArrayDtype::f64);

// Copies pre-trained arrays into a fresh model. Every array must name an existing
// parameter of identical shape. Returns the number of parameters replaced.
std::size_t load_pretrained(Model& model, const std::vector<NamedArray>& arrays);

}  // namespace nmt
