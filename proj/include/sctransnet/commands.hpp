#ifndef SCTRANSNET_COMMANDS_HPP
#define SCTRANSNET_COMMANDS_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "sctransnet/model.hpp"

namespace scnet {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitCheckpoint = 4;

struct SynthOptions {
    int genes = 200;
    int tfs = 20;
    int cells = 150;
    double edge_prob = 0.05;
    double noise_sd = 0.3;
    std::uint64_t seed = 0;
    bool genes_as_rows = false;  // emit the expression file in BEELINE layout
    std::string out_dir;
};

struct PrepareOptions {
    std::string expression_path;
    std::string network_path;
    std::string orientation = "auto";  // auto | cells_rows | genes_rows
    std::optional<double> density_override;
    double hard_negative_fraction = 1.0;
    std::uint64_t seed = 0;
    std::string out_dir;
};

struct TrainOptions {
    std::string expression_path;
    std::string network_path;
    std::string splits_dir;  // prepare output
    std::string orientation = "auto";
    std::string embedding_csv;  // optional pretrained gene embeddings
    ModelConfig config;
    std::string out_dir;
};

struct EvaluateOptions {
    std::string checkpoint_path;
    std::string expression_path;
    std::string network_path;
    std::string splits_dir;
    std::string orientation = "auto";
    std::string split = "test";
    std::string out_dir;
};

struct AblateOptions {
    TrainOptions base;  // trains full + three ablations with identical seed/splits
};

struct PredictOptions {
    std::string checkpoint_path;
    std::string pairs_path;  // CSV tf,target; empty means --all
    bool all = false;
    std::size_t top_k = 0;  // when > 0, also write a DOT subgraph
    std::string dot_path;
    std::string out_dir;
};

void cmd_synth(const SynthOptions& opt);
void cmd_prepare(const PrepareOptions& opt);
void cmd_train(const TrainOptions& opt);
void cmd_evaluate(const EvaluateOptions& opt);
void cmd_ablate(const AblateOptions& opt);
void cmd_predict(const PredictOptions& opt);

// Shared loading helpers.
Orientation orientation_from(const std::string& name);
Dataset load_dataset(const std::string& expression_path, const std::string& network_path,
                     const std::string& splits_dir, Orientation orientation, int bin_count);

// Maps an escaped exception to the exit-code contract and prints the message.
int run_guarded(const std::function<void()>& body);

}  // namespace scnet

#endif
