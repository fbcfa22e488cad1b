#include <CLI11.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "sctransnet/commands.hpp"

namespace {

void add_model_flags(CLI::App* cmd, scnet::ModelConfig& cfg, std::string& mode,
                     std::string& widths) {
    cmd->add_option("--embed-dim", cfg.encoder.embed_dim, "Encoder embedding width");
    cmd->add_option("--encoder-layers", cfg.encoder.layers, "Transformer blocks");
    cmd->add_option("--heads", cfg.encoder.heads, "Attention heads");
    cmd->add_option("--ff-dim", cfg.encoder.ff_dim, "Feedforward width");
    cmd->add_option("--attention", mode, "Attention mode: exact or performer")
        ->check(CLI::IsMember({"exact", "performer"}));
    cmd->add_option("--performer-features", cfg.encoder.performer_features,
                    "Random features per head (performer mode)");
    cmd->add_option("--bins", cfg.encoder.bin_count, "Expression bins (bin 0 = zero counts)");
    cmd->add_flag("--raw-normalization", cfg.encoder.raw_normalization,
                  "Use the raw D^{-1}(QK^T)V normalization instead of softmax");
    cmd->add_option("--gat-widths", widths, "GAT layer widths, e.g. 256,128");
    cmd->add_option("--gat-type-dim", cfg.gat.type_dim, "Node-type embedding width");
    cmd->add_option("--gat-rel-dim", cfg.gat.rel_dim, "Relation embedding width");
    cmd->add_option("--gat-key-dim", cfg.gat.key_dim, "Attention key width");
    cmd->add_option("--iterations", cfg.train.iterations, "Training iterations (full-batch)");
    cmd->add_option("--lr", cfg.train.learning_rate, "Learning rate");
    cmd->add_option("--head-hidden", cfg.train.head_hidden, "Scoring channel hidden width");
    cmd->add_option("--head-out", cfg.train.head_out, "Scoring channel output width");
    cmd->add_flag("--mlp-combiner", cfg.train.mlp_combiner,
                  "Score pairs with an MLP instead of a dot product");
    cmd->add_flag("--no-gnn", cfg.train.ablation.no_gnn, "Ablation: zero the GAT block");
    cmd->add_flag("--no-encoder", cfg.train.ablation.no_encoder,
                  "Ablation: zero the encoder block");
    cmd->add_flag("--mean-pooling", cfg.train.ablation.mean_pooling,
                  "Ablation: average pooling instead of attentive pooling");
}

void parse_widths(const std::string& widths, scnet::GatConfig& gat) {
    if (widths.empty()) return;
    gat.widths.clear();
    std::string tok;
    for (char c : widths + ",") {
        if (c == ',') {
            if (!tok.empty()) gat.widths.push_back(std::stoi(tok));
            tok.clear();
        } else {
            tok += c;
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scTransNet: supervised GRN inference with a transformer encoder,"
                 " attentive pooling, and a graph attention network"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value config file; command-line flags win");

    // synth
    scnet::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-GRN dataset");
    synth_cmd->add_option("--genes", synth.genes, "Total genes");
    synth_cmd->add_option("--tfs", synth.tfs, "Transcription factors (first genes)");
    synth_cmd->add_option("--cells", synth.cells, "Cells");
    synth_cmd->add_option("--edge-prob", synth.edge_prob, "TF->target edge probability");
    synth_cmd->add_option("--noise-sd", synth.noise_sd, "Additive noise std dev");
    synth_cmd->add_option("--seed", synth.seed, "Random seed")->required();
    synth_cmd->add_flag("--genes-as-rows", synth.genes_as_rows,
                        "Write the expression file with genes as rows (BEELINE layout)");
    synth_cmd->add_option("--out", synth.out_dir, "Output directory")->required();

    // prepare
    scnet::PrepareOptions prep;
    double density_override = -1.0;
    auto* prep_cmd = app.add_subcommand("prepare", "Build leakage-free labeled splits");
    prep_cmd->add_option("--expression", prep.expression_path, "Expression CSV")->required();
    prep_cmd->add_option("--network", prep.network_path, "Prior network CSV")->required();
    prep_cmd->add_option("--orientation", prep.orientation,
                         "Expression orientation: auto, cells_rows, genes_rows");
    prep_cmd->add_option("--density", density_override,
                         "Override the measured network density for the sampling ratio");
    prep_cmd->add_option("--hard-negative-fraction", prep.hard_negative_fraction,
                         "Fraction of training negatives sharing a TF with a positive");
    prep_cmd->add_option("--seed", prep.seed, "Random seed")->required();
    prep_cmd->add_option("--out", prep.out_dir, "Output directory")->required();

    // train
    scnet::TrainOptions tr;
    std::string tr_mode = "exact", tr_widths;
    auto* train_cmd = app.add_subcommand("train", "Train the joint model");
    train_cmd->add_option("--expression", tr.expression_path, "Expression CSV")->required();
    train_cmd->add_option("--network", tr.network_path, "Prior network CSV")->required();
    train_cmd->add_option("--splits", tr.splits_dir, "Directory produced by prepare")
        ->required();
    train_cmd->add_option("--orientation", tr.orientation, "Expression orientation");
    train_cmd->add_option("--gene-embeddings", tr.embedding_csv,
                          "Optional pretrained gene embedding CSV (symbol,v1,...)");
    train_cmd->add_option("--seed", tr.config.train.seed, "Random seed")->required();
    train_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
    add_model_flags(train_cmd, tr.config, tr_mode, tr_widths);

    // evaluate
    scnet::EvaluateOptions ev;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a held-out split");
    eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "Trained checkpoint")->required();
    eval_cmd->add_option("--expression", ev.expression_path, "Expression CSV")->required();
    eval_cmd->add_option("--network", ev.network_path, "Prior network CSV")->required();
    eval_cmd->add_option("--splits", ev.splits_dir, "Directory produced by prepare")
        ->required();
    eval_cmd->add_option("--orientation", ev.orientation, "Expression orientation");
    eval_cmd->add_option("--split", ev.split, "train, validation, or test")
        ->check(CLI::IsMember({"train", "validation", "test"}));
    eval_cmd->add_option("--out", ev.out_dir, "Output directory")->required();

    // ablate
    scnet::AblateOptions ab;
    std::string ab_mode = "exact", ab_widths;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "Train full + no_gnn + no_encoder + mean_pooling");
    ablate_cmd->add_option("--expression", ab.base.expression_path, "Expression CSV")
        ->required();
    ablate_cmd->add_option("--network", ab.base.network_path, "Prior network CSV")->required();
    ablate_cmd->add_option("--splits", ab.base.splits_dir, "Directory produced by prepare")
        ->required();
    ablate_cmd->add_option("--orientation", ab.base.orientation, "Expression orientation");
    ablate_cmd->add_option("--seed", ab.base.config.train.seed, "Random seed")->required();
    ablate_cmd->add_option("--out", ab.base.out_dir, "Output directory")->required();
    add_model_flags(ablate_cmd, ab.base.config, ab_mode, ab_widths);

    // predict
    scnet::PredictOptions pr;
    auto* pred_cmd = app.add_subcommand("predict", "Score pairs with a trained checkpoint");
    pred_cmd->add_option("--checkpoint", pr.checkpoint_path, "Trained checkpoint")->required();
    pred_cmd->add_option("--pairs", pr.pairs_path, "CSV of tf,target pairs to score");
    pred_cmd->add_flag("--all", pr.all, "Score and rank every TF->gene pair");
    pred_cmd->add_option("--top-k", pr.top_k, "Also export the top-k subnetwork as DOT");
    pred_cmd->add_option("--dot", pr.dot_path, "DOT output path (default <out>/top_edges.dot)");
    pred_cmd->add_option("--out", pr.out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return scnet::kExitInput;
    }

    return scnet::run_guarded([&] {
        if (synth_cmd->parsed()) {
            scnet::cmd_synth(synth);
        } else if (prep_cmd->parsed()) {
            if (density_override > 0.0) prep.density_override = density_override;
            scnet::cmd_prepare(prep);
        } else if (train_cmd->parsed()) {
            tr.config.encoder.mode = scnet::attention_mode_from(tr_mode);
            parse_widths(tr_widths, tr.config.gat);
            scnet::cmd_train(tr);
        } else if (eval_cmd->parsed()) {
            scnet::cmd_evaluate(ev);
        } else if (ablate_cmd->parsed()) {
            ab.base.config.encoder.mode = scnet::attention_mode_from(ab_mode);
            parse_widths(ab_widths, ab.base.config.gat);
            scnet::cmd_ablate(ab);
        } else if (pred_cmd->parsed()) {
            if (!pr.all && pr.pairs_path.empty())
                throw scnet::InputError("predict: pass --pairs FILE or --all");
            scnet::cmd_predict(pr);
        }
    });
}
