#include "sctransnet/commands.hpp"

#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sctransnet/csv.hpp"

namespace scnet {

namespace {

namespace fs = std::filesystem;

std::string meta_comment(std::uint64_t seed, const std::string& hash) {
    return "seed=" + std::to_string(seed) + " config_hash=" + hash;
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const char* what) {
    if (!file_exists(path))
        throw InputError(std::string(what) + " not found: " + path);
}

// Flat key=value snapshot of a command's resolved settings; its hash is the
// run's config hash.
struct RunSnapshot {
    std::map<std::string, std::string> kv;

    void put(const std::string& k, const std::string& v) { kv[k] = v; }
    void put(const std::string& k, std::uint64_t v) { kv[k] = std::to_string(v); }
    void put(const std::string& k, int v) { kv[k] = std::to_string(v); }
    void put(const std::string& k, double v) { kv[k] = format_double(v); }

    std::string text() const {
        std::string out;
        for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
        return out;
    }
    std::string hash() const { return to_hex(fnv1a64(text())); }
};

void write_run_config(const std::string& out_dir, const RunSnapshot& snap) {
    write_text_file(join(out_dir, "config.txt"),
                    "# config_hash=" + snap.hash() + "\n" + snap.text());
}

}  // namespace

Orientation orientation_from(const std::string& name) {
    if (name == "auto") return Orientation::auto_detect;
    if (name == "cells_rows") return Orientation::cells_rows;
    if (name == "genes_rows") return Orientation::genes_rows;
    throw InputError("unknown orientation: " + name +
                     " (expected auto, cells_rows, or genes_rows)");
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

// ---- synth ----

void cmd_synth(const SynthOptions& opt) {
    ensure_directory(opt.out_dir);
    SynthDataset d = synth_generate(opt.genes, opt.tfs, opt.cells, opt.edge_prob, opt.noise_sd,
                                    opt.seed);

    RunSnapshot snap;
    snap.put("command", std::string("synth"));
    snap.put("synth.genes", opt.genes);
    snap.put("synth.tfs", opt.tfs);
    snap.put("synth.cells", opt.cells);
    snap.put("synth.edge_prob", opt.edge_prob);
    snap.put("synth.noise_sd", opt.noise_sd);
    snap.put("seed", opt.seed);
    const std::string meta = meta_comment(opt.seed, snap.hash());

    write_text_file(join(opt.out_dir, "expression.csv"),
                    expression_to_csv(d.expression, opt.genes_as_rows, meta));
    write_text_file(join(opt.out_dir, "network.csv"),
                    network_to_csv(d.network, d.expression.vocab, meta));
    write_run_config(opt.out_dir, snap);

    nlohmann::json summary;
    summary["genes"] = opt.genes;
    summary["tfs"] = opt.tfs;
    summary["cells"] = opt.cells;
    summary["planted_edges"] = d.network.edges.size();
    summary["seed"] = opt.seed;
    summary["config_hash"] = snap.hash();
    write_text_file(join(opt.out_dir, "summary.json"), summary.dump(2) + "\n");
}

// ---- prepare ----

void cmd_prepare(const PrepareOptions& opt) {
    require_file(opt.expression_path, "expression file");
    require_file(opt.network_path, "network file");
    ensure_directory(opt.out_dir);

    ExpressionMatrix x = load_expression(opt.expression_path, orientation_from(opt.orientation));
    PriorNetwork net = load_network(opt.network_path, x.vocab);

    SamplingPlan plan;
    plan.network_density =
        opt.density_override ? *opt.density_override : network_density(net, x.vocab);
    plan.hard_negative_fraction = opt.hard_negative_fraction;
    LabeledSplits splits = make_splits(net, x.vocab, plan, opt.seed);

    RunSnapshot snap;
    snap.put("command", std::string("prepare"));
    snap.put("sampling.density", plan.network_density);
    snap.put("sampling.hard_negative_fraction", plan.hard_negative_fraction);
    snap.put("seed", opt.seed);
    const std::string meta = meta_comment(opt.seed, snap.hash());

    write_text_file(join(opt.out_dir, "train_pairs.csv"),
                    splits_to_csv(splits, SplitKind::train, x.vocab, meta));
    write_text_file(join(opt.out_dir, "validation_pairs.csv"),
                    splits_to_csv(splits, SplitKind::validation, x.vocab, meta));
    write_text_file(join(opt.out_dir, "test_pairs.csv"),
                    splits_to_csv(splits, SplitKind::test, x.vocab, meta));
    write_run_config(opt.out_dir, snap);

    auto count = [](const std::vector<LabeledPair>& v, int label) {
        std::size_t n = 0;
        for (const auto& p : v) n += p.label == label ? 1 : 0;
        return n;
    };
    nlohmann::json summary;
    summary["genes"] = x.vocab.size();
    summary["tfs"] = x.vocab.tf_count();
    summary["cells"] = x.n_cells();
    summary["edges"] = net.edges.size();
    summary["dropped_unknown"] = net.dropped_unknown;
    summary["density"] = plan.network_density;
    summary["target_ratio"] = plan.target_ratio();
    summary["train"] = {{"positives", count(splits.train, 1)},
                        {"negatives", count(splits.train, 0)},
                        {"achieved_ratio", splits.ratio_train}};
    summary["validation"] = {{"positives", count(splits.validation, 1)},
                             {"negatives", count(splits.validation, 0)},
                             {"achieved_ratio", splits.ratio_validation}};
    summary["test"] = {{"positives", count(splits.test, 1)},
                       {"negatives", count(splits.test, 0)},
                       {"achieved_ratio", splits.ratio_test}};
    summary["seed"] = opt.seed;
    summary["config_hash"] = snap.hash();
    write_text_file(join(opt.out_dir, "summary.json"), summary.dump(2) + "\n");
}

// ---- shared loading ----

Dataset load_dataset(const std::string& expression_path, const std::string& network_path,
                     const std::string& splits_dir, Orientation orientation, int bin_count) {
    require_file(expression_path, "expression file");
    require_file(network_path, "network file");
    ExpressionMatrix x = load_expression(expression_path, orientation);
    PriorNetwork net = load_network(network_path, x.vocab);

    LabeledSplits splits;
    const std::string train_path = join(splits_dir, "train_pairs.csv");
    require_file(train_path, "prepared splits (train_pairs.csv)");
    splits.train = pairs_from_csv(train_path, x.vocab);
    const std::string val_path = join(splits_dir, "validation_pairs.csv");
    if (file_exists(val_path)) splits.validation = pairs_from_csv(val_path, x.vocab);
    const std::string test_path = join(splits_dir, "test_pairs.csv");
    if (file_exists(test_path)) splits.test = pairs_from_csv(test_path, x.vocab);

    return make_dataset(std::move(x), std::move(net), std::move(splits), bin_count);
}

// ---- train ----

namespace {

std::string history_csv(const TrainedModel& model, const std::string& meta) {
    std::ostringstream os;
    os << "# " << meta << "\n";
    os << "iteration,loss,val_auroc,val_auprc\n";
    for (const HistoryRow& h : model.history) {
        os << h.iteration << "," << format_double(h.loss) << "," << format_double(h.val_auroc)
           << "," << format_double(h.val_auprc) << "\n";
    }
    return os.str();
}

}  // namespace

void cmd_train(const TrainOptions& opt) {
    ensure_directory(opt.out_dir);
    Dataset data = load_dataset(opt.expression_path, opt.network_path, opt.splits_dir,
                                orientation_from(opt.orientation),
                                opt.config.encoder.bin_count);
    if (!opt.embedding_csv.empty()) require_file(opt.embedding_csv, "gene embedding file");
    TrainedModel model = train(data, opt.config, opt.embedding_csv);

    RunSnapshot snap;
    snap.put("command", std::string("train"));
    snap.put("seed", opt.config.train.seed);
    // fold the full model config into the snapshot
    {
        std::istringstream in(model.config.canonical_text());
        std::string line;
        while (std::getline(in, line)) {
            auto eq = line.find('=');
            if (eq != std::string::npos) snap.put(line.substr(0, eq), line.substr(eq + 1));
        }
    }
    const std::string meta = meta_comment(model.config.train.seed, snap.hash());

    save_checkpoint(model, join(opt.out_dir, "checkpoint.bin"));
    write_text_file(join(opt.out_dir, "history.csv"), history_csv(model, meta));
    write_run_config(opt.out_dir, snap);
}

// ---- evaluate ----

void cmd_evaluate(const EvaluateOptions& opt) {
    require_file(opt.checkpoint_path, "checkpoint");
    ensure_directory(opt.out_dir);
    TrainedModel model = load_checkpoint(opt.checkpoint_path);
    Dataset data =
        load_dataset(opt.expression_path, opt.network_path, opt.splits_dir,
                     orientation_from(opt.orientation), model.config.encoder.bin_count);

    SplitKind kind;
    if (opt.split == "train") kind = SplitKind::train;
    else if (opt.split == "validation") kind = SplitKind::validation;
    else if (opt.split == "test") kind = SplitKind::test;
    else throw InputError("unknown split: " + opt.split);

    MetricsReport report = evaluate_model(model, data, kind);
    write_text_file(join(opt.out_dir, "report.txt"), report.text());
    write_text_file(join(opt.out_dir, "report.csv"),
                    MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
    std::cout << report.text();
}

// ---- ablate ----

void cmd_ablate(const AblateOptions& opt) {
    ensure_directory(opt.base.out_dir);

    struct Variant {
        const char* name;
        AblationFlags flags;
    };
    const Variant variants[] = {
        {"no_gnn", {true, false, false}},
        {"no_encoder", {false, true, false}},
        {"mean_pooling", {false, false, true}},
        {"full", {false, false, false}},
    };

    ModelConfig cfg = opt.base.config;
    Dataset data =
        load_dataset(opt.base.expression_path, opt.base.network_path, opt.base.splits_dir,
                     orientation_from(opt.base.orientation), cfg.encoder.bin_count);

    RunSnapshot snap;
    snap.put("command", std::string("ablate"));
    snap.put("seed", cfg.train.seed);
    {
        std::istringstream in(cfg.canonical_text());
        std::string line;
        while (std::getline(in, line)) {
            auto eq = line.find('=');
            if (eq != std::string::npos) snap.put(line.substr(0, eq), line.substr(eq + 1));
        }
    }
    const std::string meta = meta_comment(cfg.train.seed, snap.hash());

    std::ostringstream table;
    table << "# " << meta << "\n";
    table << "variant,auroc,auprc\n";
    for (const Variant& v : variants) {
        ModelConfig vc = cfg;
        vc.train.ablation = v.flags;
        TrainedModel model = train(data, vc);
        MetricsReport report = evaluate_model(model, data, SplitKind::test);
        table << v.name << "," << format_double(report.auroc) << ","
              << format_double(report.auprc) << "\n";
        write_text_file(join(opt.base.out_dir, std::string("history_") + v.name + ".csv"),
                        history_csv(model, meta));
    }
    write_text_file(join(opt.base.out_dir, "ablation.csv"), table.str());
    write_run_config(opt.base.out_dir, snap);
    std::cout << table.str();
}

// ---- predict ----

void cmd_predict(const PredictOptions& opt) {
    require_file(opt.checkpoint_path, "checkpoint");
    ensure_directory(opt.out_dir);
    TrainedModel model = load_checkpoint(opt.checkpoint_path);

    RunSnapshot snap;
    snap.put("command", std::string("predict"));
    snap.put("seed", model.config.train.seed);
    snap.put("model_config_hash", model.config.hash_hex());
    const std::string meta = meta_comment(model.config.train.seed, snap.hash());

    std::vector<ScoredPair> scored;
    if (opt.all) {
        scored = predict_all(model);
    } else {
        require_file(opt.pairs_path, "pairs file");
        CsvFile csv = read_csv(opt.pairs_path);
        std::vector<std::pair<int, int>> pairs;
        for (std::size_t r = 0; r < csv.rows.size(); ++r) {
            const auto& f = csv.rows[r];
            if (f.size() < 2)
                throw ParseError("pairs: line " + std::to_string(r + 1) +
                                 " needs tf,target columns");
            if (r == 0 && upper_ascii(f[0]) == "TF") continue;
            const int tf = model.vocab.find(upper_ascii(f[0]));
            const int tg = model.vocab.find(upper_ascii(f[1]));
            if (tf < 0 || tg < 0)
                throw ValidationError("pairs: unknown gene at line " + std::to_string(r + 1));
            pairs.emplace_back(tf, tg);
        }
        scored = predict_pairs(model, pairs);
    }

    std::ostringstream os;
    os << "# " << meta << "\n";
    os << "tf,target,score\n";
    for (const ScoredPair& p : scored) {
        os << model.vocab.symbols[static_cast<std::size_t>(p.tf)] << ","
           << model.vocab.symbols[static_cast<std::size_t>(p.gene)] << ","
           << format_double(p.score) << "\n";
    }
    write_text_file(join(opt.out_dir, "predictions.csv"), os.str());

    if (opt.top_k > 0) {
        const std::string dot_path =
            opt.dot_path.empty() ? join(opt.out_dir, "top_edges.dot") : opt.dot_path;
        std::vector<ScoredPair> ranked = opt.all ? scored : predict_all(model);
        write_text_file(dot_path, dot_subgraph(ranked, opt.top_k, model.vocab, meta));
    }
    write_run_config(opt.out_dir, snap);
}

}  // namespace scnet
