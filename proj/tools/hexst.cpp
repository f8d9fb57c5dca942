#include "hexst/hexst.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hexst;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int verbosity = 0;
};

RunConfig load_config(const Globals& g) {
    RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
    if (g.seed) {
        c.synth.seed = *g.seed;
        c.train.seed = *g.seed;
    }
    return c;
}

template <typename T>
void override_if(const std::optional<T>& v, T& field) {
    if (v) field = *v;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string out;
    std::optional<int> radius;
    std::optional<double> jitter, dropout;
    std::optional<std::string> tokens;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
    RunConfig c = load_config(g);
    override_if(a.radius, c.synth.radius);
    override_if(a.jitter, c.synth.jitter);
    override_if(a.dropout, c.synth.dropout);
    if (a.tokens) c.synth.tokens = token_rule_from_string(*a.tokens);
    const SpotDataset ds = generate(c.synth);
    write_dataset(a.out, ds);
    if (g.verbosity > 0) std::cerr << "wrote " << ds.size() << " spots to " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct PartitionArgs {
    std::string data, out, render;
    int radius = 1;
    int shift = 0;
    std::optional<int> square;
    std::optional<int> knn_k;
    bool lenient = false;
    bool verify = false;
};

int cmd_partition(const Globals& g, const PartitionArgs& a) {
    RunConfig c = load_config(g);
    override_if(a.knn_k, c.model.knn_k);
    const SpotDataset ds = read_dataset(a.data);
    const LatticeScale scale = ds.size() > static_cast<std::size_t>(c.model.knn_k)
                                   ? estimate_scale(ds.coords, c.model.knn_k)
                                   : (ds.size() > 1 ? estimate_scale(ds.coords, static_cast<int>(ds.size()) - 1)
                                                    : LatticeScale{1.0, 1.0 / std::sqrt(3.0), ds.coords[0]});
    const auto spots = encode_spots(ds.coords, scale);
    const CollisionMode mode = a.lenient ? CollisionMode::lenient : c.model.collisions;
    WindowPartition p = a.square ? partition_square(spots, scale, *a.square, a.shift, mode)
                                 : partition(spots, scale, a.radius, a.shift, mode);
    p.block = a.shift;
    if (a.verify) {
        const std::string problem = verify_partition(p, spots);
        if (!problem.empty()) throw ConsistencyError("partition verification failed: " + problem);
    }
    {
        std::ofstream os(a.out, std::ios::binary);
        if (!os) throw IoError("cannot open " + a.out + " for writing");
        write_partition_header(os);
        write_partition_records(os, p, ds.spot_ids);
        if (!os) throw IoError("write failed for " + a.out);
    }
    if (!a.render.empty()) write_ppm(a.render, render_partition(ds.coords, p, scale.d_med));
    std::cout << "windows=" << p.windows.size() << " dropped=" << p.dropped << " rerouted=" << p.rerouted << "\n";
    if (a.verify) std::cout << "verify=ok\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct ModelOverrides {
    std::optional<std::string> window, pe;
    std::optional<int> knn_k;
    bool lenient = false;

    void apply(ModelConfig& m) const {
        if (window) m.window = window_kind_from_string(*window);
        if (pe) m.pe = pe_kind_from_string(*pe);
        override_if(knn_k, m.knn_k);
        if (lenient) m.collisions = CollisionMode::lenient;
    }
};

struct TrainArgs {
    std::string data, val, out;
    std::optional<int> steps, eval_every;
    std::optional<double> lr;
    std::optional<std::string> optimizer;
    bool no_mse = false, no_pearson = false, no_tfa = false, no_dev = false;
    ModelOverrides model;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    RunConfig c = load_config(g);
    override_if(a.steps, c.train.steps);
    override_if(a.eval_every, c.train.eval_every);
    override_if(a.lr, c.train.lr);
    if (a.optimizer) c.train.optimizer = optimizer_from_string(*a.optimizer);
    if (a.no_mse) c.train.toggles.mse = false;
    if (a.no_pearson) c.train.toggles.pearson = false;
    if (a.no_tfa) c.train.toggles.tfa = false;
    if (a.no_dev) c.train.toggles.dev = false;
    a.model.apply(c.model);

    const SpotDataset ds = read_dataset(a.data);
    std::optional<SpotDataset> val;
    if (!a.val.empty()) val = read_dataset(a.val);
    c.model = fit_model_config(c.model, ds);

    ensure_directory(a.out);
    write_text(fs::path(a.out) / "config.json", to_json(c).dump(2) + "\n");
    std::ofstream log(fs::path(a.out) / "log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot open " + (fs::path(a.out) / "log.jsonl").string());
    const TrainResult r = train(ds, c.model, c.train, val ? &*val : nullptr, &log, c.eval);
    save_checkpoint(fs::path(a.out) / "final.ckpt", c.model, r.params);
    save_checkpoint(fs::path(a.out) / "best.ckpt", c.model, r.best_params);
    std::cout << "steps=" << r.steps.size() << " best_step=" << r.best_step
              << " best_total=" << format_double(r.best_total) << "\n";
    if (!r.evals.empty()) std::cout << "pcc_f=" << format_double(r.evals.back().report.pcc_f) << "\n";
    if (r.early_stopped) std::cout << "early_stopped=1\n";
    return kOk;
}

// ---------------------------------------------------------------------------

Tensor predictions_for(const SpotDataset& ds, const std::string& pred, const std::string& checkpoint) {
    if (!pred.empty()) {
        SpotTable t = read_spot_table(pred);
        if (t.ids != ds.spot_ids) throw ConsistencyError("prediction spot ids do not match the dataset");
        if (t.values.cols() != ds.expression.cols()) throw ConsistencyError("prediction gene count does not match the dataset");
        return t.values;
    }
    const Checkpoint ck = load_checkpoint(checkpoint);
    if (static_cast<std::size_t>(ck.config.input_dim) != ds.tokens.cols() ||
        static_cast<std::size_t>(ck.config.genes) != ds.expression.cols()) {
        throw ConsistencyError("checkpoint dimensions do not match the dataset");
    }
    return predict(ds, ck.params, ck.config);
}

struct EvalArgs {
    std::string data, pred, checkpoint, out, pred_out;
    std::optional<std::string> pooling;
    std::optional<int> mi_bins;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    RunConfig c = load_config(g);
    if (a.pooling) c.eval.pooling = auc_pooling_from_string(*a.pooling);
    override_if(a.mi_bins, c.eval.mi_bins);
    const SpotDataset ds = read_dataset(a.data);
    const Tensor y_hat = predictions_for(ds, a.pred, a.checkpoint);
    if (!y_hat.all_finite()) throw NumericError("predictions contain non-finite values");
    const std::string report = format_eval_report(evaluate(y_hat, ds.expression, ds.gene_names, c.eval));
    if (!a.pred_out.empty()) write_spot_table(a.pred_out, ds.spot_ids, ds.coords, y_hat, ds.gene_names);
    if (a.out.empty()) {
        std::cout << report;
    } else {
        write_text(a.out, report);
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
    int seeds = 1;
    double h = 1e-3;
    double tol = 1e-4;
};

int cmd_gradcheck(const Globals& g, const GradcheckArgs& a) {
    const RunConfig c = load_config(g);
    const ModelConfig mc = toy_model_config();
    double worst = 0.0;
    for (int s = 0; s < a.seeds; ++s) {
        const std::uint64_t seed = c.train.seed + static_cast<std::uint64_t>(s);
        const SpotDataset ds = toy_dataset(seed);
        const ParamSet params = init_params(mc, seed);
        const GradCheckReport r = grad_check(ds, mc, c.train, params, a.h);
        if (g.verbosity > 0) {
            for (const auto& ge : r.groups) std::cout << "  " << ge.name << " " << format_double(ge.max_rel_error) << "\n";
        }
        std::cout << "seed=" << seed << " params=" << params.scalar_count()
                  << " max_rel_error=" << format_double(r.max_rel_error) << " worst=" << r.worst_group << "\n";
        worst = std::max(worst, r.max_rel_error);
    }
    std::cout << "max_rel_error=" << format_double(worst) << (worst < a.tol ? " PASS" : " FAIL") << "\n";
    return worst < a.tol ? kOk : kNumeric;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string data, pred, checkpoint, out;
    std::vector<std::string> genes;
    int size = 512;
};

int cmd_render(const Globals& g, const RenderArgs& a) {
    (void)g;
    const SpotDataset ds = read_dataset(a.data);
    const Tensor values = (a.pred.empty() && a.checkpoint.empty()) ? ds.expression : predictions_for(ds, a.pred, a.checkpoint);
    std::vector<std::size_t> cols;
    if (a.genes.empty()) {
        for (std::size_t j = 0; j < ds.gene_names.size(); ++j) cols.push_back(j);
    } else {
        for (const auto& name : a.genes) {
            const auto it = std::find(ds.gene_names.begin(), ds.gene_names.end(), name);
            if (it == ds.gene_names.end()) throw InputError("unknown gene '" + name + "'");
            cols.push_back(static_cast<std::size_t>(it - ds.gene_names.begin()));
        }
    }
    ensure_directory(a.out);
    const double d_med = ds.size() > 1 ? estimate_scale(ds.coords, std::min<int>(3, static_cast<int>(ds.size()) - 1)).d_med : 1.0;
    for (std::size_t j : cols) {
        std::vector<double> v(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) v[i] = values(i, j);
        const std::string note = annotation(summarize(v));
        const std::vector<std::string> comments{ds.gene_names[j], note};
        write_ppm(fs::path(a.out) / (ds.gene_names[j] + ".ppm"), render_heatmap(ds.coords, v, d_med, a.size), comments);
        std::cout << ds.gene_names[j] << ": " << note << "\n";
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hexagonal window transformer toolkit for spot-level expression prediction"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("-c,--config", g.config_path, "JSON run configuration (flags override its fields)");
    app.add_option("--seed", g.seed, "override synth.seed and train.seed");
    app.add_flag("-v,--verbose", g.verbosity, "more output");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
    gen->add_option("-o,--out", ga.out, "output directory")->required();
    gen->add_option("--radius", ga.radius, "lattice radius");
    gen->add_option("--jitter", ga.jitter, "coordinate jitter (fraction of spacing)");
    gen->add_option("--dropout", ga.dropout, "spot dropout rate");
    gen->add_option("--tokens", ga.tokens, "informative | pure_noise");

    PartitionArgs pa;
    auto* part = app.add_subcommand("partition", "assign spots to windows and export the assignment");
    part->add_option("-d,--data", pa.data, "dataset directory")->required();
    part->add_option("-o,--out", pa.out, "assignment CSV")->required();
    part->add_option("-K,--radius", pa.radius, "hex window radius")->check(CLI::NonNegativeNumber);
    part->add_option("--shift", pa.shift, "shift id 0, 1 or 2")->check(CLI::Range(0, 2));
    part->add_option("--square", pa.square, "square tiles with this side (in median spacings)");
    part->add_option("--knn-k", pa.knn_k, "neighbour rank for the lattice scale");
    part->add_option("--render", pa.render, "window-coloured PPM image");
    part->add_flag("--lenient", pa.lenient, "resolve slot collisions instead of failing");
    part->add_flag("--verify", pa.verify, "re-check the partition invariants");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train on a dataset directory");
    tr->add_option("-d,--data", ta.data, "training dataset directory")->required();
    tr->add_option("--val", ta.val, "validation dataset directory");
    tr->add_option("-o,--out", ta.out, "output directory")->required();
    tr->add_option("--steps", ta.steps, "optimisation steps");
    tr->add_option("--lr", ta.lr, "learning rate");
    tr->add_option("--optimizer", ta.optimizer, "adam | sgd");
    tr->add_option("--eval-every", ta.eval_every, "evaluation interval");
    tr->add_option("--window", ta.model.window, "hex | square");
    tr->add_option("--pe", ta.model.pe, "hexrope | rope2d");
    tr->add_option("--knn-k", ta.model.knn_k, "neighbour rank for the lattice scale");
    tr->add_flag("--lenient", ta.model.lenient, "resolve slot collisions instead of failing");
    tr->add_flag("--no-mse", ta.no_mse, "disable the MSE term");
    tr->add_flag("--no-pearson", ta.no_pearson, "disable the Pearson term");
    tr->add_flag("--no-tfa", ta.no_tfa, "disable the feature-alignment term");
    tr->add_flag("--no-dev", ta.no_dev, "disable the deviation term");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "score predictions against a dataset");
    ev->add_option("-d,--data", ea.data, "dataset directory")->required();
    auto* ev_pred = ev->add_option("--pred", ea.pred, "prediction table (spot_id,x,y,genes...)");
    auto* ev_ck = ev->add_option("--checkpoint", ea.checkpoint, "model checkpoint");
    ev_pred->excludes(ev_ck);
    ev->add_option("-o,--out", ea.out, "report file (default stdout)");
    ev->add_option("--pred-out", ea.pred_out, "also write the predictions as a table");
    ev->add_option("--auc-pooling", ea.pooling, "pooled | per_gene");
    ev->add_option("--mi-bins", ea.mi_bins, "quantile bins for mutual information");

    GradcheckArgs ca;
    auto* gc = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients on the toy model");
    gc->add_option("--seeds", ca.seeds, "number of seeds")->check(CLI::PositiveNumber);
    gc->add_option("--fd-step", ca.h, "finite-difference step")->check(CLI::PositiveNumber);
    gc->add_option("--tol", ca.tol, "maximum relative error")->check(CLI::PositiveNumber);

    RenderArgs ra;
    auto* rd = app.add_subcommand("render", "per-gene heatmaps as PPM images");
    rd->add_option("-d,--data", ra.data, "dataset directory")->required();
    auto* rd_pred = rd->add_option("--pred", ra.pred, "prediction table");
    auto* rd_ck = rd->add_option("--checkpoint", ra.checkpoint, "model checkpoint");
    rd_pred->excludes(rd_ck);
    rd->add_option("-o,--out", ra.out, "output directory")->required();
    rd->add_option("--genes", ra.genes, "genes to render (default all)")->delimiter(',');
    rd->add_option("--size", ra.size, "longest image side in pixels")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) return cmd_generate(g, ga);
        if (*part) return cmd_partition(g, pa);
        if (*tr) return cmd_train(g, ta);
        if (*ev) {
            if (ea.pred.empty() && ea.checkpoint.empty()) throw InputError("eval needs --pred or --checkpoint");
            return cmd_eval(g, ea);
        }
        if (*gc) return cmd_gradcheck(g, ca);
        if (*rd) return cmd_render(g, ra);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const ConsistencyError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    } catch (const StructuralError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumeric;
    }
    return kUsage;
}
