#pragma once

#include "errors.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace hexst {

using json = nlohmann::ordered_json;

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    int steps = 500;
    double lr = 3e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;  // parameter initialisation
    LossWeights weights;
    LossToggles toggles;
    double dev_eps = 1e-8;
    int eval_every = 25;
    int patience = 50;  // evaluations without validation improvement

    void validate() const {
        if (steps < 1) throw InputError("train: steps must be at least 1");
        if (!(lr >= 0.0)) throw InputError("train: lr must be non-negative");
        if (eval_every < 1) throw InputError("train: eval_every must be at least 1");
        if (patience < 1) throw InputError("train: patience must be at least 1");
        for (double w : {weights.mse, weights.pearson, weights.tfa, weights.dev}) {
            if (w < 0.0) throw InputError("train: loss weights must be non-negative");
        }
    }
};

/// Everything a run needs, as stored in one config file.
struct RunConfig {
    SynthConfig synth;
    ModelConfig model;
    TrainConfig train;
    EvalOptions eval;
};

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& section) {
    if (!j.is_object()) throw InputError("config: section '" + section + "' must be an object");
    std::set<std::string> ok(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!ok.count(key)) throw InputError("config: unknown key '" + section + "." + key + "'");
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& section) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError("config: bad value for '" + section + "." + key + "'");
    }
}

} // namespace detail

// ---- enums as strings ----

inline std::string to_string(WindowKind k) { return k == WindowKind::hex ? "hex" : "square"; }
inline std::string to_string(PeKind k) { return k == PeKind::hexrope ? "hexrope" : "rope2d"; }
inline std::string to_string(CollisionMode m) { return m == CollisionMode::strict ? "strict" : "lenient"; }
inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }
inline std::string to_string(TokenRule r) { return r == TokenRule::informative ? "informative" : "pure_noise"; }
inline std::string to_string(AucPooling p) { return p == AucPooling::pooled ? "pooled" : "per_gene"; }

inline WindowKind window_kind_from_string(const std::string& s) {
    if (s == "hex") return WindowKind::hex;
    if (s == "square") return WindowKind::square;
    throw InputError("unknown window kind '" + s + "'");
}
inline PeKind pe_kind_from_string(const std::string& s) {
    if (s == "hexrope") return PeKind::hexrope;
    if (s == "rope2d") return PeKind::rope2d;
    throw InputError("unknown positional encoding '" + s + "'");
}
inline CollisionMode collision_mode_from_string(const std::string& s) {
    if (s == "strict") return CollisionMode::strict;
    if (s == "lenient") return CollisionMode::lenient;
    throw InputError("unknown collision mode '" + s + "'");
}
inline OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw InputError("unknown optimizer '" + s + "'");
}
inline TokenRule token_rule_from_string(const std::string& s) {
    if (s == "informative") return TokenRule::informative;
    if (s == "pure_noise") return TokenRule::pure_noise;
    throw InputError("unknown token rule '" + s + "'");
}
inline AucPooling auc_pooling_from_string(const std::string& s) {
    if (s == "pooled") return AucPooling::pooled;
    if (s == "per_gene") return AucPooling::per_gene;
    throw InputError("unknown AUC pooling '" + s + "'");
}

// ---- synth ----

inline json to_json(const SynthConfig& c) {
    json genes = json::array();
    for (auto k : c.genes) genes.push_back(to_string(k));
    return {{"radius", c.radius},
            {"spacing", c.spacing},
            {"jitter", c.jitter},
            {"dropout", c.dropout},
            {"genes", genes},
            {"tokens", to_string(c.tokens)},
            {"token_dim", c.token_dim},
            {"token_noise", c.token_noise},
            {"transcriptomic_dim", c.transcriptomic_dim},
            {"noise_sigma", c.noise_sigma},
            {"boundary_contrast", c.boundary_contrast},
            {"origin", {c.origin.x1, c.origin.x2}},
            {"seed", c.seed},
            {"map_seed", c.map_seed}};
}

inline void from_json(const json& j, SynthConfig& c) {
    const std::string s = "synth";
    detail::reject_unknown(j, {"radius", "spacing", "jitter", "dropout", "genes", "tokens", "token_dim", "token_noise",
                               "transcriptomic_dim", "noise_sigma", "boundary_contrast", "origin", "seed", "map_seed"},
                           s);
    detail::read_field(j, "radius", c.radius, s);
    detail::read_field(j, "spacing", c.spacing, s);
    detail::read_field(j, "jitter", c.jitter, s);
    detail::read_field(j, "dropout", c.dropout, s);
    if (j.contains("genes")) {
        std::vector<std::string> names;
        detail::read_field(j, "genes", names, s);
        c.genes.clear();
        for (const auto& n : names) c.genes.push_back(gene_pattern_from_string(n));
    }
    if (j.contains("tokens")) {
        std::string t;
        detail::read_field(j, "tokens", t, s);
        c.tokens = token_rule_from_string(t);
    }
    detail::read_field(j, "token_dim", c.token_dim, s);
    detail::read_field(j, "token_noise", c.token_noise, s);
    detail::read_field(j, "transcriptomic_dim", c.transcriptomic_dim, s);
    detail::read_field(j, "noise_sigma", c.noise_sigma, s);
    detail::read_field(j, "boundary_contrast", c.boundary_contrast, s);
    if (j.contains("origin")) {
        std::vector<double> o;
        detail::read_field(j, "origin", o, s);
        if (o.size() != 2) throw InputError("config: synth.origin must have two entries");
        c.origin = {o[0], o[1]};
    }
    detail::read_field(j, "seed", c.seed, s);
    detail::read_field(j, "map_seed", c.map_seed, s);
}

// ---- model ----

inline json to_json(const ModelConfig& c) {
    return {{"stages", c.stages},
            {"blocks", c.blocks},
            {"input_dim", c.input_dim},
            {"dim", c.dim},
            {"heads", c.heads},
            {"radii", c.radii},
            {"square_sides", c.square_sides},
            {"out_dim", c.out_dim},
            {"genes", c.genes},
            {"transcriptomic_dim", c.transcriptomic_dim},
            {"mlp_layers", c.mlp_layers},
            {"ffn_mult", c.ffn_mult},
            {"rope_base", c.rope_base},
            {"ln_eps", c.ln_eps},
            {"window", to_string(c.window)},
            {"pe", to_string(c.pe)},
            {"knn_k", c.knn_k},
            {"collisions", to_string(c.collisions)}};
}

inline void from_json(const json& j, ModelConfig& c) {
    const std::string s = "model";
    detail::reject_unknown(j, {"stages", "blocks", "input_dim", "dim", "heads", "radii", "square_sides", "out_dim",
                               "genes", "transcriptomic_dim", "mlp_layers", "ffn_mult", "rope_base", "ln_eps", "window",
                               "pe", "knn_k", "collisions"},
                           s);
    detail::read_field(j, "stages", c.stages, s);
    detail::read_field(j, "blocks", c.blocks, s);
    detail::read_field(j, "input_dim", c.input_dim, s);
    detail::read_field(j, "dim", c.dim, s);
    detail::read_field(j, "heads", c.heads, s);
    detail::read_field(j, "radii", c.radii, s);
    detail::read_field(j, "square_sides", c.square_sides, s);
    detail::read_field(j, "out_dim", c.out_dim, s);
    detail::read_field(j, "genes", c.genes, s);
    detail::read_field(j, "transcriptomic_dim", c.transcriptomic_dim, s);
    detail::read_field(j, "mlp_layers", c.mlp_layers, s);
    detail::read_field(j, "ffn_mult", c.ffn_mult, s);
    detail::read_field(j, "rope_base", c.rope_base, s);
    detail::read_field(j, "ln_eps", c.ln_eps, s);
    std::string tmp;
    if (j.contains("window")) {
        detail::read_field(j, "window", tmp, s);
        c.window = window_kind_from_string(tmp);
    }
    if (j.contains("pe")) {
        detail::read_field(j, "pe", tmp, s);
        c.pe = pe_kind_from_string(tmp);
    }
    detail::read_field(j, "knn_k", c.knn_k, s);
    if (j.contains("collisions")) {
        detail::read_field(j, "collisions", tmp, s);
        c.collisions = collision_mode_from_string(tmp);
    }
}

// ---- train ----

inline json to_json(const TrainConfig& c) {
    return {{"steps", c.steps},
            {"lr", c.lr},
            {"optimizer", to_string(c.optimizer)},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"seed", c.seed},
            {"weights", {{"mse", c.weights.mse}, {"pearson", c.weights.pearson}, {"tfa", c.weights.tfa}, {"dev", c.weights.dev}}},
            {"toggles", {{"mse", c.toggles.mse}, {"pearson", c.toggles.pearson}, {"tfa", c.toggles.tfa}, {"dev", c.toggles.dev}}},
            {"dev_eps", c.dev_eps},
            {"eval_every", c.eval_every},
            {"patience", c.patience}};
}

inline void from_json(const json& j, TrainConfig& c) {
    const std::string s = "train";
    detail::reject_unknown(j, {"steps", "lr", "optimizer", "beta1", "beta2", "adam_eps", "seed", "weights", "toggles",
                               "dev_eps", "eval_every", "patience"},
                           s);
    detail::read_field(j, "steps", c.steps, s);
    detail::read_field(j, "lr", c.lr, s);
    if (j.contains("optimizer")) {
        std::string tmp;
        detail::read_field(j, "optimizer", tmp, s);
        c.optimizer = optimizer_from_string(tmp);
    }
    detail::read_field(j, "beta1", c.beta1, s);
    detail::read_field(j, "beta2", c.beta2, s);
    detail::read_field(j, "adam_eps", c.adam_eps, s);
    detail::read_field(j, "seed", c.seed, s);
    if (j.contains("weights")) {
        const json& w = j.at("weights");
        detail::reject_unknown(w, {"mse", "pearson", "tfa", "dev"}, "train.weights");
        detail::read_field(w, "mse", c.weights.mse, "train.weights");
        detail::read_field(w, "pearson", c.weights.pearson, "train.weights");
        detail::read_field(w, "tfa", c.weights.tfa, "train.weights");
        detail::read_field(w, "dev", c.weights.dev, "train.weights");
    }
    if (j.contains("toggles")) {
        const json& t = j.at("toggles");
        detail::reject_unknown(t, {"mse", "pearson", "tfa", "dev"}, "train.toggles");
        detail::read_field(t, "mse", c.toggles.mse, "train.toggles");
        detail::read_field(t, "pearson", c.toggles.pearson, "train.toggles");
        detail::read_field(t, "tfa", c.toggles.tfa, "train.toggles");
        detail::read_field(t, "dev", c.toggles.dev, "train.toggles");
    }
    detail::read_field(j, "dev_eps", c.dev_eps, s);
    detail::read_field(j, "eval_every", c.eval_every, s);
    detail::read_field(j, "patience", c.patience, s);
}

// ---- eval ----

inline json to_json(const EvalOptions& o) { return {{"mi_bins", o.mi_bins}, {"auc_pooling", to_string(o.pooling)}}; }

inline void from_json(const json& j, EvalOptions& o) {
    detail::reject_unknown(j, {"mi_bins", "auc_pooling"}, "eval");
    detail::read_field(j, "mi_bins", o.mi_bins, "eval");
    if (j.contains("auc_pooling")) {
        std::string tmp;
        detail::read_field(j, "auc_pooling", tmp, "eval");
        o.pooling = auc_pooling_from_string(tmp);
    }
}

// ---- whole file ----

inline json to_json(const RunConfig& c) {
    return {{"synth", to_json(c.synth)}, {"model", to_json(c.model)}, {"train", to_json(c.train)}, {"eval", to_json(c.eval)}};
}

inline RunConfig run_config_from_json(const json& j) {
    detail::reject_unknown(j, {"synth", "model", "train", "eval"}, "<root>");
    RunConfig c;
    if (j.contains("synth")) from_json(j.at("synth"), c.synth);
    if (j.contains("model")) from_json(j.at("model"), c.model);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("eval")) from_json(j.at("eval"), c.eval);
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

} // namespace hexst
