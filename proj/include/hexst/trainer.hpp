#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "synth.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hexst {

/// Copy of `base` with the data-dependent dimensions taken from the dataset.
inline ModelConfig fit_model_config(const ModelConfig& base, const SpotDataset& ds) {
    ModelConfig c = base;
    c.input_dim = static_cast<int>(ds.tokens.cols());
    c.genes = static_cast<int>(ds.expression.cols());
    c.transcriptomic_dim = ds.transcriptomic ? static_cast<int>(ds.transcriptomic->cols()) : 0;
    return c;
}

inline Tensor predict(const SpotDataset& ds, const ParamSet& params, const ModelConfig& cfg) {
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    return forward(ds.tokens, geo, params, cfg).y_hat;
}

struct ObjectiveResult {
    LossReport report;
    ParamSet grads;  // empty unless requested
};

/**
 * Weighted training objective on one whole slide. Disabled terms are still
 * reported but carry zero weight and are not differentiated.
 */
inline ObjectiveResult objective(const SpotDataset& ds, const Geometry& geo, const ParamSet& params,
                                 const ModelConfig& cfg, const TrainConfig& tcfg, bool with_grad) {
    const ForwardOutput fwd = forward(ds.tokens, geo, params, cfg);
    LossWeights w = effective_weights(tcfg.weights, tcfg.toggles);

    const LossValue mse = loss_mse(fwd.y_hat, ds.expression);
    const LossValue pl = loss_pearson(fwd.y_hat, ds.expression);
    const LossValue dev = loss_dev(fwd.y_dev_hat, ds.expression, tcfg.dev_eps);
    std::optional<TfaLoss> tfa;
    if (ds.transcriptomic && params.contains("tfa.w")) {
        tfa = loss_tfa(fwd.z, *ds.transcriptomic, LinearProjection{params["tfa.w"], params["tfa.b"]});
    } else {
        w.tfa = 0.0;
    }

    ObjectiveResult out;
    out.report = loss_total(mse.value, pl.value, tfa ? tfa->value : 0.0, dev.value, w);
    if (!with_grad) return out;

    OutputGrads up{Tensor(fwd.y_hat.shape()), Tensor(fwd.y_dev_hat.shape()), Tensor()};
    if (w.mse != 0.0) add_inplace(up.d_y_hat, scale(mse.grad, w.mse));
    if (w.pearson != 0.0) add_inplace(up.d_y_hat, scale(pl.grad, w.pearson));
    if (w.dev != 0.0) add_inplace(up.d_y_dev_hat, scale(dev.grad, w.dev));
    if (w.tfa != 0.0) up.d_z = scale(tfa->d_z, w.tfa);
    out.grads = backward(fwd, up, geo, params, cfg);
    if (w.tfa != 0.0) {
        add_inplace(out.grads["tfa.w"], scale(tfa->d_weight, w.tfa));
        add_inplace(out.grads["tfa.b"], scale(tfa->d_bias, w.tfa));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimisers

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const ParamSet& like) : cfg_(cfg) {
        if (cfg.optimizer == OptimizerKind::adam) {
            m_ = like.zeros_like();
            v_ = like.zeros_like();
        }
    }

    void step(ParamSet& params, const ParamSet& grads) {
        ++t_;
        if (cfg_.optimizer == OptimizerKind::sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor& p = params.at(i);
                const Tensor& g = grads.at(i);
                for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg_.lr * g[k];
            }
            return;
        }
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = params.at(i);
            Tensor& m = m_.at(i);
            Tensor& v = v_.at(i);
            const Tensor& g = grads.at(i);
            for (std::size_t k = 0; k < p.size(); ++k) {
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
                p[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_eps);
            }
        }
    }

private:
    TrainConfig cfg_;
    ParamSet m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct StepRecord {
    int step = 0;
    LossReport loss;
};

struct EvalRecord {
    int step = 0;  // number of updates applied before evaluation
    EvalReport report;
};

struct TrainResult {
    ParamSet params;       // after the last update
    ParamSet best_params;  // lowest total training loss seen
    int best_step = -1;
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
    std::vector<StepRecord> checkpoints;  // each improvement of the best total
    bool early_stopped = false;
};

inline std::string format_step_line(const StepRecord& r) {
    return "{\"kind\":\"step\",\"step\":" + std::to_string(r.step) + ",\"mse\":" + format_double(r.loss.mse) +
           ",\"pearson\":" + format_double(r.loss.pearson) + ",\"tfa\":" + format_double(r.loss.tfa) +
           ",\"dev\":" + format_double(r.loss.dev) + ",\"total\":" + format_double(r.loss.total) + "}";
}

inline std::string format_eval_line(const EvalRecord& r) {
    return "{\"kind\":\"eval\",\"step\":" + std::to_string(r.step) + ",\"pcc_f\":" + format_double(r.report.pcc_f) +
           ",\"pcc_s\":" + format_double(r.report.pcc_s) + ",\"mi_f\":" + format_double(r.report.mi_f) +
           ",\"auc_0vnz\":" + format_double(r.report.auc_0vnz) + ",\"auc_q50\":" + format_double(r.report.auc_q50) + "}";
}

namespace detail {

inline std::string largest_parameter(const ParamSet& params) {
    std::string name = "<none>";
    double best = -1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (double v : params.at(i).values()) {
            const double a = std::isfinite(v) ? std::abs(v) : std::numeric_limits<double>::infinity();
            if (a > best) {
                best = a;
                name = params.name(i);
            }
        }
    }
    return name + " (|value| " + format_double(best) + ")";
}

inline void check_finite_loss(const LossReport& r, int step, const ParamSet& params) {
    const std::pair<const char*, double> terms[] = {
        {"mse", r.mse}, {"pearson", r.pearson}, {"tfa", r.tfa}, {"dev", r.dev}, {"total", r.total}};
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite loss at step " + std::to_string(step) + ", term " + name +
                               ", largest parameter " + largest_parameter(params));
        }
    }
}

} // namespace detail

/**
 * Full-slide training. Evaluates on `validation` (or the training slide when
 * absent) every eval_every updates and stops once validation pcc_f has not
 * improved for `patience` evaluations.
 */
inline TrainResult train(const SpotDataset& data, const ModelConfig& cfg, const TrainConfig& tcfg,
                         const SpotDataset* validation = nullptr, std::ostream* log = nullptr,
                         const EvalOptions& eval_opt = {}, std::optional<ParamSet> initial = std::nullopt) {
    tcfg.validate();
    data.validate();
    const Geometry geo = prepare_geometry(data.coords, cfg);
    std::optional<Geometry> val_geo;
    if (validation) val_geo = prepare_geometry(validation->coords, cfg);

    TrainResult res;
    res.params = initial ? std::move(*initial) : init_params(cfg, tcfg.seed);
    Optimizer opt(tcfg, res.params);
    double best_val = -std::numeric_limits<double>::infinity();
    int stale = 0;

    for (int step = 0; step < tcfg.steps; ++step) {
        ObjectiveResult obj = objective(data, geo, res.params, cfg, tcfg, true);
        detail::check_finite_loss(obj.report, step, res.params);
        res.steps.push_back({step, obj.report});
        if (log) *log << format_step_line(res.steps.back()) << "\n";
        if (obj.report.total < res.best_total) {
            res.best_total = obj.report.total;
            res.best_step = step;
            res.best_params = res.params;
            res.checkpoints.push_back({step, obj.report});
        }
        opt.step(res.params, obj.grads);

        const bool last = step + 1 == tcfg.steps;
        if ((step + 1) % tcfg.eval_every == 0 || last) {
            const SpotDataset& eds = validation ? *validation : data;
            const Geometry& egeo = validation ? *val_geo : geo;
            const Tensor y_hat = forward(eds.tokens, egeo, res.params, cfg).y_hat;
            if (!y_hat.all_finite()) throw NumericError("non-finite predictions at step " + std::to_string(step + 1));
            res.evals.push_back({step + 1, evaluate(y_hat, eds.expression, eds.gene_names, eval_opt)});
            if (log) *log << format_eval_line(res.evals.back()) << "\n";
            const double pcc = res.evals.back().report.pcc_f;
            if (pcc > best_val) {
                best_val = pcc;
                stale = 0;
            } else if (++stale >= tcfg.patience) {
                res.early_stopped = true;
                break;
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Gradient certification

inline constexpr std::size_t kGradCheckMaxParams = 5000;

struct GroupError {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
};

struct GradCheckReport {
    std::vector<GroupError> groups;
    double max_rel_error = 0.0;
    std::string worst_group;

    bool passed(double tol = 1e-4) const { return max_rel_error < tol; }
};

/// Hook applied to the analytic gradients before comparison (negative controls).
using GradientCorruption = std::function<void(ParamSet&)>;

inline GradCheckReport grad_check(const SpotDataset& ds, const ModelConfig& cfg, const TrainConfig& tcfg,
                                  const ParamSet& params, double h = 1e-3, const GradientCorruption& corrupt = {},
                                  FdStencil stencil = FdStencil::central4) {
    if (params.scalar_count() >= kGradCheckMaxParams) {
        throw InputError("grad_check: " + std::to_string(params.scalar_count()) + " parameters, limit is " +
                         std::to_string(kGradCheckMaxParams));
    }
    const Geometry geo = prepare_geometry(ds.coords, cfg);
    ParamSet analytic = objective(ds, geo, params, cfg, tcfg, true).grads;
    if (corrupt) corrupt(analytic);

    GradCheckReport rep;
    ParamSet work = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.name(i);
        const Tensor numeric = finite_diff_grad(
            [&](const Tensor& x) {
                work.at(i) = x;
                return objective(ds, geo, work, cfg, tcfg, false).report.total;
            },
            params.at(i), h, stencil);
        work.at(i) = params.at(i);
        GroupError ge{name, max_relative_error(analytic.at(i).values(), numeric.values()), max_abs(analytic.at(i))};
        if (ge.max_rel_error > rep.max_rel_error || rep.worst_group.empty()) {
            rep.max_rel_error = std::max(rep.max_rel_error, ge.max_rel_error);
            rep.worst_group = name;
        }
        rep.groups.push_back(std::move(ge));
    }
    return rep;
}

/// Small configuration used for gradient certification: 2 stages, 2 heads, D = 12.
inline ModelConfig toy_model_config() {
    ModelConfig c;
    c.stages = 2;
    c.blocks = 2;
    c.input_dim = 8;
    c.dim = 12;
    c.heads = 2;
    c.radii = {1};
    c.out_dim = 8;
    c.genes = 4;
    c.transcriptomic_dim = 4;
    c.mlp_layers = 2;
    c.ffn_mult = 1;
    c.knn_k = 3;
    return c;
}

/// 20-spot dataset matching toy_model_config().
inline SpotDataset toy_dataset(std::uint64_t seed) {
    SynthConfig s;
    s.radius = 3;
    s.jitter = 0.05;
    s.genes = {GenePatternKind::boundary, GenePatternKind::gradient, GenePatternKind::sparse, GenePatternKind::noise};
    s.token_dim = 8;
    s.transcriptomic_dim = 4;
    s.seed = seed;
    SpotDataset full = generate(s);
    // keep the 20 innermost spots (spiral order)
    SpotDataset ds;
    const std::size_t n = 20;
    ds.spot_ids.assign(full.spot_ids.begin(), full.spot_ids.begin() + n);
    ds.coords.assign(full.coords.begin(), full.coords.begin() + n);
    ds.gene_names = full.gene_names;
    ds.patterns = full.patterns;
    ds.lattice.assign(full.lattice.begin(), full.lattice.begin() + n);
    ds.normalized.assign(full.normalized.begin(), full.normalized.begin() + n);
    ds.tokens = Tensor::matrix(n, full.tokens.cols());
    ds.expression = Tensor::matrix(n, full.expression.cols());
    Tensor t = Tensor::matrix(n, full.transcriptomic->cols());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(full.tokens.row(i).begin(), full.tokens.row(i).end(), ds.tokens.row(i).begin());
        std::copy(full.expression.row(i).begin(), full.expression.row(i).end(), ds.expression.row(i).begin());
        std::copy(full.transcriptomic->row(i).begin(), full.transcriptomic->row(i).end(), t.row(i).begin());
    }
    ds.transcriptomic = std::move(t);
    return ds;
}

} // namespace hexst
