#include "gcm/heads.hpp"

#include <algorithm>
#include <cmath>

#include "gcm/textio.hpp"

namespace gcm {

Interval extend_interval(const Interval& i) {
    IntervalStats s = interval_stats(i);
    double half = s.length / 2.0;
    return {std::max(0.0, i.start - half), i.end + half};
}

std::pair<double, double> encode_offsets(const Interval& unit, const Interval& gt) {
    IntervalStats u = interval_stats(unit);
    IntervalStats g = interval_stats(gt);
    return {(u.center - g.center) / u.length, std::log(u.length / g.length)};
}

Interval decode_offsets(const Interval& unit, double o_c, double o_l) {
    IntervalStats u = interval_stats(unit);
    double center = u.center - o_c * u.length;
    double length = u.length / std::exp(o_l);
    return {center - length / 2.0, center + length / 2.0};
}

FcLayer FcLayer::init(int in, int out, bool use_bias, Rng& rng) {
    FcLayer fc;
    DenseMatrix w(in, out);
    double scale = std::sqrt(2.0 / in);
    for (double& v : w.data) v = scale * rng.normal();
    fc.weight = ParamTensor(std::move(w));
    fc.use_bias = use_bias;
    if (use_bias) fc.bias = ParamTensor(DenseMatrix(1, out));
    return fc;
}

DenseMatrix fc_forward(const DenseMatrix& x, const FcLayer& fc) {
    DenseMatrix y = dense_affine(x, fc.weight);
    if (fc.use_bias) y = add_row_bias(y, fc.bias);
    return y;
}

void fc_backward(const DenseMatrix& x, FcLayer& fc, const DenseMatrix& dy, DenseMatrix* dx) {
    if (fc.use_bias) add_row_bias_backward(fc.bias, dy);
    dense_affine_backward(x, fc.weight, dy, dx);
}

const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::two_gcm: return "two_gcm";
        case HeadKind::single_gcm: return "single_gcm";
    }
    return "unknown";
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "two_gcm") return HeadKind::two_gcm;
    if (name == "single_gcm") return HeadKind::single_gcm;
    throw ConfigError("unknown head kind '" + name + "'");
}

GcmModel GcmModel::init(const ModelConfig& cfg, uint64_t seed) {
    if (cfg.classes < 1) throw ConfigError("model needs at least one foreground class");
    resolve_layer_dims(cfg.input_dim, cfg.gcm);
    GcmModel m;
    m.cfg = cfg;
    Rng rng(seed_mix({seed, fnv1a("model-init")}));
    m.gcm1 = GcmWeights::init(cfg.input_dim, cfg.gcm, rng);
    if (cfg.head == HeadKind::two_gcm) {
        m.gcm2 = GcmWeights::init(cfg.input_dim, cfg.gcm, rng);
    }
    int d = cfg.input_dim;
    m.fc_cls = FcLayer::init(d, cfg.classes + 1, cfg.fc_bias, rng);
    m.fc_reg = FcLayer::init(d, 2 * cfg.classes, cfg.fc_bias, rng);
    if (cfg.head == HeadKind::two_gcm) {
        m.fc_com = FcLayer::init(d, 1, cfg.fc_bias, rng);
    }
    int e = cfg.embed_dim > 0 ? cfg.embed_dim : d;
    if (cfg.scheme == AdjacencyScheme::embed_cosine) {
        m.embed1 = DenseMatrix(d, e);
        m.embed2 = DenseMatrix(d, e);
        double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& v : m.embed1.data) v = scale * rng.normal();
        for (double& v : m.embed2.data) v = scale * rng.normal();
    } else if (cfg.scheme == AdjacencyScheme::attention) {
        DenseMatrix w1(d, e), w2(d, e);
        double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (double& v : w1.data) v = scale * rng.normal();
        for (double& v : w2.data) v = scale * rng.normal();
        m.attn1 = ParamTensor(std::move(w1));
        m.attn2 = ParamTensor(std::move(w2));
    }
    return m;
}

std::vector<ParamTensor*> GcmModel::parameters() {
    std::vector<ParamTensor*> out;
    for (auto& p : gcm1.layers) out.push_back(&p);
    for (auto& p : gcm2.layers) out.push_back(&p);
    auto add_fc = [&out](FcLayer& fc) {
        if (!fc.weight.empty()) out.push_back(&fc.weight);
        if (fc.use_bias && !fc.bias.empty()) out.push_back(&fc.bias);
    };
    add_fc(fc_cls);
    add_fc(fc_reg);
    add_fc(fc_com);
    if (!attn1.empty()) out.push_back(&attn1);
    if (!attn2.empty()) out.push_back(&attn2);
    return out;
}

std::vector<std::pair<std::string, const ParamTensor*>> GcmModel::named_parameters() const {
    std::vector<std::pair<std::string, const ParamTensor*>> out;
    for (size_t k = 0; k < gcm1.layers.size(); ++k) {
        out.emplace_back("gcm1.w" + format_int(static_cast<int64_t>(k)), &gcm1.layers[k]);
    }
    for (size_t k = 0; k < gcm2.layers.size(); ++k) {
        out.emplace_back("gcm2.w" + format_int(static_cast<int64_t>(k)), &gcm2.layers[k]);
    }
    auto add_fc = [&out](const std::string& name, const FcLayer& fc) {
        if (!fc.weight.empty()) out.emplace_back(name + ".w", &fc.weight);
        if (fc.use_bias && !fc.bias.empty()) out.emplace_back(name + ".b", &fc.bias);
    };
    add_fc("fc_cls", fc_cls);
    add_fc("fc_reg", fc_reg);
    add_fc("fc_com", fc_com);
    if (!attn1.empty()) out.emplace_back("attn1", &attn1);
    if (!attn2.empty()) out.emplace_back("attn2", &attn2);
    return out;
}

AdjacencySpec GcmModel::adjacency_spec() const {
    AdjacencySpec spec;
    spec.scheme = cfg.scheme;
    if (cfg.scheme == AdjacencyScheme::embed_cosine) {
        spec.embed1 = &embed1;
        spec.embed2 = &embed2;
    } else if (cfg.scheme == AdjacencyScheme::attention) {
        spec.attn1 = &attn1;
        spec.attn2 = &attn2;
    }
    return spec;
}

void GcmModel::zero_grad() {
    for (ParamTensor* p : parameters()) p->zero_grad();
}

namespace {

DenseMatrix run_gcm(const DenseMatrix& x, const SparseAdjacency& a, const GcmWeights& w,
                    const GcmConfig& cfg, bool training, uint64_t seed,
                    GcmForwardContext* ctx) {
    if (training) return gcm_train_forward(x, a, w, cfg, seed, ctx);
    return gcm_forward(x, a, w, cfg, false, seed, ctx);
}

} // namespace

HeadOutputs two_gcm_heads(const DenseMatrix& x, const DenseMatrix& x_ext,
                          const UnitGraph& g, const GcmModel& model, bool training,
                          uint64_t seed, HeadsContext* ctx) {
    if (model.cfg.head != HeadKind::two_gcm) {
        throw ConfigError("two_gcm_heads requires a two_gcm model");
    }
    if (x_ext.empty() || x_ext.rows != x.rows) {
        throw ValidationError("two_gcm_heads: extended features are missing");
    }
    if (g.node_count != x.rows) {
        throw ShapeError("two_gcm_heads: graph and feature row count disagree");
    }
    HeadsContext local;
    HeadsContext& c = ctx != nullptr ? *ctx : local;
    AdjacencySpec spec = model.adjacency_spec();
    c.a1 = compute_adjacency(g, x, spec);
    c.a2 = compute_adjacency(g, x_ext, spec);
    c.y1 = run_gcm(x, c.a1, model.gcm1, model.cfg.gcm, training,
                   seed_mix({seed, fnv1a("gcm1")}), &c.g1);
    c.y2 = run_gcm(x_ext, c.a2, model.gcm2, model.cfg.gcm, training,
                   seed_mix({seed, fnv1a("gcm2")}), &c.g2);
    c.logits = fc_forward(c.y1, model.fc_cls);

    HeadOutputs out;
    out.class_probs = softmax_rows(c.logits);
    out.offsets = fc_forward(c.y2, model.fc_reg);
    require_finite(out.offsets, "regression head output");
    DenseMatrix comp = fc_forward(c.y2, model.fc_com);
    out.completeness.resize(static_cast<size_t>(comp.rows));
    for (int i = 0; i < comp.rows; ++i) out.completeness[static_cast<size_t>(i)] = comp.at(i, 0);
    c.out = out;
    return out;
}

HeadOutputs single_gcm_head(const DenseMatrix& x, const UnitGraph& g,
                            const GcmModel& model, bool training, uint64_t seed,
                            HeadsContext* ctx) {
    if (model.cfg.head != HeadKind::single_gcm) {
        throw ConfigError("single_gcm_head requires a single_gcm model");
    }
    if (g.node_count != x.rows) {
        throw ShapeError("single_gcm_head: graph and feature row count disagree");
    }
    HeadsContext local;
    HeadsContext& c = ctx != nullptr ? *ctx : local;
    AdjacencySpec spec = model.adjacency_spec();
    c.a1 = compute_adjacency(g, x, spec);
    c.y1 = run_gcm(x, c.a1, model.gcm1, model.cfg.gcm, training,
                   seed_mix({seed, fnv1a("gcm1")}), &c.g1);
    c.logits = fc_forward(c.y1, model.fc_cls);

    HeadOutputs out;
    out.class_probs = softmax_rows(c.logits);
    out.offsets = fc_forward(c.y1, model.fc_reg);
    require_finite(out.offsets, "regression head output");
    out.completeness.assign(static_cast<size_t>(x.rows), 1.0);
    c.out = out;
    return out;
}

DenseMatrix one_stage_enhance(const DenseMatrix& f, const GcmWeights& w,
                              const GcmConfig& gcm_cfg, const GraphParams& gp,
                              const AdjacencySpec& spec, bool training, uint64_t seed) {
    if (f.rows == 0) throw ValidationError("one_stage_enhance: empty feature map");
    std::vector<ActionUnit> units(static_cast<size_t>(f.rows));
    for (int t = 0; t < f.rows; ++t) {
        ActionUnit& u = units[static_cast<size_t>(t)];
        u.id = t;
        u.interval = {static_cast<double>(t), static_cast<double>(t) + 1.0};
        u.feature.assign(f.row(t), f.row(t) + f.cols);
    }
    GraphParams p = gp;
    p.one_stage_mode = true;
    UnitGraph g = build_graph(units, p);
    SparseAdjacency a = compute_adjacency(g, f, spec);
    if (training) return gcm_train_forward(f, a, w, gcm_cfg, seed);
    return gcm_forward(f, a, w, gcm_cfg, false, seed);
}

Targets assign_targets(const std::vector<ActionUnit>& units,
                       const std::vector<GroundTruthInstance>& gts,
                       const AssignConfig& cfg) {
    int n = static_cast<int>(units.size());
    Targets t;
    t.label.assign(static_cast<size_t>(n), 0);
    t.completeness_label.assign(static_cast<size_t>(n), 0);
    t.offset_target = DenseMatrix(n, 2);
    t.reg_mask.assign(static_cast<size_t>(n), 0);
    t.com_mask.assign(static_cast<size_t>(n), 0);
    if (gts.empty()) return t;

    for (int i = 0; i < n; ++i) {
        const Interval& ui = units[static_cast<size_t>(i)].interval;
        IntervalStats us = interval_stats(ui);
        int best = -1;
        double best_tiou = -1.0;
        double best_center_gap = 0.0;
        for (int k = 0; k < static_cast<int>(gts.size()); ++k) {
            const Interval& gi = gts[static_cast<size_t>(k)].interval;
            double r = tiou(ui, gi);
            double gap = std::fabs(us.center - (gi.start + gi.end) / 2.0);
            bool take = false;
            if (r > best_tiou) {
                take = true;
            } else if (r == best_tiou && best >= 0 && gap < best_center_gap) {
                take = true;
            }
            if (take) {
                best = k;
                best_tiou = r;
                best_center_gap = gap;
            }
        }
        const GroundTruthInstance& gt = gts[static_cast<size_t>(best)];
        if (best_tiou >= cfg.fg_tiou) {
            t.label[static_cast<size_t>(i)] = gt.label;
            t.com_mask[static_cast<size_t>(i)] = 1;
            auto [oc, ol] = encode_offsets(ui, gt.interval);
            t.offset_target.at(i, 0) = oc;
            t.offset_target.at(i, 1) = ol;
            if (best_tiou >= cfg.complete_tiou) {
                t.completeness_label[static_cast<size_t>(i)] = 1;
                t.reg_mask[static_cast<size_t>(i)] = 1;
            }
        }
    }
    return t;
}

double smooth_l1(double diff) {
    double a = std::fabs(diff);
    return a < 1.0 ? 0.5 * diff * diff : a - 0.5;
}

double smooth_l1_grad(double diff) {
    if (diff > 1.0) return 1.0;
    if (diff < -1.0) return -1.0;
    return diff;
}

double hinge_completeness(int label01, double pred) {
    double sign = label01 != 0 ? 1.0 : -1.0;
    return std::max(0.0, 1.0 - sign * pred);
}

LossNormalizers count_normalizers(const Targets& tgt) {
    LossNormalizers n;
    n.n_cls = static_cast<int>(tgt.label.size());
    for (uint8_t m : tgt.com_mask) n.n_com += m != 0;
    for (uint8_t m : tgt.reg_mask) n.n_reg += m != 0;
    return n;
}

LossBundle compute_losses(const HeadOutputs& out, const Targets& tgt, double lambda1,
                          double lambda2, const LossNormalizers* norms) {
    int n = out.class_probs.rows;
    if (static_cast<int>(tgt.label.size()) != n) {
        throw ShapeError("compute_losses: target count does not match outputs");
    }
    LossNormalizers local = count_normalizers(tgt);
    const LossNormalizers& nn = norms != nullptr ? *norms : local;

    LossBundle b;
    b.lambda1 = lambda1;
    b.lambda2 = lambda2;

    double ce = 0.0;
    for (int i = 0; i < n; ++i) {
        double p = out.class_probs.at(i, tgt.label[static_cast<size_t>(i)]);
        ce -= std::log(std::max(p, 1e-300));
    }
    b.l_cls = nn.n_cls > 0 ? ce / nn.n_cls : 0.0;

    double hinge = 0.0;
    for (int i = 0; i < n; ++i) {
        if (tgt.com_mask[static_cast<size_t>(i)] == 0) continue;
        hinge += hinge_completeness(tgt.completeness_label[static_cast<size_t>(i)],
                                    out.completeness[static_cast<size_t>(i)]);
    }
    b.l_com = nn.n_com > 0 ? hinge / nn.n_com : 0.0;

    double reg = 0.0;
    for (int i = 0; i < n; ++i) {
        if (tgt.reg_mask[static_cast<size_t>(i)] == 0) continue;
        int cls = tgt.label[static_cast<size_t>(i)];
        int col = 2 * (cls - 1);
        reg += smooth_l1(out.offsets.at(i, col) - tgt.offset_target.at(i, 0));
        reg += smooth_l1(out.offsets.at(i, col + 1) - tgt.offset_target.at(i, 1));
    }
    b.l_reg = nn.n_reg > 0 ? reg / nn.n_reg : 0.0;

    b.l_total = b.l_cls + lambda1 * b.l_com + lambda2 * b.l_reg;
    return b;
}

LossGrads loss_backward(const HeadOutputs& out, const Targets& tgt, double lambda1,
                        double lambda2, const LossNormalizers& norms) {
    int n = out.class_probs.rows;
    int cols = out.class_probs.cols;
    LossGrads g;
    g.dlogits = DenseMatrix(n, cols);
    g.dcompleteness = DenseMatrix(n, 1);
    g.doffsets = DenseMatrix(n, out.offsets.cols);

    if (norms.n_cls > 0) {
        double inv = 1.0 / norms.n_cls;
        for (int i = 0; i < n; ++i) {
            const double* p = out.class_probs.row(i);
            double* d = g.dlogits.row(i);
            for (int c = 0; c < cols; ++c) d[c] = p[c] * inv;
            d[tgt.label[static_cast<size_t>(i)]] -= inv;
        }
    }
    if (norms.n_com > 0) {
        double inv = lambda1 / norms.n_com;
        for (int i = 0; i < n; ++i) {
            if (tgt.com_mask[static_cast<size_t>(i)] == 0) continue;
            double sign = tgt.completeness_label[static_cast<size_t>(i)] != 0 ? 1.0 : -1.0;
            double margin = 1.0 - sign * out.completeness[static_cast<size_t>(i)];
            if (margin > 0.0) g.dcompleteness.at(i, 0) = -sign * inv;
        }
    }
    if (norms.n_reg > 0) {
        double inv = lambda2 / norms.n_reg;
        for (int i = 0; i < n; ++i) {
            if (tgt.reg_mask[static_cast<size_t>(i)] == 0) continue;
            int cls = tgt.label[static_cast<size_t>(i)];
            int col = 2 * (cls - 1);
            g.doffsets.at(i, col) =
                inv * smooth_l1_grad(out.offsets.at(i, col) - tgt.offset_target.at(i, 0));
            g.doffsets.at(i, col + 1) =
                inv * smooth_l1_grad(out.offsets.at(i, col + 1) - tgt.offset_target.at(i, 1));
        }
    }
    return g;
}

void heads_backward(const DenseMatrix& x, const DenseMatrix& x_ext, GcmModel& model,
                    HeadsContext& ctx, const LossGrads& grads) {
    bool attention = model.cfg.scheme == AdjacencyScheme::attention;

    DenseMatrix dy1;
    fc_backward(ctx.y1, model.fc_cls, grads.dlogits, &dy1);
    SparseAdjacency da1 = attention ? ctx.a1.zeros_like() : SparseAdjacency();
    gcm_backward(ctx.g1, ctx.a1, model.gcm1, model.cfg.gcm, dy1, nullptr,
                 attention ? &da1 : nullptr);
    if (attention) {
        attention_adjacency_backward(x, ctx.a1, da1, model.attn1, model.attn2);
    }

    if (model.cfg.head == HeadKind::two_gcm) {
        DenseMatrix dy2a;
        fc_backward(ctx.y2, model.fc_reg, grads.doffsets, &dy2a);
        DenseMatrix dy2b;
        fc_backward(ctx.y2, model.fc_com, grads.dcompleteness, &dy2b);
        for (size_t i = 0; i < dy2a.data.size(); ++i) dy2a.data[i] += dy2b.data[i];
        SparseAdjacency da2 = attention ? ctx.a2.zeros_like() : SparseAdjacency();
        gcm_backward(ctx.g2, ctx.a2, model.gcm2, model.cfg.gcm, dy2a, nullptr,
                     attention ? &da2 : nullptr);
        if (attention) {
            attention_adjacency_backward(x_ext, ctx.a2, da2, model.attn1, model.attn2);
        }
    } else {
        DenseMatrix dy1b;
        fc_backward(ctx.y1, model.fc_reg, grads.doffsets, &dy1b);
        SparseAdjacency da1b = attention ? ctx.a1.zeros_like() : SparseAdjacency();
        gcm_backward(ctx.g1, ctx.a1, model.gcm1, model.cfg.gcm, dy1b, nullptr,
                     attention ? &da1b : nullptr);
        if (attention) {
            attention_adjacency_backward(x, ctx.a1, da1b, model.attn1, model.attn2);
        }
    }
}

} // namespace gcm
