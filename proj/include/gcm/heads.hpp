#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gcm/core.hpp"
#include "gcm/graph.hpp"
#include "gcm/model.hpp"

namespace gcm {

// Widens an interval by half its length on both sides, clamped at 0.
Interval extend_interval(const Interval& i);

// Offset parameterization between a unit and a ground-truth interval:
//   o_c = (c_i - c_gt) / l_i,  o_l = ln(l_i / l_gt).
std::pair<double, double> encode_offsets(const Interval& unit, const Interval& gt);

// Algebraic inverse of encode_offsets. The result may extend past 0; detection
// assembly clamps it.
Interval decode_offsets(const Interval& unit, double o_c, double o_l);

struct FcLayer {
    ParamTensor weight; // in x out
    ParamTensor bias;   // 1 x out; empty when bias is disabled
    bool use_bias = true;

    static FcLayer init(int in, int out, bool use_bias, Rng& rng);
};

DenseMatrix fc_forward(const DenseMatrix& x, const FcLayer& fc);
void fc_backward(const DenseMatrix& x, FcLayer& fc, const DenseMatrix& dy, DenseMatrix* dx);

enum class HeadKind : uint8_t { two_gcm = 0, single_gcm = 1 };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct ModelConfig {
    HeadKind head = HeadKind::two_gcm;
    GcmConfig gcm;
    AdjacencyScheme scheme = AdjacencyScheme::cosine;
    int classes = 5;   // foreground classes C; heads emit C+1 class probs
    int input_dim = 16;
    bool fc_bias = true;
    int embed_dim = 0; // projection width for embed_cosine/attention; 0 = input_dim
};

// All learnable state of the detector: one or two GCM stacks plus FC heads.
// embed1/embed2 are fixed maps; attn1/attn2 are the only adjacency parameters
// that train.
struct GcmModel {
    ModelConfig cfg;
    GcmWeights gcm1;
    GcmWeights gcm2;
    FcLayer fc_cls;
    FcLayer fc_reg;
    FcLayer fc_com;
    DenseMatrix embed1, embed2;
    ParamTensor attn1, attn2;

    static GcmModel init(const ModelConfig& cfg, uint64_t seed);
    std::vector<ParamTensor*> parameters();
    std::vector<std::pair<std::string, const ParamTensor*>> named_parameters() const;
    AdjacencySpec adjacency_spec() const;
    void zero_grad();
};

// class_probs: N x (C+1), row-stochastic. completeness: raw scores, one per
// unit (fixed 1 for single-GCM heads). offsets: N x 2C, per-class
// (center, log-length) pairs.
struct HeadOutputs {
    DenseMatrix class_probs;
    std::vector<double> completeness;
    DenseMatrix offsets;
};

struct HeadsContext {
    SparseAdjacency a1, a2;
    GcmForwardContext g1, g2;
    DenseMatrix y1, y2;
    DenseMatrix logits;
    HeadOutputs out;
};

// SSN-style pair of GCMs sharing the graph structure: GCM1 on the original
// features feeds the classifier; GCM2 on the extended features feeds the
// boundary regressor and the completeness head.
HeadOutputs two_gcm_heads(const DenseMatrix& x, const DenseMatrix& x_ext,
                          const UnitGraph& g, const GcmModel& model, bool training,
                          uint64_t seed, HeadsContext* ctx = nullptr);

// Single-GCM variant: two FC heads on one stack, completeness fixed to 1.
HeadOutputs single_gcm_head(const DenseMatrix& x, const UnitGraph& g,
                            const GcmModel& model, bool training, uint64_t seed,
                            HeadsContext* ctx = nullptr);

// One-stage insertion: treats each feature-map row as the segment [t, t+1),
// builds a surrounding+semantic graph over those segments, and runs one GCM.
// Output shape equals the input shape; may be applied at multiple scales.
DenseMatrix one_stage_enhance(const DenseMatrix& f, const GcmWeights& w,
                              const GcmConfig& gcm_cfg, const GraphParams& gp,
                              const AdjacencySpec& spec, bool training, uint64_t seed);

struct Targets {
    std::vector<int> label;              // 0 = background
    std::vector<int> completeness_label; // 0/1
    DenseMatrix offset_target;           // N x 2
    std::vector<uint8_t> reg_mask, com_mask;
};

struct AssignConfig {
    double fg_tiou = 0.5;
    double complete_tiou = 0.7;
};

// Best-tIoU assignment: label from the closest ground truth when the overlap
// reaches fg_tiou, completeness when it reaches complete_tiou; regression
// targets only for complete foreground units.
Targets assign_targets(const std::vector<ActionUnit>& units,
                       const std::vector<GroundTruthInstance>& gts,
                       const AssignConfig& cfg);

struct LossBundle {
    double l_cls = 0.0, l_com = 0.0, l_reg = 0.0, l_total = 0.0;
    double lambda1 = 0.5, lambda2 = 0.5;
};

// Mini-batch normalizers; defaults derive from one video's targets, batch
// training passes totals over the whole batch.
struct LossNormalizers {
    int n_cls = 0;
    int n_com = 0;
    int n_reg = 0;
};

LossNormalizers count_normalizers(const Targets& tgt);

// Cross-entropy + hinge completeness + smooth-L1 regression, combined as
// l_total = l_cls + lambda1 l_com + lambda2 l_reg.
LossBundle compute_losses(const HeadOutputs& out, const Targets& tgt, double lambda1,
                          double lambda2, const LossNormalizers* norms = nullptr);

struct LossGrads {
    DenseMatrix dlogits;
    DenseMatrix dcompleteness; // N x 1
    DenseMatrix doffsets;      // N x 2C
};

LossGrads loss_backward(const HeadOutputs& out, const Targets& tgt, double lambda1,
                        double lambda2, const LossNormalizers& norms);

// Reverse pass through FC heads and GCM stacks; accumulates into model grads.
void heads_backward(const DenseMatrix& x, const DenseMatrix& x_ext, GcmModel& model,
                    HeadsContext& ctx, const LossGrads& grads);

double smooth_l1(double diff);
double smooth_l1_grad(double diff);
double hinge_completeness(int label01, double pred);

} // namespace gcm
