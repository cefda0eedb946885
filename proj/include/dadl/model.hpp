#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dadl/ops.hpp"
#include "dadl/tensor.hpp"

namespace dadl {

enum class Arch { vit_micro, cnn_micro };
enum class NormKind { layernorm, batchnorm, groupnorm };
enum class AdapterKind { none, cls_token, norm_params, embedder, pos_embedding, bn_dual_stats, bn_dual_params };

const char* arch_name(Arch a);
const char* norm_kind_name(NormKind n);
const char* adapter_kind_name(AdapterKind k);
Arch arch_from_name(const std::string& s);
NormKind norm_kind_from_name(const std::string& s);
AdapterKind adapter_kind_from_name(const std::string& s);

struct AdapterSpec {
    AdapterKind kind = AdapterKind::none;
};

struct ModelConfig {
    Arch arch = Arch::vit_micro;
    int width = 64;  // ViT embedding dim / CNN channel width
    int depth = 4;   // transformer blocks / conv stages
    int heads = 4;
    int mlp_ratio = 4;
    int patch_size = 4;
    int patch_stride = 2;
    int image_size = 28;
    int in_channels = 1;
    int num_classes = 10;
    NormKind norm = NormKind::layernorm;
    int groups = 4;  // groupnorm only
    double norm_eps = 1e-6;
    AdapterSpec adapter;

    void validate() const;
    int vit_tokens() const;  // excludes the classification token
};

struct DualPair {
    Tensor clean;
    Tensor adv;
};

// Partition of model parameters into shared weights and per-branch adapter
// pairs, plus (for BatchNorm) running-statistic buffers which are tracked but
// not trained.
struct ParamStore {
    std::map<std::string, Tensor> shared;
    std::map<std::string, DualPair> dual;
    std::map<std::string, Tensor> shared_stats;
    std::map<std::string, DualPair> dual_stats;
    AdapterSpec spec;

    // Same tensors with gradients detached (storage shared). Attack code
    // forwards through this so parameter gradients are never touched.
    ParamStore frozen_view() const;
    // Deep copy, used by EMA and checkpoint snapshots.
    ParamStore clone() const;
    void zero_grads();
};

// Inference-branch selector. Soup/combo resolve dual pairs to linear
// combinations; (1,0) and (0,1) short-circuit to the exact branch tensors.
struct Mode {
    enum class Kind { clean, robust, soup, combo };
    Kind kind = Kind::clean;
    double beta1 = 1.0;
    double beta2 = 0.0;

    static Mode clean() { return Mode{Kind::clean, 1.0, 0.0}; }
    static Mode robust() { return Mode{Kind::robust, 0.0, 1.0}; }
    static Mode soup(double beta) { return Mode{Kind::soup, beta, 1.0 - beta}; }
    static Mode combo(double b1, double b2) { return Mode{Kind::combo, b1, b2}; }

    bool pure_clean() const { return beta1 == 1.0 && beta2 == 0.0; }
    bool pure_robust() const { return beta1 == 0.0 && beta2 == 1.0; }
    std::string str() const;
};

enum class Phase { train, eval };

struct Model {
    ModelConfig cfg;
};

// Deterministic initialization: truncated normal (std 0.02) for weights and
// positional embeddings, ones for norm scales, zeros for offsets/biases and
// the classification token. Dual pairs start as identical copies.
std::pair<Model, ParamStore> build(const ModelConfig& cfg, std::uint64_t seed);

// Effective parameter map for a mode: shared passed through, dual pairs
// resolved to beta1*clean + beta2*adv.
std::map<std::string, Tensor> resolve(const ParamStore& store, const Mode& mode);

// Logits [b, classes]. Training phase drives BatchNorm batch-statistics
// semantics per variant (bn_dual_params keeps the robust branch on running
// statistics even in training).
Tensor forward(const Model& model, const Tensor& x, ParamStore& store, const Mode& mode,
               Tape* tape = nullptr, Phase phase = Phase::eval);

// (shared parameter count, dual parameter count per branch)
std::pair<std::int64_t, std::int64_t> count_params(const ParamStore& store);
std::pair<std::int64_t, std::int64_t> count_params(const ModelConfig& cfg);

// Parameter name -> shape in deterministic build order.
std::vector<std::pair<std::string, Shape>> param_shapes(const ModelConfig& cfg);
bool is_dual_param(const ModelConfig& cfg, const std::string& name);
// Weight decay exclusion: norm scales/offsets, tokens, positional embeddings.
bool is_decay_exempt(const std::string& name);

}  // namespace dadl
