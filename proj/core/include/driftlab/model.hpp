#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "driftlab/noising.hpp"
#include "driftlab/rng.hpp"

namespace driftlab {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int model_dim = 128;
    int ff_dim = 512;
    int max_len = 256;
    int vocab_size = 0;

    void validate() const;
};

template <typename T>
struct LayerParams {
    Mat<T> ln1_g, ln1_b;
    Mat<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Mat<T> ln2_g, ln2_b;
    Mat<T> w1, b1, w2, b2;
};

/// All trainable arrays. Gradients and optimizer moments reuse this shape.
template <typename T>
struct ParamSet {
    Mat<T> tok_emb;              // vocab_size x model_dim
    Mat<T> pos_emb;              // (max_len + 1) x model_dim, slot 0 is BOS
    std::vector<LayerParams<T>> layers;
    Mat<T> lnf_g, lnf_b;         // 1 x model_dim
    Mat<T> w_head;               // model_dim x vocab_size
    Mat<T> b_head;               // 1 x vocab_size
};

/// Bidirectional denoiser with shifted output alignment: the prediction for
/// sequence position n is read from the network output over the slot holding
/// position n-1 (a BOS slot for n = 0).
template <typename T>
struct DenoiserModel {
    ModelConfig config;
    ParamSet<T> params;
};

/// Named views over every parameter array, in the fixed order used by the
/// optimizer and the checkpoint manifest.
template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> named_params(ParamSet<T>& p);
template <typename T>
std::vector<std::pair<std::string, const Mat<T>*>> named_params(const ParamSet<T>& p);

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& p);

/// Scaled zero-mean random initialization; deterministic in the rng seed.
template <typename T>
DenoiserModel<T> init_model(const ModelConfig& config, Rng& rng);

/// Shift-aligned logits: row n scores the clean token at position n given all
/// of x_t. Shape L x vocab_size.
template <typename T>
Mat<T> forward(const DenoiserModel<T>& model, const NoisedSequence& x_t);

/// Pre-shift head outputs over the internal BOS-prefixed input, shape
/// (L+1) x vocab_size. Row 0 sits over the BOS slot and row j (j >= 1) over
/// x_t position j-1; forward() returns rows 0..L-1 of this matrix.
template <typename T>
Mat<T> forward_raw(const DenoiserModel<T>& model, const NoisedSequence& x_t);

/// A scalar training objective over shift-aligned logits. Returns the loss
/// and writes dloss/dlogits into the second argument (same shape as logits).
template <typename T>
using LogitsObjective = std::function<double(const Mat<T>& logits, Mat<T>& grad_logits)>;

/// Reverse-mode gradients of objective(forward(model, x_t)) with respect to
/// every parameter, accumulated into grad. Returns the loss value.
template <typename T>
double accumulate_grad(const DenoiserModel<T>& model, const NoisedSequence& x_t,
                       const LogitsObjective<T>& objective, ParamSet<T>& grad);

template <typename T>
std::pair<double, ParamSet<T>> loss_and_grad(const DenoiserModel<T>& model,
                                             const NoisedSequence& x_t,
                                             const LogitsObjective<T>& objective);

}  // namespace driftlab
