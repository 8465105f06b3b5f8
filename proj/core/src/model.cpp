#include "driftlab/model.hpp"

#include <cmath>

namespace driftlab {

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1 || max_len < 1 ||
        vocab_size < 1) {
        throw InvalidConfig("model config: all counts must be >= 1");
    }
    if (model_dim % heads != 0) {
        throw InvalidConfig("model config: model_dim must be divisible by heads");
    }
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> named_params(ParamSet<T>& p) {
    std::vector<std::pair<std::string, Mat<T>*>> out;
    out.emplace_back("tok_emb", &p.tok_emb);
    out.emplace_back("pos_emb", &p.pos_emb);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& lp = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        out.emplace_back(pre + "ln1_g", &lp.ln1_g);
        out.emplace_back(pre + "ln1_b", &lp.ln1_b);
        out.emplace_back(pre + "wq", &lp.wq);
        out.emplace_back(pre + "bq", &lp.bq);
        out.emplace_back(pre + "wk", &lp.wk);
        out.emplace_back(pre + "bk", &lp.bk);
        out.emplace_back(pre + "wv", &lp.wv);
        out.emplace_back(pre + "bv", &lp.bv);
        out.emplace_back(pre + "wo", &lp.wo);
        out.emplace_back(pre + "bo", &lp.bo);
        out.emplace_back(pre + "ln2_g", &lp.ln2_g);
        out.emplace_back(pre + "ln2_b", &lp.ln2_b);
        out.emplace_back(pre + "w1", &lp.w1);
        out.emplace_back(pre + "b1", &lp.b1);
        out.emplace_back(pre + "w2", &lp.w2);
        out.emplace_back(pre + "b2", &lp.b2);
    }
    out.emplace_back("lnf_g", &p.lnf_g);
    out.emplace_back("lnf_b", &p.lnf_b);
    out.emplace_back("w_head", &p.w_head);
    out.emplace_back("b_head", &p.b_head);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Mat<T>*>> named_params(const ParamSet<T>& p) {
    std::vector<std::pair<std::string, const Mat<T>*>> out;
    for (auto& [name, mat] : named_params(const_cast<ParamSet<T>&>(p))) {
        out.emplace_back(name, mat);
    }
    return out;
}

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& p) {
    ParamSet<T> z;
    z.layers.resize(p.layers.size());
    auto src = named_params(p);
    auto dst = named_params(z);
    for (std::size_t i = 0; i < src.size(); ++i) {
        *dst[i].second = Mat<T>::Zero(src[i].second->rows(), src[i].second->cols());
    }
    return z;
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;

template <typename T>
Mat<T> randn(int rows, int cols, double std, Rng& rng) {
    Mat<T> m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = static_cast<T>(rng.normal(0.0, std));
        }
    }
    return m;
}

// GPT-2 style tanh approximation; the backward pass differentiates this
// exact form, so forward and gradient stay consistent.
template <typename T>
T gelu(T x) {
    const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
    const T a = static_cast<T>(0.044715);
    return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
    const T c = static_cast<T>(0.7978845608028654);
    const T a = static_cast<T>(0.044715);
    const T u = c * (x + a * x * x * x);
    const T th = std::tanh(u);
    const T sech2 = static_cast<T>(1) - th * th;
    return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
           static_cast<T>(0.5) * x * sech2 * c * (static_cast<T>(1) + static_cast<T>(3) * a * x * x);
}

template <typename T>
struct LnCache {
    Mat<T> xhat;           // rows x d
    Mat<T> inv_std;        // rows x 1
};

template <typename T>
Mat<T> layernorm_fwd(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, LnCache<T>& cache) {
    Mat<T> mean = x.rowwise().mean();
    Mat<T> centered = x.colwise() - mean.col(0);
    Mat<T> var = centered.array().square().matrix().rowwise().mean();
    cache.inv_std = (var.array() + static_cast<T>(kLnEps)).rsqrt().matrix();
    cache.xhat = centered.array().colwise() * cache.inv_std.col(0).array();
    Mat<T> y = cache.xhat;
    y.array().rowwise() *= g.row(0).array();
    y.array().rowwise() += b.row(0).array();
    return y;
}

template <typename T>
Mat<T> layernorm_bwd(const Mat<T>& dy, const LnCache<T>& cache, const Mat<T>& g,
                     Mat<T>& dg, Mat<T>& db) {
    dg.row(0).array() += (dy.array() * cache.xhat.array()).colwise().sum();
    db.row(0).array() += dy.array().colwise().sum();
    Mat<T> dxhat = dy;
    dxhat.array().rowwise() *= g.row(0).array();
    Mat<T> m1 = dxhat.rowwise().mean();
    Mat<T> m2 = (dxhat.array() * cache.xhat.array()).matrix().rowwise().mean();
    Mat<T> dx = dxhat;
    dx.array().colwise() -= m1.col(0).array();
    dx.array() -= cache.xhat.array().colwise() * m2.col(0).array();
    dx.array().colwise() *= cache.inv_std.col(0).array();
    return dx;
}

// In-place rowwise softmax with max subtraction.
template <typename T>
void softmax_rows(Mat<T>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        auto row = m.row(r).array();
        row -= row.maxCoeff();
        row = row.exp();
        row /= row.sum();
    }
}

template <typename T>
struct LayerCache {
    Mat<T> x_in;                   // residual stream entering the layer
    LnCache<T> ln1;
    Mat<T> ln1_out;
    Mat<T> q, k, v;
    std::vector<Mat<T>> probs;     // per-head attention rows
    Mat<T> ctx;                    // concatenated head outputs, pre-wo
    Mat<T> x_mid;                  // after attention residual
    LnCache<T> ln2;
    Mat<T> ln2_out;
    Mat<T> h_pre, h_act;
};

template <typename T>
struct ForwardCache {
    std::vector<int> slots;        // internal token per slot (BOS first)
    Mat<T> x0;                     // embedded input
    std::vector<LayerCache<T>> layers;
    LnCache<T> lnf;
    Mat<T> lnf_out;
    Mat<T> raw_logits;             // (L+1) x V, pre-shift
};

template <typename T>
void run_forward(const DenoiserModel<T>& model, const NoisedSequence& x_t,
                 ForwardCache<T>& fc, bool keep_for_backward) {
    const ModelConfig& cfg = model.config;
    const std::int32_t len = x_t.size();
    if (len < 1) {
        throw OutOfRange("forward: empty sequence");
    }
    if (len > cfg.max_len) {
        throw SequenceTooLong("forward: sequence length " + std::to_string(len) +
                              " exceeds max_len " + std::to_string(cfg.max_len));
    }
    const int m = len + 1;  // BOS slot + shifted tokens
    const int d = cfg.model_dim;
    const int hd = d / cfg.heads;
    const TokenId bos = cfg.vocab_size - 2;  // trailing specials: MASK PAD BOS EOS

    fc.slots.resize(static_cast<std::size_t>(m));
    fc.slots[0] = bos;
    for (std::int32_t i = 0; i < len; ++i) {
        const TokenId id = x_t.ids[i];
        if (id < 0 || id >= cfg.vocab_size) {
            throw OutOfRange("forward: token id " + std::to_string(id) + " outside vocab");
        }
        fc.slots[static_cast<std::size_t>(i) + 1] = id;
    }

    fc.x0.resize(m, d);
    for (int j = 0; j < m; ++j) {
        fc.x0.row(j) = model.params.tok_emb.row(fc.slots[static_cast<std::size_t>(j)]) +
                       model.params.pos_emb.row(j);
    }

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));
    Mat<T> x = fc.x0;
    fc.layers.clear();
    fc.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        const LayerParams<T>& lp = model.params.layers[static_cast<std::size_t>(l)];
        LayerCache<T>& lc = fc.layers[static_cast<std::size_t>(l)];
        if (keep_for_backward) {
            lc.x_in = x;
        }

        lc.ln1_out = layernorm_fwd(x, lp.ln1_g, lp.ln1_b, lc.ln1);
        lc.q = lc.ln1_out * lp.wq;
        lc.q.array().rowwise() += lp.bq.row(0).array();
        lc.k = lc.ln1_out * lp.wk;
        lc.k.array().rowwise() += lp.bk.row(0).array();
        lc.v = lc.ln1_out * lp.wv;
        lc.v.array().rowwise() += lp.bv.row(0).array();

        lc.ctx.resize(m, d);
        lc.probs.resize(static_cast<std::size_t>(cfg.heads));
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.v.middleCols(h * hd, hd);
            Mat<T> scores = qh * kh.transpose() * scale;  // full bidirectional
            softmax_rows(scores);
            lc.ctx.middleCols(h * hd, hd) = scores * vh;
            if (keep_for_backward) {
                lc.probs[static_cast<std::size_t>(h)] = std::move(scores);
            }
        }

        Mat<T> attn_out = lc.ctx * lp.wo;
        attn_out.array().rowwise() += lp.bo.row(0).array();
        lc.x_mid = x + attn_out;

        lc.ln2_out = layernorm_fwd(lc.x_mid, lp.ln2_g, lp.ln2_b, lc.ln2);
        lc.h_pre = lc.ln2_out * lp.w1;
        lc.h_pre.array().rowwise() += lp.b1.row(0).array();
        lc.h_act = lc.h_pre.unaryExpr([](T v) { return gelu(v); });
        Mat<T> ffn_out = lc.h_act * lp.w2;
        ffn_out.array().rowwise() += lp.b2.row(0).array();
        x = lc.x_mid + ffn_out;

        if (!keep_for_backward) {
            lc.x_in.resize(0, 0);
            lc.ln1.xhat.resize(0, 0);
            lc.ln2.xhat.resize(0, 0);
        }
    }

    fc.lnf_out = layernorm_fwd(x, model.params.lnf_g, model.params.lnf_b, fc.lnf);
    fc.raw_logits = fc.lnf_out * model.params.w_head;
    fc.raw_logits.array().rowwise() += model.params.b_head.row(0).array();
}

template <typename T>
void run_backward(const DenoiserModel<T>& model, const ForwardCache<T>& fc,
                  const Mat<T>& d_raw, ParamSet<T>& g) {
    const ModelConfig& cfg = model.config;
    const int d = cfg.model_dim;
    const int hd = d / cfg.heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    // Head.
    g.w_head += fc.lnf_out.transpose() * d_raw;
    g.b_head.row(0).array() += d_raw.array().colwise().sum();
    Mat<T> dx = d_raw * model.params.w_head.transpose();
    dx = layernorm_bwd(dx, fc.lnf, model.params.lnf_g, g.lnf_g, g.lnf_b);

    for (int l = cfg.layers - 1; l >= 0; --l) {
        const LayerParams<T>& lp = model.params.layers[static_cast<std::size_t>(l)];
        LayerParams<T>& lg = g.layers[static_cast<std::size_t>(l)];
        const LayerCache<T>& lc = fc.layers[static_cast<std::size_t>(l)];

        // FFN branch; dx is the gradient on the layer output.
        Mat<T> d_ffn = dx;  // residual passthrough keeps dx as well
        lg.w2 += lc.h_act.transpose() * d_ffn;
        lg.b2.row(0).array() += d_ffn.array().colwise().sum();
        Mat<T> dh_act = d_ffn * lp.w2.transpose();
        Mat<T> dh_pre =
            dh_act.array() * lc.h_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
        lg.w1 += lc.ln2_out.transpose() * dh_pre;
        lg.b1.row(0).array() += dh_pre.array().colwise().sum();
        Mat<T> d_ln2_out = dh_pre * lp.w1.transpose();
        Mat<T> dx_mid = dx + layernorm_bwd(d_ln2_out, lc.ln2, lp.ln2_g, lg.ln2_g, lg.ln2_b);

        // Attention branch.
        Mat<T> d_attn_out = dx_mid;
        lg.wo += lc.ctx.transpose() * d_attn_out;
        lg.bo.row(0).array() += d_attn_out.array().colwise().sum();
        Mat<T> dctx = d_attn_out * lp.wo.transpose();

        Mat<T> dq(lc.q.rows(), lc.q.cols());
        Mat<T> dk(lc.k.rows(), lc.k.cols());
        Mat<T> dv(lc.v.rows(), lc.v.cols());
        for (int h = 0; h < cfg.heads; ++h) {
            auto qh = lc.q.middleCols(h * hd, hd);
            auto kh = lc.k.middleCols(h * hd, hd);
            auto vh = lc.v.middleCols(h * hd, hd);
            const Mat<T>& p = lc.probs[static_cast<std::size_t>(h)];
            auto dctx_h = dctx.middleCols(h * hd, hd);

            Mat<T> dp = dctx_h * vh.transpose();
            dv.middleCols(h * hd, hd) = p.transpose() * dctx_h;

            // softmax rows: ds = p .* (dp - rowsum(dp .* p))
            Mat<T> rowdot = (dp.array() * p.array()).matrix().rowwise().sum();
            Mat<T> ds = dp;
            ds.array().colwise() -= rowdot.col(0).array();
            ds.array() *= p.array();
            ds *= scale;

            dq.middleCols(h * hd, hd) = ds * kh;
            dk.middleCols(h * hd, hd) = ds.transpose() * qh;
        }

        lg.wq += lc.ln1_out.transpose() * dq;
        lg.bq.row(0).array() += dq.array().colwise().sum();
        lg.wk += lc.ln1_out.transpose() * dk;
        lg.bk.row(0).array() += dk.array().colwise().sum();
        lg.wv += lc.ln1_out.transpose() * dv;
        lg.bv.row(0).array() += dv.array().colwise().sum();

        Mat<T> d_ln1_out =
            dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
        dx = dx_mid + layernorm_bwd(d_ln1_out, lc.ln1, lp.ln1_g, lg.ln1_g, lg.ln1_b);
    }

    // Embeddings.
    const int m = static_cast<int>(fc.x0.rows());
    for (int j = 0; j < m; ++j) {
        g.tok_emb.row(fc.slots[static_cast<std::size_t>(j)]) += dx.row(j);
        g.pos_emb.row(j) += dx.row(j);
    }
}

}  // namespace

template <typename T>
DenoiserModel<T> init_model(const ModelConfig& config, Rng& rng) {
    config.validate();
    DenoiserModel<T> model;
    model.config = config;
    ParamSet<T>& p = model.params;
    const int d = config.model_dim;
    const int v = config.vocab_size;
    const int ff = config.ff_dim;
    // Residual output projections get the extra 1/sqrt(2*layers) shrink.
    const double res_std = kInitStd / std::sqrt(2.0 * config.layers);

    p.tok_emb = randn<T>(v, d, kInitStd, rng);
    p.pos_emb = randn<T>(config.max_len + 1, d, kInitStd, rng);
    p.layers.resize(static_cast<std::size_t>(config.layers));
    for (auto& lp : p.layers) {
        lp.ln1_g = Mat<T>::Ones(1, d);
        lp.ln1_b = Mat<T>::Zero(1, d);
        lp.wq = randn<T>(d, d, kInitStd, rng);
        lp.bq = Mat<T>::Zero(1, d);
        lp.wk = randn<T>(d, d, kInitStd, rng);
        lp.bk = Mat<T>::Zero(1, d);
        lp.wv = randn<T>(d, d, kInitStd, rng);
        lp.bv = Mat<T>::Zero(1, d);
        lp.wo = randn<T>(d, d, res_std, rng);
        lp.bo = Mat<T>::Zero(1, d);
        lp.ln2_g = Mat<T>::Ones(1, d);
        lp.ln2_b = Mat<T>::Zero(1, d);
        lp.w1 = randn<T>(d, ff, kInitStd, rng);
        lp.b1 = Mat<T>::Zero(1, ff);
        lp.w2 = randn<T>(ff, d, res_std, rng);
        lp.b2 = Mat<T>::Zero(1, d);
    }
    p.lnf_g = Mat<T>::Ones(1, d);
    p.lnf_b = Mat<T>::Zero(1, d);
    p.w_head = randn<T>(d, v, kInitStd, rng);
    p.b_head = Mat<T>::Zero(1, v);
    return model;
}

template <typename T>
Mat<T> forward(const DenoiserModel<T>& model, const NoisedSequence& x_t) {
    ForwardCache<T> fc;
    run_forward(model, x_t, fc, /*keep_for_backward=*/false);
    return fc.raw_logits.topRows(x_t.size());
}

template <typename T>
Mat<T> forward_raw(const DenoiserModel<T>& model, const NoisedSequence& x_t) {
    ForwardCache<T> fc;
    run_forward(model, x_t, fc, /*keep_for_backward=*/false);
    return fc.raw_logits;
}

template <typename T>
double accumulate_grad(const DenoiserModel<T>& model, const NoisedSequence& x_t,
                       const LogitsObjective<T>& objective, ParamSet<T>& grad) {
    ForwardCache<T> fc;
    run_forward(model, x_t, fc, /*keep_for_backward=*/true);

    const std::int32_t len = x_t.size();
    Mat<T> logits = fc.raw_logits.topRows(len);
    Mat<T> dlogits = Mat<T>::Zero(len, model.config.vocab_size);
    const double loss = objective(logits, dlogits);
    if (!std::isfinite(loss)) {
        throw NonFiniteLoss("objective returned " + std::to_string(loss));
    }

    Mat<T> d_raw = Mat<T>::Zero(len + 1, model.config.vocab_size);
    d_raw.topRows(len) = dlogits;
    run_backward(model, fc, d_raw, grad);
    return loss;
}

template <typename T>
std::pair<double, ParamSet<T>> loss_and_grad(const DenoiserModel<T>& model,
                                             const NoisedSequence& x_t,
                                             const LogitsObjective<T>& objective) {
    ParamSet<T> grad = zeros_like(model.params);
    const double loss = accumulate_grad(model, x_t, objective, grad);
    return {loss, std::move(grad)};
}

#define DRIFTLAB_INSTANTIATE(T)                                                              \
    template std::vector<std::pair<std::string, Mat<T>*>> named_params<T>(ParamSet<T>&);     \
    template std::vector<std::pair<std::string, const Mat<T>*>> named_params<T>(             \
        const ParamSet<T>&);                                                                 \
    template ParamSet<T> zeros_like<T>(const ParamSet<T>&);                                  \
    template DenoiserModel<T> init_model<T>(const ModelConfig&, Rng&);                       \
    template Mat<T> forward<T>(const DenoiserModel<T>&, const NoisedSequence&);              \
    template Mat<T> forward_raw<T>(const DenoiserModel<T>&, const NoisedSequence&);          \
    template double accumulate_grad<T>(const DenoiserModel<T>&, const NoisedSequence&,       \
                                       const LogitsObjective<T>&, ParamSet<T>&);             \
    template std::pair<double, ParamSet<T>> loss_and_grad<T>(                                \
        const DenoiserModel<T>&, const NoisedSequence&, const LogitsObjective<T>&);

DRIFTLAB_INSTANTIATE(float)
DRIFTLAB_INSTANTIATE(double)

#undef DRIFTLAB_INSTANTIATE

}  // namespace driftlab
