#include "forge/denoiser/model.hpp"
#include "forge/common/errors.hpp"
#include "forge/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace forge::denoiser {

using kernels::gemm;
using kernels::Trans;

// --- ParamStore ------------------------------------------------------------

std::size_t ParamStore::add(std::string name, std::vector<std::size_t> shape, bool adapter) {
    if (find(name)) throw ValidationError("duplicate parameter " + name);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    p.adapter = adapter;
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

Param* ParamStore::find(const std::string& name) {
    for (auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
    for (const auto& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::size_t ParamStore::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        if (p.trainable) n += p.size();
    }
    return n;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) {
        if (p.trainable) out.push_back(p.name);
    }
    return out;
}

// --- Linear ----------------------------------------------------------------

Linear::Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, SplitMix64& rng, bool bias)
    : name_(name), in_(in), out_(out) {
    w_ = ps.add(name + ".weight", {out, in});
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : ps[w_].value) v = s * rng.normal();
    if (bias) b_ = static_cast<long>(ps.add(name + ".bias", {out}));
}

void Linear::attach_lora(ParamStore& ps, int rank, double alpha, SplitMix64& rng) {
    if (rank < 1) throw ValidationError("lora: rank must be >= 1");
    if (static_cast<std::size_t>(rank) > std::min(in_, out_)) {
        throw ValidationError("lora: rank " + std::to_string(rank) + " exceeds width of " + name_);
    }
    if (has_lora()) throw ValidationError("lora: adapter already attached to " + name_);
    rank_ = rank;
    scale_ = alpha / rank;
    const auto a = ps.add(name_ + ".lora_down", {static_cast<std::size_t>(rank), in_}, true);
    ps.add(name_ + ".lora_up", {out_, static_cast<std::size_t>(rank)}, true);
    const double s = 1.0 / std::sqrt(static_cast<double>(in_));
    for (auto& v : ps[a].value) v = s * rng.normal();
    lora_ = static_cast<long>(a);
}

Matrix Linear::forward(ParamStore& ps, const Matrix& x) {
    if (x.cols != in_) throw ValidationError(name_ + ": input width mismatch");
    x_cache_ = x;
    Matrix y(x.rows, out_);
    gemm(Trans::No, Trans::Yes, x.rows, out_, in_, 1.0, x.data, ps[w_].value, 0.0, y.data);
    if (b_ >= 0) {
        const auto& b = ps[static_cast<std::size_t>(b_)].value;
        for (std::size_t r = 0; r < y.rows; ++r)
            for (std::size_t c = 0; c < out_; ++c) y(r, c) += b[c];
    }
    if (has_lora()) {
        const auto& a = ps[static_cast<std::size_t>(lora_)].value;
        const auto& up = ps[static_cast<std::size_t>(lora_) + 1].value;
        const auto r = static_cast<std::size_t>(rank_);
        xa_cache_ = Matrix(x.rows, r);
        gemm(Trans::No, Trans::Yes, x.rows, r, in_, 1.0, x.data, a, 0.0, xa_cache_.data);
        Matrix delta(x.rows, out_);
        gemm(Trans::No, Trans::Yes, x.rows, out_, r, scale_, xa_cache_.data, up, 0.0, delta.data);
        // Skipping exact zeros keeps a fresh adapter bitwise inert (no -0 -> +0).
        for (std::size_t i = 0; i < y.data.size(); ++i) {
            if (delta.data[i] != 0.0) y.data[i] += delta.data[i];
        }
    }
    return y;
}

Matrix Linear::backward(ParamStore& ps, const Matrix& dy) {
    const Matrix& x = x_cache_;
    auto& w = ps[w_];
    if (w.trainable) gemm(Trans::Yes, Trans::No, out_, in_, dy.rows, 1.0, dy.data, x.data, 1.0, w.grad);
    if (b_ >= 0) {
        auto& b = ps[static_cast<std::size_t>(b_)];
        if (b.trainable) {
            for (std::size_t r = 0; r < dy.rows; ++r)
                for (std::size_t c = 0; c < out_; ++c) b.grad[c] += dy(r, c);
        }
    }
    Matrix dx(dy.rows, in_);
    gemm(Trans::No, Trans::No, dy.rows, in_, out_, 1.0, dy.data, w.value, 0.0, dx.data);
    if (has_lora()) {
        auto& a = ps[static_cast<std::size_t>(lora_)];
        auto& up = ps[static_cast<std::size_t>(lora_) + 1];
        const auto r = static_cast<std::size_t>(rank_);
        if (up.trainable) gemm(Trans::Yes, Trans::No, out_, r, dy.rows, scale_, dy.data, xa_cache_.data, 1.0, up.grad);
        Matrix dxa(dy.rows, r);
        gemm(Trans::No, Trans::No, dy.rows, r, out_, scale_, dy.data, up.value, 0.0, dxa.data);
        if (a.trainable) gemm(Trans::Yes, Trans::No, r, in_, dy.rows, 1.0, dxa.data, x.data, 1.0, a.grad);
        gemm(Trans::No, Trans::No, dy.rows, in_, r, 1.0, dxa.data, a.value, 1.0, dx.data);
    }
    return dx;
}

// --- ToyDiT ----------------------------------------------------------------

ToyDiT::ToyDiT(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.token_width < 1 || cfg.hidden < 1 || cfg.depth < 0 || cfg.mlp_hidden < 1 || cfg.max_positions < 1) {
        throw ValidationError("toy dit: invalid configuration");
    }
    SplitMix64 rng(cfg.seed);
    const auto w = static_cast<std::size_t>(cfg.token_width);
    const auto d = static_cast<std::size_t>(cfg.hidden);
    const auto m = static_cast<std::size_t>(cfg.mlp_hidden);
    in_ = Linear(params_, "embed", w, d, rng);
    pos_ = params_.add("pos_table", {static_cast<std::size_t>(cfg.max_positions), d});
    for (auto& v : params_[pos_].value) v = 0.1 * rng.normal();
    time_ = params_.add("time_dir", {d});
    for (auto& v : params_[time_].value) v = 0.5 * rng.normal();
    blocks_.resize(static_cast<std::size_t>(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string p = "block" + std::to_string(i) + ".";
        auto& b = blocks_[static_cast<std::size_t>(i)];
        b.q = Linear(params_, p + "attn.q", d, d, rng, false);
        b.k = Linear(params_, p + "attn.k", d, d, rng, false);
        b.v = Linear(params_, p + "attn.v", d, d, rng, false);
        b.o = Linear(params_, p + "attn.o", d, d, rng);
        b.m1 = Linear(params_, p + "mlp.in", d, m, rng);
        b.m2 = Linear(params_, p + "mlp.out", m, d, rng);
    }
    out_ = Linear(params_, "head", d, w, rng);
}

Matrix ToyDiT::forward(const Matrix& tokens, double t) {
    const std::size_t n = tokens.rows;
    if (tokens.cols != static_cast<std::size_t>(cfg_.token_width)) {
        throw ValidationError("toy dit: sequence width " + std::to_string(tokens.cols) + " != model width " +
                              std::to_string(cfg_.token_width));
    }
    if (n > static_cast<std::size_t>(cfg_.max_positions)) throw ValidationError("toy dit: sequence too long");
    t_cache_ = t;
    n_cache_ = n;
    const auto d = static_cast<std::size_t>(cfg_.hidden);

    Matrix h = in_.forward(params_, tokens);
    const auto& pos = params_[pos_].value;
    const auto& tdir = params_[time_].value;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) h(r, c) += pos[r * d + c] + t * tdir[c];

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& b : blocks_) {
        b.h_in = h;
        b.q_out = b.q.forward(params_, h);
        b.k_out = b.k.forward(params_, h);
        b.v_out = b.v.forward(params_, h);
        Matrix scores(n, n);
        gemm(Trans::No, Trans::Yes, n, n, d, inv_sqrt_d, b.q_out.data, b.k_out.data, 0.0, scores.data);
        for (std::size_t r = 0; r < n; ++r) {
            auto row = scores.row(r);
            const double mx = *std::max_element(row.begin(), row.end());
            double sum = 0.0;
            for (auto& v : row) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (auto& v : row) v /= sum;
        }
        b.probs = std::move(scores);
        Matrix mixed(n, d);
        gemm(Trans::No, Trans::No, n, d, n, 1.0, b.probs.data, b.v_out.data, 0.0, mixed.data);
        Matrix attn = b.o.forward(params_, mixed);
        for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += attn.data[i];

        b.h_mid = h;
        b.act = b.m1.forward(params_, h);
        for (auto& v : b.act.data) v = std::tanh(v);
        Matrix mlp = b.m2.forward(params_, b.act);
        for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += mlp.data[i];
    }
    return out_.forward(params_, h);
}

Matrix ToyDiT::backward(const Matrix& d_out) {
    const std::size_t n = n_cache_;
    const auto d = static_cast<std::size_t>(cfg_.hidden);
    Matrix dh = out_.backward(params_, d_out);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
        auto& b = *it;
        // MLP residual.
        Matrix dact = b.m2.backward(params_, dh);
        for (std::size_t i = 0; i < dact.data.size(); ++i) dact.data[i] *= 1.0 - b.act.data[i] * b.act.data[i];
        Matrix dmid = b.m1.backward(params_, dact);
        for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dmid.data[i];

        // Attention residual.
        Matrix dmixed = b.o.backward(params_, dh);
        Matrix dprobs(n, n);
        gemm(Trans::No, Trans::Yes, n, n, d, 1.0, dmixed.data, b.v_out.data, 0.0, dprobs.data);
        Matrix dv(n, d);
        gemm(Trans::Yes, Trans::No, n, d, n, 1.0, b.probs.data, dmixed.data, 0.0, dv.data);
        Matrix dscores(n, n);
        for (std::size_t r = 0; r < n; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < n; ++c) dot += b.probs(r, c) * dprobs(r, c);
            for (std::size_t c = 0; c < n; ++c) dscores(r, c) = b.probs(r, c) * (dprobs(r, c) - dot);
        }
        Matrix dq(n, d);
        gemm(Trans::No, Trans::No, n, d, n, inv_sqrt_d, dscores.data, b.k_out.data, 0.0, dq.data);
        Matrix dk(n, d);
        gemm(Trans::Yes, Trans::No, n, d, n, inv_sqrt_d, dscores.data, b.q_out.data, 0.0, dk.data);
        Matrix dhq = b.q.backward(params_, dq);
        Matrix dhk = b.k.backward(params_, dk);
        Matrix dhv = b.v.backward(params_, dv);
        for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dhq.data[i] + dhk.data[i] + dhv.data[i];
    }

    auto& pos = params_[pos_];
    auto& tdir = params_[time_];
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            if (pos.trainable) pos.grad[r * d + c] += dh(r, c);
            if (tdir.trainable) tdir.grad[c] += t_cache_ * dh(r, c);
        }
    }
    return in_.backward(params_, dh);
}

Matrix ToyDiT::predict(const ConditionedSequence& seq, double t) {
    const Matrix full = forward(seq.tokens, t);
    const auto& s = seq.layout.find(seq.target_segment);
    return slice_rows(full, s.offset, s.length);
}

std::vector<Linear*> ToyDiT::adaptable() {
    std::vector<Linear*> out;
    for (auto& b : blocks_) {
        for (Linear* l : {&b.q, &b.k, &b.v, &b.o, &b.m1, &b.m2}) out.push_back(l);
    }
    return out;
}

void ToyDiT::apply_lora(const LoraConfig& lc) {
    if (lora_applied_) throw ValidationError("lora already applied");
    if (lc.rank < 1) throw ValidationError("lora: rank must be >= 1");
    for (Linear* l : adaptable()) {
        if (static_cast<std::size_t>(lc.rank) > std::min(l->in(), l->out())) {
            throw ValidationError("lora: rank " + std::to_string(lc.rank) + " exceeds width of " + l->name());
        }
    }
    SplitMix64 rng(derive_seed(cfg_.seed, 0x10a));
    for (auto& p : params_.all()) p.trainable = false;
    for (Linear* l : adaptable()) l->attach_lora(params_, lc.rank, lc.alpha, rng);
    for (auto& p : params_.all()) {
        if (p.adapter) p.trainable = true;
    }
    lora_applied_ = true;
    lora_cfg_ = lc;
}

void ToyDiT::enable_full_finetune() {
    if (lora_applied_) throw ValidationError("full fine-tune requested on an adapted model");
    for (auto& p : params_.all()) p.trainable = true;
}

std::vector<std::string> ToyDiT::adapted_matrices() const {
    std::vector<std::string> out;
    for (const auto& p : params_.all()) {
        const std::string suffix = ".lora_down";
        if (p.adapter && p.name.size() > suffix.size() &&
            p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            out.push_back(p.name.substr(0, p.name.size() - suffix.size()));
        }
    }
    return out;
}

// --- Adam ------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (!(lr >= 0.0)) throw ValidationError("adam: learning rate must be >= 0");
}

void Adam::step(ParamStore& ps) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (auto& p : ps.all()) {
        if (!p.trainable) continue;
        auto& [m, v] = moments_[p.name];
        if (m.size() != p.size()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i];
            m[i] = b1_ * m[i] + (1.0 - b1_) * g;
            v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
            if (lr_ != 0.0) p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

} // namespace forge::denoiser
