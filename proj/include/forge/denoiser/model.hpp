#pragma once

// Toy diffusion transformer used for both conditioning layouts. Single-head
// pre-residual blocks (attention + tanh MLP), a learned positional table
// indexed by global token position, and a learned timestep direction. All
// gradients are hand-derived and checked against central differences
// in the test suite.

#include "forge/common/rng.hpp"
#include "forge/denoiser/sequence.hpp"
#include "forge/denoiser/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace forge::denoiser {

struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool trainable = true;
    bool adapter = false;

    std::size_t size() const { return value.size(); }
};

class ParamStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, bool adapter = false);

    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;

    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }

    void zero_grad();
    std::size_t trainable_count() const;
    std::vector<std::string> trainable_names() const;

private:
    std::vector<Param> params_;
};

/// y = x W^T + b, plus scale * (x A^T) B^T once an adapter is attached.
class Linear {
public:
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, std::size_t in, std::size_t out, SplitMix64& rng, bool bias = true);

    Matrix forward(ParamStore& ps, const Matrix& x);
    /// Accumulates parameter gradients and returns dL/dx.
    Matrix backward(ParamStore& ps, const Matrix& dy);

    /// Adapter pair down: in -> rank (A, random), up: rank -> out (B, zero).
    void attach_lora(ParamStore& ps, int rank, double alpha, SplitMix64& rng);
    bool has_lora() const { return lora_ >= 0; }

    std::size_t in() const { return in_; }
    std::size_t out() const { return out_; }
    std::string name() const { return name_; }
    std::size_t weight_index() const { return w_; }

private:
    std::string name_;
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    std::size_t w_ = 0;
    long b_ = -1;
    long lora_ = -1; // index of A; B follows
    int rank_ = 0;
    double scale_ = 0.0;
    Matrix x_cache_;
    Matrix xa_cache_;
};

struct ModelConfig {
    int token_width = 4;
    int hidden = 32;
    int depth = 2;
    int mlp_hidden = 64;
    int max_positions = 256;
    std::uint64_t seed = 1;
};

struct LoraConfig {
    int rank = 4;
    double alpha = 4.0; // scale = alpha / rank
};

/// Anything that predicts the velocity of the target segment.
class VelocityModel {
public:
    virtual ~VelocityModel() = default;
    /// Returns target-segment rows (length x width).
    virtual Matrix predict(const ConditionedSequence& seq, double t) = 0;
};

class ToyDiT : public VelocityModel {
public:
    explicit ToyDiT(const ModelConfig& cfg);

    /// Full-sequence output (tokens x token_width). Caches activations for
    /// backward.
    Matrix forward(const Matrix& tokens, double t);
    /// dL/d(output) for every row -> accumulates grads, returns dL/d(tokens).
    Matrix backward(const Matrix& d_out);

    Matrix predict(const ConditionedSequence& seq, double t) override;

    /// Freezes all base weights and attaches adapters to every attention
    /// and MLP matrix. Throws if rank exceeds the width of any target.
    void apply_lora(const LoraConfig& lc);
    /// Every base parameter trainable, no adapters.
    void enable_full_finetune();
    bool uses_lora() const { return lora_applied_; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }
    const LoraConfig& lora_config() const { return lora_cfg_; }

    /// Names of matrices that carry adapters.
    std::vector<std::string> adapted_matrices() const;

private:
    struct Block {
        Linear q, k, v, o, m1, m2;
        Matrix h_in, q_out, k_out, v_out, probs, h_mid, act;
    };

    std::vector<Linear*> adaptable();

    ModelConfig cfg_;
    ParamStore params_;
    Linear in_;
    std::size_t pos_ = 0;
    std::size_t time_ = 0;
    std::vector<Block> blocks_;
    Linear out_;
    bool lora_applied_ = false;
    LoraConfig lora_cfg_;
    double t_cache_ = 0.0;
    std::size_t n_cache_ = 0;
};

/// Adam (Kingma & Ba) over the trainable parameters.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(ParamStore& ps);
    double learning_rate() const { return lr_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

} // namespace forge::denoiser
