#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difftsp/graph.hpp"

namespace difftsp {

struct ModelConfig {
    std::size_t n_rel = 0;
    std::size_t embed_dim = 16;  // a, must be even
    std::size_t n_dit = 3;
    std::size_t l_rce = 2;

    std::size_t channels() const { return n_rel + 1; }
};

// All learnable arrays. Matrices are row-major with rows = output dim, so
// y = W x. The same struct doubles as the gradient / optimizer-moment buffer.
struct DenoiserParams {
    ModelConfig cfg;

    std::vector<double> rel_embed;                // (2 n_rel) x a
    std::vector<std::vector<double>> rce_w;       // per layer: (2 n_rel) stacked a x a
    std::vector<std::vector<double>> rce_w0;      // per layer: a x a
    std::vector<double> edge_proj_w, edge_proj_b; // a x 2b, a
    std::vector<double> fuse_w, fuse_b;           // a x 2a, a
    std::vector<double> tm_w1, tm_b1;             // a x a, a
    std::vector<double> tm_w2, tm_b2;             // (n_dit*6*a) x a, n_dit*6*a

    struct Block {
        std::vector<double> wq, wk, wv, wo;       // a x a each
        std::vector<double> bias_r;               // b scalars, attention bias per channel
        std::vector<double> mlp_w1, mlp_b1;       // 4a x a, 4a
        std::vector<double> mlp_w2, mlp_b2;       // a x 4a, a
    };
    std::vector<Block> blocks;

    std::vector<double> dec_w1, dec_b1;           // 4a x 2a, 4a
    std::vector<double> dec_w2, dec_b2;           // b x 4a, b

    static DenoiserParams zeros(const ModelConfig& cfg);
    // Uniform(-1/sqrt(a), 1/sqrt(a)) matrices, zero biases; the time-MLP rows
    // feeding the adaLN gates start at zero so every block begins as identity.
    static DenoiserParams init(const ModelConfig& cfg, std::uint64_t seed);

    void set_zero();

    // Visits every parameter array as (name, values, shape).
    template <class F>
    void for_each(F&& f);
    template <class F>
    void for_each(F&& f) const;
};

struct DenoiserOutput {
    std::size_t n = 0;
    std::size_t channels = 0;
    std::vector<double> logits;  // n*n*b
    std::vector<double> probs;   // sigmoid(logits)

    double prob(std::size_t i, std::size_t j, std::size_t k) const {
        return probs[(i * n + j) * channels + k];
    }
};

// Activations retained between forward and backward.
struct ForwardCache;

// Union of edge sets over a shared entity list; no-edge channel recomputed.
AdjacencyState fuse_graphs(const AdjacencyState& support, const AdjacencyState& noisy_query);

// Dense adjacency for a triple list over an explicit entity list. Every
// endpoint must belong to the list.
AdjacencyState adjacency_from_triples(const std::vector<EntityId>& entity_list, std::size_t n_rel,
                                      const std::vector<Triple>& triples);

// h_i = mean of embeddings of adjacent relations (inverse embeddings for
// incoming edges); isolated entities get the zero vector.
std::vector<double> rce_init(const AdjacencyState& fused, const DenoiserParams& params);

std::vector<double> time_embedding(std::size_t t, std::size_t dim);

DenoiserOutput denoise_fused(const AdjacencyState& fused, std::size_t t,
                             const DenoiserParams& params, ForwardCache* cache = nullptr);

DenoiserOutput denoise(const AdjacencyState& noisy_query, const AdjacencyState& support,
                       std::size_t t, const DenoiserParams& params, ForwardCache* cache = nullptr);

// Analytic gradients for every parameter array given d(loss)/d(logits).
void backward(const DenoiserParams& params, const ForwardCache& cache,
              const std::vector<double>& dlogits, DenoiserParams& grads);

ForwardCache* new_forward_cache();
void free_forward_cache(ForwardCache*);

// RAII holder so call sites do not manage the opaque cache by hand.
class CacheHandle {
public:
    CacheHandle() : cache_(new_forward_cache()) {}
    ~CacheHandle() { free_forward_cache(cache_); }
    CacheHandle(const CacheHandle&) = delete;
    CacheHandle& operator=(const CacheHandle&) = delete;
    ForwardCache* get() { return cache_; }

private:
    ForwardCache* cache_;
};

// --- template definitions ---

namespace detail {
template <class P, class F>
void visit_params(P& p, F&& f) {
    const std::size_t a = p.cfg.embed_dim;
    const std::size_t nr = p.cfg.n_rel;
    const std::size_t b = p.cfg.channels();
    using Shape = std::vector<std::size_t>;
    f("rel_embed", p.rel_embed, Shape{2 * nr, a});
    for (std::size_t l = 0; l < p.rce_w.size(); ++l) {
        f("rce_w." + std::to_string(l), p.rce_w[l], Shape{2 * nr, a, a});
        f("rce_w0." + std::to_string(l), p.rce_w0[l], Shape{a, a});
    }
    f("edge_proj_w", p.edge_proj_w, Shape{a, 2 * b});
    f("edge_proj_b", p.edge_proj_b, Shape{a});
    f("fuse_w", p.fuse_w, Shape{a, 2 * a});
    f("fuse_b", p.fuse_b, Shape{a});
    f("tm_w1", p.tm_w1, Shape{a, a});
    f("tm_b1", p.tm_b1, Shape{a});
    f("tm_w2", p.tm_w2, Shape{p.cfg.n_dit * 6 * a, a});
    f("tm_b2", p.tm_b2, Shape{p.cfg.n_dit * 6 * a});
    for (std::size_t k = 0; k < p.blocks.size(); ++k) {
        auto& blk = p.blocks[k];
        const std::string pre = "block." + std::to_string(k) + ".";
        f(pre + "wq", blk.wq, Shape{a, a});
        f(pre + "wk", blk.wk, Shape{a, a});
        f(pre + "wv", blk.wv, Shape{a, a});
        f(pre + "wo", blk.wo, Shape{a, a});
        f(pre + "bias_r", blk.bias_r, Shape{b});
        f(pre + "mlp_w1", blk.mlp_w1, Shape{4 * a, a});
        f(pre + "mlp_b1", blk.mlp_b1, Shape{4 * a});
        f(pre + "mlp_w2", blk.mlp_w2, Shape{a, 4 * a});
        f(pre + "mlp_b2", blk.mlp_b2, Shape{a});
    }
    f("dec_w1", p.dec_w1, Shape{4 * a, 2 * a});
    f("dec_b1", p.dec_b1, Shape{4 * a});
    f("dec_w2", p.dec_w2, Shape{b, 4 * a});
    f("dec_b2", p.dec_b2, Shape{b});
}
}  // namespace detail

template <class F>
void DenoiserParams::for_each(F&& f) {
    detail::visit_params(*this, std::forward<F>(f));
}
template <class F>
void DenoiserParams::for_each(F&& f) const {
    detail::visit_params(*this, std::forward<F>(f));
}

}  // namespace difftsp
