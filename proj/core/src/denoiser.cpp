#include "difftsp/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "difftsp/errors.hpp"
#include "difftsp/rng.hpp"

namespace difftsp {

namespace {

// y (+)= W x, W row-major (rows x cols)
void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y,
            bool accumulate) {
    for (std::size_t r = 0; r < rows; ++r) {
        double s = accumulate ? y[r] : 0.0;
        const double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) s += wr[c] * x[c];
        y[r] = s;
    }
}

// y += W^T x  (x has `rows` entries, y has `cols`)
void matvec_t(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        const double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) y[c] += xr * wr[c];
    }
}

// W += scale * (x outer y):  W[r][c] += scale * x[r] * y[c]
void outer_acc(double* w, std::size_t rows, std::size_t cols, const double* x, const double* y,
               double scale = 1.0) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double xr = scale * x[r];
        if (xr == 0.0) continue;
        double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) wr[c] += xr * y[c];
    }
}

constexpr double kLnEps = 1e-6;

}  // namespace

DenoiserParams DenoiserParams::zeros(const ModelConfig& cfg) {
    DenoiserParams p;
    p.cfg = cfg;
    const std::size_t a = cfg.embed_dim;
    const std::size_t nr = cfg.n_rel;
    const std::size_t b = cfg.channels();
    p.rel_embed.assign(2 * nr * a, 0.0);
    p.rce_w.assign(cfg.l_rce, std::vector<double>(2 * nr * a * a, 0.0));
    p.rce_w0.assign(cfg.l_rce, std::vector<double>(a * a, 0.0));
    p.edge_proj_w.assign(a * 2 * b, 0.0);
    p.edge_proj_b.assign(a, 0.0);
    p.fuse_w.assign(a * 2 * a, 0.0);
    p.fuse_b.assign(a, 0.0);
    p.tm_w1.assign(a * a, 0.0);
    p.tm_b1.assign(a, 0.0);
    p.tm_w2.assign(cfg.n_dit * 6 * a * a, 0.0);
    p.tm_b2.assign(cfg.n_dit * 6 * a, 0.0);
    p.blocks.resize(cfg.n_dit);
    for (auto& blk : p.blocks) {
        blk.wq.assign(a * a, 0.0);
        blk.wk.assign(a * a, 0.0);
        blk.wv.assign(a * a, 0.0);
        blk.wo.assign(a * a, 0.0);
        blk.bias_r.assign(b, 0.0);
        blk.mlp_w1.assign(4 * a * a, 0.0);
        blk.mlp_b1.assign(4 * a, 0.0);
        blk.mlp_w2.assign(a * 4 * a, 0.0);
        blk.mlp_b2.assign(a, 0.0);
    }
    p.dec_w1.assign(4 * a * 2 * a, 0.0);
    p.dec_b1.assign(4 * a, 0.0);
    p.dec_w2.assign(b * 4 * a, 0.0);
    p.dec_b2.assign(b, 0.0);
    return p;
}

DenoiserParams DenoiserParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    DenoiserParams p = zeros(cfg);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    p.for_each([&](const std::string& name, std::vector<double>& v,
                   const std::vector<std::size_t>& shape) {
        if (shape.size() < 2) return;  // biases stay zero
        for (double& x : v) x = dist(rng);
        if (name == "tm_w2") {
            // zero the rows producing the gates so blocks start as identity
            const std::size_t a = cfg.embed_dim;
            for (std::size_t k = 0; k < cfg.n_dit; ++k) {
                for (std::size_t sub = 0; sub < 2; ++sub) {
                    std::size_t gate_row0 = ((k * 2 + sub) * 3 + 2) * a;
                    std::fill(v.begin() + gate_row0 * a, v.begin() + (gate_row0 + a) * a, 0.0);
                }
            }
        }
    });
    return p;
}

void DenoiserParams::set_zero() {
    for_each([](const std::string&, std::vector<double>& v, const std::vector<std::size_t>&) {
        std::fill(v.begin(), v.end(), 0.0);
    });
}

AdjacencyState fuse_graphs(const AdjacencyState& support, const AdjacencyState& noisy_query) {
    if (support.entity_list != noisy_query.entity_list || support.n_rel != noisy_query.n_rel)
        throw IncompatibleGraphs("support and query adjacency must share the entity list");
    AdjacencyState fused = noisy_query;
    const std::size_t n = fused.n();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < fused.n_rel; ++k)
                if (support.at(i, j, k)) fused.set(i, j, k, 1);
    fused.refresh_no_edge();
    return fused;
}

AdjacencyState adjacency_from_triples(const std::vector<EntityId>& entity_list, std::size_t n_rel,
                                      const std::vector<Triple>& triples) {
    std::unordered_map<EntityId, std::size_t> pos;
    for (std::size_t i = 0; i < entity_list.size(); ++i) {
        if (!pos.emplace(entity_list[i], i).second)
            throw InvalidSubset("duplicate entity in entity_list");
    }
    AdjacencyState adj;
    adj.entity_list = entity_list;
    adj.n_rel = n_rel;
    adj.cells.assign(entity_list.size() * entity_list.size() * adj.channels(), 0);
    for (const Triple& t : triples) {
        auto hi = pos.find(t.head);
        auto ti = pos.find(t.tail);
        if (hi == pos.end() || ti == pos.end())
            throw InvalidSubset("triple endpoint outside entity_list");
        adj.set(hi->second, ti->second, t.relation, 1);
    }
    adj.refresh_no_edge();
    return adj;
}

std::vector<double> time_embedding(std::size_t t, std::size_t dim) {
    if (dim % 2 != 0) throw InvalidDim("embedding dimension must be even");
    std::vector<double> tau(dim);
    for (std::size_t m = 0; 2 * m < dim; ++m) {
        double freq = std::pow(10000.0, -static_cast<double>(2 * m) / static_cast<double>(dim));
        tau[2 * m] = std::sin(static_cast<double>(t) * freq);
        tau[2 * m + 1] = std::cos(static_cast<double>(t) * freq);
    }
    return tau;
}

struct ForwardCache {
    ModelConfig cfg;
    std::size_t n = 0;
    std::size_t t = 0;
    std::vector<std::uint8_t> F;  // fused occupancy n*n*b

    struct Edge { std::uint32_t i, j, r; };
    std::vector<Edge> edges;              // real-channel present cells
    std::vector<double> c_out, c_in;      // n*nr neighbor counts
    std::vector<double> deg;              // total degree per entity

    std::vector<std::vector<double>> rce_h;   // L+1 of n*a (rce_h[0] = init)
    std::vector<std::vector<double>> rce_pre; // L of n*a pre-activations

    std::vector<double> e_feat;  // n * 2b
    std::vector<double> e_proj;  // n * a
    std::vector<double> z;       // n * a, transformer input

    std::vector<double> tau, tm_pre, tm_hidden, cond;

    struct BlockCache {
        std::vector<double> h_in;               // n*a
        std::vector<double> q, k, v;            // n*a
        std::vector<double> attn;               // n*n softmax weights
        std::vector<double> ctx;                // n*a
        std::vector<double> y;                  // n*a attention output
        std::vector<double> ln1, ln2;           // n*a normalized rows
        std::vector<double> invstd1, invstd2;   // n
        std::vector<double> h_mid;              // n*a
        std::vector<double> mlp_pre;            // n*4a
        std::vector<double> mlp_out;            // n*a
        std::vector<double> h_out;              // n*a
    };
    std::vector<BlockCache> blocks;

    std::vector<double> logits;  // n*n*b
};

ForwardCache* new_forward_cache() { return new ForwardCache(); }
void free_forward_cache(ForwardCache* c) { delete c; }

std::vector<double> rce_init(const AdjacencyState& fused, const DenoiserParams& params) {
    const std::size_t n = fused.n();
    const std::size_t a = params.cfg.embed_dim;
    const std::size_t nr = params.cfg.n_rel;
    std::vector<double> h(n * a, 0.0);
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < nr; ++k) {
                if (!fused.at(i, j, k)) continue;
                for (std::size_t d = 0; d < a; ++d) {
                    h[i * a + d] += params.rel_embed[k * a + d];
                    h[j * a + d] += params.rel_embed[(nr + k) * a + d];
                }
                deg[i] += 1.0;
                deg[j] += 1.0;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (deg[i] == 0.0) continue;
        for (std::size_t d = 0; d < a; ++d) h[i * a + d] /= deg[i];
    }
    return h;
}

namespace {

// normalized = (x - mean) / sqrt(var + eps), per row; returns 1/sqrt(var+eps)
double layernorm_row(const double* x, std::size_t a, double* out) {
    double mean = 0.0;
    for (std::size_t d = 0; d < a; ++d) mean += x[d];
    mean /= static_cast<double>(a);
    double var = 0.0;
    for (std::size_t d = 0; d < a; ++d) {
        double c = x[d] - mean;
        var += c * c;
    }
    var /= static_cast<double>(a);
    double invstd = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t d = 0; d < a; ++d) out[d] = (x[d] - mean) * invstd;
    return invstd;
}

// dX for y = (x - mean)/std given dY, normalized rows y and invstd.
void layernorm_backward_row(const double* dy, const double* y, double invstd, std::size_t a,
                            double* dx_acc) {
    double mean_dy = 0.0, mean_dyy = 0.0;
    for (std::size_t d = 0; d < a; ++d) {
        mean_dy += dy[d];
        mean_dyy += dy[d] * y[d];
    }
    mean_dy /= static_cast<double>(a);
    mean_dyy /= static_cast<double>(a);
    for (std::size_t d = 0; d < a; ++d)
        dx_acc[d] += invstd * (dy[d] - mean_dy - y[d] * mean_dyy);
}

}  // namespace

DenoiserOutput denoise_fused(const AdjacencyState& fused, std::size_t t,
                             const DenoiserParams& params, ForwardCache* cache) {
    CacheHandle local;
    ForwardCache& c = cache ? *cache : *local.get();
    const ModelConfig& cfg = params.cfg;
    const std::size_t n = fused.n();
    const std::size_t a = cfg.embed_dim;
    const std::size_t nr = cfg.n_rel;
    const std::size_t b = cfg.channels();
    const std::size_t L = cfg.l_rce;
    const std::size_t K = cfg.n_dit;

    c = ForwardCache{};
    c.cfg = cfg;
    c.n = n;
    c.t = t;
    c.F = fused.cells;

    // Edge structure of the fused graph.
    c.c_out.assign(n * nr, 0.0);
    c.c_in.assign(n * nr, 0.0);
    c.deg.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < nr; ++k)
                if (fused.at(i, j, k)) {
                    c.edges.push_back({static_cast<std::uint32_t>(i),
                                       static_cast<std::uint32_t>(j),
                                       static_cast<std::uint32_t>(k)});
                    c.c_out[i * nr + k] += 1.0;
                    c.c_in[j * nr + k] += 1.0;
                    c.deg[i] += 1.0;
                    c.deg[j] += 1.0;
                }

    // RCE: degree-averaged relation embeddings, then relational message passing.
    c.rce_h.resize(L + 1);
    c.rce_pre.resize(L);
    c.rce_h[0] = rce_init(fused, params);
    for (std::size_t l = 0; l < L; ++l) {
        const std::vector<double>& hin = c.rce_h[l];
        std::vector<double>& pre = c.rce_pre[l];
        pre.assign(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            matvec(params.rce_w0[l].data(), a, a, hin.data() + i * a, pre.data() + i * a, true);
        for (const auto& e : c.edges) {
            const double* w_fwd = params.rce_w[l].data() + e.r * a * a;
            const double* w_bwd = params.rce_w[l].data() + (nr + e.r) * a * a;
            double co = 1.0 / c.c_out[e.i * nr + e.r];
            double ci = 1.0 / c.c_in[e.j * nr + e.r];
            // forward message j -> i under r, inverse message i -> j under r^-1
            for (std::size_t row = 0; row < a; ++row) {
                double sf = 0.0, sb = 0.0;
                for (std::size_t col = 0; col < a; ++col) {
                    sf += w_fwd[row * a + col] * hin[e.j * a + col];
                    sb += w_bwd[row * a + col] * hin[e.i * a + col];
                }
                pre[e.i * a + row] += co * sf;
                pre[e.j * a + row] += ci * sb;
            }
        }
        std::vector<double>& hout = c.rce_h[l + 1];
        hout.resize(n * a);
        for (std::size_t idx = 0; idx < n * a; ++idx) hout[idx] = std::max(0.0, pre[idx]);
    }

    // Node-level edge features: mean multi-hot of outgoing and incoming cells.
    c.e_feat.assign(n * 2 * b, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < b; ++k) {
                c.e_feat[i * 2 * b + k] += inv_n * fused.at(i, j, k);
                c.e_feat[i * 2 * b + b + k] += inv_n * fused.at(j, i, k);
            }
    c.e_proj.assign(n * a, 0.0);
    c.z.assign(n * a, 0.0);
    std::vector<double> cat(2 * a);
    for (std::size_t i = 0; i < n; ++i) {
        double* ep = c.e_proj.data() + i * a;
        std::copy(params.edge_proj_b.begin(), params.edge_proj_b.end(), ep);
        matvec(params.edge_proj_w.data(), a, 2 * b, c.e_feat.data() + i * 2 * b, ep, true);
        std::copy(c.rce_h[L].begin() + i * a, c.rce_h[L].begin() + (i + 1) * a, cat.begin());
        std::copy(ep, ep + a, cat.begin() + a);
        double* zi = c.z.data() + i * a;
        std::copy(params.fuse_b.begin(), params.fuse_b.end(), zi);
        matvec(params.fuse_w.data(), a, 2 * a, cat.data(), zi, true);
    }

    // Time conditioning: sinusoid -> MLP -> per-block (scale, shift, gate).
    c.tau = time_embedding(t, a);
    c.tm_pre.assign(a, 0.0);
    std::copy(params.tm_b1.begin(), params.tm_b1.end(), c.tm_pre.begin());
    matvec(params.tm_w1.data(), a, a, c.tau.data(), c.tm_pre.data(), true);
    c.tm_hidden.resize(a);
    for (std::size_t d = 0; d < a; ++d) c.tm_hidden[d] = std::max(0.0, c.tm_pre[d]);
    c.cond.assign(K * 6 * a, 0.0);
    std::copy(params.tm_b2.begin(), params.tm_b2.end(), c.cond.begin());
    matvec(params.tm_w2.data(), K * 6 * a, a, c.tm_hidden.data(), c.cond.data(), true);

    const double inv_sqrt_a = 1.0 / std::sqrt(static_cast<double>(a));

    // RelDiT blocks.
    c.blocks.resize(K);
    const std::vector<double>* h_cur = &c.z;
    for (std::size_t kblk = 0; kblk < K; ++kblk) {
        auto& bc = c.blocks[kblk];
        const auto& blk = params.blocks[kblk];
        const double* scale1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 0) * a;
        const double* shift1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 1) * a;
        const double* gate1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 2) * a;
        const double* scale2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 0) * a;
        const double* shift2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 1) * a;
        const double* gate2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 2) * a;

        bc.h_in = *h_cur;
        bc.q.assign(n * a, 0.0);
        bc.k.assign(n * a, 0.0);
        bc.v.assign(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            matvec(blk.wq.data(), a, a, bc.h_in.data() + i * a, bc.q.data() + i * a, false);
            matvec(blk.wk.data(), a, a, bc.h_in.data() + i * a, bc.k.data() + i * a, false);
            matvec(blk.wv.data(), a, a, bc.h_in.data() + i * a, bc.v.data() + i * a, false);
        }
        // Attention with relation-aware scalar bias from the fused occupancy.
        bc.attn.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double maxs = -1e300;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t d = 0; d < a; ++d) s += bc.q[i * a + d] * bc.k[j * a + d];
                s *= inv_sqrt_a;
                for (std::size_t ch = 0; ch < b; ++ch)
                    if (c.F[(i * n + j) * b + ch]) s += blk.bias_r[ch];
                bc.attn[i * n + j] = s;
                maxs = std::max(maxs, s);
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double e = std::exp(bc.attn[i * n + j] - maxs);
                bc.attn[i * n + j] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < n; ++j) bc.attn[i * n + j] /= sum;
        }
        bc.ctx.assign(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double w = bc.attn[i * n + j];
                if (w == 0.0) continue;
                for (std::size_t d = 0; d < a; ++d) bc.ctx[i * a + d] += w * bc.v[j * a + d];
            }
        bc.y.assign(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            matvec(blk.wo.data(), a, a, bc.ctx.data() + i * a, bc.y.data() + i * a, false);

        // Residual sub-layer 1: adaLN over the attention output.
        bc.ln1.assign(n * a, 0.0);
        bc.invstd1.resize(n);
        bc.h_mid.resize(n * a);
        for (std::size_t i = 0; i < n; ++i) {
            bc.invstd1[i] = layernorm_row(bc.y.data() + i * a, a, bc.ln1.data() + i * a);
            for (std::size_t d = 0; d < a; ++d)
                bc.h_mid[i * a + d] = bc.h_in[i * a + d] +
                                      gate1[d] * (scale1[d] * bc.ln1[i * a + d] + shift1[d]);
        }

        // Residual sub-layer 2: adaLN over the MLP output.
        bc.mlp_pre.assign(n * 4 * a, 0.0);
        bc.mlp_out.assign(n * a, 0.0);
        bc.ln2.assign(n * a, 0.0);
        bc.invstd2.resize(n);
        bc.h_out.resize(n * a);
        std::vector<double> hidden(4 * a);
        for (std::size_t i = 0; i < n; ++i) {
            double* mp = bc.mlp_pre.data() + i * 4 * a;
            std::copy(blk.mlp_b1.begin(), blk.mlp_b1.end(), mp);
            matvec(blk.mlp_w1.data(), 4 * a, a, bc.h_mid.data() + i * a, mp, true);
            for (std::size_t d = 0; d < 4 * a; ++d) hidden[d] = std::max(0.0, mp[d]);
            double* mo = bc.mlp_out.data() + i * a;
            std::copy(blk.mlp_b2.begin(), blk.mlp_b2.end(), mo);
            matvec(blk.mlp_w2.data(), a, 4 * a, hidden.data(), mo, true);
            bc.invstd2[i] = layernorm_row(mo, a, bc.ln2.data() + i * a);
            for (std::size_t d = 0; d < a; ++d)
                bc.h_out[i * a + d] = bc.h_mid[i * a + d] +
                                      gate2[d] * (scale2[d] * bc.ln2[i * a + d] + shift2[d]);
        }
        h_cur = &bc.h_out;
    }

    // Pairwise decoder over concatenated node features.
    const std::vector<double>& hf = *h_cur;
    c.logits.assign(n * n * b, 0.0);
    std::vector<double> pair(2 * a), hidden(4 * a);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::copy(hf.begin() + i * a, hf.begin() + (i + 1) * a, pair.begin());
            std::copy(hf.begin() + j * a, hf.begin() + (j + 1) * a, pair.begin() + a);
            std::copy(params.dec_b1.begin(), params.dec_b1.end(), hidden.begin());
            matvec(params.dec_w1.data(), 4 * a, 2 * a, pair.data(), hidden.data(), true);
            for (double& x : hidden) x = std::max(0.0, x);
            double* lg = c.logits.data() + (i * n + j) * b;
            std::copy(params.dec_b2.begin(), params.dec_b2.end(), lg);
            matvec(params.dec_w2.data(), b, 4 * a, hidden.data(), lg, true);
        }
    }

    DenoiserOutput out;
    out.n = n;
    out.channels = b;
    out.logits = c.logits;
    out.probs.resize(out.logits.size());
    for (std::size_t idx = 0; idx < out.logits.size(); ++idx)
        out.probs[idx] = 1.0 / (1.0 + std::exp(-out.logits[idx]));
    return out;
}

DenoiserOutput denoise(const AdjacencyState& noisy_query, const AdjacencyState& support,
                       std::size_t t, const DenoiserParams& params, ForwardCache* cache) {
    return denoise_fused(fuse_graphs(support, noisy_query), t, params, cache);
}

void backward(const DenoiserParams& params, const ForwardCache& c,
              const std::vector<double>& dlogits, DenoiserParams& grads) {
    const ModelConfig& cfg = c.cfg;
    const std::size_t n = c.n;
    const std::size_t a = cfg.embed_dim;
    const std::size_t nr = cfg.n_rel;
    const std::size_t b = cfg.channels();
    const std::size_t L = cfg.l_rce;
    const std::size_t K = cfg.n_dit;
    const double inv_sqrt_a = 1.0 / std::sqrt(static_cast<double>(a));

    const std::vector<double>& hf = K > 0 ? c.blocks.back().h_out : c.z;
    std::vector<double> dh(n * a, 0.0);

    // Decoder backward; the per-pair hidden layer is recomputed to keep the
    // cache quadratic rather than cubic in n.
    {
        std::vector<double> pair(2 * a), pre(4 * a), hidden(4 * a), dhid(4 * a), dpre(4 * a),
            dpair(2 * a);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                std::copy(hf.begin() + i * a, hf.begin() + (i + 1) * a, pair.begin());
                std::copy(hf.begin() + j * a, hf.begin() + (j + 1) * a, pair.begin() + a);
                std::copy(params.dec_b1.begin(), params.dec_b1.end(), pre.begin());
                matvec(params.dec_w1.data(), 4 * a, 2 * a, pair.data(), pre.data(), true);
                for (std::size_t d = 0; d < 4 * a; ++d) hidden[d] = std::max(0.0, pre[d]);

                const double* dlg = dlogits.data() + (i * n + j) * b;
                outer_acc(grads.dec_w2.data(), b, 4 * a, dlg, hidden.data());
                for (std::size_t ch = 0; ch < b; ++ch) grads.dec_b2[ch] += dlg[ch];
                std::fill(dhid.begin(), dhid.end(), 0.0);
                matvec_t(params.dec_w2.data(), b, 4 * a, dlg, dhid.data());
                for (std::size_t d = 0; d < 4 * a; ++d)
                    dpre[d] = pre[d] > 0.0 ? dhid[d] : 0.0;
                outer_acc(grads.dec_w1.data(), 4 * a, 2 * a, dpre.data(), pair.data());
                for (std::size_t d = 0; d < 4 * a; ++d) grads.dec_b1[d] += dpre[d];
                std::fill(dpair.begin(), dpair.end(), 0.0);
                matvec_t(params.dec_w1.data(), 4 * a, 2 * a, dpre.data(), dpair.data());
                for (std::size_t d = 0; d < a; ++d) {
                    dh[i * a + d] += dpair[d];
                    dh[j * a + d] += dpair[a + d];
                }
            }
        }
    }

    std::vector<double> dcond(K * 6 * a, 0.0);

    // Blocks in reverse.
    for (std::size_t kblk = K; kblk-- > 0;) {
        const auto& bc = c.blocks[kblk];
        const auto& blk = params.blocks[kblk];
        auto& gblk = grads.blocks[kblk];
        const double* scale1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 0) * a;
        const double* shift1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 1) * a;
        const double* gate1 = c.cond.data() + ((kblk * 2 + 0) * 3 + 2) * a;
        const double* scale2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 0) * a;
        const double* shift2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 1) * a;
        const double* gate2 = c.cond.data() + ((kblk * 2 + 1) * 3 + 2) * a;
        double* dscale1 = dcond.data() + ((kblk * 2 + 0) * 3 + 0) * a;
        double* dshift1 = dcond.data() + ((kblk * 2 + 0) * 3 + 1) * a;
        double* dgate1 = dcond.data() + ((kblk * 2 + 0) * 3 + 2) * a;
        double* dscale2 = dcond.data() + ((kblk * 2 + 1) * 3 + 0) * a;
        double* dshift2 = dcond.data() + ((kblk * 2 + 1) * 3 + 1) * a;
        double* dgate2 = dcond.data() + ((kblk * 2 + 1) * 3 + 2) * a;

        // dh currently holds d(h_out). Sub-layer 2 backward.
        std::vector<double> dh_mid = dh;  // residual path
        {
            std::vector<double> dln2(a), dmo(a), dhid(4 * a), dpre(4 * a), hidden(4 * a);
            for (std::size_t i = 0; i < n; ++i) {
                const double* dout = dh.data() + i * a;
                const double* ln2 = bc.ln2.data() + i * a;
                for (std::size_t d = 0; d < a; ++d) {
                    double mod = scale2[d] * ln2[d] + shift2[d];
                    dgate2[d] += dout[d] * mod;
                    double g = dout[d] * gate2[d];
                    dscale2[d] += g * ln2[d];
                    dshift2[d] += g;
                    dln2[d] = g * scale2[d];
                }
                std::fill(dmo.begin(), dmo.end(), 0.0);
                layernorm_backward_row(dln2.data(), ln2, bc.invstd2[i], a, dmo.data());

                const double* mp = bc.mlp_pre.data() + i * 4 * a;
                for (std::size_t d = 0; d < 4 * a; ++d) hidden[d] = std::max(0.0, mp[d]);
                outer_acc(gblk.mlp_w2.data(), a, 4 * a, dmo.data(), hidden.data());
                for (std::size_t d = 0; d < a; ++d) gblk.mlp_b2[d] += dmo[d];
                std::fill(dhid.begin(), dhid.end(), 0.0);
                matvec_t(blk.mlp_w2.data(), a, 4 * a, dmo.data(), dhid.data());
                for (std::size_t d = 0; d < 4 * a; ++d)
                    dpre[d] = mp[d] > 0.0 ? dhid[d] : 0.0;
                outer_acc(gblk.mlp_w1.data(), 4 * a, a, dpre.data(), bc.h_mid.data() + i * a);
                for (std::size_t d = 0; d < 4 * a; ++d) gblk.mlp_b1[d] += dpre[d];
                matvec_t(blk.mlp_w1.data(), 4 * a, a, dpre.data(), dh_mid.data() + i * a);
            }
        }

        // Sub-layer 1 backward: dh_mid -> d(h_in) and attention grads.
        std::vector<double> dh_in = dh_mid;  // residual path
        std::vector<double> dy(n * a, 0.0);
        {
            std::vector<double> dln1(a);
            for (std::size_t i = 0; i < n; ++i) {
                const double* dmid = dh_mid.data() + i * a;
                const double* ln1 = bc.ln1.data() + i * a;
                for (std::size_t d = 0; d < a; ++d) {
                    double mod = scale1[d] * ln1[d] + shift1[d];
                    dgate1[d] += dmid[d] * mod;
                    double g = dmid[d] * gate1[d];
                    dscale1[d] += g * ln1[d];
                    dshift1[d] += g;
                    dln1[d] = g * scale1[d];
                }
                layernorm_backward_row(dln1.data(), ln1, bc.invstd1[i], a, dy.data() + i * a);
            }
        }

        std::vector<double> dctx(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            outer_acc(gblk.wo.data(), a, a, dy.data() + i * a, bc.ctx.data() + i * a);
            matvec_t(blk.wo.data(), a, a, dy.data() + i * a, dctx.data() + i * a);
        }

        std::vector<double> dq(n * a, 0.0), dk(n * a, 0.0), dv(n * a, 0.0);
        std::vector<double> dattn(n), dscore(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* arow = bc.attn.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t d = 0; d < a; ++d) s += dctx[i * a + d] * bc.v[j * a + d];
                dattn[j] = s;
                for (std::size_t d = 0; d < a; ++d)
                    dv[j * a + d] += arow[j] * dctx[i * a + d];
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += arow[j] * dattn[j];
            for (std::size_t j = 0; j < n; ++j) dscore[j] = arow[j] * (dattn[j] - dot);
            for (std::size_t j = 0; j < n; ++j) {
                const double ds = dscore[j];
                if (ds == 0.0) continue;
                for (std::size_t d = 0; d < a; ++d) {
                    dq[i * a + d] += ds * inv_sqrt_a * bc.k[j * a + d];
                    dk[j * a + d] += ds * inv_sqrt_a * bc.q[i * a + d];
                }
                for (std::size_t ch = 0; ch < b; ++ch)
                    if (c.F[(i * n + j) * b + ch]) gblk.bias_r[ch] += ds;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            outer_acc(gblk.wq.data(), a, a, dq.data() + i * a, bc.h_in.data() + i * a);
            outer_acc(gblk.wk.data(), a, a, dk.data() + i * a, bc.h_in.data() + i * a);
            outer_acc(gblk.wv.data(), a, a, dv.data() + i * a, bc.h_in.data() + i * a);
            matvec_t(blk.wq.data(), a, a, dq.data() + i * a, dh_in.data() + i * a);
            matvec_t(blk.wk.data(), a, a, dk.data() + i * a, dh_in.data() + i * a);
            matvec_t(blk.wv.data(), a, a, dv.data() + i * a, dh_in.data() + i * a);
        }
        dh = std::move(dh_in);
    }

    // Time-conditioning MLP backward.
    {
        std::vector<double> dhid(a, 0.0), dpre(a);
        outer_acc(grads.tm_w2.data(), K * 6 * a, a, dcond.data(), c.tm_hidden.data());
        for (std::size_t d = 0; d < K * 6 * a; ++d) grads.tm_b2[d] += dcond[d];
        matvec_t(params.tm_w2.data(), K * 6 * a, a, dcond.data(), dhid.data());
        for (std::size_t d = 0; d < a; ++d) dpre[d] = c.tm_pre[d] > 0.0 ? dhid[d] : 0.0;
        outer_acc(grads.tm_w1.data(), a, a, dpre.data(), c.tau.data());
        for (std::size_t d = 0; d < a; ++d) grads.tm_b1[d] += dpre[d];
    }

    // Fusion projection backward: dh holds d(z).
    std::vector<double> dhx(n * a, 0.0);
    {
        std::vector<double> cat(2 * a), dcat(2 * a), dep(a);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(c.rce_h[L].begin() + i * a, c.rce_h[L].begin() + (i + 1) * a, cat.begin());
            std::copy(c.e_proj.begin() + i * a, c.e_proj.begin() + (i + 1) * a, cat.begin() + a);
            const double* dz = dh.data() + i * a;
            outer_acc(grads.fuse_w.data(), a, 2 * a, dz, cat.data());
            for (std::size_t d = 0; d < a; ++d) grads.fuse_b[d] += dz[d];
            std::fill(dcat.begin(), dcat.end(), 0.0);
            matvec_t(params.fuse_w.data(), a, 2 * a, dz, dcat.data());
            for (std::size_t d = 0; d < a; ++d) dhx[i * a + d] += dcat[d];
            std::copy(dcat.begin() + a, dcat.end(), dep.begin());
            outer_acc(grads.edge_proj_w.data(), a, 2 * b, dep.data(), c.e_feat.data() + i * 2 * b);
            for (std::size_t d = 0; d < a; ++d) grads.edge_proj_b[d] += dep[d];
        }
    }

    // RCE layers in reverse; dhx holds d(rce_h[L]).
    for (std::size_t l = L; l-- > 0;) {
        const std::vector<double>& hin = c.rce_h[l];
        const std::vector<double>& pre = c.rce_pre[l];
        std::vector<double> dpre(n * a);
        for (std::size_t idx = 0; idx < n * a; ++idx)
            dpre[idx] = pre[idx] > 0.0 ? dhx[idx] : 0.0;
        std::vector<double> dhin(n * a, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            outer_acc(grads.rce_w0[l].data(), a, a, dpre.data() + i * a, hin.data() + i * a);
            matvec_t(params.rce_w0[l].data(), a, a, dpre.data() + i * a, dhin.data() + i * a);
        }
        for (const auto& e : c.edges) {
            double co = 1.0 / c.c_out[e.i * nr + e.r];
            double ci = 1.0 / c.c_in[e.j * nr + e.r];
            outer_acc(grads.rce_w[l].data() + e.r * a * a, a, a, dpre.data() + e.i * a,
                      hin.data() + e.j * a, co);
            outer_acc(grads.rce_w[l].data() + (nr + e.r) * a * a, a, a, dpre.data() + e.j * a,
                      hin.data() + e.i * a, ci);
            const double* w_fwd = params.rce_w[l].data() + e.r * a * a;
            const double* w_bwd = params.rce_w[l].data() + (nr + e.r) * a * a;
            for (std::size_t row = 0; row < a; ++row) {
                const double gi = co * dpre[e.i * a + row];
                const double gj = ci * dpre[e.j * a + row];
                for (std::size_t col = 0; col < a; ++col) {
                    dhin[e.j * a + col] += gi * w_fwd[row * a + col];
                    dhin[e.i * a + col] += gj * w_bwd[row * a + col];
                }
            }
        }
        dhx = std::move(dhin);
    }

    // Init backward into the relation embeddings.
    for (const auto& e : c.edges) {
        const double wi = 1.0 / c.deg[e.i];
        const double wj = 1.0 / c.deg[e.j];
        for (std::size_t d = 0; d < a; ++d) {
            grads.rel_embed[e.r * a + d] += wi * dhx[e.i * a + d];
            grads.rel_embed[(nr + e.r) * a + d] += wj * dhx[e.j * a + d];
        }
    }
}

}  // namespace difftsp
