#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace hyperl1 {

// Whether channel latents are drawn from the encoder-side posterior q or the
// decoder-side prior p. DecoderOnly ablates all memorized (learned-variable)
// information while keeping the generative randomness.
enum class GenMode { WithEncoder, DecoderOnly };

// ---------------------------------------------------------------------------
// Fixed hypernetwork geometry
// ---------------------------------------------------------------------------
//
// Hyperfeature width F is the sum of the block output widths; the mixing
// linear that precedes the blocks maps F to the total block input width.
// Output slots:  [0,20) silu  [20,28) pe(i)  [28,36) pe(j)  [36,44) pe(layer)
//                [44,49) random  [49,59) attention  [59,64) learned  [64,68) z
// Mixing output: [0,20) silu in  [20,50) attention k/q/v  [50,58) channel mu/sigma
struct HyperGeometry {
    static constexpr std::size_t kFeat = 68;
    static constexpr std::size_t kMixOut = 58;
    static constexpr std::size_t kDepth = 4;
    static constexpr std::size_t kActBlock = 20;
    static constexpr std::size_t kPeDims = 8;
    static constexpr std::size_t kRandom = 5;
    static constexpr std::size_t kAttn = 5;      // per key/query/value block
    static constexpr std::size_t kLearned = 5;
    static constexpr std::size_t kChannel = 4;

    static constexpr std::size_t kAttnIn = 20;    // 6 blocks of kAttn follow
    static constexpr std::size_t kChanIn = 50;    // mu(4), sigma_raw(4)

    // Output slot offsets.
    static constexpr std::size_t kOutPeI = 20;
    static constexpr std::size_t kOutPeJ = 28;
    static constexpr std::size_t kOutPeL = 36;
    static constexpr std::size_t kOutRandom = 44;
    static constexpr std::size_t kOutAttn = 49;
    static constexpr std::size_t kOutLearned = 59;
    static constexpr std::size_t kOutChannel = 64;
};

inline constexpr double kSigmaFloor = 1e-6;

// Sinusoidal encoding of a raw integer index: (sin, cos) pairs over
// wavelength denominators geometric from 2 to 1e4. Index 0 maps to
// (0,1,0,1,...). Chosen over learned embeddings so the hypernetwork can
// address neuron indices it never saw in training.
inline std::array<double, HyperGeometry::kPeDims> positional_encoding(double index) {
    std::array<double, HyperGeometry::kPeDims> out{};
    for (std::size_t k = 0; k < HyperGeometry::kPeDims / 2; ++k) {
        const double denom = 2.0 * std::pow(5000.0, static_cast<double>(k) / 3.0);
        out[2 * k] = std::sin(index / denom);
        out[2 * k + 1] = std::cos(index / denom);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hyperweight layout
// ---------------------------------------------------------------------------

// Flat parameter vector: per-hyperlayer mixing (W: F x MixOut, b: MixOut),
// the final projection (F x 2 + 2), then 5 learned encoder-side variables per
// weight position of the architecture the hypernetwork was trained against.
struct HyperNetLayout {
    MlpSpec trained_spec;

    explicit HyperNetLayout(MlpSpec spec = MlpSpec(16, 48)) : trained_spec(std::move(spec)) {}

    static constexpr std::size_t mixing_block() {
        return HyperGeometry::kFeat * HyperGeometry::kMixOut + HyperGeometry::kMixOut;
    }
    static constexpr std::size_t final_block() { return HyperGeometry::kFeat * 2 + 2; }
    std::size_t learned_block() const {
        return trained_spec.weight_positions() * HyperGeometry::kLearned;
    }
    std::size_t param_count() const {
        return HyperGeometry::kDepth * mixing_block() + final_block() + learned_block();
    }

    std::size_t mixing_offset(std::size_t hyperlayer) const { return hyperlayer * mixing_block(); }
    std::size_t final_offset() const { return HyperGeometry::kDepth * mixing_block(); }
    std::size_t learned_offset() const { return final_offset() + final_block(); }
};

struct HyperWeights {
    HyperNetLayout layout;
    std::vector<double> flat;

    static HyperWeights zeros(const HyperNetLayout& layout) {
        return HyperWeights{layout, std::vector<double>(layout.param_count(), 0.0)};
    }
};

// ---------------------------------------------------------------------------
// Position bookkeeping for a target architecture
// ---------------------------------------------------------------------------

namespace detail {

struct PositionTable {
    MlpSpec spec;
    std::vector<std::size_t> layer_base;
    std::size_t total = 0;

    explicit PositionTable(const MlpSpec& s) : spec(s) {
        layer_base.resize(s.num_weight_layers());
        for (std::size_t l = 0; l < s.num_weight_layers(); ++l) {
            layer_base[l] = total;
            total += s.in_width(l) * s.out_width(l);
        }
    }

    std::size_t pos(std::size_t layer, std::size_t i, std::size_t j) const {
        return layer_base[layer] + i * spec.out_width(layer) + j;
    }
    std::size_t row(std::size_t p, std::size_t side) const { return p * 2 + side; }
    std::size_t rows() const { return total * 2; }
};

// Neuron-centric adjacency: for level v, neuron u, the edges arriving from
// layer v-1 (u is the front neuron) and departing into layer v (u is behind).
struct AttentionPlan {
    struct Entry {
        std::vector<std::size_t> arriving;   // position ids, in-neuron ascending
        std::vector<std::size_t> departing;  // position ids, out-neuron ascending
    };
    std::vector<Entry> neurons;              // level-major, index-minor
    std::vector<std::size_t> map_front;      // per (pos, side) row: global concat row
    std::vector<std::size_t> map_behind;

    explicit AttentionPlan(const PositionTable& pt) {
        const MlpSpec& s = pt.spec;
        const std::size_t levels = s.layer_sizes.size();
        for (std::size_t v = 0; v < levels; ++v)
            for (std::size_t u = 0; u < s.layer_sizes[v]; ++u) {
                Entry e;
                if (v > 0)
                    for (std::size_t i = 0; i < s.in_width(v - 1); ++i)
                        e.arriving.push_back(pt.pos(v - 1, i, u));
                if (v + 1 < levels)
                    for (std::size_t j = 0; j < s.out_width(v); ++j)
                        e.departing.push_back(pt.pos(v, u, j));
                neurons.push_back(std::move(e));
            }
        map_front.assign(pt.rows(), 0);
        map_behind.assign(pt.rows(), 0);
        std::size_t g = 0;
        for (const auto& e : neurons)
            for (std::size_t side = 0; side < 2; ++side) {
                for (std::size_t p : e.arriving) map_front[pt.row(p, side)] = g++;
                for (std::size_t p : e.departing) map_behind[pt.row(p, side)] = g++;
            }
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Channel and attention primitives
// ---------------------------------------------------------------------------

// Closed-form KL(q||p) of one-dimensional Gaussians with positive sigmas.
inline double gaussian_kl_1d(double mu_q, double sigma_q, double mu_p, double sigma_p) {
    const double r = sigma_q / sigma_p;
    const double d = (mu_q - mu_p) / sigma_p;
    return std::log(sigma_p / sigma_q) + 0.5 * (r * r + d * d) - 0.5;
}

struct ChannelOut {
    Tensor sample;  // same shape as mu_q, copied to both KL sides by the caller
    Tensor kl;      // scalar sum over all dims
};

// Diagonal Gaussian information channel. Raw sigma parameters are mapped
// through softplus (+ floor) for strict positivity; the sample is drawn by
// reparameterization from q (WithEncoder) or p (DecoderOnly).
inline ChannelOut gaussian_channel(const Tensor& mu_q, const Tensor& sigma_q_raw,
                                   const Tensor& mu_p, const Tensor& sigma_p_raw,
                                   const Tensor& eps, GenMode mode) {
    Tensor sigma_q = softplus(sigma_q_raw) + kSigmaFloor;
    Tensor sigma_p = softplus(sigma_p_raw) + kSigmaFloor;
    Tensor ratio = sigma_q / sigma_p;
    Tensor delta = (mu_q - mu_p) / sigma_p;
    Tensor kl_elem = log(sigma_p / sigma_q) + 0.5 * (square(ratio) + square(delta)) - 0.5;
    Tensor z = mode == GenMode::WithEncoder ? mu_q + sigma_q * eps : mu_p + sigma_p * eps;
    return ChannelOut{z, sum(kl_elem)};
}

// softmax(Q K^T / sqrt(key_width)) V over the rows of K/V.
inline Tensor attention_pool(const Tensor& queries, const Tensor& keys, const Tensor& values) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
    Tensor scores = softmax(matmul(queries, transpose(keys)) * scale, 1);
    return matmul(scores, values);
}

// ---------------------------------------------------------------------------
// Weight generation
// ---------------------------------------------------------------------------

struct Generated {
    MlpWeights weights;
    Tensor kl_total;  // scalar; tracks the tape of the hyperweights
};

namespace detail {

inline Tensor injected_constant_block(
    const PositionTable& pt, std::size_t width,
    const std::function<void(std::size_t layer, std::size_t i, std::size_t j, double* out)>& fill) {
    std::vector<double> data(pt.rows() * width, 0.0);
    const MlpSpec& s = pt.spec;
    for (std::size_t l = 0; l < s.num_weight_layers(); ++l)
        for (std::size_t i = 0; i < s.in_width(l); ++i)
            for (std::size_t j = 0; j < s.out_width(l); ++j) {
                const std::size_t p = pt.pos(l, i, j);
                std::vector<double> tmp(width, 0.0);
                fill(l, i, j, tmp.data());
                for (std::size_t side = 0; side < 2; ++side)
                    std::copy(tmp.begin(), tmp.end(),
                              data.begin() + static_cast<long>((pt.row(p, side)) * width));
            }
    return Tensor({pt.rows(), width}, std::move(data));
}

}  // namespace detail

// Runs the full attentional hypernetwork: N' hyperlayers of mixing + blocks
// over the (position, KL-side, hyperfeature) activation tensor, then the
// final two-hyperfeature projection read from the decoder side. The first
// output hyperfeature becomes the weight at its position; the second is
// averaged along the in-neuron axis to produce each layer's bias.
inline Generated generate_weights(const Tensor& hyperweights, const HyperNetLayout& layout,
                                  const MlpSpec& spec, RngStream& rng, GenMode mode) {
    using G = HyperGeometry;
    if (hyperweights.size() != layout.param_count())
        throw ConfigError("hyperweight length " + std::to_string(hyperweights.size()) +
                          " does not match layout parameter count " +
                          std::to_string(layout.param_count()));
    if (spec.layer_sizes.size() < 3)
        throw ConfigError("target spec needs at least one hidden layer");
    if (spec.layer_sizes.size() != layout.trained_spec.layer_sizes.size())
        throw ConfigError("target depth differs from the trained architecture");
    for (std::size_t d : spec.layer_sizes)
        if (d == 0) throw ConfigError("zero-width layer in target spec");

    const detail::PositionTable pt(spec);
    const detail::PositionTable pt_trained(layout.trained_spec);
    const detail::AttentionPlan plan(pt);
    const std::size_t rows = pt.rows();
    Tensor hw = reshape(hyperweights, {layout.param_count()});

    // Constant injected blocks (identical across hyperlayers).
    const std::size_t last_layer = spec.num_weight_layers() - 1;
    Tensor pe_i = detail::injected_constant_block(
        pt, G::kPeDims, [&](std::size_t l, std::size_t i, std::size_t, double* out) {
            if (l != 0) return;
            auto pe = positional_encoding(static_cast<double>(i));
            std::copy(pe.begin(), pe.end(), out);
        });
    Tensor pe_j = detail::injected_constant_block(
        pt, G::kPeDims, [&](std::size_t l, std::size_t, std::size_t j, double* out) {
            if (l != last_layer) return;
            auto pe = positional_encoding(static_cast<double>(j));
            std::copy(pe.begin(), pe.end(), out);
        });
    Tensor pe_l = detail::injected_constant_block(
        pt, G::kPeDims, [&](std::size_t l, std::size_t, std::size_t, double* out) {
            auto pe = positional_encoding(static_cast<double>(l + 1));
            std::copy(pe.begin(), pe.end(), out);
        });

    // Learned variables: encoder rows take the trained-position values (zero
    // for positions outside the trained architecture), decoder rows are zero.
    Tensor learned_rows;
    {
        Tensor learned = reshape(
            slice(hw, 0, layout.learned_offset(), layout.learned_offset() + layout.learned_block()),
            {pt_trained.total, G::kLearned});
        Tensor with_zero = concat({learned, Tensor::zeros({1, G::kLearned})}, 0);
        const std::size_t zero_row = pt_trained.total;
        std::vector<std::size_t> idx(rows, zero_row);
        const MlpSpec& ts = layout.trained_spec;
        for (std::size_t l = 0; l < spec.num_weight_layers(); ++l)
            for (std::size_t i = 0; i < spec.in_width(l); ++i)
                for (std::size_t j = 0; j < spec.out_width(l); ++j) {
                    if (i < ts.in_width(l) && j < ts.out_width(l))
                        idx[pt.row(pt.pos(l, i, j), 0)] = pt_trained.pos(l, i, j);
                }
        learned_rows = gather_rows(with_zero, idx);
    }

    // Row duplication map (per-position tensor -> per-row tensor).
    std::vector<std::size_t> dup(rows);
    for (std::size_t r = 0; r < rows; ++r) dup[r] = r / 2;
    std::vector<std::size_t> enc_rows(pt.total), dec_rows(pt.total);
    for (std::size_t p = 0; p < pt.total; ++p) {
        enc_rows[p] = pt.row(p, 0);
        dec_rows[p] = pt.row(p, 1);
    }

    Tensor acts = Tensor::zeros({rows, G::kFeat});
    Tensor kl_total = Tensor::scalar(0.0);

    for (std::size_t hl = 0; hl < G::kDepth; ++hl) {
        const std::size_t off = layout.mixing_offset(hl);
        Tensor mix_w = reshape(slice(hw, 0, off, off + G::kFeat * G::kMixOut),
                               {G::kFeat, G::kMixOut});
        Tensor mix_b = slice(hw, 0, off + G::kFeat * G::kMixOut, off + HyperNetLayout::mixing_block());
        Tensor mix = add(matmul(acts, mix_w), mix_b);

        Tensor act_block = silu(slice(mix, 1, 0, G::kActBlock));

        // Random injection: one draw per position, copied to both KL sides so
        // decoder-only generation keeps its randomness.
        Tensor rand_block;
        {
            std::vector<double> vals(rows * G::kRandom);
            for (std::size_t p = 0; p < pt.total; ++p)
                for (std::size_t f = 0; f < G::kRandom; ++f) {
                    const double v = rng.normal();
                    vals[pt.row(p, 0) * G::kRandom + f] = v;
                    vals[pt.row(p, 1) * G::kRandom + f] = v;
                }
            rand_block = Tensor({rows, G::kRandom}, std::move(vals));
        }

        // Neuron attention: every edge sends k/q/v to both endpoint neurons;
        // each neuron head attends over its full adjacent edge set per side.
        Tensor attn_out;
        {
            Tensor k_front = slice(mix, 1, G::kAttnIn, G::kAttnIn + 5);
            Tensor q_front = slice(mix, 1, G::kAttnIn + 5, G::kAttnIn + 10);
            Tensor v_front = slice(mix, 1, G::kAttnIn + 10, G::kAttnIn + 15);
            Tensor k_behind = slice(mix, 1, G::kAttnIn + 15, G::kAttnIn + 20);
            Tensor q_behind = slice(mix, 1, G::kAttnIn + 20, G::kAttnIn + 25);
            Tensor v_behind = slice(mix, 1, G::kAttnIn + 25, G::kAttnIn + 30);
            std::vector<Tensor> pieces;
            pieces.reserve(plan.neurons.size() * 2);
            for (const auto& e : plan.neurons)
                for (std::size_t side = 0; side < 2; ++side) {
                    std::vector<std::size_t> arr, dep;
                    arr.reserve(e.arriving.size());
                    dep.reserve(e.departing.size());
                    for (std::size_t p : e.arriving) arr.push_back(pt.row(p, side));
                    for (std::size_t p : e.departing) dep.push_back(pt.row(p, side));
                    auto assemble = [&](const Tensor& front_block, const Tensor& behind_block) {
                        if (dep.empty()) return gather_rows(front_block, arr);
                        if (arr.empty()) return gather_rows(behind_block, dep);
                        return concat({gather_rows(front_block, arr),
                                       gather_rows(behind_block, dep)}, 0);
                    };
                    Tensor keys = assemble(k_front, k_behind);
                    Tensor queries = assemble(q_front, q_behind);
                    Tensor values = assemble(v_front, v_behind);
                    pieces.push_back(attention_pool(queries, keys, values));
                }
            Tensor big = concat(pieces, 0);
            attn_out = concat({gather_rows(big, plan.map_front),
                               gather_rows(big, plan.map_behind)}, 1);
        }

        // Information channel along the KL axis.
        Tensor z_rows;
        {
            Tensor chan = slice(mix, 1, G::kChanIn, G::kChanIn + 2 * G::kChannel);
            Tensor enc = gather_rows(chan, enc_rows);
            Tensor dec = gather_rows(chan, dec_rows);
            Tensor mu_q = slice(enc, 1, 0, G::kChannel);
            Tensor sq_raw = slice(enc, 1, G::kChannel, 2 * G::kChannel);
            Tensor mu_p = slice(dec, 1, 0, G::kChannel);
            Tensor sp_raw = slice(dec, 1, G::kChannel, 2 * G::kChannel);
            std::vector<double> ev(pt.total * G::kChannel);
            for (double& v : ev) v = rng.normal();
            Tensor eps({pt.total, G::kChannel}, std::move(ev));
            ChannelOut ch = gaussian_channel(mu_q, sq_raw, mu_p, sp_raw, eps, mode);
            kl_total = add(kl_total, ch.kl);
            z_rows = gather_rows(ch.sample, dup);
        }

        acts = concat({act_block, pe_i, pe_j, pe_l, rand_block, attn_out, learned_rows, z_rows}, 1);
    }

    // Final projection, decoder side only.
    const std::size_t foff = layout.final_offset();
    Tensor final_w = reshape(slice(hw, 0, foff, foff + G::kFeat * 2), {G::kFeat, 2});
    Tensor final_b = slice(hw, 0, foff + G::kFeat * 2, foff + HyperNetLayout::final_block());
    Tensor out = add(matmul(acts, final_w), final_b);
    Tensor dec_out = gather_rows(out, dec_rows);
    Tensor w_feat = slice(dec_out, 1, 0, 1);
    Tensor b_feat = slice(dec_out, 1, 1, 2);

    Generated gen;
    gen.kl_total = kl_total;
    for (std::size_t l = 0; l < spec.num_weight_layers(); ++l) {
        const std::size_t n_in = spec.in_width(l), n_out = spec.out_width(l);
        std::vector<std::size_t> w_order;
        w_order.reserve(n_in * n_out);
        for (std::size_t j = 0; j < n_out; ++j)
            for (std::size_t i = 0; i < n_in; ++i) w_order.push_back(pt.pos(l, i, j));
        gen.weights.weights.push_back(reshape(gather_rows(w_feat, w_order), {n_out, n_in}));

        std::vector<std::size_t> b_order;
        b_order.reserve(n_in * n_out);
        for (std::size_t i = 0; i < n_in; ++i)
            for (std::size_t j = 0; j < n_out; ++j) b_order.push_back(pt.pos(l, i, j));
        Tensor b_grid = reshape(gather_rows(b_feat, b_order), {n_in, n_out});
        gen.weights.biases.push_back(reduce(b_grid, 0, Reduce::Mean));
    }
    return gen;
}

inline Generated generate_weights(const HyperWeights& hw, const MlpSpec& spec, RngStream& rng,
                                  GenMode mode) {
    Tensor flat({hw.flat.size()}, hw.flat);
    return generate_weights(flat, hw.layout, spec, rng, mode);
}

}  // namespace hyperl1
