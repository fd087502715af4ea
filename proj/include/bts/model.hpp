#pragma once

// The byte-to-span network: embedding table, a stack of LSTM layers that
// share one set of cell weights, and a softmax projection over output tokens.
// The same stack runs the encoder (bytes then GO) and the decoder (previous
// output token in, next-token distribution out). Backpropagation through time
// is hand-derived and spans the whole encoder+decoder unroll.
//
// All batched tensors are batch-major: one row per example. Training uses
// Real = float; gradient checking instantiates Real = double.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bts/matrix.hpp"
#include "bts/rand.hpp"
#include "bts/vocab.hpp"

namespace bts {

struct ModelConfig {
    std::uint32_t width = 320;
    std::uint32_t depth = 4;
    std::uint32_t k = 60;
    std::vector<std::string> labels;

    void validate() const {
        if (width < 1 || depth < 1 || k < 1 || labels.empty())
            throw std::invalid_argument("ModelConfig: width, depth, k must be >= 1 and labels non-empty");
    }
};

// Decoder output length cap: 20 spans per segment is unreachable in practice.
inline constexpr int kMaxDecodeTokens = 3 * 20 + 1;

template <class Real>
struct LstmState {
    std::vector<Matrix<Real>> h;  // depth x (batch x width)
    std::vector<Matrix<Real>> c;

    std::size_t batch() const { return h.empty() ? 0 : h[0].rows; }
};

template <class Real>
struct StepCache {
    std::vector<Matrix<Real>> xht;     // depth x (batch x 2w): [input | h_prev]
    std::vector<Matrix<Real>> gates;   // depth x (batch x 4w): i,f,o,g post-activation
    std::vector<Matrix<Real>> c_prev;  // depth x (batch x w)
    std::vector<Matrix<Real>> tanh_c;  // depth x (batch x w)
    Matrix<Real> embed_mask;           // batch x w; empty when dropout off
    std::vector<int> input_ids;        // embedding rows consumed this step

    bool is_output = false;
    Matrix<Real> h_drop;        // batch x w, top h after pre-softmax dropout
    Matrix<Real> softmax_mask;  // batch x w; empty when dropout off
    Matrix<Real> dist;          // batch x V, softmax rows
    std::vector<int> targets;   // output-token ids; -1 where loss is masked
};

template <class Real>
struct RunTrace {
    std::vector<StepCache<Real>> steps;
    std::vector<int> target_len;  // per-example real target length (through STOP)
    double loss = 0;              // mean over examples of per-example mean NLL
};

template <class Real>
class Model {
public:
    explicit Model(ModelConfig config)
        : config_(std::move(config)), vocab_(config_.k, config_.labels) {
        config_.validate();
        const std::size_t w = config_.width;
        params_.add("embed", static_cast<std::size_t>(vocab_.embed_vocab_size()), w);
        params_.add("lstm_w", 4 * w, 2 * w);
        params_.add("lstm_b", 1, 4 * w);
        params_.add("proj_w", static_cast<std::size_t>(vocab_.output_vocab_size()), w);
        params_.add("proj_b", 1, static_cast<std::size_t>(vocab_.output_vocab_size()));
    }

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParamStore<Real>& params() { return params_; }
    const ParamStore<Real>& params() const { return params_; }
    std::size_t param_count() const { return params_.param_count(); }

    // Uniform [-0.08, 0.08], forget-gate bias 1.0.
    void init_params(Rng& rng) {
        for (auto& e : params_.entries)
            for (Real& p : e.value.data) p = static_cast<Real>(uniform_real(rng, -0.08, 0.08));
        auto& b = params_.find("lstm_b").value;
        const std::size_t w = config_.width;
        for (std::size_t j = w; j < 2 * w; ++j) b.at(0, j) = Real(1);
    }

    LstmState<Real> initial_state(std::size_t batch) const {
        LstmState<Real> s;
        for (std::uint32_t l = 0; l < config_.depth; ++l) {
            s.h.emplace_back(batch, config_.width);
            s.c.emplace_back(batch, config_.width);
        }
        return s;
    }

    // One step of the whole stack over a batch of embedding ids. Mutates the
    // state in place; fills the cache when given (needed for backward).
    void step(LstmState<Real>& state, const std::vector<int>& embed_ids, bool train,
              double p_drop, Rng* rng, StepCache<Real>* cache) const {
        const std::size_t batch = state.batch();
        const std::size_t w = config_.width;
        if (embed_ids.size() != batch) throw std::invalid_argument("step: batch size mismatch");

        const auto& embed = params_.find("embed").value;
        const auto& lstm_w = params_.find("lstm_w").value;
        const auto& lstm_b = params_.find("lstm_b").value;
        const Matrix<Real> w_t = transpose(lstm_w);  // 2w x 4w

        const bool mask_on = train && p_drop > 0;
        Matrix<Real> embed_mask;
        if (mask_on) {
            embed_mask = Matrix<Real>(batch, w);
            const Real keep = static_cast<Real>(1.0 / (1.0 - p_drop));
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t j = 0; j < w; ++j)
                    embed_mask.at(b, j) = bernoulli(*rng, p_drop) ? Real(0) : keep;
        }

        if (cache) {
            cache->xht.assign(config_.depth, Matrix<Real>());
            cache->gates.assign(config_.depth, Matrix<Real>());
            cache->c_prev.assign(config_.depth, Matrix<Real>());
            cache->tanh_c.assign(config_.depth, Matrix<Real>());
            cache->embed_mask = embed_mask;
            cache->input_ids = embed_ids;
        }

        for (std::uint32_t l = 0; l < config_.depth; ++l) {
            Matrix<Real> xht(batch, 2 * w);
            for (std::size_t b = 0; b < batch; ++b) {
                Real* row = xht.row(b);
                if (l == 0) {
                    const int id = embed_ids[b];
                    if (id < 0 || id >= static_cast<int>(embed.rows))
                        throw std::out_of_range("step: embedding id out of range");
                    const Real* er = embed.row(static_cast<std::size_t>(id));
                    if (mask_on) {
                        const Real* mr = embed_mask.row(b);
                        for (std::size_t j = 0; j < w; ++j) row[j] = er[j] * mr[j];
                    } else {
                        for (std::size_t j = 0; j < w; ++j) row[j] = er[j];
                    }
                } else {
                    const Real* below = state.h[l - 1].row(b);
                    for (std::size_t j = 0; j < w; ++j) row[j] = below[j];
                }
                const Real* hp = state.h[l].row(b);
                for (std::size_t j = 0; j < w; ++j) row[w + j] = hp[j];
            }

            if (cache) cache->c_prev[l] = state.c[l];

            Matrix<Real> gates(batch, 4 * w);
            matmul_nn_accum(gates, xht, w_t);

            Matrix<Real> tanh_c(batch, w);
            const Real* bias = lstm_b.row(0);
            double probe = 0;
            for (std::size_t b = 0; b < batch; ++b) {
                Real* g = gates.row(b);
                Real* hc = state.h[l].row(b);
                Real* cc = state.c[l].row(b);
                Real* tc = tanh_c.row(b);
                for (std::size_t j = 0; j < w; ++j) {
                    const Real gi = sigmoid(g[j] + bias[j]);
                    const Real gf = sigmoid(g[w + j] + bias[w + j]);
                    const Real go = sigmoid(g[2 * w + j] + bias[2 * w + j]);
                    const Real gg = std::tanh(g[3 * w + j] + bias[3 * w + j]);
                    g[j] = gi;
                    g[w + j] = gf;
                    g[2 * w + j] = go;
                    g[3 * w + j] = gg;
                    const Real c_new = gf * cc[j] + gi * gg;
                    const Real t = std::tanh(c_new);
                    cc[j] = c_new;
                    tc[j] = t;
                    hc[j] = go * t;
                    probe += static_cast<double>(c_new);
                }
            }
            if (!std::isfinite(probe))
                throw std::runtime_error("step: non-finite LSTM state at layer " + std::to_string(l));

            if (cache) {
                cache->xht[l] = std::move(xht);
                cache->gates[l] = std::move(gates);
                cache->tanh_c[l] = std::move(tanh_c);
            }
        }
    }

    // Softmax projection of the top hidden state; applies pre-softmax dropout
    // in train mode. Returns batch x V distribution rows; raw logits are also
    // written to logits_out when asked for (the stable loss path needs them).
    Matrix<Real> project(const LstmState<Real>& state, bool train, double p_drop, Rng* rng,
                         StepCache<Real>* cache, Matrix<Real>* logits_out = nullptr) const {
        const std::size_t batch = state.batch();
        const std::size_t w = config_.width;
        const std::size_t v = static_cast<std::size_t>(vocab_.output_vocab_size());
        const auto& proj_w = params_.find("proj_w").value;
        const auto& proj_b = params_.find("proj_b").value;
        const Matrix<Real> p_t = transpose(proj_w);  // w x V

        const bool mask_on = train && p_drop > 0;
        Matrix<Real> h_drop = state.h[config_.depth - 1];
        Matrix<Real> softmax_mask;
        if (mask_on) {
            softmax_mask = Matrix<Real>(batch, w);
            const Real keep = static_cast<Real>(1.0 / (1.0 - p_drop));
            for (std::size_t b = 0; b < batch; ++b) {
                Real* hr = h_drop.row(b);
                Real* mr = softmax_mask.row(b);
                for (std::size_t j = 0; j < w; ++j) {
                    mr[j] = bernoulli(*rng, p_drop) ? Real(0) : keep;
                    hr[j] *= mr[j];
                }
            }
        }

        Matrix<Real> logits(batch, v);
        matmul_nn_accum(logits, h_drop, p_t);
        const Real* bias = proj_b.row(0);
        Matrix<Real> dist(batch, v);
        for (std::size_t b = 0; b < batch; ++b) {
            Real* lr = logits.row(b);
            for (std::size_t j = 0; j < v; ++j) lr[j] += bias[j];
            auto p = softmax<Real>(std::span<const Real>(lr, v));
            std::copy(p.begin(), p.end(), dist.row(b));
        }

        if (cache) {
            cache->is_output = true;
            cache->h_drop = std::move(h_drop);
            cache->softmax_mask = std::move(softmax_mask);
            cache->dist = dist;
        }
        if (logits_out) *logits_out = std::move(logits);
        return dist;
    }

    // Teacher-forced forward over a batch. input_ids: embedding-space ids of
    // the segment bytes (or DROP), all rows the same length; GO is appended
    // here. target_ids: output-space ids, each ending with STOP; rows are
    // padded to the longest target with STOP and masked out of the loss.
    RunTrace<Real> teacher_forced(const std::vector<std::vector<int>>& input_ids,
                                  const std::vector<std::vector<int>>& target_ids, bool train,
                                  double p_drop, Rng* rng) const {
        const std::size_t batch = input_ids.size();
        if (batch == 0 || target_ids.size() != batch)
            throw std::invalid_argument("teacher_forced: empty batch or size mismatch");
        const std::size_t t_in = input_ids[0].size();
        std::size_t t_out = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            if (input_ids[b].size() != t_in)
                throw std::invalid_argument("teacher_forced: ragged input batch");
            if (target_ids[b].empty() || target_ids[b].back() != vocab_.out_stop())
                throw std::invalid_argument("teacher_forced: target must end with STOP");
            t_out = std::max(t_out, target_ids[b].size());
        }

        RunTrace<Real> trace;
        trace.steps.reserve(t_in + 1 + t_out);
        trace.target_len.resize(batch);
        for (std::size_t b = 0; b < batch; ++b)
            trace.target_len[b] = static_cast<int>(target_ids[b].size());

        LstmState<Real> state = initial_state(batch);
        std::vector<int> ids(batch);

        // Encoder: all bytes, then GO.
        for (std::size_t t = 0; t < t_in; ++t) {
            for (std::size_t b = 0; b < batch; ++b) ids[b] = input_ids[b][t];
            trace.steps.emplace_back();
            step(state, ids, train, p_drop, rng, &trace.steps.back());
        }
        std::fill(ids.begin(), ids.end(), kGoToken);
        trace.steps.emplace_back();
        step(state, ids, train, p_drop, rng, &trace.steps.back());

        // Decoder: input at step t is GO for t=0, else target[t-1].
        double loss_sum = 0;
        for (std::size_t t = 0; t < t_out; ++t) {
            for (std::size_t b = 0; b < batch; ++b) {
                const auto& tgt = target_ids[b];
                const int prev = t == 0 ? kGoToken
                                        : vocab_.embed_id_of_output(
                                              tgt[std::min(t - 1, tgt.size() - 1)]);
                ids[b] = prev;
            }
            trace.steps.emplace_back();
            StepCache<Real>& cache = trace.steps.back();
            step(state, ids, train, p_drop, rng, &cache);
            Matrix<Real> logits;
            project(state, train, p_drop, rng, &cache, &logits);

            cache.targets.assign(batch, -1);
            for (std::size_t b = 0; b < batch; ++b) {
                const auto& tgt = target_ids[b];
                if (t >= tgt.size()) continue;
                cache.targets[b] = tgt[t];
                // lse - logit[target] == -log softmax[target], but never overflows
                const Real* lr = logits.row(b);
                const Real nll = log_sum_exp<Real>(std::span<const Real>(lr, logits.cols)) -
                                 lr[static_cast<std::size_t>(tgt[t])];
                loss_sum += static_cast<double>(nll) / static_cast<double>(tgt.size());
            }
        }
        trace.loss = loss_sum / static_cast<double>(batch);
        if (!std::isfinite(trace.loss)) throw std::runtime_error("teacher_forced: non-finite loss");
        return trace;
    }

    // Exact gradients of the mean loss, accumulated into the parameter store.
    void backward(const RunTrace<Real>& trace) {
        if (trace.steps.empty()) throw std::invalid_argument("backward: empty trace");
        const std::size_t batch = trace.target_len.size();
        const std::size_t w = config_.width;
        const std::size_t v = static_cast<std::size_t>(vocab_.output_vocab_size());
        const auto& lstm_w = params_.find("lstm_w").value;
        const auto& proj_w = params_.find("proj_w").value;
        auto& d_embed = params_.find("embed").grad;
        auto& d_lstm_w = params_.find("lstm_w").grad;
        auto& d_lstm_b = params_.find("lstm_b").grad;
        auto& d_proj_w = params_.find("proj_w").grad;
        auto& d_proj_b = params_.find("proj_b").grad;

        std::vector<Matrix<Real>> dh, dc;
        for (std::uint32_t l = 0; l < config_.depth; ++l) {
            dh.emplace_back(batch, w);
            dc.emplace_back(batch, w);
        }

        Matrix<Real> dlogits(batch, v);
        Matrix<Real> dgates(batch, 4 * w);
        Matrix<Real> dxh(batch, 2 * w);

        for (std::size_t si = trace.steps.size(); si-- > 0;) {
            const StepCache<Real>& cache = trace.steps[si];
            if (cache.xht.size() != config_.depth)
                throw std::runtime_error("backward: missing step cache");

            if (cache.is_output) {
                // d loss / d logits = (softmax - onehot) / (batch * target_len)
                dlogits.fill(Real(0));
                for (std::size_t b = 0; b < batch; ++b) {
                    const int tgt = cache.targets[b];
                    if (tgt < 0) continue;
                    const Real scale =
                        Real(1) / (static_cast<Real>(batch) * static_cast<Real>(trace.target_len[b]));
                    const Real* pd = cache.dist.row(b);
                    Real* dl = dlogits.row(b);
                    for (std::size_t j = 0; j < v; ++j) dl[j] = pd[j] * scale;
                    dl[static_cast<std::size_t>(tgt)] -= scale;
                }

                matmul_tn_accum(d_proj_w, dlogits, cache.h_drop);
                for (std::size_t b = 0; b < batch; ++b) {
                    const Real* dl = dlogits.row(b);
                    Real* db = d_proj_b.row(0);
                    for (std::size_t j = 0; j < v; ++j) db[j] += dl[j];
                }

                // dh_top += (dlogits . proj_w) through the dropout mask
                Matrix<Real> dhd(batch, w);
                matmul_nn_accum(dhd, dlogits, proj_w);
                const bool mask_on = cache.softmax_mask.size() > 0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const Real* src = dhd.row(b);
                    Real* dst = dh[config_.depth - 1].row(b);
                    if (mask_on) {
                        const Real* mr = cache.softmax_mask.row(b);
                        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j] * mr[j];
                    } else {
                        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                    }
                }
            }

            for (std::uint32_t li = config_.depth; li-- > 0;) {
                const Matrix<Real>& gates = cache.gates[li];
                const Matrix<Real>& tanh_c = cache.tanh_c[li];
                const Matrix<Real>& c_prev = cache.c_prev[li];

                for (std::size_t b = 0; b < batch; ++b) {
                    const Real* g = gates.row(b);
                    const Real* tc = tanh_c.row(b);
                    const Real* cp = c_prev.row(b);
                    const Real* dhr = dh[li].row(b);
                    Real* dcr = dc[li].row(b);
                    Real* dg = dgates.row(b);
                    for (std::size_t j = 0; j < w; ++j) {
                        const Real gi = g[j], gf = g[w + j], go = g[2 * w + j], gg = g[3 * w + j];
                        const Real d_out = dhr[j] * tc[j];
                        const Real dc_new = dcr[j] + dhr[j] * go * (Real(1) - tc[j] * tc[j]);
                        const Real d_i = dc_new * gg;
                        const Real d_g = dc_new * gi;
                        const Real d_f = dc_new * cp[j];
                        dcr[j] = dc_new * gf;  // becomes dc for the previous step
                        dg[j] = d_i * gi * (Real(1) - gi);
                        dg[w + j] = d_f * gf * (Real(1) - gf);
                        dg[2 * w + j] = d_out * go * (Real(1) - go);
                        dg[3 * w + j] = d_g * (Real(1) - gg * gg);
                    }
                }

                matmul_tn_accum(d_lstm_w, dgates, cache.xht[li]);
                for (std::size_t b = 0; b < batch; ++b) {
                    const Real* dg = dgates.row(b);
                    Real* db = d_lstm_b.row(0);
                    for (std::size_t j = 0; j < 4 * w; ++j) db[j] += dg[j];
                }

                dxh.fill(Real(0));
                matmul_nn_accum(dxh, dgates, lstm_w);

                // h half feeds this layer at the previous step.
                for (std::size_t b = 0; b < batch; ++b) {
                    const Real* src = dxh.row(b) + w;
                    Real* dst = dh[li].row(b);
                    for (std::size_t j = 0; j < w; ++j) dst[j] = src[j];
                }
                // x half feeds the layer below at this step, or the embedding.
                if (li > 0) {
                    for (std::size_t b = 0; b < batch; ++b) {
                        const Real* src = dxh.row(b);
                        Real* dst = dh[li - 1].row(b);
                        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                    }
                } else {
                    const bool mask_on = cache.embed_mask.size() > 0;
                    for (std::size_t b = 0; b < batch; ++b) {
                        const Real* src = dxh.row(b);
                        Real* dst = d_embed.row(static_cast<std::size_t>(cache.input_ids[b]));
                        if (mask_on) {
                            const Real* mr = cache.embed_mask.row(b);
                            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j] * mr[j];
                        } else {
                            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                        }
                    }
                }
            }
        }
    }

    // ---- single-example wrappers over the batched engine ----

    // Runs the stack over all segment bytes then GO; returns the full state.
    LstmState<Real> encode(std::span<const std::uint8_t> bytes, bool train = false,
                           double p_drop = 0, Rng* rng = nullptr) const {
        if (bytes.size() > config_.k) throw std::invalid_argument("encode: segment longer than k");
        LstmState<Real> state = initial_state(1);
        std::vector<int> ids(1);
        for (const std::uint8_t b : bytes) {
            ids[0] = b;
            step(state, ids, train, p_drop, rng, nullptr);
        }
        ids[0] = kGoToken;
        step(state, ids, train, p_drop, rng, nullptr);
        return state;
    }

    // Advances a copy of the state by one decoder step. prev_embed_id is GO on
    // the first step, afterwards the embedding id of the previous output token.
    std::pair<std::vector<Real>, LstmState<Real>> decode_step(const LstmState<Real>& state,
                                                              int prev_embed_id, bool train = false,
                                                              double p_drop = 0,
                                                              Rng* rng = nullptr) const {
        LstmState<Real> next = state;
        std::vector<int> ids{prev_embed_id};
        step(next, ids, train, p_drop, rng, nullptr);
        Matrix<Real> dist = project(next, train, p_drop, rng, nullptr);
        return {std::vector<Real>(dist.row(0), dist.row(0) + dist.cols), std::move(next)};
    }

    // Teacher-forced loss for one segment; mean NLL per target token.
    RunTrace<Real> forward_loss(std::span<const std::uint8_t> bytes, const std::vector<int>& target,
                                bool train = false, double p_drop = 0, Rng* rng = nullptr) const {
        if (bytes.size() > config_.k) throw std::invalid_argument("forward_loss: segment longer than k");
        std::vector<std::vector<int>> in(1);
        in[0].assign(bytes.begin(), bytes.end());
        return teacher_forced(in, {target}, train, p_drop, rng);
    }

private:
    static Real sigmoid(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

    ModelConfig config_;
    Vocabulary vocab_;
    ParamStore<Real> params_;
};

}  // namespace bts
