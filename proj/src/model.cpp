#include "atc/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <thread>

#include "atc/csv.hpp"

namespace atc::model {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void matvec_add(const Mat& m, const std::vector<double>& x, std::vector<double>& out) {
    const double* a = m.a.data();
    for (int r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = a + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        out[r] += acc;
    }
}

void matvec_t_add(const Mat& m, const std::vector<double>& y, std::vector<double>& out) {
    const double* a = m.a.data();
    for (int r = 0; r < m.rows; ++r) {
        const double yr = y[r];
        if (yr == 0.0) continue;
        const double* row = a + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) out[c] += row[c] * yr;
    }
}

void outer_add(Mat& m, const std::vector<double>& y, const std::vector<double>& x) {
    double* a = m.a.data();
    for (int r = 0; r < m.rows; ++r) {
        const double yr = y[r];
        if (yr == 0.0) continue;
        double* row = a + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) row[c] += yr * x[c];
    }
}

void add_scaled(std::vector<double>& out, const std::vector<double>& x, double s) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * x[i];
}

struct LstmCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> i, f, g, o, c, tanh_c;
};

void lstm_forward(const LstmLayer& L, const std::vector<double>& x, std::vector<double>& h,
                  std::vector<double>& c, LstmCache* cache) {
    const int H = L.hidden;
    std::vector<double> z = L.b;
    matvec_add(L.w, x, z);
    matvec_add(L.u, h, z);
    if (cache) {
        cache->x = x;
        cache->h_prev = h;
        cache->c_prev = c;
        cache->i.resize(H);
        cache->f.resize(H);
        cache->g.resize(H);
        cache->o.resize(H);
        cache->c.resize(H);
        cache->tanh_c.resize(H);
    }
    for (int j = 0; j < H; ++j) {
        const double ig = sigmoid(z[j]);
        const double fg = sigmoid(z[H + j]);
        const double gg = std::tanh(z[2 * H + j]);
        const double og = sigmoid(z[3 * H + j]);
        const double cn = fg * c[j] + ig * gg;
        const double tc = std::tanh(cn);
        if (cache) {
            cache->i[j] = ig;
            cache->f[j] = fg;
            cache->g[j] = gg;
            cache->o[j] = og;
            cache->c[j] = cn;
            cache->tanh_c[j] = tc;
        }
        c[j] = cn;
        h[j] = og * tc;
    }
}

// dh: gradient into h_t. dc: in/out, incoming carry for c_t, replaced by the
// gradient for c_{t-1}. dx and dh_prev are overwritten.
void lstm_backward(const LstmLayer& L, const LstmCache& cache, const std::vector<double>& dh,
                   std::vector<double>& dc, LstmLayer& grad, std::vector<double>& dx,
                   std::vector<double>& dh_prev) {
    const int H = L.hidden;
    std::vector<double> dz(4 * H);
    for (int j = 0; j < H; ++j) {
        const double i = cache.i[j], f = cache.f[j], g = cache.g[j], o = cache.o[j];
        const double tc = cache.tanh_c[j];
        const double dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        const double do_ = dh[j] * tc;
        const double di = dct * g;
        const double df = dct * cache.c_prev[j];
        const double dg = dct * i;
        dc[j] = dct * f;
        dz[j] = di * i * (1.0 - i);
        dz[H + j] = df * f * (1.0 - f);
        dz[2 * H + j] = dg * (1.0 - g * g);
        dz[3 * H + j] = do_ * o * (1.0 - o);
    }
    outer_add(grad.w, dz, cache.x);
    outer_add(grad.u, dz, cache.h_prev);
    for (int r = 0; r < 4 * H; ++r) grad.b[r] += dz[r];
    std::fill(dx.begin(), dx.end(), 0.0);
    matvec_t_add(L.w, dz, dx);
    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    matvec_t_add(L.u, dz, dh_prev);
}

void stack_forward(const Stack& s, const std::vector<double>& x, StackState& st,
                   std::vector<LstmCache>* caches) {
    const std::vector<double>* input = &x;
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        lstm_forward(s.layers[l], *input, st.h[l], st.c[l], caches ? &(*caches)[l] : nullptr);
        input = &st.h[l];
    }
}

LstmLayer layer_like(const LstmLayer& l) {
    LstmLayer out;
    out.in = l.in;
    out.hidden = l.hidden;
    out.w = Mat::zeros(l.w.rows, l.w.cols);
    out.u = Mat::zeros(l.u.rows, l.u.cols);
    out.b.assign(l.b.size(), 0.0);
    return out;
}

std::vector<double> onehot(int idx, int n) {
    std::vector<double> v(n, 0.0);
    v[idx] = 1.0;
    return v;
}

double cross_entropy(const std::vector<double>& probs, int truth) {
    return -std::log(std::max(probs[truth], 1e-300));
}

}  // namespace

StackState StackState::zeros(const Stack& s) {
    StackState st;
    for (const auto& l : s.layers) {
        st.h.emplace_back(l.hidden, 0.0);
        st.c.emplace_back(l.hidden, 0.0);
    }
    return st;
}

void for_each_tensor(Params& p,
                     const std::function<void(const std::string&, std::vector<double>&)>& fn) {
    for (std::size_t l = 0; l < p.enc.layers.size(); ++l) {
        const std::string tag = "enc.l" + std::to_string(l);
        fn(tag + ".w", p.enc.layers[l].w.a);
        fn(tag + ".u", p.enc.layers[l].u.a);
        fn(tag + ".b", p.enc.layers[l].b);
    }
    fn("enc.head.w", p.enc_head_w.a);
    fn("enc.head.b", p.enc_head_b);
    if (!p.has_decoder) return;
    for (std::size_t l = 0; l < p.dec.layers.size(); ++l) {
        const std::string tag = "dec.l" + std::to_string(l);
        fn(tag + ".w", p.dec.layers[l].w.a);
        fn(tag + ".u", p.dec.layers[l].u.a);
        fn(tag + ".b", p.dec.layers[l].b);
    }
    fn("dec.act.w", p.act_head_w.a);
    fn("dec.act.b", p.act_head_b);
    fn("dec.cont.w", p.cont_head_w.a);
    fn("dec.cont.b", p.cont_head_b);
}

void for_each_tensor(const Params& p,
                     const std::function<void(const std::string&, const std::vector<double>&)>& fn) {
    for_each_tensor(const_cast<Params&>(p),
                    [&](const std::string& n, std::vector<double>& v) { fn(n, v); });
}

namespace {

LstmLayer init_layer(int in, int hidden, std::mt19937_64& rng) {
    LstmLayer l;
    l.in = in;
    l.hidden = hidden;
    l.w = Mat::zeros(4 * hidden, in);
    l.u = Mat::zeros(4 * hidden, hidden);
    l.b.assign(4 * hidden, 0.0);
    std::uniform_real_distribution<double> dw(-std::sqrt(1.0 / in), std::sqrt(1.0 / in));
    std::uniform_real_distribution<double> du(-std::sqrt(1.0 / hidden), std::sqrt(1.0 / hidden));
    for (auto& v : l.w.a) v = dw(rng);
    for (auto& v : l.u.a) v = du(rng);
    // Open forget gates at initialization.
    for (int j = 0; j < hidden; ++j) l.b[hidden + j] = 1.0;
    return l;
}

Mat init_head(int out, int in, std::mt19937_64& rng) {
    Mat m = Mat::zeros(out, in);
    std::uniform_real_distribution<double> d(-std::sqrt(1.0 / in), std::sqrt(1.0 / in));
    for (auto& v : m.a) v = d(rng);
    return m;
}

}  // namespace

Params init_params(const ModelConfig& cfg, bool with_decoder, std::mt19937_64& rng) {
    if (cfg.feature_dim <= 0) throw std::invalid_argument("init_params: feature_dim not set");
    Params p;
    const int H = cfg.lstm_units;
    int in = cfg.feature_dim + cfg.mode_count;
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        p.enc.layers.push_back(init_layer(l == 0 ? in : H, H, rng));
    }
    p.enc_head_w = init_head(cfg.mode_count, H, rng);
    p.enc_head_b.assign(cfg.mode_count, 0.0);
    p.has_decoder = with_decoder;
    if (with_decoder) {
        for (int l = 0; l < cfg.lstm_layers; ++l) {
            p.dec.layers.push_back(init_layer(l == 0 ? in : H, H, rng));
        }
        p.act_head_w = init_head(cfg.cat_action_count, H, rng);
        p.act_head_b.assign(cfg.cat_action_count, 0.0);
        p.cont_head_w = init_head(cfg.cont_action_count, H, rng);
        p.cont_head_b.assign(cfg.cont_action_count, 0.0);
    }
    return p;
}

Params zeros_like(const Params& p) {
    Params z;
    for (const auto& l : p.enc.layers) z.enc.layers.push_back(layer_like(l));
    z.enc_head_w = Mat::zeros(p.enc_head_w.rows, p.enc_head_w.cols);
    z.enc_head_b.assign(p.enc_head_b.size(), 0.0);
    z.has_decoder = p.has_decoder;
    if (p.has_decoder) {
        for (const auto& l : p.dec.layers) z.dec.layers.push_back(layer_like(l));
        z.act_head_w = Mat::zeros(p.act_head_w.rows, p.act_head_w.cols);
        z.act_head_b.assign(p.act_head_b.size(), 0.0);
        z.cont_head_w = Mat::zeros(p.cont_head_w.rows, p.cont_head_w.cols);
        z.cont_head_b.assign(p.cont_head_b.size(), 0.0);
    }
    return z;
}

std::vector<Sequence> to_sequences(const label::LabeledDataset& data) {
    std::vector<Sequence> out;
    for (const auto& fl : data.flights) {
        if (fl.rows.empty()) continue;
        Sequence s;
        s.id = fl.id;
        for (const auto& r : fl.rows) {
            s.feats.push_back(r.point.features());
            s.modes.push_back(static_cast<int>(r.mode));
            s.actions.push_back(static_cast<int>(r.action));
            s.cont.push_back({r.cont.d_course, r.cont.d_sh, r.cont.d_sv, r.cont.d_t});
            s.ts.push_back(static_cast<double>(r.point.t));
            s.actual.push_back(r.is_actual_ratp);
            s.annotated.push_back(r.is_annotated_ratp);
        }
        out.push_back(std::move(s));
    }
    return out;
}

Standardizer fit_standardizer(const std::vector<Sequence>& train, int feature_dim, int slots) {
    Standardizer s;
    s.slots = slots;
    s.mean.assign(feature_dim, 0.0);
    s.stdev.assign(feature_dim, 1.0);

    std::vector<double> sum(feature_dim, 0.0), sum2(feature_dim, 0.0);
    std::vector<std::size_t> count(feature_dim, 0);
    std::array<double, 4> csum{}, csum2{};
    std::size_t rows = 0;

    auto slot_base = [&](int k) { return 3 + 13 * k; };
    for (const auto& seq : train) {
        for (std::size_t r = 0; r < seq.feats.size(); ++r) {
            const auto& f = seq.feats[r];
            for (int j = 0; j < 3; ++j) {
                sum[j] += f[j];
                sum2[j] += f[j] * f[j];
                ++count[j];
            }
            for (int k = 0; k < slots; ++k) {
                const int base = slot_base(k);
                if (f[base + 12] < 0.5) continue;  // absent slot: no statistics
                for (int j = 0; j < 12; ++j) {
                    sum[base + j] += f[base + j];
                    sum2[base + j] += f[base + j] * f[base + j];
                    ++count[base + j];
                }
            }
            for (int j = 0; j < 4; ++j) {
                csum[j] += seq.cont[r][j];
                csum2[j] += seq.cont[r][j] * seq.cont[r][j];
            }
            ++rows;
        }
    }
    for (int j = 0; j < feature_dim; ++j) {
        if (count[j] == 0) continue;
        const double m = sum[j] / count[j];
        const double var = std::max(0.0, sum2[j] / count[j] - m * m);
        s.mean[j] = m;
        s.stdev[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    // Presence flags pass through.
    for (int k = 0; k < slots; ++k) {
        s.mean[slot_base(k) + 12] = 0.0;
        s.stdev[slot_base(k) + 12] = 1.0;
    }
    for (int j = 0; j < 4; ++j) {
        const double m = rows ? csum[j] / rows : 0.0;
        const double var = rows ? std::max(0.0, csum2[j] / rows - m * m) : 0.0;
        s.cont_mean[j] = m;
        s.cont_stdev[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& raw) const {
    std::vector<double> out(raw.size());
    for (int j = 0; j < 3; ++j) out[j] = (raw[j] - mean[j]) / stdev[j];
    for (int k = 0; k < slots; ++k) {
        const int base = 3 + 13 * k;
        const bool present = raw[base + 12] > 0.5;
        for (int j = 0; j < 12; ++j) {
            out[base + j] = present ? (raw[base + j] - mean[base + j]) / stdev[base + j] : 0.0;
        }
        out[base + 12] = raw[base + 12];
    }
    return out;
}

std::array<double, 4> Standardizer::standardize_cont(const std::array<double, 4>& c) const {
    std::array<double, 4> out{};
    for (int j = 0; j < 4; ++j) out[j] = (c[j] - cont_mean[j]) / cont_stdev[j];
    return out;
}

std::array<double, 4> Standardizer::destandardize_cont(const std::array<double, 4>& c) const {
    std::array<double, 4> out{};
    for (int j = 0; j < 4; ++j) out[j] = c[j] * cont_stdev[j] + cont_mean[j];
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

std::vector<double> gumbel_softmax_sample(const std::vector<double>& logits, double temperature,
                                          std::mt19937_64& rng) {
    if (temperature <= 0.0) throw std::invalid_argument("gumbel temperature must be positive");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> v(logits.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double u = std::max(uni(rng), 1e-300);
        const double g = -std::log(-std::log(u));
        v[i] = (logits[i] + g) / temperature;
    }
    return softmax(v);
}

int gumbel_argmax_sample(const std::vector<double>& logits, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double u = std::max(uni(rng), 1e-300);
        const double v = logits[i] - std::log(-std::log(u));
        if (v > best_v) {
            best_v = v;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::vector<double> encoder_step(const Params& p, const std::vector<double>& state,
                                 const std::vector<double>& prev_mode_onehot, StackState& st) {
    std::vector<double> x = state;
    x.insert(x.end(), prev_mode_onehot.begin(), prev_mode_onehot.end());
    if (static_cast<int>(x.size()) != p.enc.layers[0].in) {
        throw std::invalid_argument("encoder_step: feature layout mismatch");
    }
    stack_forward(p.enc, x, st, nullptr);
    std::vector<double> logits = p.enc_head_b;
    matvec_add(p.enc_head_w, st.h.back(), logits);
    return logits;
}

DecoderOut decoder_step(const Params& p, const std::vector<double>& state,
                        const std::vector<double>& mode_vec, StackState& st) {
    if (!p.has_decoder) throw std::logic_error("decoder_step: model has no decoder");
    std::vector<double> x = state;
    x.insert(x.end(), mode_vec.begin(), mode_vec.end());
    if (static_cast<int>(x.size()) != p.dec.layers[0].in) {
        throw std::invalid_argument("decoder_step: feature layout mismatch");
    }
    stack_forward(p.dec, x, st, nullptr);
    DecoderOut out;
    out.act_logits = p.act_head_b;
    matvec_add(p.act_head_w, st.h.back(), out.act_logits);
    out.cont = p.cont_head_b;
    matvec_add(p.cont_head_w, st.h.back(), out.cont);
    return out;
}

namespace {

// Everything the backward pass needs for one timestep of one sequence.
struct StepTape {
    std::vector<LstmCache> enc_caches;
    std::vector<LstmCache> dec_caches;
    std::vector<double> enc_h_top;
    std::vector<double> dec_h_top;
    std::vector<double> enc_probs;
    std::vector<double> y;  // relaxed mode sample fed to the decoder
    std::vector<double> act_probs;
    std::vector<double> cont_out;
    std::array<double, 4> cont_tgt{};
    int mode_truth = 0;
    int action_truth = 0;
};

struct StackGradState {
    std::vector<std::vector<double>> dh_time, dc_time;
    static StackGradState zeros(const Stack& s) {
        StackGradState g;
        for (const auto& l : s.layers) {
            g.dh_time.emplace_back(l.hidden, 0.0);
            g.dc_time.emplace_back(l.hidden, 0.0);
        }
        return g;
    }
};

// Backward through one stack at one timestep; dh_head is the gradient into
// the top hidden state from the heads. Returns the input gradient.
std::vector<double> stack_backward_step(const Stack& s, std::vector<LstmCache>& caches,
                                        const std::vector<double>& dh_head, StackGradState& gs,
                                        Stack& grads) {
    const int top = static_cast<int>(s.layers.size()) - 1;
    std::vector<double> dh = dh_head;
    std::vector<double> dx;
    for (int l = top; l >= 0; --l) {
        for (int j = 0; j < s.layers[l].hidden; ++j) dh[j] += gs.dh_time[l][j];
        dx.assign(s.layers[l].in, 0.0);
        std::vector<double> dh_prev(s.layers[l].hidden, 0.0);
        lstm_backward(s.layers[l], caches[l], dh, gs.dc_time[l], grads.layers[l], dx, dh_prev);
        gs.dh_time[l] = std::move(dh_prev);
        dh = dx;  // becomes the gradient into the hidden state of the layer below
    }
    return dh;  // gradient w.r.t. the stack input
}

}  // namespace

LossBreakdown loss_and_grads(const Params& p, const std::vector<const Sequence*>& batch,
                             const Standardizer& stdz, const ModelConfig& cfg,
                             std::mt19937_64& rng, Params* grads) {
    LossBreakdown out;
    for (const Sequence* s : batch) out.steps += s->feats.size();
    if (out.steps == 0) return out;
    const double scale = 1.0 / static_cast<double>(out.steps);

    for (const Sequence* seq : batch) {
        const std::size_t T = seq->feats.size();
        std::vector<StepTape> tape(T);
        StackState enc_st = StackState::zeros(p.enc);
        StackState dec_st = p.has_decoder ? StackState::zeros(p.dec) : StackState{};

        std::vector<std::vector<double>> std_feats(T);
        for (std::size_t t = 0; t < T; ++t) std_feats[t] = stdz.apply(seq->feats[t]);

        // Forward.
        for (std::size_t t = 0; t < T; ++t) {
            StepTape& tp = tape[t];
            tp.mode_truth = seq->modes[t];
            tp.action_truth = seq->actions[t];
            tp.cont_tgt = stdz.standardize_cont(seq->cont[t]);

            const int prev_mode = t == 0 ? 0 : seq->modes[t - 1];  // teacher forced
            std::vector<double> x = std_feats[t];
            const auto prev_onehot = onehot(prev_mode, cfg.mode_count);
            x.insert(x.end(), prev_onehot.begin(), prev_onehot.end());

            tp.enc_caches.resize(p.enc.layers.size());
            stack_forward(p.enc, x, enc_st, &tp.enc_caches);
            tp.enc_h_top = enc_st.h.back();
            std::vector<double> logits = p.enc_head_b;
            matvec_add(p.enc_head_w, tp.enc_h_top, logits);
            tp.enc_probs = softmax(logits);
            out.enc_ce += cross_entropy(tp.enc_probs, tp.mode_truth) * scale;

            if (p.has_decoder) {
                tp.y = gumbel_softmax_sample(logits, cfg.gumbel_temperature, rng);
                std::vector<double> xd = std_feats[t];
                xd.insert(xd.end(), tp.y.begin(), tp.y.end());
                tp.dec_caches.resize(p.dec.layers.size());
                stack_forward(p.dec, xd, dec_st, &tp.dec_caches);
                tp.dec_h_top = dec_st.h.back();
                std::vector<double> act_logits = p.act_head_b;
                matvec_add(p.act_head_w, tp.dec_h_top, act_logits);
                tp.act_probs = softmax(act_logits);
                out.dec_ce += cross_entropy(tp.act_probs, tp.action_truth) * scale;
                tp.cont_out = p.cont_head_b;
                matvec_add(p.cont_head_w, tp.dec_h_top, tp.cont_out);
                double mse = 0.0;
                for (int j = 0; j < 4; ++j) {
                    const double d = tp.cont_out[j] - tp.cont_tgt[j];
                    mse += d * d;
                }
                out.dec_mse += mse / 4.0 * scale;
            }
        }

        if (!grads) continue;

        // Backward, reverse time, both stacks interleaved so the decoder's
        // input gradient can reach the encoder logits through the sample.
        StackGradState enc_gs = StackGradState::zeros(p.enc);
        StackGradState dec_gs = p.has_decoder ? StackGradState::zeros(p.dec) : StackGradState{};
        for (std::size_t ti = T; ti-- > 0;) {
            StepTape& tp = tape[ti];
            std::vector<double> denc_logits(cfg.mode_count, 0.0);
            for (int j = 0; j < cfg.mode_count; ++j) {
                denc_logits[j] = (tp.enc_probs[j] - (j == tp.mode_truth ? 1.0 : 0.0)) * scale;
            }

            if (p.has_decoder) {
                std::vector<double> dact(cfg.cat_action_count);
                for (int j = 0; j < cfg.cat_action_count; ++j) {
                    dact[j] = (tp.act_probs[j] - (j == tp.action_truth ? 1.0 : 0.0)) * scale;
                }
                std::vector<double> dcont(cfg.cont_action_count);
                for (int j = 0; j < cfg.cont_action_count; ++j) {
                    dcont[j] = 2.0 * (tp.cont_out[j] - tp.cont_tgt[j]) / 4.0 * scale;
                }
                outer_add(grads->act_head_w, dact, tp.dec_h_top);
                add_scaled(grads->act_head_b, dact, 1.0);
                outer_add(grads->cont_head_w, dcont, tp.dec_h_top);
                add_scaled(grads->cont_head_b, dcont, 1.0);

                std::vector<double> dh_dec(cfg.lstm_units, 0.0);
                matvec_t_add(p.act_head_w, dact, dh_dec);
                matvec_t_add(p.cont_head_w, dcont, dh_dec);
                const auto dx_dec = stack_backward_step(p.dec, tp.dec_caches, dh_dec, dec_gs, grads->dec);

                // Slice of the decoder input belonging to the mode sample.
                const int fdim = cfg.feature_dim;
                std::vector<double> dy(cfg.mode_count);
                for (int j = 0; j < cfg.mode_count; ++j) dy[j] = dx_dec[fdim + j];
                // Relaxed-sample jacobian: y = softmax((l + g)/tau).
                double ydy = 0.0;
                for (int j = 0; j < cfg.mode_count; ++j) ydy += tp.y[j] * dy[j];
                for (int j = 0; j < cfg.mode_count; ++j) {
                    denc_logits[j] += tp.y[j] * (dy[j] - ydy) / cfg.gumbel_temperature;
                }
            }

            outer_add(grads->enc_head_w, denc_logits, tp.enc_h_top);
            add_scaled(grads->enc_head_b, denc_logits, 1.0);
            std::vector<double> dh_enc(cfg.lstm_units, 0.0);
            matvec_t_add(p.enc_head_w, denc_logits, dh_enc);
            stack_backward_step(p.enc, tp.enc_caches, dh_enc, enc_gs, grads->enc);
        }
    }
    out.total = out.enc_ce + out.dec_ce + out.dec_mse;
    return out;
}

namespace {

struct Adam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long t = 0;
    std::vector<std::vector<double>> m, v;

    void init(const Params& p, double lr_) {
        lr = lr_;
        for_each_tensor(p, [&](const std::string&, const std::vector<double>& tv) {
            m.emplace_back(tv.size(), 0.0);
            v.emplace_back(tv.size(), 0.0);
        });
    }

    void step(Params& p, const Params& g) {
        ++t;
        const double bc1 = 1.0 - std::pow(b1, t);
        const double bc2 = 1.0 - std::pow(b2, t);
        std::size_t idx = 0;
        std::vector<std::vector<double>*> targets;
        for_each_tensor(p, [&](const std::string&, std::vector<double>& tv) { targets.push_back(&tv); });
        std::vector<const std::vector<double>*> grads;
        for_each_tensor(g, [&](const std::string&, const std::vector<double>& tv) { grads.push_back(&tv); });
        for (idx = 0; idx < targets.size(); ++idx) {
            auto& tv = *targets[idx];
            const auto& gv = *grads[idx];
            auto& mi = m[idx];
            auto& vi = v[idx];
            for (std::size_t j = 0; j < tv.size(); ++j) {
                mi[j] = b1 * mi[j] + (1.0 - b1) * gv[j];
                vi[j] = b2 * vi[j] + (1.0 - b2) * gv[j] * gv[j];
                const double mhat = mi[j] / bc1;
                const double vhat = vi[j] / bc2;
                tv[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

void zero_params(Params& p) {
    for_each_tensor(p, [](const std::string&, std::vector<double>& v) {
        std::fill(v.begin(), v.end(), 0.0);
    });
}

}  // namespace

TrainResult train(const label::LabeledDataset& data, ModelConfig cfg, bool with_decoder) {
    auto seqs = to_sequences(data);
    if (seqs.empty()) throw std::invalid_argument("train: empty dataset");
    cfg.feature_dim = static_cast<int>(seqs[0].feats[0].size());
    for (const auto& s : seqs) {
        for (const auto& f : s.feats) {
            if (static_cast<int>(f.size()) != cfg.feature_dim) {
                throw std::invalid_argument("train: inconsistent feature dimensions");
            }
        }
    }
    const int slots = (cfg.feature_dim - 3) / 13;

    TrainResult result;
    result.cfg = cfg;
    result.stdz = fit_standardizer(seqs, cfg.feature_dim, slots);

    std::mt19937_64 rng(cfg.seed);
    result.params = init_params(cfg, with_decoder, rng);

    Adam adam;
    adam.init(result.params, cfg.learning_rate);
    Params grads = zeros_like(result.params);

    // Reference loss for the divergence guard.
    std::vector<const Sequence*> all;
    for (const auto& s : seqs) all.push_back(&s);
    std::mt19937_64 probe_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    const double initial_loss =
        loss_and_grads(result.params, all, result.stdz, cfg, probe_rng, nullptr).total;

    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int divergent_epochs = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            std::vector<const Sequence*> batch;
            for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
                batch.push_back(&seqs[order[i]]);
            }
            zero_params(grads);
            const auto lb = loss_and_grads(result.params, batch, result.stdz, cfg, rng, &grads);
            if (!std::isfinite(lb.total)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            adam.step(result.params, grads);
            epoch_loss += lb.total * static_cast<double>(lb.steps);
            epoch_steps += lb.steps;
        }
        const double mean_loss = epoch_loss / static_cast<double>(epoch_steps);
        result.loss_curve.push_back(mean_loss);
        divergent_epochs = mean_loss > 10.0 * initial_loss ? divergent_epochs + 1 : 0;
        if (divergent_epochs >= 10) {
            throw std::runtime_error("train: loss diverged (epoch " + std::to_string(epoch) + ")");
        }
    }
    return result;
}

std::vector<PredictionRow> predict(const TrainResult& model, const Sequence& seq, Feedback fb) {
    const auto& p = model.params;
    const auto& cfg = model.cfg;
    std::vector<PredictionRow> out;
    StackState enc_st = StackState::zeros(p.enc);
    StackState dec_st = p.has_decoder ? StackState::zeros(p.dec) : StackState{};
    int prev_mode = 0;
    for (std::size_t t = 0; t < seq.feats.size(); ++t) {
        const auto sf = model.stdz.apply(seq.feats[t]);
        if (fb == Feedback::TeacherForced && t > 0) prev_mode = seq.modes[t - 1];
        const auto logits = encoder_step(p, sf, onehot(prev_mode, cfg.mode_count), enc_st);
        PredictionRow row;
        const auto probs = softmax(logits);
        int argmax = 0;
        for (int j = 0; j < cfg.mode_count; ++j) {
            row.mode_probs[j] = probs[j];
            if (probs[j] > probs[argmax]) argmax = j;
        }
        row.mode = argmax;
        if (p.has_decoder) {
            const auto dec = decoder_step(p, sf, onehot(argmax, cfg.mode_count), dec_st);
            const auto aprobs = softmax(dec.act_logits);
            int amax = 0;
            for (int j = 0; j < cfg.cat_action_count; ++j) {
                row.action_probs[j] = aprobs[j];
                if (aprobs[j] > aprobs[amax]) amax = j;
            }
            row.action = amax;
            std::array<double, 4> c{};
            for (int j = 0; j < 4; ++j) c[j] = dec.cont[j];
            row.cont = model.stdz.destandardize_cont(c);
        } else {
            row.action_probs = {1.0, 0.0, 0.0};
            row.action = 0;
        }
        out.push_back(row);
        if (fb == Feedback::SelfFed) prev_mode = argmax;
    }
    return out;
}

metrics::EvalStream eval_stream(const TrainResult& model, const std::vector<Sequence>& test,
                                Feedback fb) {
    metrics::EvalStream stream;
    for (const auto& seq : test) {
        const auto rows = predict(model, seq, fb);
        metrics::EvalFlight fl;
        fl.id = seq.id;
        for (std::size_t t = 0; t < rows.size(); ++t) {
            metrics::EvalPoint p;
            p.t = seq.ts[t];
            p.truth_mode = static_cast<label::Mode>(seq.modes[t]);
            p.truth_action = static_cast<label::ActionClass>(seq.actions[t]);
            p.pred_mode = static_cast<label::Mode>(rows[t].mode);
            p.pred_action = static_cast<label::ActionClass>(rows[t].action);
            p.is_actual_ratp = seq.actual[t];
            p.is_annotated_ratp = seq.annotated[t];
            fl.points.push_back(p);
        }
        stream.push_back(std::move(fl));
    }
    return stream;
}

namespace {

constexpr std::uint32_t kMagic = 0x52544341;  // "ACTR"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void put_vec(std::ofstream& f, const std::vector<double>& v) {
    put<std::uint64_t>(f, v.size());
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::vector<double> get_vec(std::ifstream& f) {
    const auto n = get<std::uint64_t>(f);
    std::vector<double> v(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    return v;
}

}  // namespace

void save_model(const TrainResult& model, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write model file: " + path);
    put(f, kMagic);
    put(f, kVersion);
    const auto& c = model.cfg;
    put<std::int32_t>(f, c.lstm_layers);
    put<std::int32_t>(f, c.lstm_units);
    put<std::int32_t>(f, c.mode_count);
    put<std::int32_t>(f, c.cat_action_count);
    put<std::int32_t>(f, c.cont_action_count);
    put<double>(f, c.gumbel_temperature);
    put<double>(f, c.learning_rate);
    put<std::int32_t>(f, c.epochs);
    put<std::int32_t>(f, c.batch_size);
    put<std::uint64_t>(f, c.seed);
    put<std::int32_t>(f, c.feature_dim);
    put<std::uint8_t>(f, model.params.has_decoder ? 1 : 0);
    put<std::int32_t>(f, model.stdz.slots);
    put_vec(f, model.stdz.mean);
    put_vec(f, model.stdz.stdev);
    for (int j = 0; j < 4; ++j) put<double>(f, model.stdz.cont_mean[j]);
    for (int j = 0; j < 4; ++j) put<double>(f, model.stdz.cont_stdev[j]);
    put_vec(f, model.loss_curve);
    std::uint32_t tensors = 0;
    for_each_tensor(model.params, [&](const std::string&, const std::vector<double>&) { ++tensors; });
    put(f, tensors);
    for_each_tensor(model.params, [&](const std::string& name, const std::vector<double>& v) {
        put<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_vec(f, v);
    });
}

TrainResult load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open model file: " + path);
    if (get<std::uint32_t>(f) != kMagic) throw std::runtime_error("bad model file magic: " + path);
    if (get<std::uint32_t>(f) != kVersion) throw std::runtime_error("unsupported model version");
    TrainResult model;
    auto& c = model.cfg;
    c.lstm_layers = get<std::int32_t>(f);
    c.lstm_units = get<std::int32_t>(f);
    c.mode_count = get<std::int32_t>(f);
    c.cat_action_count = get<std::int32_t>(f);
    c.cont_action_count = get<std::int32_t>(f);
    c.gumbel_temperature = get<double>(f);
    c.learning_rate = get<double>(f);
    c.epochs = get<std::int32_t>(f);
    c.batch_size = get<std::int32_t>(f);
    c.seed = get<std::uint64_t>(f);
    c.feature_dim = get<std::int32_t>(f);
    const bool has_decoder = get<std::uint8_t>(f) != 0;
    model.stdz.slots = get<std::int32_t>(f);
    model.stdz.mean = get_vec(f);
    model.stdz.stdev = get_vec(f);
    for (int j = 0; j < 4; ++j) model.stdz.cont_mean[j] = get<double>(f);
    for (int j = 0; j < 4; ++j) model.stdz.cont_stdev[j] = get<double>(f);
    model.loss_curve = get_vec(f);
    std::mt19937_64 dummy(0);
    model.params = init_params(c, has_decoder, dummy);
    const auto tensors = get<std::uint32_t>(f);
    std::uint32_t seen = 0;
    for_each_tensor(model.params, [&](const std::string& name, std::vector<double>& v) {
        const auto len = get<std::uint32_t>(f);
        std::string got(len, '\0');
        f.read(got.data(), len);
        if (got != name) throw std::runtime_error("model file tensor order mismatch: " + got);
        auto data = get_vec(f);
        if (data.size() != v.size()) throw std::runtime_error("model file tensor size mismatch: " + name);
        v = std::move(data);
        ++seen;
    });
    if (seen != tensors || !f) throw std::runtime_error("truncated model file: " + path);
    return model;
}

CrossvalOutcome cross_validate(const label::LabeledDataset& data, ModelConfig cfg,
                               bool with_decoder, int folds, int repeats, int threads) {
    const std::size_t n = data.flights.size();
    if (n < static_cast<std::size_t>(folds)) {
        throw std::invalid_argument("cross_validate: fewer flights than folds");
    }
    struct Job {
        int repeat, fold;
        std::vector<std::size_t> test_idx;
    };
    std::vector<Job> jobs;
    for (int r = 0; r < repeats; ++r) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::mt19937_64 rng(cfg.seed + 0x51ED2701ull * (r + 1));
        std::shuffle(order.begin(), order.end(), rng);
        for (int f = 0; f < folds; ++f) {
            Job j;
            j.repeat = r;
            j.fold = f;
            const std::size_t lo = n * f / folds, hi = n * (f + 1) / folds;
            for (std::size_t i = lo; i < hi; ++i) j.test_idx.push_back(order[i]);
            jobs.push_back(std::move(j));
        }
    }

    std::vector<FoldOutcome> outcomes(jobs.size());
    std::vector<metrics::EvalStream> streams(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) break;
            const Job& job = jobs[j];
            label::LabeledDataset train_set, test_set;
            std::vector<bool> is_test(n, false);
            for (auto i : job.test_idx) is_test[i] = true;
            for (std::size_t i = 0; i < n; ++i) {
                (is_test[i] ? test_set : train_set).flights.push_back(data.flights[i]);
            }
            ModelConfig fold_cfg = cfg;
            fold_cfg.seed = cfg.seed + 1000003ull * (job.repeat + 1) + 7919ull * (job.fold + 1);
            const auto model = train(train_set, fold_cfg, with_decoder);
            const auto stream = eval_stream(model, to_sequences(test_set), Feedback::SelfFed);
            streams[j] = stream;
            outcomes[j] = FoldOutcome{metrics::evaluate(stream, metrics::ScoreParams{}), job.fold,
                                      job.repeat};
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::max(1, threads);
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    CrossvalOutcome out;
    out.folds = std::move(outcomes);
    metrics::EvalStream pooled;
    for (auto& s : streams) pooled.insert(pooled.end(), s.begin(), s.end());
    out.pooled = metrics::evaluate(pooled, metrics::ScoreParams{});
    return out;
}

std::string loss_curve_csv(const std::vector<double>& curve) {
    std::string out = "epoch,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out += std::to_string(i + 1) + "," + csv::format_double(curve[i]) + "\n";
    }
    return out;
}

}  // namespace atc::model
