#include "aqflow/snn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aqflow/error.hpp"
#include "aqflow/simd.hpp"

namespace aqflow::snn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Surrogate pair: smooth spike Sig(x) = 0.5 + atan(pi*k*x/2)/pi and its
// derivative D(x) = (k/2) / (1 + (pi*k*x/2)^2), x = u - v_th.
double surrogate_spike(double x, double k) { return 0.5 + std::atan(0.5 * M_PI * k * x) / M_PI; }
double surrogate_deriv(double x, double k) {
    const double a = 0.5 * M_PI * k * x;
    return 0.5 * k / (1.0 + a * a);
}

void fill_normal(std::vector<double>& v, std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& x : v) x = dist(rng);
}

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

Param make_param(std::string name, std::vector<int> shape, double init = 0.0) {
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(shape_size(p.shape), init);
    p.grad.assign(p.value.size(), 0.0);
    p.m.assign(p.value.size(), 0.0);
    p.v.assign(p.value.size(), 0.0);
    return p;
}

// ---------------------------------------------------------------------------
// Conv2d, stride 1, zero padding to "same" size.

struct Conv2d {
    Param weight; // [cout][cin][k][k]
    Param bias;   // [cout]
    int cin = 0, cout = 0, k = 1;

    void init(const std::string& name, int cin_, int cout_, int k_, std::mt19937_64& rng,
              double weight_scale = -1.0) {
        cin = cin_;
        cout = cout_;
        k = k_;
        weight = make_param(name + ".weight", {cout, cin, k, k});
        bias = make_param(name + ".bias", {cout});
        const double scale =
            weight_scale > 0.0 ? weight_scale : std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
        fill_normal(weight.value, rng, scale);
    }

    double wval(int co, int ci, int ky, int kx) const {
        return weight.value[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
    }
    double& wgrad(int co, int ci, int ky, int kx) {
        return weight.grad[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
    }

    Tensor forward(const Tensor& in) const {
        const auto& kt = simd::active_kernels();
        const int H = in.h, W = in.w, r = k / 2;
        Tensor out(cout, H, W);
        for (int co = 0; co < cout; ++co) {
            double* plane = out.plane(co);
            const double b = bias.value[static_cast<std::size_t>(co)];
            for (std::size_t i = 0; i < out.plane_size(); ++i) plane[i] = b;
            for (int ci = 0; ci < cin; ++ci) {
                for (int ky = 0; ky < k; ++ky) {
                    const int y0 = std::max(0, r - ky);
                    const int y1 = std::min(H, H + r - ky);
                    for (int kx = 0; kx < k; ++kx) {
                        const double wv = wval(co, ci, ky, kx);
                        if (wv == 0.0) continue;
                        const int x0 = std::max(0, r - kx);
                        const int x1 = std::min(W, W + r - kx);
                        if (x1 <= x0) continue;
                        for (int y = y0; y < y1; ++y) {
                            kt.axpy(wv, in.row(ci, y + ky - r) + (x0 + kx - r), out.row(co, y) + x0,
                                    static_cast<std::size_t>(x1 - x0));
                        }
                    }
                }
            }
        }
        return out;
    }

    // Accumulates weight/bias grads from (in, dout) and returns dL/din.
    Tensor backward(const Tensor& in, const Tensor& dout) {
        const auto& kt = simd::active_kernels();
        const int H = in.h, W = in.w, r = k / 2;
        Tensor din(cin, H, W);
        for (int co = 0; co < cout; ++co) {
            bias.grad[static_cast<std::size_t>(co)] += kt.sum(dout.plane(co), dout.plane_size());
            for (int ci = 0; ci < cin; ++ci) {
                for (int ky = 0; ky < k; ++ky) {
                    const int y0 = std::max(0, r - ky);
                    const int y1 = std::min(H, H + r - ky);
                    for (int kx = 0; kx < k; ++kx) {
                        const int x0 = std::max(0, r - kx);
                        const int x1 = std::min(W, W + r - kx);
                        if (x1 <= x0) continue;
                        const double wv = wval(co, ci, ky, kx);
                        double wg = 0.0;
                        for (int y = y0; y < y1; ++y) {
                            const double* in_row = in.row(ci, y + ky - r) + (x0 + kx - r);
                            const double* dout_row = dout.row(co, y) + x0;
                            wg += kt.dot(in_row, dout_row, static_cast<std::size_t>(x1 - x0));
                            kt.axpy(wv, dout_row, din.row(ci, y + ky - r) + (x0 + kx - r),
                                    static_cast<std::size_t>(x1 - x0));
                        }
                        wgrad(co, ci, ky, kx) += wg;
                    }
                }
            }
        }
        return din;
    }

    std::uint64_t macs_per_step(int H, int W) const {
        return static_cast<std::uint64_t>(H) * W * k * k * cin * cout;
    }
};

// ---------------------------------------------------------------------------
// Pooling / upsampling (factor 2).

Tensor avgpool2(const Tensor& in) {
    Tensor out(in.ch, in.h / 2, in.w / 2);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                          in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    return out;
}

void avgpool2_backward(const Tensor& dout, Tensor& din) {
    for (int c = 0; c < dout.ch; ++c) {
        for (int y = 0; y < dout.h; ++y) {
            for (int x = 0; x < dout.w; ++x) {
                const double g = 0.25 * dout.at(c, y, x);
                din.at(c, 2 * y, 2 * x) += g;
                din.at(c, 2 * y, 2 * x + 1) += g;
                din.at(c, 2 * y + 1, 2 * x) += g;
                din.at(c, 2 * y + 1, 2 * x + 1) += g;
            }
        }
    }
}

struct BilinearTap {
    int i0, i1;
    double w0, w1;
};

BilinearTap up2_tap(int out_idx, int in_size) {
    const double src = std::clamp((out_idx + 0.5) * 0.5 - 0.5, 0.0, static_cast<double>(in_size - 1));
    BilinearTap t;
    t.i0 = static_cast<int>(std::floor(src));
    t.i1 = std::min(t.i0 + 1, in_size - 1);
    t.w1 = src - t.i0;
    t.w0 = 1.0 - t.w1;
    return t;
}

Tensor upsample2(const Tensor& in) {
    Tensor out(in.ch, in.h * 2, in.w * 2);
    for (int c = 0; c < in.ch; ++c) {
        for (int y = 0; y < out.h; ++y) {
            const BilinearTap ty = up2_tap(y, in.h);
            for (int x = 0; x < out.w; ++x) {
                const BilinearTap tx = up2_tap(x, in.w);
                out.at(c, y, x) = ty.w0 * (tx.w0 * in.at(c, ty.i0, tx.i0) + tx.w1 * in.at(c, ty.i0, tx.i1)) +
                                  ty.w1 * (tx.w0 * in.at(c, ty.i1, tx.i0) + tx.w1 * in.at(c, ty.i1, tx.i1));
            }
        }
    }
    return out;
}

void upsample2_backward(const Tensor& dout, Tensor& din) {
    for (int c = 0; c < dout.ch; ++c) {
        for (int y = 0; y < dout.h; ++y) {
            const BilinearTap ty = up2_tap(y, din.h);
            for (int x = 0; x < dout.w; ++x) {
                const BilinearTap tx = up2_tap(x, din.w);
                const double g = dout.at(c, y, x);
                din.at(c, ty.i0, tx.i0) += g * ty.w0 * tx.w0;
                din.at(c, ty.i0, tx.i1) += g * ty.w0 * tx.w1;
                din.at(c, ty.i1, tx.i0) += g * ty.w1 * tx.w0;
                din.at(c, ty.i1, tx.i1) += g * ty.w1 * tx.w1;
            }
        }
    }
}

Tensor concat_ch(const Tensor& a, const Tensor& b) {
    Tensor out(a.ch + b.ch, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

void split_ch(const Tensor& d, Tensor& da, Tensor& db) {
    std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), da.data.begin());
    std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(da.size()), d.data.end(), db.data.begin());
}

} // namespace

// ---------------------------------------------------------------------------
// Free LIF step (the unit the layers are built on).

double LIFParams::zeta(int channel) const {
    return sigmoid(zeta_raw.value[static_cast<std::size_t>(channel)]);
}
double LIFParams::v_th(int channel) const {
    return 0.01 + softplus(vth_raw.value[static_cast<std::size_t>(channel)]);
}

void lif_step(LIFState& state, double zeta, double v_th, const Tensor& feedforward,
              const Tensor& recurrent, Tensor& spikes_out) {
    if (!feedforward.same_shape(recurrent) && !recurrent.empty()) {
        throw std::invalid_argument("lif_step: feedforward/recurrent shape mismatch");
    }
    if (state.u.empty()) state.u = Tensor(feedforward.ch, feedforward.h, feedforward.w);
    if (!state.u.same_shape(feedforward)) {
        throw std::invalid_argument("lif_step: state/input shape mismatch");
    }
    if (!(zeta >= 0.0 && zeta <= 1.0)) throw std::invalid_argument("lif_step: zeta outside [0,1]");
    if (v_th < 0.01) throw std::invalid_argument("lif_step: v_th below 0.01");

    Tensor drive = feedforward;
    if (!recurrent.empty()) {
        for (std::size_t i = 0; i < drive.size(); ++i) drive.data[i] += recurrent.data[i];
    }
    spikes_out = Tensor(drive.ch, drive.h, drive.w);
    simd::active_kernels().lif_update(drive.size(), zeta, v_th, drive.data.data(),
                                      state.u.data.data(), spikes_out.data.data());
    state.s_prev = spikes_out;
}

void NetworkConfig::validate() const {
    if (pathway_a.size() != 2 || pathway_b.size() != 2) {
        throw std::invalid_argument("network: each pathway needs exactly two channel widths");
    }
    for (int c : pathway_a) {
        if (c < 1) throw std::invalid_argument("network: channel widths must be >= 1");
    }
    for (int c : pathway_b) {
        if (c < 1) throw std::invalid_argument("network: channel widths must be >= 1");
    }
    if (kernel % 2 != 1 || kernel < 1) throw std::invalid_argument("network: kernel must be odd");
    if (scales != 2) throw std::invalid_argument("network: topology is fixed at two scales");
    if (attention_reduction < 1) throw std::invalid_argument("network: attention reduction must be >= 1");
    if (surrogate_slope <= 0.0) throw std::invalid_argument("network: surrogate slope must be > 0");
}

void TrainConfig::validate() const {
    if (events_per_partition < 1) throw std::invalid_argument("train: K must be >= 1");
    if (buffer_len < 1) throw std::invalid_argument("train: buffer length must be >= 1");
    if (lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (crop < 2 || crop % 2 != 0) throw std::invalid_argument("train: crop must be even and >= 2");
    loss_cfg.validate();
}

namespace detail {

// ---------------------------------------------------------------------------
// Spiking conv layer: feedforward conv + recurrent conv on own previous
// spikes + per-channel LIF dynamics.

struct LIFCache {
    Tensor input, s_prev_in, u_prev, drive, u_pre, s;
};

struct LIFLayer {
    Conv2d ff;
    Conv2d rec;
    LIFParams lif;
    double slope = 2.0;
    bool smoothed = false;

    // recurrent state
    Tensor u;
    Tensor s_prev;

    void init(const std::string& name, int cin, int cout, int k, double slope_,
              std::mt19937_64& rng) {
        slope = slope_;
        ff.init(name + ".ff", cin, cout, k, rng);
        rec.init(name + ".rec", cout, cout, k, rng, 0.5 * std::sqrt(2.0 / (cout * k * k)));
        lif.zeta_raw = make_param(name + ".zeta_raw", {cout}, 0.85); // zeta ~= 0.70
        lif.vth_raw = make_param(name + ".vth_raw", {cout}, -1.0);   // v_th ~= 0.32
    }

    void reset_state() {
        u = Tensor();
        s_prev = Tensor();
    }

    void ensure_state(int cout, int h, int w) {
        if (u.empty() || u.ch != cout || u.h != h || u.w != w) {
            u = Tensor(cout, h, w);
            s_prev = Tensor(cout, h, w);
        }
    }

    Tensor step(const Tensor& input, LIFCache* cache, LayerActivity* activity) {
        const auto& kt = simd::active_kernels();
        Tensor ff_out = ff.forward(input);
        ensure_state(ff.cout, input.h, input.w);
        Tensor rec_out = rec.forward(s_prev);
        if (cache != nullptr) {
            cache->input = input;
            cache->s_prev_in = s_prev;
            cache->u_prev = u;
        }
        Tensor drive = ff_out;
        for (std::size_t i = 0; i < drive.size(); ++i) drive.data[i] += rec_out.data[i];

        Tensor spikes(drive.ch, drive.h, drive.w);
        Tensor u_pre = cache != nullptr ? Tensor(drive.ch, drive.h, drive.w) : Tensor();
        std::size_t fired = 0;
        for (int c = 0; c < drive.ch; ++c) {
            const double zeta = lif.zeta(c);
            const double v_th = lif.v_th(c);
            if (!smoothed && cache == nullptr) {
                fired += kt.lif_update(drive.plane_size(), zeta, v_th, drive.plane(c), u.plane(c),
                                       spikes.plane(c));
                continue;
            }
            double* up = u.plane(c);
            double* sp = spikes.plane(c);
            const double* dp = drive.plane(c);
            double* pre = cache != nullptr ? u_pre.plane(c) : nullptr;
            const double gain = 1.0 - zeta;
            for (std::size_t i = 0; i < drive.plane_size(); ++i) {
                const double ui = zeta * up[i] + gain * dp[i];
                if (pre != nullptr) pre[i] = ui;
                if (smoothed) {
                    const double s = surrogate_spike(ui - v_th, slope);
                    sp[i] = s;
                    up[i] = ui * (1.0 - s);
                } else if (ui >= v_th) {
                    sp[i] = 1.0;
                    up[i] = 0.0;
                    ++fired;
                } else {
                    sp[i] = 0.0;
                    up[i] = ui;
                }
            }
        }
        if (activity != nullptr) {
            activity->spikes += fired;
            activity->neuron_steps += spikes.size();
            activity->incoming_spikes += kt.sum(input.data.data(), input.size()) +
                                         kt.sum(s_prev.data.data(), s_prev.size());
            activity->fanout_synapses =
                static_cast<std::uint64_t>(ff.k) * ff.k * ff.cout;
        }
        s_prev = spikes;
        if (cache != nullptr) {
            cache->drive = std::move(drive);
            cache->u_pre = std::move(u_pre);
            cache->s = spikes;
        }
        return spikes;
    }

    // d_s: dL/d(output spikes); d_u_carry holds dL/d(u after this step) on
    // entry and dL/d(u before it) on exit. Returns dL/d(input); d_s_prev gets
    // the recurrent-path gradient for the previous step's spikes.
    Tensor backward(const LIFCache& cache, const Tensor& d_s, Tensor& d_u_carry, Tensor& d_s_prev) {
        const Tensor d_u_next = std::move(d_u_carry);
        const int C = cache.s.ch;
        Tensor d_drive(C, cache.s.h, cache.s.w);
        Tensor d_u(C, cache.s.h, cache.s.w);
        for (int c = 0; c < C; ++c) {
            const double zeta_raw = lif.zeta_raw.value[static_cast<std::size_t>(c)];
            const double vth_raw = lif.vth_raw.value[static_cast<std::size_t>(c)];
            const double zeta = sigmoid(zeta_raw);
            const double v_th = 0.01 + softplus(vth_raw);
            const double* pre = cache.u_pre.plane(c);
            const double* s = cache.s.plane(c);
            const double* uprev = cache.u_prev.plane(c);
            const double* drv = cache.drive.plane(c);
            const double* ds = d_s.plane(c);
            const double* dun = d_u_next.empty() ? nullptr : d_u_next.plane(c);
            double* ddrv = d_drive.plane(c);
            double* du = d_u.plane(c);
            double g_zeta = 0.0;
            double g_vth = 0.0;
            for (std::size_t i = 0; i < cache.s.plane_size(); ++i) {
                const double D = surrogate_deriv(pre[i] - v_th, slope);
                const double dnext = dun != nullptr ? dun[i] : 0.0;
                // u_out = u_pre * (1 - s); s = S(u_pre - v_th)
                const double d_upre = ds[i] * D + dnext * ((1.0 - s[i]) - pre[i] * D);
                g_vth += -(ds[i] * D - dnext * pre[i] * D);
                ddrv[i] = d_upre * (1.0 - zeta);
                du[i] = d_upre * zeta;
                g_zeta += d_upre * (uprev[i] - drv[i]);
            }
            lif.zeta_raw.grad[static_cast<std::size_t>(c)] += g_zeta * zeta * (1.0 - zeta);
            lif.vth_raw.grad[static_cast<std::size_t>(c)] += g_vth * sigmoid(vth_raw);
        }
        Tensor d_input = ff.backward(cache.input, d_drive);
        d_s_prev = rec.backward(cache.s_prev_in, d_drive);
        return d_input;
    }

    std::vector<Param*> params() {
        return {&ff.weight, &ff.bias, &rec.weight, &rec.bias, &lif.zeta_raw, &lif.vth_raw};
    }
};

// ---------------------------------------------------------------------------
// ConvGRU over spiking input.

struct GRUCache {
    Tensor x, h_prev, cat_zr, z, r, rh, cat_h, htilde;
};

struct GRULayer {
    Conv2d conv_z, conv_r, conv_h;
    int channels = 0;
    Tensor h;

    void init(const std::string& name, int cin, int ch, int k, std::mt19937_64& rng) {
        channels = ch;
        conv_z.init(name + ".z", cin + ch, ch, k, rng);
        conv_r.init(name + ".r", cin + ch, ch, k, rng);
        conv_h.init(name + ".cand", cin + ch, ch, k, rng);
    }

    void reset_state() { h = Tensor(); }

    void ensure_state(int hgt, int wid) {
        if (h.empty() || h.h != hgt || h.w != wid) h = Tensor(channels, hgt, wid);
    }

    Tensor step(const Tensor& x, GRUCache* cache, LayerActivity* activity) {
        ensure_state(x.h, x.w);
        Tensor cat_zr = concat_ch(x, h);
        Tensor z = conv_z.forward(cat_zr);
        Tensor r = conv_r.forward(cat_zr);
        for (double& v : z.data) v = sigmoid(v);
        for (double& v : r.data) v = sigmoid(v);
        Tensor rh(channels, x.h, x.w);
        for (std::size_t i = 0; i < rh.size(); ++i) rh.data[i] = r.data[i] * h.data[i];
        Tensor cat_h = concat_ch(x, rh);
        Tensor htilde = conv_h.forward(cat_h);
        for (double& v : htilde.data) v = std::tanh(v);
        Tensor h_new(channels, x.h, x.w);
        for (std::size_t i = 0; i < h_new.size(); ++i) {
            h_new.data[i] = (1.0 - z.data[i]) * h.data[i] + z.data[i] * htilde.data[i];
        }
        if (activity != nullptr) {
            activity->dense_macs += conv_z.macs_per_step(x.h, x.w) + conv_r.macs_per_step(x.h, x.w) +
                                    conv_h.macs_per_step(x.h, x.w);
        }
        if (cache != nullptr) {
            cache->x = x;
            cache->h_prev = h;
            cache->cat_zr = std::move(cat_zr);
            cache->z = z;
            cache->r = r;
            cache->rh = std::move(rh);
            cache->cat_h = std::move(cat_h);
            cache->htilde = htilde;
        }
        h = h_new;
        return h_new;
    }

    // d_h_out: dL/d(new state). Returns dL/dx; d_h_prev gets dL/d(old state).
    Tensor backward(const GRUCache& cache, const Tensor& d_h_out, Tensor& d_h_prev) {
        const std::size_t n = d_h_out.size();
        Tensor dz(channels, d_h_out.h, d_h_out.w);
        Tensor dhtilde(channels, d_h_out.h, d_h_out.w);
        d_h_prev = Tensor(channels, d_h_out.h, d_h_out.w);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = d_h_out.data[i];
            dz.data[i] = g * (cache.htilde.data[i] - cache.h_prev.data[i]);
            dhtilde.data[i] = g * cache.z.data[i];
            d_h_prev.data[i] = g * (1.0 - cache.z.data[i]);
        }
        // candidate branch
        for (std::size_t i = 0; i < n; ++i) {
            dhtilde.data[i] *= 1.0 - cache.htilde.data[i] * cache.htilde.data[i];
        }
        Tensor dcat_h = conv_h.backward(cache.cat_h, dhtilde);
        Tensor dx(cache.x.ch, cache.x.h, cache.x.w);
        Tensor drh(channels, d_h_out.h, d_h_out.w);
        split_ch(dcat_h, dx, drh);
        Tensor dr(channels, d_h_out.h, d_h_out.w);
        for (std::size_t i = 0; i < n; ++i) {
            dr.data[i] = drh.data[i] * cache.h_prev.data[i];
            d_h_prev.data[i] += drh.data[i] * cache.r.data[i];
        }
        // gate branches
        for (std::size_t i = 0; i < n; ++i) {
            dz.data[i] *= cache.z.data[i] * (1.0 - cache.z.data[i]);
            dr.data[i] *= cache.r.data[i] * (1.0 - cache.r.data[i]);
        }
        Tensor dcat_z = conv_z.backward(cache.cat_zr, dz);
        Tensor dcat_r = conv_r.backward(cache.cat_zr, dr);
        Tensor dx_part(cache.x.ch, cache.x.h, cache.x.w);
        Tensor dh_part(channels, d_h_out.h, d_h_out.w);
        split_ch(dcat_z, dx_part, dh_part);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dx_part.data[i];
        for (std::size_t i = 0; i < d_h_prev.size(); ++i) d_h_prev.data[i] += dh_part.data[i];
        split_ch(dcat_r, dx_part, dh_part);
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dx_part.data[i];
        for (std::size_t i = 0; i < d_h_prev.size(); ++i) d_h_prev.data[i] += dh_part.data[i];
        return dx;
    }

    std::vector<Param*> params() {
        return {&conv_z.weight, &conv_z.bias, &conv_r.weight, &conv_r.bias,
                &conv_h.weight, &conv_h.bias};
    }
};

// ---------------------------------------------------------------------------
// Channel gate from spike statistics. Shared per-channel MLP with
// non-negative weights (squared reparameterization), so the gate is
// monotone in each channel's own spike count for every training state.

struct AttnCache {
    std::vector<double> stats, pre, hid, gates;
    Tensor fused;
};

struct AttentionGate {
    Param w1_raw, b1, w2_raw, b2; // hidden-sized vectors, b2 scalar
    int hidden = 1;

    void init(const std::string& name, int channels, int reduction) {
        hidden = std::max(1, channels / std::max(1, reduction));
        w1_raw = make_param(name + ".w1_raw", {hidden}, 1.0);
        b1 = make_param(name + ".b1", {hidden}, 0.0);
        w2_raw = make_param(name + ".w2_raw", {hidden}, std::sqrt(1.0 / hidden));
        b2 = make_param(name + ".b2", {1}, 0.0);
    }

    std::vector<double> gates(const std::vector<double>& stats, AttnCache* cache) const {
        const int C = static_cast<int>(stats.size());
        std::vector<double> pre(static_cast<std::size_t>(C) * hidden);
        std::vector<double> hid(pre.size());
        std::vector<double> out(stats.size());
        for (int c = 0; c < C; ++c) {
            double z = b2.value[0];
            for (int j = 0; j < hidden; ++j) {
                const double w1 = w1_raw.value[j] * w1_raw.value[j];
                const double p = w1 * stats[static_cast<std::size_t>(c)] + b1.value[j];
                pre[static_cast<std::size_t>(c) * hidden + j] = p;
                const double hv = p > 0.0 ? p : 0.0;
                hid[static_cast<std::size_t>(c) * hidden + j] = hv;
                z += w2_raw.value[j] * w2_raw.value[j] * hv;
            }
            out[static_cast<std::size_t>(c)] = sigmoid(z);
        }
        if (cache != nullptr) {
            cache->stats = stats;
            cache->pre = std::move(pre);
            cache->hid = std::move(hid);
            cache->gates = out;
        }
        return out;
    }

    // d_gates -> d_stats, accumulating parameter gradients.
    std::vector<double> backward(const AttnCache& cache, const std::vector<double>& d_gates) {
        const int C = static_cast<int>(cache.stats.size());
        std::vector<double> d_stats(cache.stats.size(), 0.0);
        for (int c = 0; c < C; ++c) {
            const double g = cache.gates[static_cast<std::size_t>(c)];
            const double dz = d_gates[static_cast<std::size_t>(c)] * g * (1.0 - g);
            b2.grad[0] += dz;
            for (int j = 0; j < hidden; ++j) {
                const double hv = cache.hid[static_cast<std::size_t>(c) * hidden + j];
                const double w2 = w2_raw.value[j] * w2_raw.value[j];
                w2_raw.grad[j] += dz * hv * 2.0 * w2_raw.value[j];
                if (cache.pre[static_cast<std::size_t>(c) * hidden + j] > 0.0) {
                    const double dpre = dz * w2;
                    const double w1 = w1_raw.value[j] * w1_raw.value[j];
                    w1_raw.grad[j] += dpre * cache.stats[static_cast<std::size_t>(c)] * 2.0 * w1_raw.value[j];
                    b1.grad[j] += dpre;
                    d_stats[static_cast<std::size_t>(c)] += dpre * w1;
                }
            }
        }
        return d_stats;
    }

    std::vector<Param*> params() { return {&w1_raw, &b1, &w2_raw, &b2}; }
};

// ---------------------------------------------------------------------------
// Full network.

struct StepCache {
    LIFCache a1, a2, b1, b2;
    GRUCache gru;
    AttnCache attn;
    Tensor in, b0, a1_pooled, b2_in, up_g, up_b2, fused, gated;
};

struct NetworkImpl {
    NetworkConfig cfg;
    LIFLayer lif_a1, lif_a2, lif_b1, lif_b2;
    GRULayer gru;
    AttentionGate attn;
    Conv2d head;
    bool smoothed = false;

    std::vector<StepCache> tape;
    SpikeRecord rec;

    explicit NetworkImpl(const NetworkConfig& c) : cfg(c) {
        cfg.validate();
        std::mt19937_64 rng(cfg.seed);
        const int k = cfg.kernel;
        lif_a1.init("a1", 2, cfg.pathway_a[0], k, cfg.surrogate_slope, rng);
        lif_a2.init("a2", cfg.pathway_a[0], cfg.pathway_a[1], k, cfg.surrogate_slope, rng);
        lif_b1.init("b1", 2, cfg.pathway_b[0], k, cfg.surrogate_slope, rng);
        lif_b2.init("b2", cfg.pathway_b[0] + cfg.pathway_a[0], cfg.pathway_b[1], k,
                    cfg.surrogate_slope, rng);
        gru.init("gru", cfg.pathway_b[1], cfg.pathway_b[1], k, rng);
        attn.init("attn", cfg.fused_channels(), cfg.attention_reduction);
        head.init("head", cfg.fused_channels(), cfg.head_channels(), 1, rng, 0.01);
        reset_record();
    }

    void reset_record() {
        rec.layers.clear();
        rec.layers.push_back({"a1", true, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"a2", true, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"b1", true, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"b2", true, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"gru", false, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"attention", false, 0, 0, 0.0, 0, 0});
        rec.layers.push_back({"head", false, 0, 0, 0.0, 0, 0});
    }

    void set_smoothed(bool s) {
        smoothed = s;
        lif_a1.smoothed = s;
        lif_a2.smoothed = s;
        lif_b1.smoothed = s;
        lif_b2.smoothed = s;
    }

    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (LIFLayer* l : {&lif_a1, &lif_a2, &lif_b1, &lif_b2}) {
            for (Param* p : l->params()) out.push_back(p);
        }
        for (Param* p : gru.params()) out.push_back(p);
        for (Param* p : attn.params()) out.push_back(p);
        out.push_back(&head.weight);
        out.push_back(&head.bias);
        return out;
    }

    MotionField step(const EventCountImage& input, bool record_tape) {
        const int W = input.pos.width();
        const int H = input.pos.height();
        if (W % 2 != 0 || H % 2 != 0) {
            throw std::invalid_argument("network: input dimensions must be even");
        }
        Tensor in(2, H, W);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                in.at(0, y, x) = input.pos.at(x, y);
                in.at(1, y, x) = input.neg.at(x, y);
            }
        }

        StepCache local;
        StepCache* cp = nullptr;
        if (record_tape) {
            tape.emplace_back();
            cp = &tape.back();
        }
        StepCache& c = cp != nullptr ? *cp : local;
        c.in = in;

        Tensor a1 = lif_a1.step(in, cp != nullptr ? &c.a1 : nullptr, &rec.layers[0]);
        Tensor a2 = lif_a2.step(a1, cp != nullptr ? &c.a2 : nullptr, &rec.layers[1]);
        c.b0 = avgpool2(in);
        Tensor b1 = lif_b1.step(c.b0, cp != nullptr ? &c.b1 : nullptr, &rec.layers[2]);
        c.a1_pooled = avgpool2(a1);
        c.b2_in = concat_ch(b1, c.a1_pooled);
        Tensor b2 = lif_b2.step(c.b2_in, cp != nullptr ? &c.b2 : nullptr, &rec.layers[3]);
        Tensor g = gru.step(b2, cp != nullptr ? &c.gru : nullptr, &rec.layers[4]);
        c.up_g = upsample2(g);
        c.up_b2 = upsample2(b2);
        c.fused = concat_ch(a2, c.up_g);

        // channel statistics from spikes: mean spike count per channel
        const int C = cfg.fused_channels();
        std::vector<double> stats(static_cast<std::size_t>(C), 0.0);
        const auto& kt = simd::active_kernels();
        for (int ch = 0; ch < a2.ch; ++ch) {
            stats[static_cast<std::size_t>(ch)] =
                kt.sum(a2.plane(ch), a2.plane_size()) / static_cast<double>(a2.plane_size());
        }
        for (int ch = 0; ch < c.up_b2.ch; ++ch) {
            stats[static_cast<std::size_t>(a2.ch + ch)] =
                kt.sum(c.up_b2.plane(ch), c.up_b2.plane_size()) /
                static_cast<double>(c.up_b2.plane_size());
        }
        const std::vector<double> gates = attn.gates(stats, cp != nullptr ? &c.attn : nullptr);
        rec.layers[5].dense_macs += static_cast<std::uint64_t>(C) * attn.hidden * 2;

        c.gated = c.fused;
        for (int ch = 0; ch < c.gated.ch; ++ch) {
            double* plane = c.gated.plane(ch);
            const double gv = gates[static_cast<std::size_t>(ch)];
            for (std::size_t i = 0; i < c.gated.plane_size(); ++i) plane[i] *= gv;
        }
        if (cp != nullptr) c.attn.fused = c.fused;

        Tensor flow = head.forward(c.gated);
        rec.layers[6].dense_macs += head.macs_per_step(H, W);

        MotionField field(W, H, 1);
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t cell = field.cell_index(x, y);
                field.vx(cell) = flow.at(0, y, x);
                field.vy(cell) = flow.at(1, y, x);
                field.phi(cell) = cfg.predict_phi ? flow.at(2, y, x) : 0.0;
            }
        }
        return field;
    }

    void backward(const std::vector<Tensor>& dflow_per_step) {
        if (dflow_per_step.size() != tape.size()) {
            throw std::invalid_argument("network backward: gradient count != recorded steps");
        }
        // State gradients carried to the previous timestep.
        Tensor du_a1, ds_a1, du_a2, ds_a2, du_b1, ds_b1, du_b2, ds_b2, dh_gru;

        for (std::size_t si = tape.size(); si-- > 0;) {
            const StepCache& c = tape[si];
            const Tensor& dflow = dflow_per_step[si];

            Tensor d_gated = head.backward(c.gated, dflow);

            // gate backward: gated = fused * gates(stats)
            const int C = cfg.fused_channels();
            std::vector<double> d_gates(static_cast<std::size_t>(C), 0.0);
            Tensor d_fused(d_gated.ch, d_gated.h, d_gated.w);
            for (int ch = 0; ch < C; ++ch) {
                const double gv = c.attn.gates[static_cast<std::size_t>(ch)];
                const double* dg = d_gated.plane(ch);
                const double* fz = c.attn.fused.plane(ch);
                double* df = d_fused.plane(ch);
                double acc = 0.0;
                for (std::size_t i = 0; i < d_gated.plane_size(); ++i) {
                    df[i] = dg[i] * gv;
                    acc += dg[i] * fz[i];
                }
                d_gates[static_cast<std::size_t>(ch)] = acc;
            }
            const std::vector<double> d_stats = attn.backward(c.attn, d_gates);

            // split fused gradient into the A2 part and the upsampled-GRU part
            const int ca2 = cfg.pathway_a[1];
            Tensor d_a2_s(ca2, d_fused.h, d_fused.w);
            Tensor d_up_g(cfg.pathway_b[1], d_fused.h, d_fused.w);
            split_ch(d_fused, d_a2_s, d_up_g);

            // stats gradient: mean over pixels of A2 spikes and upsampled B2
            {
                const double inv_a2 = 1.0 / static_cast<double>(d_a2_s.plane_size());
                for (int ch = 0; ch < ca2; ++ch) {
                    const double g = d_stats[static_cast<std::size_t>(ch)] * inv_a2;
                    double* plane = d_a2_s.plane(ch);
                    for (std::size_t i = 0; i < d_a2_s.plane_size(); ++i) plane[i] += g;
                }
            }
            Tensor d_up_b2(cfg.pathway_b[1], c.up_b2.h, c.up_b2.w);
            {
                const double inv_up = 1.0 / static_cast<double>(c.up_b2.plane_size());
                for (int ch = 0; ch < cfg.pathway_b[1]; ++ch) {
                    const double g = d_stats[static_cast<std::size_t>(ca2 + ch)] * inv_up;
                    double* plane = d_up_b2.plane(ch);
                    for (std::size_t i = 0; i < d_up_b2.plane_size(); ++i) plane[i] = g;
                }
            }

            // upsample backwards into half-resolution grads
            Tensor d_g(cfg.pathway_b[1], c.gru.h_prev.h, c.gru.h_prev.w);
            upsample2_backward(d_up_g, d_g);
            Tensor d_b2_s(cfg.pathway_b[1], c.b2.s.h, c.b2.s.w);
            upsample2_backward(d_up_b2, d_b2_s);

            // GRU
            if (!dh_gru.empty()) {
                for (std::size_t i = 0; i < d_g.size(); ++i) d_g.data[i] += dh_gru.data[i];
            }
            Tensor d_gru_x = gru.backward(c.gru, d_g, dh_gru);
            for (std::size_t i = 0; i < d_b2_s.size(); ++i) d_b2_s.data[i] += d_gru_x.data[i];

            // LIF B2 (spikes also feed the next step's recurrent conv)
            if (!ds_b2.empty()) {
                for (std::size_t i = 0; i < d_b2_s.size(); ++i) d_b2_s.data[i] += ds_b2.data[i];
            }
            Tensor d_b2_in = lif_b2.backward(c.b2, d_b2_s, du_b2, du_b2, ds_b2);
            Tensor d_b1_s(cfg.pathway_b[0], d_b2_in.h, d_b2_in.w);
            Tensor d_a1_pooled(cfg.pathway_a[0], d_b2_in.h, d_b2_in.w);
            split_ch(d_b2_in, d_b1_s, d_a1_pooled);

            // LIF A2
            if (!ds_a2.empty()) {
                for (std::size_t i = 0; i < d_a2_s.size(); ++i) d_a2_s.data[i] += ds_a2.data[i];
            }
            Tensor d_a1_s = lif_a2.backward(c.a2, d_a2_s, du_a2, du_a2, ds_a2);

            // cross-pathway skip: pooled A1 spikes entered B2's input
            avgpool2_backward(d_a1_pooled, d_a1_s);

            // LIF B1
            if (!ds_b1.empty()) {
                for (std::size_t i = 0; i < d_b1_s.size(); ++i) d_b1_s.data[i] += ds_b1.data[i];
            }
            Tensor d_b0 = lif_b1.backward(c.b1, d_b1_s, du_b1, du_b1, ds_b1);
            (void)d_b0; // input path ends here

            // LIF A1
            if (!ds_a1.empty()) {
                for (std::size_t i = 0; i < d_a1_s.size(); ++i) d_a1_s.data[i] += ds_a1.data[i];
            }
            Tensor d_in = lif_a1.backward(c.a1, d_a1_s, du_a1, du_a1, ds_a1);
            (void)d_in;
        }
        tape.clear();
    }

    void reset_state() {
        lif_a1.reset_state();
        lif_a2.reset_state();
        lif_b1.reset_state();
        lif_b2.reset_state();
        gru.reset_state();
        tape.clear();
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Network facade.

Network::Network(const NetworkConfig& cfg) : impl_(std::make_unique<detail::NetworkImpl>(cfg)) {}
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

const NetworkConfig& Network::config() const { return impl_->cfg; }
void Network::reset_state() { impl_->reset_state(); }

MotionField Network::step(const EventCountImage& input, bool record_tape) {
    return impl_->step(input, record_tape);
}

void Network::backward(const std::vector<Tensor>& dflow_per_step) {
    impl_->backward(dflow_per_step);
}

void Network::zero_grad() {
    for (Param* p : impl_->params()) p->grad.assign(p->grad.size(), 0.0);
}

void Network::detach_state() { impl_->tape.clear(); }

void Network::set_smoothed(bool smoothed) { impl_->set_smoothed(smoothed); }

std::vector<Param*> Network::params() { return impl_->params(); }

const SpikeRecord& Network::record() const { return impl_->rec; }
void Network::reset_record() { impl_->reset_record(); }

std::vector<double> Network::attention_gates(const std::vector<double>& channel_stats) const {
    return impl_->attn.gates(channel_stats, nullptr);
}

OpCounts count_params_and_ops(Network& net, const SpikeRecord& record) {
    OpCounts counts;
    for (Param* p : net.params()) counts.params += p->size();
    for (const LayerActivity& layer : record.layers) {
        if (layer.spiking) {
            counts.synaptic_ops += layer.incoming_spikes * static_cast<double>(layer.fanout_synapses);
        } else {
            counts.dense_macs += static_cast<double>(layer.dense_macs);
        }
    }
    return counts;
}

} // namespace aqflow::snn
