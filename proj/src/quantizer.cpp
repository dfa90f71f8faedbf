#include "licsec/quantizer.hpp"

#include <cmath>

namespace licsec::quant {

using codec::Layer;
using codec::LicModel;
using nn::Tensor;
using nn::Var;

namespace {

void minmax_update(double& mn, double& mx, const Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) {
        mn = std::min(mn, t[i]);
        mx = std::max(mx, t[i]);
    }
}

Tensor layer_forward_float(const Layer& l, const Tensor& x) {
    Tensor y;
    if (l.spec.transposed)
        nn::kernels::conv2d_transposed_forward(x, l.weight.value(), l.bias.value(),
                                               l.spec.stride, l.spec.pad, y);
    else
        nn::kernels::conv2d_forward(x, l.weight.value(), l.bias.value(), l.spec.stride,
                                    l.spec.pad, y);
    if (l.spec.relu_after)
        for (int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0 ? y[i] : 0.0;
    return y;
}

}  // namespace

CalibrationStats calibrate(const LicModel& model, const std::vector<Image>& images) {
    if (images.empty()) raise(ErrorClass::Usage, "calibrate: empty calibration set");
    CalibrationStats st;
    st.enc.resize(model.encoder.size());
    st.dec.resize(model.decoder.size());
    auto weight_stats = [](const Layer& l, LayerStats& s) {
        s.w_min = l.weight.value()[0];
        s.w_max = l.weight.value()[0];
        minmax_update(s.w_min, s.w_max, l.weight.value());
    };
    for (size_t i = 0; i < model.encoder.size(); ++i) weight_stats(model.encoder[i], st.enc[i]);
    for (size_t i = 0; i < model.decoder.size(); ++i) weight_stats(model.decoder[i], st.dec[i]);

    bool first = true;
    for (const auto& img : images) {
        Tensor h = img.to_tensor();
        model.check_input(h);
        for (size_t i = 0; i < model.encoder.size(); ++i) {
            h = layer_forward_float(model.encoder[i], h);
            if (first) {
                st.enc[i].act_min = h[0];
                st.enc[i].act_max = h[0];
            }
            minmax_update(st.enc[i].act_min, st.enc[i].act_max, h);
        }
        Tensor z = codec::round_latent(h);
        if (first) {
            st.latent_min = z[0];
            st.latent_max = z[0];
        }
        minmax_update(st.latent_min, st.latent_max, z);
        Tensor g = z;
        for (size_t i = 0; i < model.decoder.size(); ++i) {
            g = layer_forward_float(model.decoder[i], g);
            if (first) {
                st.dec[i].act_min = g[0];
                st.dec[i].act_max = g[0];
            }
            minmax_update(st.dec[i].act_min, st.dec[i].act_max, g);
        }
        first = false;
    }
    return st;
}

double scale_from_minmax(double mn, double mx, int qmax) {
    if (mn > mx) raise(ErrorClass::Numeric, "scale_from_minmax: min > max");
    double s = std::max(std::abs(mn), std::abs(mx)) / double(qmax);
    return std::max(s, kScaleFloor);
}

Tensor fake_quant(const Tensor& t, double s, int qmax) {
    if (!(s > 0)) raise(ErrorClass::Numeric, "fake_quant: scale must be positive");
    Tensor out = t;
    for (int64_t i = 0; i < out.size(); ++i) {
        double r = std::round(out[i] / s);
        r = std::min(double(qmax), std::max(double(-qmax), r));
        out[i] = r * s;
    }
    return out;
}

// ---- QAT ------------------------------------------------------------------

QatContext QatContext::init(const LicModel& model, const CalibrationStats& stats) {
    if (stats.enc.size() != model.encoder.size() || stats.dec.size() != model.decoder.size())
        raise(ErrorClass::Stage, "qat: calibration stats do not match the model");
    QatContext ctx;
    double s_in = 1.0 / 255.0;
    for (size_t i = 0; i < model.encoder.size(); ++i) {
        QatLayerParams p;
        p.s_w = nn::Parameter("s_w." + LicModel::layer_id(false, int(i) + 1),
                              Tensor::scalar(scale_from_minmax(stats.enc[i].w_min,
                                                               stats.enc[i].w_max, 127)));
        p.s_in = s_in;
        bool latent = (i + 1 == model.encoder.size());
        p.s_out = latent ? 1.0
                         : scale_from_minmax(0.0, std::max(stats.enc[i].act_max, 0.0), 255);
        s_in = p.s_out;
        ctx.enc.push_back(std::move(p));
    }
    s_in = 1.0;  // decoder consumes integer latents
    for (size_t i = 0; i < model.decoder.size(); ++i) {
        QatLayerParams p;
        p.s_w = nn::Parameter("s_w." + LicModel::layer_id(true, int(i) + 1),
                              Tensor::scalar(scale_from_minmax(stats.dec[i].w_min,
                                                               stats.dec[i].w_max, 127)));
        p.s_in = s_in;
        bool final_layer = (i + 1 == model.decoder.size());
        p.s_out = final_layer
                      ? 1.0 / 255.0
                      : scale_from_minmax(0.0, std::max(stats.dec[i].act_max, 0.0), 255);
        s_in = p.s_out;
        ctx.dec.push_back(std::move(p));
    }
    return ctx;
}

std::vector<nn::Parameter*> QatContext::scale_parameters() {
    std::vector<nn::Parameter*> out;
    for (auto& p : enc) out.push_back(&p.s_w);
    for (auto& p : dec) out.push_back(&p.s_w);
    return out;
}

void QatContext::clamp_scales() {
    for (auto* p : scale_parameters())
        if (p->value()[0] < kScaleFloor) p->value()[0] = kScaleFloor;
}

Var QatContext::fq_weight(const Layer& l, const QatLayerParams& p) const {
    return nn::fake_quant_sym(l.weight.var, p.s_w.var, 127);
}

QatForward qat_forward(const LicModel& model, const QatContext& ctx, const Var& x,
                       Rng& noise_rng) {
    if (ctx.enc.size() != model.encoder.size() || ctx.dec.size() != model.decoder.size())
        raise(ErrorClass::Stage, "qat_forward: context does not match the model");
    std::vector<Var> enc_wq, dec_wq;
    Var h = nn::fake_quant_unsigned(x, 1.0 / 255.0, 255);
    for (size_t i = 0; i < model.encoder.size(); ++i) {
        const Layer& l = model.encoder[i];
        const QatLayerParams& p = ctx.enc[i];
        Var wq = ctx.fq_weight(l, p);
        enc_wq.push_back(wq);
        Var bq = nn::fake_quant_grid(l.bias.var, p.s_w.value()[0] * p.s_in);
        h = nn::conv2d(h, wq, bq, l.spec.stride, l.spec.pad);
        if (l.spec.relu_after) h = nn::fake_quant_unsigned(nn::relu(h), p.s_out, 255);
    }
    QatForward f;
    f.enc_wq = std::move(enc_wq);
    f.z = h;
    f.z_hat = nn::add_noise(h, codec::make_uniform_noise(h.value().shape(), noise_rng));
    Var g = f.z_hat;
    for (size_t i = 0; i < model.decoder.size(); ++i) {
        const Layer& l = model.decoder[i];
        const QatLayerParams& p = ctx.dec[i];
        Var wq = ctx.fq_weight(l, p);
        dec_wq.push_back(wq);
        Var bq = nn::fake_quant_grid(l.bias.var, p.s_w.value()[0] * p.s_in);
        g = nn::conv2d_transposed(g, wq, bq, l.spec.stride, l.spec.pad);
        if (l.spec.relu_after)
            g = nn::fake_quant_unsigned(nn::relu(g), p.s_out, 255);
        else
            g = nn::fake_quant_unsigned(g, p.s_out, 255);  // final: 8-bit grid clamp
    }
    f.dec_wq = std::move(dec_wq);
    f.x_hat = g;
    return f;
}

QatRd qat_rd_loss(const LicModel& model, const QatContext& ctx, const Var& x,
                  Rng& noise_rng) {
    QatForward f = qat_forward(model, ctx, x, noise_rng);
    Var bits = nn::logistic_bits(f.z_hat, model.prior.mu.var, model.prior.log_b.var);
    QatForward fcopy = f;
    double pixels = double(x.value().dim(0)) * x.value().dim(2) * x.value().dim(3);
    Var rate_bpp = nn::scale(bits, 1.0 / pixels);
    Var d = nn::scale(nn::mse(x, f.x_hat), 255.0 * 255.0);
    QatRd out{rate_bpp + nn::scale(d, model.config.lambda_rd), {}, std::move(fcopy)};
    out.report.rate_bpp = rate_bpp.value()[0];
    out.report.distortion = d.value()[0];
    out.report.loss = out.report.rate_bpp + model.config.lambda_rd * out.report.distortion;
    if (!std::isfinite(out.report.loss))
        raise(ErrorClass::Numeric, "qat_rd_loss: non-finite loss");
    return out;
}

// ---- integer export ---------------------------------------------------------

namespace {

QuantizedLayer export_layer(const Layer& l, double s_w, double s_in, double s_out,
                            int32_t clip_lo, int32_t clip_hi, const std::string& id) {
    QuantizedLayer q;
    q.spec = l.spec;
    q.s_w = s_w;
    q.s_in = s_in;
    q.s_out = s_out;
    q.clip_lo = clip_lo;
    q.clip_hi = clip_hi;
    const Tensor& w = l.weight.value();
    q.weights.resize(size_t(w.size()));
    for (int64_t i = 0; i < w.size(); ++i) {
        double r = std::round(w[i] / s_w);
        r = std::min(127.0, std::max(-127.0, r));
        q.weights[size_t(i)] = int8_t(r);
    }
    const Tensor& b = l.bias.value();
    q.bias.resize(size_t(b.size()));
    double bias_scale = s_w * s_in;
    for (int64_t i = 0; i < b.size(); ++i) {
        double r = std::round(b[i] / bias_scale);
        if (std::abs(r) > 2147483647.0)
            raise(ErrorClass::Numeric, "quantize: int32 bias overflow in layer " + id);
        q.bias[size_t(i)] = int32_t(r);
    }
    return q;
}

}  // namespace

QuantizedModel quantize_model(const LicModel& model, const CalibrationStats& stats,
                              const QatContext* qat) {
    if (stats.enc.size() != model.encoder.size() || stats.dec.size() != model.decoder.size())
        raise(ErrorClass::Stage, "quantize: calibration stats do not match the model");
    QuantizedModel qm;
    qm.stages = uint32_t(model.encoder.size());
    qm.channels = uint32_t(model.prior.channels());
    qm.total_stride = uint32_t(model.config.total_stride());
    qm.lambda_rd = model.config.lambda_rd;

    // coder symbol range covers calibration latents with margin; the escape
    // slot handles anything beyond it
    double lspan = std::max(1.0, stats.latent_max - stats.latent_min);
    qm.latent_min = int32_t(std::floor(stats.latent_min - 0.25 * lspan)) - 2;
    qm.latent_max = int32_t(std::ceil(stats.latent_max + 0.25 * lspan)) + 2;

    // engine latent clip: generous symmetric bound, headroom-checked at load
    double labs = std::max(std::abs(stats.latent_min), std::abs(stats.latent_max));
    int32_t lbound = int32_t(std::max(16.0, std::ceil(labs * 4.0) + 8.0));

    double s_in = 1.0 / 255.0;
    for (size_t i = 0; i < model.encoder.size(); ++i) {
        bool latent = (i + 1 == model.encoder.size());
        double s_w = qat ? qat->enc[i].s_w.value()[0]
                         : scale_from_minmax(stats.enc[i].w_min, stats.enc[i].w_max, 127);
        double s_out =
            latent ? 1.0
                   : (qat ? qat->enc[i].s_out
                          : scale_from_minmax(0.0, std::max(stats.enc[i].act_max, 0.0), 255));
        int32_t lo = latent ? -lbound : 0;
        int32_t hi = latent ? lbound : 255;
        qm.enc.push_back(export_layer(model.encoder[i], s_w, s_in, s_out, lo, hi,
                                      LicModel::layer_id(false, int(i) + 1)));
        s_in = s_out;
    }
    s_in = 1.0;
    for (size_t i = 0; i < model.decoder.size(); ++i) {
        bool final_layer = (i + 1 == model.decoder.size());
        double s_w = qat ? qat->dec[i].s_w.value()[0]
                         : scale_from_minmax(stats.dec[i].w_min, stats.dec[i].w_max, 127);
        double s_out =
            final_layer
                ? 1.0 / 255.0
                : (qat ? qat->dec[i].s_out
                       : scale_from_minmax(0.0, std::max(stats.dec[i].act_max, 0.0), 255));
        qm.dec.push_back(export_layer(model.decoder[i], s_w, s_in, s_out, 0, 255,
                                      LicModel::layer_id(true, int(i) + 1)));
        s_in = s_out;
    }

    qm.prior_mu.resize(size_t(model.prior.channels()));
    qm.prior_b.resize(size_t(model.prior.channels()));
    for (int c = 0; c < model.prior.channels(); ++c) {
        qm.prior_mu[size_t(c)] = model.prior.mu.value()[c];
        qm.prior_b[size_t(c)] = std::exp(model.prior.log_b.value()[c]);
    }
    qm.cdf = ec::freeze_cdf(qm.prior_mu, qm.prior_b, qm.latent_min, qm.latent_max);
    return qm;
}

// ---- integer-engine float simulation ----------------------------------------

namespace {

Tensor deq_weights(const QuantizedLayer& l) {
    std::vector<int> shape = l.spec.transposed
                                 ? std::vector<int>{l.spec.in_ch, l.spec.out_ch, l.spec.kernel, l.spec.kernel}
                                 : std::vector<int>{l.spec.out_ch, l.spec.in_ch, l.spec.kernel, l.spec.kernel};
    Tensor w(shape);
    for (int64_t i = 0; i < w.size(); ++i) w[i] = double(l.weights[size_t(i)]) * l.s_w;
    return w;
}

Tensor deq_bias(const QuantizedLayer& l) {
    Tensor b({l.spec.out_ch});
    for (int64_t i = 0; i < b.size(); ++i) b[i] = double(l.bias[size_t(i)]) * l.s_w * l.s_in;
    return b;
}

// conv + requantize; input is the dequantized activation (r_in * s_in),
// output is the requantized integer grid value r_out (dequantize by * s_out)
Tensor sim_layer(const QuantizedLayer& l, const Tensor& x_deq) {
    Tensor y;
    Tensor w = deq_weights(l), b = deq_bias(l);
    if (l.spec.transposed)
        nn::kernels::conv2d_transposed_forward(x_deq, w, b, l.spec.stride, l.spec.pad, y);
    else
        nn::kernels::conv2d_forward(x_deq, w, b, l.spec.stride, l.spec.pad, y);
    for (int64_t i = 0; i < y.size(); ++i) {
        double r = std::round(y[i] / l.s_out);
        r = std::min(double(l.clip_hi), std::max(double(l.clip_lo), r));
        y[i] = r;
    }
    return y;
}

Tensor to_deq(const Tensor& r, double s) {
    Tensor out = r;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

}  // namespace

std::vector<Tensor> fake_encode_trace(const QuantizedModel& qm, const Tensor& x01) {
    std::vector<Tensor> acts;
    Tensor r = x01;  // snap to the 8-bit grid
    for (int64_t i = 0; i < r.size(); ++i)
        r[i] = std::min(255.0, std::max(0.0, std::round(r[i] * 255.0)));
    Tensor deq = to_deq(r, 1.0 / 255.0);
    for (const auto& l : qm.enc) {
        r = sim_layer(l, deq);
        acts.push_back(r);
        deq = to_deq(r, l.s_out);
    }
    return acts;
}

Tensor fake_encode(const QuantizedModel& qm, const Tensor& x01) {
    auto acts = fake_encode_trace(qm, x01);
    return acts.back();  // latent layer has s_out == 1: integers
}

Tensor fake_decode(const QuantizedModel& qm, const Tensor& z_int) {
    Tensor deq = z_int;  // latent scale is 1.0
    Tensor r;
    for (const auto& l : qm.dec) {
        r = sim_layer(l, deq);
        deq = to_deq(r, l.s_out);
    }
    return deq;  // final s_out = 1/255 -> values in [0,1]
}

// ---- LICQ serialization -------------------------------------------------------

namespace {
constexpr uint32_t kLicqVersion = 1;

void write_qlayer(ByteWriter& w, const QuantizedLayer& l) {
    w.u8(l.spec.transposed ? 1 : 0);
    w.u32(uint32_t(l.spec.in_ch));
    w.u32(uint32_t(l.spec.out_ch));
    w.u32(uint32_t(l.spec.kernel));
    w.u32(uint32_t(l.spec.stride));
    w.u32(uint32_t(l.spec.pad));
    w.u8(l.spec.relu_after ? 1 : 0);
    w.f64(l.s_w);
    w.f64(l.s_in);
    w.f64(l.s_out);
    w.i32(l.clip_lo);
    w.i32(l.clip_hi);
    w.u64(l.weights.size());
    w.bytes(reinterpret_cast<const uint8_t*>(l.weights.data()), l.weights.size());
    w.u64(l.bias.size());
    for (int32_t b : l.bias) w.i32(b);
}

QuantizedLayer read_qlayer(ByteReader& r) {
    QuantizedLayer l;
    l.spec.transposed = r.u8() != 0;
    l.spec.in_ch = int(r.u32());
    l.spec.out_ch = int(r.u32());
    l.spec.kernel = int(r.u32());
    l.spec.stride = int(r.u32());
    l.spec.pad = int(r.u32());
    l.spec.relu_after = r.u8() != 0;
    l.s_w = r.f64();
    l.s_in = r.f64();
    l.s_out = r.f64();
    l.clip_lo = r.i32();
    l.clip_hi = r.i32();
    if (l.spec.in_ch <= 0 || l.spec.out_ch <= 0 || l.spec.kernel <= 0 ||
        l.spec.in_ch > (1 << 16) || l.spec.out_ch > (1 << 16) || l.spec.kernel > 256 ||
        !(l.s_w > 0) || !(l.s_in > 0) || !(l.s_out > 0) || l.clip_lo >= l.clip_hi)
        raise(ErrorClass::Format, "quantized model: implausible layer parameters");
    uint64_t wn = r.u64();
    uint64_t expect = uint64_t(l.spec.in_ch) * uint64_t(l.spec.out_ch) *
                      uint64_t(l.spec.kernel) * uint64_t(l.spec.kernel);
    if (wn != expect) raise(ErrorClass::Format, "quantized model: weight blob size mismatch");
    Bytes wb = r.bytes(size_t(wn));
    l.weights.resize(size_t(wn));
    for (size_t i = 0; i < wb.size(); ++i) l.weights[i] = int8_t(wb[i]);
    uint64_t bn = r.u64();
    if (bn != uint64_t(l.spec.out_ch))
        raise(ErrorClass::Format, "quantized model: bias blob size mismatch");
    l.bias.resize(size_t(bn));
    for (auto& b : l.bias) b = r.i32();
    return l;
}
}  // namespace

Bytes QuantizedModel::serialize() const {
    ByteWriter w;
    w.magic("LICQ");
    w.u32(kLicqVersion);
    w.u32(stages);
    w.u32(channels);
    w.u32(total_stride);
    w.f64(lambda_rd);
    w.i32(latent_min);
    w.i32(latent_max);
    w.u32(uint32_t(enc.size()));
    for (const auto& l : enc) write_qlayer(w, l);
    w.u32(uint32_t(dec.size()));
    for (const auto& l : dec) write_qlayer(w, l);
    w.u32(uint32_t(prior_mu.size()));
    for (double v : prior_mu) w.f64(v);
    for (double v : prior_b) w.f64(v);
    w.u32(uint32_t(cdf.channels.size()));
    for (const auto& c : cdf.channels) {
        w.i32(c.smin);
        w.i32(c.smax);
        w.u8(c.has_escape ? 1 : 0);
        w.u32(uint32_t(c.cum.size()));
        for (uint32_t v : c.cum) w.u32(v);
    }
    return w.take();
}

QuantizedModel QuantizedModel::deserialize(const Bytes& data) {
    ByteReader r(data);
    r.expect_magic("LICQ", "quantized model");
    uint32_t ver = r.u32();
    if (ver != kLicqVersion)
        raise(ErrorClass::Format, "quantized model: unsupported version " + std::to_string(ver));
    QuantizedModel qm;
    qm.stages = r.u32();
    qm.channels = r.u32();
    qm.total_stride = r.u32();
    qm.lambda_rd = r.f64();
    qm.latent_min = r.i32();
    qm.latent_max = r.i32();
    uint32_t ne = r.u32();
    if (ne > 64) raise(ErrorClass::Format, "quantized model: implausible encoder depth");
    for (uint32_t i = 0; i < ne; ++i) qm.enc.push_back(read_qlayer(r));
    uint32_t nd = r.u32();
    if (nd > 64) raise(ErrorClass::Format, "quantized model: implausible decoder depth");
    for (uint32_t i = 0; i < nd; ++i) qm.dec.push_back(read_qlayer(r));
    uint32_t pc = r.u32();
    if (pc > (1u << 16)) raise(ErrorClass::Format, "quantized model: implausible prior size");
    qm.prior_mu.resize(pc);
    qm.prior_b.resize(pc);
    for (auto& v : qm.prior_mu) v = r.f64();
    for (auto& v : qm.prior_b) v = r.f64();
    uint32_t cc = r.u32();
    if (cc != pc) raise(ErrorClass::Format, "quantized model: cdf/prior channel mismatch");
    for (uint32_t i = 0; i < cc; ++i) {
        ec::ChannelCdf c;
        c.smin = r.i32();
        c.smax = r.i32();
        c.has_escape = r.u8() != 0;
        uint32_t n = r.u32();
        if (n > (1u << 18)) raise(ErrorClass::Format, "quantized model: implausible cdf size");
        c.cum.resize(n);
        for (auto& v : c.cum) v = r.u32();
        c.validate();
        qm.cdf.channels.push_back(std::move(c));
    }
    if (!r.done()) raise(ErrorClass::Format, "quantized model: trailing bytes");
    return qm;
}

void QuantizedModel::save(const std::string& path) const { write_file(path, serialize()); }
QuantizedModel QuantizedModel::load(const std::string& path) {
    return deserialize(read_file(path));
}

const QuantizedLayer* QuantizedModel::find_layer(const std::string& id) const {
    for (size_t i = 0; i < enc.size(); ++i)
        if (id == LicModel::layer_id(false, int(i) + 1)) return &enc[i];
    for (size_t i = 0; i < dec.size(); ++i)
        if (id == LicModel::layer_id(true, int(i) + 1)) return &dec[i];
    return nullptr;
}

std::vector<double> QuantizedModel::dequantized_weights(const std::string& id) const {
    const QuantizedLayer* l = find_layer(id);
    if (!l) raise(ErrorClass::Usage, "no such layer: " + id);
    std::vector<double> out(l->weights.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = double(l->weights[i]) * l->s_w;
    return out;
}

void refresh_latent_range(QuantizedModel& qm, const std::vector<Image>& images) {
    if (images.empty()) raise(ErrorClass::Usage, "refresh_latent_range: no images");
    double mn = 0, mx = 0;
    bool first = true;
    for (const auto& img : images) {
        Tensor z = fake_encode(qm, img.to_tensor());
        for (int64_t i = 0; i < z.size(); ++i) {
            if (first) {
                mn = mx = z[i];
                first = false;
            }
            mn = std::min(mn, z[i]);
            mx = std::max(mx, z[i]);
        }
    }
    double span = std::max(1.0, mx - mn);
    qm.latent_min = int32_t(std::floor(mn - 0.25 * span)) - 2;
    qm.latent_max = int32_t(std::ceil(mx + 0.25 * span)) + 2;
    qm.cdf = ec::freeze_cdf(qm.prior_mu, qm.prior_b, qm.latent_min, qm.latent_max);
}

int64_t QuantizedModel::weight_payload_bytes() const {
    int64_t n = 0;
    for (const auto& l : enc) n += int64_t(l.weights.size()) + int64_t(l.bias.size()) * 4;
    for (const auto& l : dec) n += int64_t(l.weights.size()) + int64_t(l.bias.size()) * 4;
    return n;
}

}  // namespace licsec::quant
