#include "licsec/codec.hpp"

#include <cmath>

namespace licsec::codec {

using nn::Tensor;
using nn::Var;

void LicConfig::validate() const {
    if (stages < 1) raise(ErrorClass::Usage, "config: stages must be >= 1");
    if (channels < 1) raise(ErrorClass::Usage, "config: channels must be >= 1");
    if (kernel < 1 || kernel % 2 == 0)
        raise(ErrorClass::Usage, "config: encoder kernel must be odd and positive");
    if (stride < 2 || stride % 2 != 0)
        raise(ErrorClass::Usage,
              "config: stride must be even and >= 2 (decoder mirroring needs k-2p == stride)");
    if (!(lambda_rd > 0.0)) raise(ErrorClass::Usage, "config: lambda must be positive");
}

LicModel LicModel::init(const LicConfig& cfg) {
    cfg.validate();
    LicModel m;
    m.config = cfg;
    Rng rng(cfg.seed);

    auto make_layer = [&rng](ConvSpec spec, bool prunable) {
        int fan_in = spec.in_ch * spec.kernel * spec.kernel;
        std::vector<int> wshape = spec.transposed
                                      ? std::vector<int>{spec.in_ch, spec.out_ch, spec.kernel, spec.kernel}
                                      : std::vector<int>{spec.out_ch, spec.in_ch, spec.kernel, spec.kernel};
        Layer l;
        l.spec = spec;
        l.weight = nn::Parameter("w", nn::kaiming_uniform(wshape, fan_in, rng));
        l.bias = nn::Parameter("b", nn::bias_uniform(spec.out_ch, fan_in, rng));
        l.keep.assign(size_t(spec.out_ch), 1);
        l.prunable = prunable;
        return l;
    };

    const int pad = cfg.kernel / 2;
    for (int s = 0; s < cfg.stages; ++s) {
        ConvSpec spec;
        spec.transposed = false;
        spec.in_ch = (s == 0) ? 3 : cfg.channels;
        spec.out_ch = cfg.channels;
        spec.kernel = cfg.kernel;
        spec.stride = cfg.stride;
        spec.pad = pad;
        spec.relu_after = (s != cfg.stages - 1);  // latent layer is linear
        // The latent layer's width is structural (prior channels, CDF tables,
        // bitstream layout all depend on it), so it is exempt from pruning.
        m.encoder.push_back(make_layer(spec, s != cfg.stages - 1));
    }
    for (int s = 0; s < cfg.stages; ++s) {
        ConvSpec spec;
        spec.transposed = true;
        spec.in_ch = cfg.channels;
        spec.out_ch = (s == cfg.stages - 1) ? 3 : cfg.channels;
        spec.kernel = cfg.decoder_kernel();
        spec.stride = cfg.stride;
        spec.pad = cfg.decoder_pad();
        spec.relu_after = (s != cfg.stages - 1);  // final layer ends in clamp
        m.decoder.push_back(make_layer(spec, s != cfg.stages - 1));
    }

    m.prior.mu = nn::Parameter("prior.mu", Tensor::zeros({cfg.channels}));
    m.prior.log_b = nn::Parameter("prior.log_b", Tensor::zeros({cfg.channels}));
    return m;
}

std::vector<nn::Parameter*> LicModel::parameters() {
    std::vector<nn::Parameter*> out;
    for (auto& l : encoder) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    for (auto& l : decoder) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    out.push_back(&prior.mu);
    out.push_back(&prior.log_b);
    return out;
}

std::string LicModel::layer_id(bool dec, int index1) {
    return (dec ? "dec" : "enc") + std::to_string(index1);
}

Layer* LicModel::find_layer(const std::string& id) {
    for (size_t i = 0; i < encoder.size(); ++i)
        if (id == layer_id(false, int(i) + 1)) return &encoder[i];
    for (size_t i = 0; i < decoder.size(); ++i)
        if (id == layer_id(true, int(i) + 1)) return &decoder[i];
    return nullptr;
}
const Layer* LicModel::find_layer(const std::string& id) const {
    return const_cast<LicModel*>(this)->find_layer(id);
}

int64_t LicModel::parameter_count() const {
    // counts surviving parameters: masked-out channels and their consumer
    // input slices are excluded, matching what compact() would keep
    int64_t n = 0;
    const std::vector<uint8_t>* prev_keep = nullptr;
    for (const auto& l : encoder) {
        int in_kept = prev_keep ? int(std::count(prev_keep->begin(), prev_keep->end(), 1))
                                : l.spec.in_ch;
        n += int64_t(l.kept_channels()) * in_kept * l.spec.kernel * l.spec.kernel;
        n += l.kept_channels();
        prev_keep = &l.keep;
    }
    prev_keep = nullptr;
    for (const auto& l : decoder) {
        int in_kept = prev_keep ? int(std::count(prev_keep->begin(), prev_keep->end(), 1))
                                : l.spec.in_ch;
        n += int64_t(l.kept_channels()) * in_kept * l.spec.kernel * l.spec.kernel;
        n += l.kept_channels();
        prev_keep = &l.keep;
    }
    n += prior.mu.value().size() + prior.log_b.value().size();
    return n;
}

void LicModel::apply_masks() {
    auto zero_channel = [](Layer& l, int o) {
        Tensor& w = l.weight.value();
        if (!l.spec.transposed) {
            double* p = w.data() + int64_t(o) * w.dim(1) * w.dim(2) * w.dim(3);
            std::fill(p, p + int64_t(w.dim(1)) * w.dim(2) * w.dim(3), 0.0);
        } else {
            int64_t per = int64_t(w.dim(2)) * w.dim(3);
            for (int c = 0; c < w.dim(0); ++c) {
                double* p = w.data() + (int64_t(c) * w.dim(1) + o) * per;
                std::fill(p, p + per, 0.0);
            }
        }
        l.bias.value()[o] = 0.0;
    };
    for (auto& l : encoder)
        for (int o = 0; o < l.spec.out_ch; ++o)
            if (!l.keep[size_t(o)]) zero_channel(l, o);
    for (auto& l : decoder)
        for (int o = 0; o < l.spec.out_ch; ++o)
            if (!l.keep[size_t(o)]) zero_channel(l, o);
}

void LicModel::check_input(const nn::Tensor& x) const {
    if (x.ndim() != 4 || x.dim(1) != 3)
        raise(ErrorClass::Numeric, "encode: input must be [B,3,H,W], got " + x.shape_str());
    int t = config.total_stride();
    if (x.dim(2) % t != 0 || x.dim(3) % t != 0)
        raise(ErrorClass::Numeric,
              "encode: spatial dims " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                  " not divisible by total stride " + std::to_string(t) +
                  "; pad the input to a multiple of " + std::to_string(t));
}

Var LicModel::encode_graph(const Var& x) const {
    check_input(x.value());
    Var h = x;
    for (const auto& l : encoder) {
        h = nn::conv2d(h, l.weight.var, l.bias.var, l.spec.stride, l.spec.pad);
        if (l.spec.relu_after) h = nn::relu(h);
    }
    return h;
}

Var LicModel::decode_graph(const Var& z) const {
    Var h = z;
    for (const auto& l : decoder) {
        h = nn::conv2d_transposed(h, l.weight.var, l.bias.var, l.spec.stride, l.spec.pad);
        if (l.spec.relu_after) h = nn::relu(h);
    }
    return nn::clamp01(h);
}

namespace {
Tensor run_conv(const Layer& l, const Tensor& x) {
    Tensor y;
    if (l.spec.transposed)
        nn::kernels::conv2d_transposed_forward(x, l.weight.value(), l.bias.value(),
                                               l.spec.stride, l.spec.pad, y);
    else
        nn::kernels::conv2d_forward(x, l.weight.value(), l.bias.value(), l.spec.stride,
                                    l.spec.pad, y);
    return y;
}
}  // namespace

Tensor LicModel::encode(const Tensor& x) const {
    check_input(x);
    Tensor h = x;
    for (const auto& l : encoder) {
        h = run_conv(l, h);
        if (l.spec.relu_after)
            for (int64_t i = 0; i < h.size(); ++i) h[i] = h[i] > 0 ? h[i] : 0.0;
    }
    return h;
}

Tensor LicModel::decode(const Tensor& z) const {
    Tensor h = z;
    for (const auto& l : decoder) {
        h = run_conv(l, h);
        if (l.spec.relu_after)
            for (int64_t i = 0; i < h.size(); ++i) h[i] = h[i] > 0 ? h[i] : 0.0;
    }
    for (int64_t i = 0; i < h.size(); ++i) h[i] = std::min(1.0, std::max(0.0, h[i]));
    return h;
}

double LicModel::rate_estimate(const Tensor& z_hat) const {
    if (z_hat.ndim() != 4 || z_hat.dim(1) != prior.channels())
        raise(ErrorClass::Numeric, "rate_estimate: latent shape mismatch");
    const int B = z_hat.dim(0), C = z_hat.dim(1), H = z_hat.dim(2), W = z_hat.dim(3);
    auto cdf = [](double x, double m, double b) { return 1.0 / (1.0 + std::exp(-(x - m) / b)); };
    double bits = 0.0;
    for (int bi = 0; bi < B; ++bi)
        for (int c = 0; c < C; ++c) {
            double m = prior.mu.value()[c];
            double b = std::exp(prior.log_b.value()[c]);
            const double* zp = z_hat.data() + (int64_t(bi) * C + c) * H * W;
            for (int i = 0; i < H * W; ++i) {
                double p = cdf(zp[i] + 0.5, m, b) - cdf(zp[i] - 0.5, m, b);
                bits -= std::log2(std::max(p, 0x1.0p-24));
            }
        }
    int t = config.total_stride();
    double pixels = double(B) * (int64_t(H) * t) * (int64_t(W) * t);
    return bits / pixels;
}

Tensor make_uniform_noise(const std::vector<int>& shape, Rng& rng) {
    Tensor u(shape);
    for (int64_t i = 0; i < u.size(); ++i) u[i] = rng.uniform() - 0.5;
    return u;
}

Tensor round_latent(const Tensor& z) {
    Tensor out = z;
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::round(out[i]);
    return out;
}

RDGraph rd_loss(const LicModel& model, const Var& x, Rng& noise_rng) {
    const Tensor& xv = x.value();
    Var z = model.encode_graph(x);
    Var z_hat = nn::add_noise(z, make_uniform_noise(z.value().shape(), noise_rng));
    Var bits = nn::logistic_bits(z_hat, model.prior.mu.var, model.prior.log_b.var);
    double pixels = double(xv.dim(0)) * xv.dim(2) * xv.dim(3);
    Var rate_bpp = nn::scale(bits, 1.0 / pixels);
    Var x_hat = model.decode_graph(z_hat);
    // distortion at 8-bit scale so the paper's lambda range is meaningful
    Var d = nn::scale(nn::mse(x, x_hat), 255.0 * 255.0);
    Var loss = rate_bpp + nn::scale(d, model.config.lambda_rd);

    RDGraph g{loss, bits, {}};
    g.report.rate_bpp = rate_bpp.value()[0];
    g.report.distortion = d.value()[0];
    g.report.loss = g.report.rate_bpp + model.config.lambda_rd * g.report.distortion;
    if (!std::isfinite(g.report.loss))
        raise(ErrorClass::Numeric,
              "rd_loss: non-finite loss (rate=" + std::to_string(g.report.rate_bpp) +
                  ", distortion=" + std::to_string(g.report.distortion) + ")");
    return g;
}

nn::Tensor sample_batch(const std::vector<Image>& dataset, int batch, int crop, Rng& rng) {
    Tensor x({batch, 3, crop, crop});
    for (int b = 0; b < batch; ++b) {
        const Image& img = dataset[size_t(rng.below(dataset.size()))];
        if (img.height < crop || img.width < crop)
            raise(ErrorClass::Usage, "training image smaller than crop size");
        int y0 = int(rng.below(uint64_t(img.height - crop + 1)));
        int x0 = int(rng.below(uint64_t(img.width - crop + 1)));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < crop; ++y)
                for (int xx = 0; xx < crop; ++xx)
                    x.at4(b, c, y, xx) = img.at(c, y0 + y, x0 + xx);
    }
    return x;
}

TrainResult train(LicModel& model, const std::vector<Image>& dataset,
                  const TrainOptions& opts) {
    if (dataset.empty()) raise(ErrorClass::Usage, "train: dataset is empty");
    if (opts.crop % model.config.total_stride() != 0)
        raise(ErrorClass::Usage, "train: crop must be divisible by total stride");
    TrainResult res;
    if (opts.steps == 0) return res;

    Rng rng(model.config.seed + 1);
    nn::Adam opt(model.parameters(), {.lr = opts.lr});
    for (int64_t step = 0; step < opts.steps; ++step) {
        Var x = Var::constant(sample_batch(dataset, opts.batch_size, opts.crop, rng));
        RDGraph g = rd_loss(model, x, rng);
        opt.zero_grad();
        nn::backward(g.loss);
        opt.step();
        g.report.step = step;
        res.trace.push_back(g.report);
    }
    return res;
}

// ---- LICF serialization -------------------------------------------------

namespace {
constexpr uint32_t kLicfVersion = 1;

void write_layer(ByteWriter& w, const Layer& l) {
    w.u8(l.spec.transposed ? 1 : 0);
    w.u32(uint32_t(l.spec.in_ch));
    w.u32(uint32_t(l.spec.out_ch));
    w.u32(uint32_t(l.spec.kernel));
    w.u32(uint32_t(l.spec.stride));
    w.u32(uint32_t(l.spec.pad));
    w.u8(l.spec.relu_after ? 1 : 0);
    w.u8(l.prunable ? 1 : 0);
    for (int64_t i = 0; i < l.weight.value().size(); ++i) w.f64(l.weight.value()[i]);
    for (int64_t i = 0; i < l.bias.value().size(); ++i) w.f64(l.bias.value()[i]);
    for (uint8_t k : l.keep) w.u8(k);
}

Layer read_layer(ByteReader& r) {
    Layer l;
    l.spec.transposed = r.u8() != 0;
    l.spec.in_ch = int(r.u32());
    l.spec.out_ch = int(r.u32());
    l.spec.kernel = int(r.u32());
    l.spec.stride = int(r.u32());
    l.spec.pad = int(r.u32());
    l.spec.relu_after = r.u8() != 0;
    l.prunable = r.u8() != 0;
    if (l.spec.in_ch <= 0 || l.spec.out_ch <= 0 || l.spec.kernel <= 0 ||
        l.spec.in_ch > 1 << 16 || l.spec.out_ch > 1 << 16 || l.spec.kernel > 1 << 8)
        raise(ErrorClass::Format, "model file: implausible layer dimensions");
    std::vector<int> ws = l.spec.transposed
                              ? std::vector<int>{l.spec.in_ch, l.spec.out_ch, l.spec.kernel, l.spec.kernel}
                              : std::vector<int>{l.spec.out_ch, l.spec.in_ch, l.spec.kernel, l.spec.kernel};
    Tensor wt(ws);
    for (int64_t i = 0; i < wt.size(); ++i) wt[i] = r.f64();
    Tensor bt({l.spec.out_ch});
    for (int64_t i = 0; i < bt.size(); ++i) bt[i] = r.f64();
    l.weight = nn::Parameter("w", std::move(wt));
    l.bias = nn::Parameter("b", std::move(bt));
    l.keep.resize(size_t(l.spec.out_ch));
    for (auto& k : l.keep) k = r.u8();
    return l;
}
}  // namespace

Bytes LicModel::serialize() const {
    ByteWriter w;
    w.magic("LICF");
    w.u32(kLicfVersion);
    w.u32(uint32_t(config.stages));
    w.u32(uint32_t(config.channels));
    w.u32(uint32_t(config.kernel));
    w.u32(uint32_t(config.stride));
    w.f64(config.lambda_rd);
    w.u64(config.seed);
    w.u32(uint32_t(encoder.size()));
    for (const auto& l : encoder) write_layer(w, l);
    w.u32(uint32_t(decoder.size()));
    for (const auto& l : decoder) write_layer(w, l);
    w.u32(uint32_t(prior.channels()));
    for (int64_t i = 0; i < prior.mu.value().size(); ++i) w.f64(prior.mu.value()[i]);
    for (int64_t i = 0; i < prior.log_b.value().size(); ++i) w.f64(prior.log_b.value()[i]);
    return w.take();
}

LicModel LicModel::deserialize(const Bytes& data) {
    ByteReader r(data);
    r.expect_magic("LICF", "model file");
    uint32_t ver = r.u32();
    if (ver != kLicfVersion)
        raise(ErrorClass::Format, "model file: unsupported version " + std::to_string(ver));
    LicModel m;
    m.config.stages = int(r.u32());
    m.config.channels = int(r.u32());
    m.config.kernel = int(r.u32());
    m.config.stride = int(r.u32());
    m.config.lambda_rd = r.f64();
    m.config.seed = r.u64();
    uint32_t ne = r.u32();
    if (ne > 64) raise(ErrorClass::Format, "model file: implausible encoder depth");
    for (uint32_t i = 0; i < ne; ++i) m.encoder.push_back(read_layer(r));
    uint32_t nd = r.u32();
    if (nd > 64) raise(ErrorClass::Format, "model file: implausible decoder depth");
    for (uint32_t i = 0; i < nd; ++i) m.decoder.push_back(read_layer(r));
    uint32_t pc = r.u32();
    Tensor mu({int(pc)}), lb({int(pc)});
    for (int64_t i = 0; i < mu.size(); ++i) mu[i] = r.f64();
    for (int64_t i = 0; i < lb.size(); ++i) lb[i] = r.f64();
    m.prior.mu = nn::Parameter("prior.mu", std::move(mu));
    m.prior.log_b = nn::Parameter("prior.log_b", std::move(lb));
    if (!r.done()) raise(ErrorClass::Format, "model file: trailing bytes");
    return m;
}

void LicModel::save(const std::string& path) const { write_file(path, serialize()); }
LicModel LicModel::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace licsec::codec
