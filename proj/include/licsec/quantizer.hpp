#pragma once

#include <optional>
#include <string>
#include <vector>

#include "licsec/codec.hpp"
#include "licsec/entropy.hpp"

namespace licsec::quant {

// Scale floor for degenerate (all-zero) ranges.
constexpr double kScaleFloor = 0x1.0p-20;

struct LayerStats {
    double w_min = 0, w_max = 0;
    double act_min = 0, act_max = 0;  // layer output after its activation
};

struct CalibrationStats {
    std::vector<LayerStats> enc, dec;
    double latent_min = 0, latent_max = 0;  // rounded-latent range (coder clip)
};

// Forward-only min/max collection over a calibration set.
CalibrationStats calibrate(const codec::LicModel& model,
                           const std::vector<Image>& images);

// s = max(|min|,|max|)/qmax, floored at 2^-20.
double scale_from_minmax(double mn, double mx, int qmax);

// Standalone Eq.-style fake quantizer (tensor level).
nn::Tensor fake_quant(const nn::Tensor& t, double s, int qmax = 127);

// Per-layer quantization parameters during QAT: weight scales are learnable
// (calibration initializes, fine-tuning refines); activation scales stay
// frozen from calibration.
struct QatLayerParams {
    nn::Parameter s_w;   // scalar
    double s_in = 0;     // input activation scale
    double s_out = 0;    // output activation scale (1.0 for the latent layer)
};

struct QatContext {
    std::vector<QatLayerParams> enc, dec;

    static QatContext init(const codec::LicModel& model, const CalibrationStats& stats);
    std::vector<nn::Parameter*> scale_parameters();
    void clamp_scales();  // re-apply the scale floor after optimizer steps

    // Fake-quantized weight of one layer (shared between the conv and any
    // watermark term built on the same step's graph).
    nn::Var fq_weight(const codec::Layer& l, const QatLayerParams& p) const;
};

struct QatForward {
    nn::Var z;      // latent before relaxation
    nn::Var z_hat;  // latent + uniform noise
    nn::Var x_hat;  // reconstruction in [0,1]
    // fake-quantized weight nodes, shared with any loss term that needs the
    // simulated-quantized weights of a layer (watermark embedding)
    std::vector<nn::Var> enc_wq, dec_wq;
};

// Training-mode forward under simulated quantization of weights and
// activations (uniform-noise relaxation for the latent).
QatForward qat_forward(const codec::LicModel& model, const QatContext& ctx,
                       const nn::Var& x, Rng& noise_rng);

struct QatRd {
    nn::Var loss;
    codec::RDReport report;
    QatForward fwd;
};
QatRd qat_rd_loss(const codec::LicModel& model, const QatContext& ctx, const nn::Var& x,
                  Rng& noise_rng);

// ---- integer export -------------------------------------------------------

struct QuantizedLayer {
    codec::ConvSpec spec;
    std::vector<int8_t> weights;
    std::vector<int32_t> bias;
    double s_w = 0, s_in = 0, s_out = 0;
    int32_t clip_lo = 0, clip_hi = 0;  // requantized output clip bounds
};

struct QuantizedModel {
    uint32_t stages = 0;
    uint32_t channels = 0;
    uint32_t total_stride = 1;
    double lambda_rd = 0;
    std::vector<QuantizedLayer> enc, dec;
    std::vector<double> prior_mu, prior_b;
    int32_t latent_min = 0, latent_max = 0;  // coder symbol clip range
    ec::CdfTable cdf;                        // frozen per-channel tables

    Bytes serialize() const;  // "LICQ", little-endian, byte-deterministic
    static QuantizedModel deserialize(const Bytes& data);
    void save(const std::string& path) const;
    static QuantizedModel load(const std::string& path);

    const QuantizedLayer* find_layer(const std::string& id) const;
    // dequantized flat weights of a layer (int * s_w)
    std::vector<double> dequantized_weights(const std::string& id) const;
    int64_t weight_payload_bytes() const;
};

// INT8 export. With a QatContext the learned weight scales are used;
// without it this is post-training quantization from calibration stats.
QuantizedModel quantize_model(const codec::LicModel& model, const CalibrationStats& stats,
                              const QatContext* qat = nullptr);

// Re-derive the coder symbol range (and CDF tables) from the exported
// model's own integer latents on a sample of images; training shifts the
// latent distribution away from the original calibration.
void refresh_latent_range(QuantizedModel& qm, const std::vector<Image>& images);

// Double-precision simulation of the integer engine (the parity reference):
// dequantized-int weights, float convs, round+clip requantization.
nn::Tensor fake_encode(const QuantizedModel& qm, const nn::Tensor& x01);   // -> integer latents
nn::Tensor fake_decode(const QuantizedModel& qm, const nn::Tensor& z_int);  // -> [0,1] image
// per-layer outputs of the encoder sim (for LSB-parity tests)
std::vector<nn::Tensor> fake_encode_trace(const QuantizedModel& qm, const nn::Tensor& x01);

}  // namespace licsec::quant
