#pragma once

#include <string>
#include <vector>

#include "licsec/quantizer.hpp"

namespace licsec::wm {

struct WatermarkBits {
    std::vector<uint8_t> bits;  // M entries in {0,1}
    Bytes client_id;            // opaque client identifier bytes
    int size() const { return int(bits.size()); }
};

// First M bits of a SHA-256-seeded stream over (client public key, provider
// salt). M >= 32.
WatermarkBits derive_watermark(const Bytes& client_pubkey, const Bytes& salt, int M);

// N x M key matrix with i.i.d. standard-normal entries from the provider seed.
nn::Tensor make_key_matrix(int64_t n_weights, int M, uint64_t seed);

// +-4 sigma band around chance level, in C-BER points.
double chance_band_halfwidth(int M);

struct ExtractionReport {
    std::vector<uint8_t> bits;
    double ber = 0;
    double c_ber = 0;  // (1 - BER) * 100
};

// bit_j = [ (X^T vec(theta))_j > 0.5 ]; weights are the dequantized target
// layer (int * s_w) or any float weight vector of matching length.
ExtractionReport extract(const std::vector<double>& flat_weights, const nn::Tensor& X,
                         const std::vector<uint8_t>& expected);

// Eq-style watermark regression error on a fake-quantized weight vector.
double wm_loss_value(const std::vector<double>& flat_weights, const nn::Tensor& X,
                     const std::vector<uint8_t>& bits);

struct QawConfig {
    std::string target_layer = "dec2";
    double beta0 = 0.05;
    int check_interval = 50;
    double raise_factor = 1.5;
    double lower_factor = 1.2;  // divide by this after two consecutive clean checks
    double beta_floor = 1e-4;
    int64_t max_steps = 800;
    codec::TrainOptions train;
};

// initial beta per lambda (the operating points reported for this loss)
double default_beta_for_lambda(double lambda_rd);

struct BetaSample {
    int64_t step;
    double beta;
    double c_ber;
};

struct QawResult {
    quant::QuantizedModel qmodel;
    std::vector<BetaSample> beta_trace;
    std::vector<codec::RDReport> rd_trace;
    ExtractionReport final_report;  // from the exported integer weights
    bool embedded = false;
};

// Joint fine-tuning under fake quantization with loss R + lambda*D + beta*E;
// beta adapts on extraction checks. Returns the exported integer model and
// the beta trace; `embedded` is false if the watermark did not survive the
// final export (explicit failure, never silent).
QawResult qaw_finetune(codec::LicModel& model, quant::QatContext& qat, const nn::Tensor& X,
                       const WatermarkBits& wm, const std::vector<Image>& dataset,
                       const QawConfig& cfg);

// ---- PQW baseline (DCT spread spectrum on a quantized layer) -------------

struct PqwConfig {
    std::string target_layer = "enc1";
    double alpha_scale = 16.0;  // embedding strength = alpha_scale * s_w
    double detect_threshold = 0.25;
};

// In-place embed into the quantized weights (re-quantized to INT8 after the
// inverse transform). alpha = 0 leaves the model unchanged.
void pqw_embed(quant::QuantizedModel& qm, const PqwConfig& cfg, uint64_t key, double alpha);
// Normalized correlation of the mid-frequency band against the key sequence.
double pqw_detect(const quant::QuantizedModel& qm, const PqwConfig& cfg, uint64_t key);
// Band size for the chance-level bound 3/sqrt(band).
int64_t pqw_band_size(const quant::QuantizedModel& qm, const PqwConfig& cfg);

// ---- motivating-failure baseline ------------------------------------------

struct NaiveResult {
    ExtractionReport float_report;  // after embedding, before quantization
    ExtractionReport quant_report;  // after post-training quantization
    int64_t steps = 0;
};

// Embeds via the regression loss on float weights only (no fake
// quantization), stopping at the first successful extraction, then applies
// post-training quantization at `bits` (8 or a coarser simulation) and
// re-extracts.
NaiveResult naive_postfloat_watermark_then_quantize(codec::LicModel model,
                                                    const std::string& target_layer,
                                                    const nn::Tensor& X,
                                                    const WatermarkBits& wm, int bits = 8,
                                                    double lr = 0.0, int64_t max_steps = 200000);

}  // namespace licsec::wm
