#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "licsec/image.hpp"
#include "licsec/nn.hpp"
#include "licsec/serialize.hpp"

namespace licsec::codec {

struct LicConfig {
    int stages = 4;
    int channels = 32;  // latent channel count N (192 at paper scale)
    int kernel = 5;     // encoder kernel; decoder kernel is 2*stride
    int stride = 2;     // per stage
    double lambda_rd = 0.01;
    uint64_t seed = 1;

    int total_stride() const {
        int t = 1;
        for (int i = 0; i < stages; ++i) t *= stride;
        return t;
    }
    // Transposed-conv kernel/pad chosen so k - 2*pad == stride, which makes
    // each decoder stage produce exactly stride*H without output padding.
    int decoder_kernel() const { return 2 * stride; }
    int decoder_pad() const { return stride / 2; }
    void validate() const;
};

struct ConvSpec {
    bool transposed = false;
    int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
    bool relu_after = false;
};

struct Layer {
    ConvSpec spec;
    nn::Parameter weight;  // conv: [O,C,k,k]; transposed: [C,O,k,k]
    nn::Parameter bias;    // [O]
    std::vector<uint8_t> keep;  // output-channel keep mask, 1 = kept
    bool prunable = true;       // latent and final decoder layers are structural

    int kept_channels() const {
        int n = 0;
        for (uint8_t k : keep) n += k;
        return n;
    }
};

// Per-latent-channel logistic density: location mu_c, log-scale log_b_c.
struct FactorizedPrior {
    nn::Parameter mu;
    nn::Parameter log_b;
    int channels() const { return int(mu.value().size()); }
};

struct RDReport {
    double rate_bpp = 0;     // estimated bits per pixel
    double distortion = 0;   // MSE at 8-bit scale (see README: paper-style lambda)
    double loss = 0;         // == rate_bpp + lambda * distortion, exactly
    int64_t step = 0;
};

struct TrainOptions {
    int64_t steps = 500;
    int batch_size = 4;
    double lr = 1e-3;
    int crop = 64;  // training crop side; must be divisible by total stride
};

class LicModel {
public:
    LicConfig config;
    std::vector<Layer> encoder;
    std::vector<Layer> decoder;
    FactorizedPrior prior;

    static LicModel init(const LicConfig& cfg);

    std::vector<nn::Parameter*> parameters();
    Layer* find_layer(const std::string& id);  // "enc1".."encS", "dec1".."decS"
    const Layer* find_layer(const std::string& id) const;
    static std::string layer_id(bool decoder, int index1);
    int64_t parameter_count() const;  // kept channels only

    // Re-zero masked channels (used after each fine-tune step).
    void apply_masks();

    // --- graph forwards (training) ---
    nn::Var encode_graph(const nn::Var& x) const;
    nn::Var decode_graph(const nn::Var& z) const;  // ends in clamp01

    // --- inference forwards (no graph) ---
    nn::Tensor encode(const nn::Tensor& x) const;
    nn::Tensor decode(const nn::Tensor& z) const;

    // bits-per-pixel estimate of a (relaxed or rounded) latent under the prior
    double rate_estimate(const nn::Tensor& z_hat) const;

    void check_input(const nn::Tensor& x) const;

    Bytes serialize() const;  // "LICF", byte-deterministic
    static LicModel deserialize(const Bytes& data);
    void save(const std::string& path) const;
    static LicModel load(const std::string& path);

    // deep copy (Parameters share graph nodes under plain struct copy)
    LicModel clone() const { return deserialize(serialize()); }
};

// Uniform noise relaxation of rounding (training) and real rounding
// (inference).
nn::Tensor make_uniform_noise(const std::vector<int>& shape, Rng& rng);
nn::Tensor round_latent(const nn::Tensor& z);

struct RDGraph {
    nn::Var loss;       // R + lambda*D
    nn::Var rate_bits;  // total bits (not per pixel)
    RDReport report;
};

// Builds the Eq-style rate-distortion graph on a batch: encode, add uniform
// noise, rate under the prior, decode, 8-bit-scale MSE.
RDGraph rd_loss(const LicModel& model, const nn::Var& x, Rng& noise_rng);

struct TrainResult {
    std::vector<RDReport> trace;
};

// Adam training loop over random crops of the dataset; deterministic for a
// fixed config.seed. steps == 0 returns the initialized model untouched.
TrainResult train(LicModel& model, const std::vector<Image>& dataset,
                  const TrainOptions& opts);

// Assemble a batch tensor from dataset crops (shared by train/QAT loops).
nn::Tensor sample_batch(const std::vector<Image>& dataset, int batch, int crop,
                        Rng& rng);

}  // namespace licsec::codec
