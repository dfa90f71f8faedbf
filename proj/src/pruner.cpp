#include "licsec/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace licsec::prune {

using codec::Layer;
using codec::LicModel;
using nn::Tensor;

namespace {

double channel_l2(const Layer& l, int o) {
    const Tensor& w = l.weight.value();
    double acc = 0;
    if (!l.spec.transposed) {
        int64_t per = int64_t(w.dim(1)) * w.dim(2) * w.dim(3);
        const double* p = w.data() + int64_t(o) * per;
        for (int64_t i = 0; i < per; ++i) acc += p[i] * p[i];
    } else {
        int64_t per = int64_t(w.dim(2)) * w.dim(3);
        for (int c = 0; c < w.dim(0); ++c) {
            const double* p = w.data() + (int64_t(c) * w.dim(1) + o) * per;
            for (int64_t i = 0; i < per; ++i) acc += p[i] * p[i];
        }
    }
    return std::sqrt(acc);
}

void for_each_prunable(LicModel& m, const std::function<void(Layer&, const std::string&)>& fn) {
    for (size_t i = 0; i < m.encoder.size(); ++i)
        if (m.encoder[i].prunable) fn(m.encoder[i], LicModel::layer_id(false, int(i) + 1));
    for (size_t i = 0; i < m.decoder.size(); ++i)
        if (m.decoder[i].prunable) fn(m.decoder[i], LicModel::layer_id(true, int(i) + 1));
}

}  // namespace

std::vector<LayerScores> rank_channels(const LicModel& model) {
    std::vector<LayerScores> out;
    auto& m = const_cast<LicModel&>(model);
    for_each_prunable(m, [&](Layer& l, const std::string& id) {
        LayerScores s;
        s.layer = id;
        for (int o = 0; o < l.spec.out_ch; ++o) s.scores.push_back(channel_l2(l, o));
        out.push_back(std::move(s));
    });
    return out;
}

IterationStats prune_iteration(LicModel& model, double ratio, int finetune_steps,
                               const std::vector<Image>& dataset,
                               const codec::TrainOptions& opts, int iteration_index,
                               int64_t flops_h, int64_t flops_w) {
    if (!(ratio >= 0.0 && ratio < 1.0))
        raise(ErrorClass::Usage, "prune: ratio must be in [0,1)");
    IterationStats st;
    st.iteration = iteration_index;

    for_each_prunable(model, [&](Layer& l, const std::string& id) {
        std::vector<int> alive;
        for (int o = 0; o < l.spec.out_ch; ++o)
            if (l.keep[size_t(o)]) alive.push_back(o);
        int quota = int(std::ceil(ratio * double(alive.size())));
        if (quota == 0) return;
        if (int(alive.size()) - quota < 1)
            raise(ErrorClass::Usage, "prune: ratio would remove every channel of " + id);
        std::stable_sort(alive.begin(), alive.end(), [&](int a, int b) {
            return channel_l2(l, a) < channel_l2(l, b);
        });
        for (int i = 0; i < quota; ++i) l.keep[size_t(alive[size_t(i)])] = 0;
        st.channels_pruned += quota;
    });
    model.apply_masks();

    if (finetune_steps > 0) {
        if (dataset.empty()) raise(ErrorClass::Usage, "prune: dataset is empty");
        Rng rng(model.config.seed + 100 + uint64_t(iteration_index));
        nn::Adam opt(model.parameters(), {.lr = opts.lr});
        for (int step = 0; step < finetune_steps; ++step) {
            nn::Var x = nn::Var::constant(
                codec::sample_batch(dataset, opts.batch_size, opts.crop, rng));
            codec::RDGraph g = codec::rd_loss(model, x, rng);
            opt.zero_grad();
            nn::backward(g.loss);
            opt.step();
            model.apply_masks();  // masked channels stay frozen at zero
            st.final_loss = g.report.loss;
        }
    }
    st.params_after = model.parameter_count();
    st.flops_after = count_flops(model, int(flops_h), int(flops_w));
    return st;
}

codec::LicModel compact(const LicModel& model) {
    auto kept_indices = [](const Layer& l) {
        std::vector<int> idx;
        for (int o = 0; o < l.spec.out_ch; ++o)
            if (l.keep[size_t(o)]) idx.push_back(o);
        return idx;
    };
    auto slice_layer = [](const Layer& l, const std::vector<int>& in_idx,
                          const std::vector<int>& out_idx) {
        Layer n;
        n.spec = l.spec;
        n.spec.in_ch = int(in_idx.size());
        n.spec.out_ch = int(out_idx.size());
        n.prunable = l.prunable;
        n.keep.assign(out_idx.size(), 1);
        const Tensor& w = l.weight.value();
        int k = l.spec.kernel;
        std::vector<int> shape = l.spec.transposed
                                     ? std::vector<int>{n.spec.in_ch, n.spec.out_ch, k, k}
                                     : std::vector<int>{n.spec.out_ch, n.spec.in_ch, k, k};
        Tensor nw(shape);
        if (!l.spec.transposed) {
            for (size_t oi = 0; oi < out_idx.size(); ++oi)
                for (size_t ci = 0; ci < in_idx.size(); ++ci)
                    for (int i = 0; i < k * k; ++i)
                        nw[(int64_t(oi) * int64_t(in_idx.size()) + int64_t(ci)) * k * k + i] =
                            w[(int64_t(out_idx[oi]) * l.spec.in_ch + in_idx[ci]) * k * k + i];
        } else {
            for (size_t ci = 0; ci < in_idx.size(); ++ci)
                for (size_t oi = 0; oi < out_idx.size(); ++oi)
                    for (int i = 0; i < k * k; ++i)
                        nw[(int64_t(ci) * int64_t(out_idx.size()) + int64_t(oi)) * k * k + i] =
                            w[(int64_t(in_idx[ci]) * l.spec.out_ch + out_idx[oi]) * k * k + i];
        }
        Tensor nb({n.spec.out_ch});
        for (size_t oi = 0; oi < out_idx.size(); ++oi) nb[int64_t(oi)] = l.bias.value()[out_idx[oi]];
        n.weight = nn::Parameter("w", std::move(nw));
        n.bias = nn::Parameter("b", std::move(nb));
        return n;
    };
    auto all_indices = [](int n) {
        std::vector<int> idx(size_t(n));
        for (int i = 0; i < n; ++i) idx[size_t(i)] = i;
        return idx;
    };

    // mask consistency: structural layers must keep every channel
    for (const auto& l : model.encoder)
        if (!l.prunable && l.kept_channels() != l.spec.out_ch)
            raise(ErrorClass::Stage, "compact: structural encoder layer has masked channels");
    for (const auto& l : model.decoder)
        if (!l.prunable && l.kept_channels() != l.spec.out_ch)
            raise(ErrorClass::Stage, "compact: structural decoder layer has masked channels");

    LicModel out;
    out.config = model.config;
    std::vector<int> in_idx = all_indices(3);
    for (const auto& l : model.encoder) {
        std::vector<int> out_idx = kept_indices(l);
        out.encoder.push_back(slice_layer(l, in_idx, out_idx));
        in_idx = out_idx;
    }
    in_idx = all_indices(model.decoder.front().spec.in_ch);
    for (const auto& l : model.decoder) {
        std::vector<int> out_idx = kept_indices(l);
        out.decoder.push_back(slice_layer(l, in_idx, out_idx));
        in_idx = out_idx;
    }
    out.prior.mu = nn::Parameter("prior.mu", model.prior.mu.value());
    out.prior.log_b = nn::Parameter("prior.log_b", model.prior.log_b.value());
    return out;
}

int64_t count_flops(const LicModel& model, int h, int w) {
    if (h % model.config.total_stride() != 0 || w % model.config.total_stride() != 0)
        raise(ErrorClass::Usage, "count_flops: dims must be divisible by total stride");
    int64_t total = 0;
    int64_t ch = h, cw = w;
    int in_ch = 3;
    for (const auto& l : model.encoder) {
        int64_t ho = (ch + 2 * l.spec.pad - l.spec.kernel) / l.spec.stride + 1;
        int64_t wo = (cw + 2 * l.spec.pad - l.spec.kernel) / l.spec.stride + 1;
        total += ho * wo * int64_t(l.kept_channels()) * int64_t(in_ch) * l.spec.kernel *
                 l.spec.kernel;
        in_ch = l.kept_channels();
        ch = ho;
        cw = wo;
    }
    for (const auto& l : model.decoder) {
        // zero-insertion view: every input pixel contributes out*k*k MACs
        total += ch * cw * int64_t(in_ch) * int64_t(l.kept_channels()) * l.spec.kernel *
                 l.spec.kernel;
        ch = (ch - 1) * l.spec.stride - 2 * l.spec.pad + l.spec.kernel;
        cw = (cw - 1) * l.spec.stride - 2 * l.spec.pad + l.spec.kernel;
        in_ch = l.kept_channels();
    }
    return total;
}

std::string prune_report_csv(const std::vector<IterationStats>& stats) {
    std::ostringstream os;
    os << "iteration,channels_pruned,params_after,flops_after,final_loss\n";
    for (const auto& s : stats)
        os << s.iteration << "," << s.channels_pruned << "," << s.params_after << ","
           << s.flops_after << "," << s.final_loss << "\n";
    return os.str();
}

}  // namespace licsec::prune
