#include "polcolor/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "polcolor/errors.hpp"
#include "polcolor/rng.hpp"

namespace polcolor {

using nn::LayerSpec;

int ExtractorConfig::feature_channels() const {
    return std::accumulate(widths.begin(), widths.end(), 0);
}

std::vector<LayerSpec> ExtractorConfig::layers() const {
    for (int w : widths)
        if (w <= 0) throw InvalidInput("extractor widths must be positive");
    std::vector<LayerSpec> s;
    int in = 1;
    for (int i = 0; i < 7; ++i) {
        if (i == 2 || i == 4) s.push_back(LayerSpec::maxpool2x2());
        s.push_back(LayerSpec::conv3x3(in, widths[static_cast<std::size_t>(i)]));
        s.push_back(LayerSpec::relu());
        in = widths[static_cast<std::size_t>(i)];
    }
    return s;
}

std::vector<int> ExtractorConfig::taps() const { return {1, 3, 6, 8, 11, 13, 15}; }

std::vector<int> ExtractorConfig::tap_strides() const { return {1, 1, 2, 2, 4, 4, 4}; }

double preprocess_intensity(double intensity, double db_floor) {
    if (!(db_floor < 0.0)) throw InvalidInput("db_floor must be negative");
    if (std::isnan(intensity) || intensity < 0.0) throw InvalidInput("intensity must be a nonnegative number");
    const double db = intensity > 0.0 ? 10.0 * std::log10(intensity) : db_floor;
    const double clamped = std::clamp(db, db_floor, 0.0);
    return (clamped - db_floor) / -db_floor;
}

Plane preprocess_plane(const Plane& intensity, double db_floor) {
    return intensity.unaryExpr([db_floor](double v) { return preprocess_intensity(v, db_floor); });
}

template <typename Scalar>
nn::Tensor<Scalar> plane_to_tensor(const Plane& plane) {
    nn::Tensor<Scalar> t({1, 1, static_cast<int>(plane.rows()), static_cast<int>(plane.cols())});
    t.plane(0, 0) = plane.matrix().template cast<Scalar>();
    return t;
}

template <typename Scalar>
void apply_norm_stats(std::vector<nn::Tensor<Scalar>>& layers, const NormStats& stats) {
    if (stats.mean.size() != layers.size() || stats.stddev.size() != layers.size())
        throw InvalidInput("norm stats do not match the number of feature layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto mu = static_cast<Scalar>(stats.mean[k]);
        const auto inv = static_cast<Scalar>(1.0 / stats.stddev[k]);
        layers[k].data = ((layers[k].data.array() - mu) * inv).matrix();
    }
}

template <typename Scalar>
NormStats compute_norm_stats(std::span<const std::vector<nn::Tensor<Scalar>>> samples) {
    if (samples.empty()) throw InvalidInput("norm stats need at least one sample");
    const std::size_t layers = samples.front().size();
    NormStats stats;
    for (std::size_t k = 0; k < layers; ++k) {
        double sum = 0.0;
        double count = 0.0;
        for (const auto& s : samples) {
            if (s.size() != layers) throw InvalidInput("norm stats samples have differing layer counts");
            sum += s[k].data.template cast<double>().sum();
            count += static_cast<double>(s[k].data.size());
        }
        const double mean = sum / count;
        double sq = 0.0;
        for (const auto& s : samples) sq += (s[k].data.template cast<double>().array() - mean).square().sum();
        stats.mean.push_back(mean);
        stats.stddev.push_back(std::max(std::sqrt(sq / count), kStdFloor));
    }
    return stats;
}

template <typename Scalar>
ColorizationNet<Scalar>::ColorizationNet(const ExtractorConfig& extractor, const TranslatorConfig& translator,
                                         std::uint64_t seed)
    : extractor_(extractor), translator_(translator) {
    if (translator.trunk.empty() || translator.heads <= 0 || translator.bins <= 1 || translator.head_hidden <= 0)
        throw InvalidInput("invalid translator configuration");
    specs_ = extractor.layers();
    extractor_layers_ = specs_.size();
    int in = extractor.hypercolumn_length();
    for (int w : translator.trunk) {
        if (w <= 0) throw InvalidInput("trunk widths must be positive");
        specs_.push_back(LayerSpec::fully_connected(in, w));
        specs_.push_back(LayerSpec::relu());
        in = w;
    }
    trunk_layers_ = specs_.size() - extractor_layers_;
    for (int h = 0; h < translator.heads; ++h) {
        specs_.push_back(LayerSpec::fully_connected(in, translator.head_hidden));
        specs_.push_back(LayerSpec::relu());
        specs_.push_back(LayerSpec::fully_connected(translator.head_hidden, translator.bins));
    }
    head_layers_ = 3;

    std::mt19937_64 rng(seed);
    for (const auto& s : specs_) params_.push_back(nn::init_layer<Scalar>(s, rng));
    for (int h = 0; h < translator.heads; ++h) {
        auto& last = params_[head_offset(h) + head_layers_ - 1];
        last.weight.setZero();
        last.bias.setZero();
    }
}

template <typename Scalar>
ColorizationNet<Scalar>::ColorizationNet(const ExtractorConfig& extractor, const TranslatorConfig& translator,
                                         nn::NetParams<Scalar> params, NormStats stats)
    : ColorizationNet(extractor, translator, 0) {
    if (params.size() != params_.size()) throw InvalidInput("parameter list does not match the architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].weight.rows() != params_[i].weight.rows() || params[i].weight.cols() != params_[i].weight.cols() ||
            params[i].bias.size() != params_[i].bias.size())
            throw InvalidInput("parameter shape mismatch at layer " + std::to_string(i));
    }
    params_ = std::move(params);
    set_norm_stats(std::move(stats));
}

template <typename Scalar>
void ColorizationNet<Scalar>::set_norm_stats(NormStats stats) {
    const std::size_t n = extractor_.taps().size();
    if (stats.mean.size() != n || stats.stddev.size() != n)
        throw InvalidInput("norm stats must have one entry per feature layer");
    for (double s : stats.stddev)
        if (!(s > 0.0)) throw InvalidInput("norm stats stddev must be positive");
    stats_ = std::move(stats);
}

template <typename Scalar>
std::size_t ColorizationNet<Scalar>::head_offset(int head) const {
    if (head < 0 || head >= translator_.heads) throw InvalidInput("head index out of range");
    return extractor_layers_ + trunk_layers_ + static_cast<std::size_t>(head) * head_layers_;
}

template <typename Scalar>
std::span<const LayerSpec> ColorizationNet<Scalar>::extractor_specs() const {
    return std::span<const LayerSpec>(specs_).subspan(0, extractor_layers_);
}
template <typename Scalar>
std::span<const LayerSpec> ColorizationNet<Scalar>::trunk_specs() const {
    return std::span<const LayerSpec>(specs_).subspan(extractor_layers_, trunk_layers_);
}
template <typename Scalar>
std::span<const LayerSpec> ColorizationNet<Scalar>::head_specs(int head) const {
    return std::span<const LayerSpec>(specs_).subspan(head_offset(head), head_layers_);
}
template <typename Scalar>
std::span<const nn::LayerParams<Scalar>> ColorizationNet<Scalar>::extractor_params() const {
    return std::span<const nn::LayerParams<Scalar>>(params_).subspan(0, extractor_layers_);
}
template <typename Scalar>
std::span<const nn::LayerParams<Scalar>> ColorizationNet<Scalar>::trunk_params() const {
    return std::span<const nn::LayerParams<Scalar>>(params_).subspan(extractor_layers_, trunk_layers_);
}
template <typename Scalar>
std::span<const nn::LayerParams<Scalar>> ColorizationNet<Scalar>::head_params(int head) const {
    return std::span<const nn::LayerParams<Scalar>>(params_).subspan(head_offset(head), head_layers_);
}

template <typename Scalar>
std::vector<nn::Tensor<Scalar>> ColorizationNet<Scalar>::raw_features(const nn::Tensor<Scalar>& patch,
                                                                      nn::Tape<Scalar>* tape) const {
    const nn::Shape& s = patch.shape;
    if (s.batch != 1 || s.channels != 1) throw InvalidInput("patch must be a single one-channel image");
    if (s.height % 4 || s.width % 4)
        throw InvalidInput("patch size " + s.str() + " must be divisible by 4");
    nn::Tape<Scalar> local;
    nn::Tape<Scalar>& t = tape ? *tape : local;
    nn::sequential_forward<Scalar>(extractor_specs(), extractor_params(), patch, &t, true);
    std::vector<nn::Tensor<Scalar>> out;
    for (int tap : extractor_.taps())
        out.push_back(nn::bilinear_upsample(t.outputs[static_cast<std::size_t>(tap)], s.height, s.width));
    return out;
}

template <typename Scalar>
std::vector<nn::Tensor<Scalar>> ColorizationNet<Scalar>::extract_features(const nn::Tensor<Scalar>& patch,
                                                                          nn::Tape<Scalar>* tape) const {
    if (stats_.mean.empty()) throw InvalidInput("feature extraction needs norm stats");
    auto f = raw_features(patch, tape);
    apply_norm_stats(f, stats_);
    return f;
}

template <typename Scalar>
nn::Matrix<Scalar> ColorizationNet<Scalar>::hypercolumns(const nn::Tensor<Scalar>& patch,
                                                         const std::vector<nn::Tensor<Scalar>>& features,
                                                         std::span<const int> pixels) const {
    const int hw = patch.shape.pixels();
    nn::Matrix<Scalar> x(extractor_.hypercolumn_length(), static_cast<Eigen::Index>(pixels.size()));
    for (std::size_t j = 0; j < pixels.size(); ++j) {
        const int p = pixels[j];
        if (p < 0 || p >= hw) throw InvalidInput("pixel index out of range");
        Eigen::Index row = 0;
        x(row++, static_cast<Eigen::Index>(j)) = patch.data(p, 0);
        for (const auto& f : features)
            for (int c = 0; c < f.shape.channels; ++c)
                x(row++, static_cast<Eigen::Index>(j)) = f.data(static_cast<Eigen::Index>(c) * hw + p, 0);
    }
    return x;
}

template <typename Scalar>
std::vector<nn::Matrix<Scalar>> ColorizationNet<Scalar>::translate_logits(const nn::Matrix<Scalar>& columns,
                                                                          TranslatorTape<Scalar>* tape) const {
    if (columns.rows() != extractor_.hypercolumn_length())
        throw InvalidInput("hypercolumn length mismatch");
    const int n = static_cast<int>(columns.cols());
    nn::Tensor<Scalar> x({n, static_cast<int>(columns.rows()), 1, 1}, columns);
    if (tape) tape->heads.assign(static_cast<std::size_t>(translator_.heads), {});
    auto z = nn::sequential_forward<Scalar>(trunk_specs(), trunk_params(), std::move(x),
                                            tape ? &tape->trunk : nullptr);
    std::vector<nn::Matrix<Scalar>> logits;
    for (int h = 0; h < translator_.heads; ++h) {
        auto y = nn::sequential_forward<Scalar>(head_specs(h), head_params(h), z,
                                                tape ? &tape->heads[static_cast<std::size_t>(h)] : nullptr);
        logits.push_back(std::move(y.data));
    }
    return logits;
}

template <typename Scalar>
std::vector<nn::Matrix<Scalar>> ColorizationNet<Scalar>::translate(const nn::Matrix<Scalar>& columns) const {
    auto logits = translate_logits(columns);
    for (auto& z : logits) z = nn::softmax_columns<Scalar>(z);
    return logits;
}

template <typename Scalar>
double ColorizationNet<Scalar>::translator_loss(const nn::Matrix<Scalar>& columns,
                                                const nn::TargetMatrix& targets) const {
    return nn::cross_entropy<Scalar>(translate(columns), targets);
}

template <typename Scalar>
double ColorizationNet<Scalar>::backprop_translator(const nn::Matrix<Scalar>& columns,
                                                    const nn::TargetMatrix& targets, nn::NetParams<Scalar>& grads,
                                                    nn::Matrix<Scalar>* grad_columns) const {
    if (grads.size() != params_.size()) {
        grads.clear();
        for (const auto& p : params_) grads.push_back(nn::LayerParams<Scalar>::zeros_like(p));
    }
    TranslatorTape<Scalar> tape;
    const auto logits = translate_logits(columns, &tape);
    auto sl = nn::softmax_cross_entropy<Scalar>(logits, targets);

    const int n = static_cast<int>(columns.cols());
    const int trunk_width = translator_.trunk.back();
    nn::Tensor<Scalar> dz({n, trunk_width, 1, 1});
    std::span<nn::LayerParams<Scalar>> all(grads);
    for (int h = 0; h < translator_.heads; ++h) {
        nn::Tensor<Scalar> g({n, translator_.bins, 1, 1}, std::move(sl.grad_logits[static_cast<std::size_t>(h)]));
        auto back = nn::sequential_backward<Scalar>(head_specs(h), head_params(h),
                                                    tape.heads[static_cast<std::size_t>(h)], std::move(g),
                                                    all.subspan(head_offset(h), head_layers_));
        dz.data += back.data;
    }
    auto dx = nn::sequential_backward<Scalar>(trunk_specs(), trunk_params(), tape.trunk, std::move(dz),
                                              all.subspan(extractor_layers_, trunk_layers_));
    if (grad_columns) *grad_columns = std::move(dx.data);
    return sl.loss;
}

template <typename Scalar>
double ColorizationNet<Scalar>::translator_loss_and_gradient(const nn::Matrix<Scalar>& columns,
                                                             const nn::TargetMatrix& targets,
                                                             nn::NetParams<Scalar>& grads) const {
    return backprop_translator(columns, targets, grads, nullptr);
}

template <typename Scalar>
double ColorizationNet<Scalar>::loss(const nn::Tensor<Scalar>& patch, std::span<const int> pixels,
                                     const nn::TargetMatrix& targets) const {
    return translator_loss(hypercolumns(patch, extract_features(patch), pixels), targets);
}

template <typename Scalar>
double ColorizationNet<Scalar>::loss_and_gradient(const nn::Tensor<Scalar>& patch, std::span<const int> pixels,
                                                  const nn::TargetMatrix& targets, nn::NetParams<Scalar>& grads,
                                                  bool through_extractor) const {
    nn::Tape<Scalar> tape;
    const auto features = extract_features(patch, &tape);
    const auto columns = hypercolumns(patch, features, pixels);

    grads.clear();
    for (const auto& p : params_) grads.push_back(nn::LayerParams<Scalar>::zeros_like(p));
    nn::Matrix<Scalar> dcols;
    const double value = backprop_translator(columns, targets, grads, through_extractor ? &dcols : nullptr);
    if (!through_extractor) return value;

    const int hw = patch.shape.pixels();
    std::vector<nn::Tensor<Scalar>> dfeat;
    Eigen::Index row = 1;
    for (std::size_t k = 0; k < features.size(); ++k) {
        nn::Tensor<Scalar> g(features[k].shape);
        for (int c = 0; c < g.shape.channels; ++c, ++row)
            for (std::size_t j = 0; j < pixels.size(); ++j)
                g.data(static_cast<Eigen::Index>(c) * hw + pixels[j], 0) += dcols(row, static_cast<Eigen::Index>(j));
        g.data *= static_cast<Scalar>(1.0 / stats_.stddev[k]);
        dfeat.push_back(std::move(g));
    }

    const auto taps = extractor_.taps();
    auto inject = [&](std::size_t layer, nn::Tensor<Scalar>& grad) {
        const auto it = std::find(taps.begin(), taps.end(), static_cast<int>(layer));
        if (it == taps.end()) return;
        const auto k = static_cast<std::size_t>(it - taps.begin());
        grad.data += nn::bilinear_upsample_backward(dfeat[k], tape.outputs[layer].shape).data;
    };
    nn::Tensor<Scalar> top(tape.outputs.back().shape);
    std::span<nn::LayerParams<Scalar>> all(grads);
    nn::sequential_backward<Scalar>(extractor_specs(), extractor_params(), tape, std::move(top),
                                    all.subspan(0, extractor_layers_), inject);
    return value;
}

template <typename Scalar>
NormStats fit_norm_stats(std::span<const nn::Tensor<Scalar>> patches, const ColorizationNet<Scalar>& net) {
    std::vector<std::vector<nn::Tensor<Scalar>>> samples;
    samples.reserve(patches.size());
    for (const auto& p : patches) samples.push_back(net.raw_features(p));
    return compute_norm_stats<Scalar>(samples);
}

std::vector<Tile> make_tiles(int width, int height, int patch) {
    if (width <= 0 || height <= 0) throw InvalidInput("image must be non-empty");
    if (patch <= 0 || patch % 4) throw InvalidInput("patch size must be a positive multiple of 4");
    if (width % 4 || height % 4) throw InvalidInput("image dimensions must be multiples of 4");
    std::vector<Tile> tiles;
    for (int y = 0; y < height; y += patch)
        for (int x = 0; x < width; x += patch)
            tiles.push_back({x, y, std::min(patch, width - x), std::min(patch, height - y)});
    return tiles;
}

nn::TargetMatrix encode_targets(const CovarianceImage& truth, const QuantizerSet& quantizers,
                                std::vector<int>* valid_pixels) {
    const auto n = static_cast<Eigen::Index>(truth.pixels.size());
    nn::TargetMatrix t = nn::TargetMatrix::Zero(kNumParams, n);
    if (valid_pixels) valid_pixels->clear();
    for (Eigen::Index i = 0; i < n; ++i) {
        const CovarianceMatrix& c = truth.pixels[static_cast<std::size_t>(i)];
        if (!(span(c) > 0.0)) continue;
        const ParamVector p = to_params(normalize(c).feature);
        for (int k = 0; k < kNumParams; ++k) t(k, i) = encode(p[k], quantizers[static_cast<std::size_t>(k)]);
        if (valid_pixels) valid_pixels->push_back(static_cast<int>(i));
    }
    return t;
}

namespace {

template <typename Scalar>
struct TrainingPatch {
    nn::Tensor<Scalar> input;
    nn::TargetMatrix targets;
    std::vector<int> valid;
};

template <typename Scalar>
std::vector<TrainingPatch<Scalar>> build_patches(std::span<const TrainingScene> data, const ModelCheckpoint& ckpt) {
    std::vector<TrainingPatch<Scalar>> patches;
    for (const auto& scene : data) {
        const int w = static_cast<int>(scene.intensity.cols());
        const int h = static_cast<int>(scene.intensity.rows());
        if (scene.truth.width != w || scene.truth.height != h)
            throw InvalidInput("training intensity and truth sizes differ");
        const Plane pre = preprocess_plane(scene.intensity, ckpt.train.db_floor);
        for (const Tile& t : make_tiles(w, h, ckpt.train.patch)) {
            TrainingPatch<Scalar> p;
            p.input = plane_to_tensor<Scalar>(pre.block(t.y0, t.x0, t.height, t.width));
            p.targets = encode_targets(scene.truth.crop(t.x0, t.y0, t.width, t.height), ckpt.quantizers, &p.valid);
            if (!p.valid.empty()) patches.push_back(std::move(p));
        }
    }
    if (patches.empty()) throw InvalidInput("training data contains no valid pixels");
    return patches;
}

template <typename Scalar>
nn::NetParams<Scalar> cast_params(const nn::NetParams<double>& p) {
    nn::NetParams<Scalar> out;
    for (const auto& l : p) out.push_back(l.template cast<Scalar>());
    return out;
}

template <typename To, typename From>
nn::AdamState<To> cast_adam(const nn::AdamState<From>& s) {
    nn::AdamState<To> out;
    out.config = s.config;
    out.step_count = s.step_count;
    for (const auto& m : s.first_moment) out.first_moment.push_back(m.template cast<To>());
    for (const auto& v : s.second_moment) out.second_moment.push_back(v.template cast<To>());
    return out;
}

template <typename Scalar>
TrainResult run_epochs(std::span<const TrainingScene> data, ModelCheckpoint ckpt, int total_epochs,
                       const EpochCallback& on_epoch) {
    ckpt.train.epochs = total_epochs;
    const TrainConfig& cfg = ckpt.train;
    if (cfg.batch_pixels <= 0) throw InvalidInput("batch size must be positive");
    const auto patches = build_patches<Scalar>(data, ckpt);
    ColorizationNet<Scalar> net(ckpt.extractor, ckpt.translator, cast_params<Scalar>(ckpt.params), ckpt.stats);
    auto adam = cast_adam<Scalar>(ckpt.adam);

    TrainResult result;
    nn::NetParams<Scalar> grads;
    for (int epoch = ckpt.epochs_completed; epoch < total_epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(epoch)}));
        std::vector<std::pair<std::size_t, std::vector<int>>> batches;
        for (std::size_t i = 0; i < patches.size(); ++i) {
            std::vector<int> order = patches[i].valid;
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(cfg.batch_pixels)) {
                const auto e = std::min(order.size(), s + static_cast<std::size_t>(cfg.batch_pixels));
                batches.emplace_back(i, std::vector<int>(order.begin() + static_cast<std::ptrdiff_t>(s),
                                                         order.begin() + static_cast<std::ptrdiff_t>(e)));
            }
        }
        std::shuffle(batches.begin(), batches.end(), rng);

        double sum = 0.0;
        for (const auto& [i, pixels] : batches) {
            const auto& p = patches[i];
            const nn::TargetMatrix t = p.targets(Eigen::all, pixels);
            const double l = net.loss_and_gradient(p.input, pixels, t, grads, cfg.train_extractor);
            if (!std::isfinite(l)) throw NumericalFailure("training loss is not finite");
            nn::adam_step(net.params(), grads, adam);
            result.step_losses.push_back(l);
            result.step_epochs.push_back(epoch);
            sum += l;
        }
        const double mean = sum / static_cast<double>(batches.size());
        result.epoch_losses.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean);
    }

    ckpt.params.clear();
    for (const auto& l : net.params()) ckpt.params.push_back(l.template cast<double>());
    ckpt.adam = cast_adam<double>(adam);
    ckpt.epochs_completed = std::max(ckpt.epochs_completed, total_epochs);
    result.checkpoint = std::move(ckpt);
    return result;
}

template <typename Scalar>
ModelCheckpoint initial_checkpoint(std::span<const TrainingScene> data, const ExtractorConfig& extractor,
                                   const TranslatorConfig& translator, const TrainConfig& config) {
    if (data.empty()) throw InvalidInput("training needs at least one scene");
    if (translator.heads != kNumParams) throw InvalidInput("translator must have one head per parameter");
    ModelCheckpoint ckpt;
    ckpt.extractor = extractor;
    ckpt.translator = translator;
    ckpt.train = config;

    std::vector<PolFeature> feats;
    for (const auto& scene : data)
        for (const auto& c : scene.truth.pixels)
            if (span(c) > 0.0) feats.push_back(normalize(c).feature);
    if (feats.empty()) throw InvalidInput("training data contains no valid pixels");
    ckpt.quantizers = fit_quantizers(feats, translator.bins);

    ColorizationNet<Scalar> net(extractor, translator, config.seed);
    const auto patches = build_patches<Scalar>(data, ckpt);
    std::vector<nn::Tensor<Scalar>> inputs;
    for (const auto& p : patches) inputs.push_back(p.input);
    ckpt.stats = fit_norm_stats<Scalar>(inputs, net);

    for (const auto& l : net.params()) ckpt.params.push_back(l.template cast<double>());
    ckpt.adam = nn::AdamState<double>::zeros_like(ckpt.params, config.adam);
    return ckpt;
}

template <typename Scalar>
TrainResult train_with(std::span<const TrainingScene> data, const ExtractorConfig& extractor,
                       const TranslatorConfig& translator, const TrainConfig& config, const EpochCallback& cb) {
    return run_epochs<Scalar>(data, initial_checkpoint<Scalar>(data, extractor, translator, config), config.epochs,
                              cb);
}

}  // namespace

TrainResult train(std::span<const TrainingScene> data, const ExtractorConfig& extractor,
                  const TranslatorConfig& translator, const TrainConfig& config, const EpochCallback& on_epoch) {
    if (config.epochs < 0) throw InvalidInput("epoch count must be nonnegative");
    if (config.precision == Precision::Double) return train_with<double>(data, extractor, translator, config, on_epoch);
    return train_with<float>(data, extractor, translator, config, on_epoch);
}

TrainResult resume_training(std::span<const TrainingScene> data, const ModelCheckpoint& checkpoint,
                            int total_epochs, const EpochCallback& on_epoch) {
    if (total_epochs < checkpoint.epochs_completed)
        throw InvalidInput("cannot resume to fewer epochs than already completed");
    if (checkpoint.train.precision == Precision::Double)
        return run_epochs<double>(data, checkpoint, total_epochs, on_epoch);
    return run_epochs<float>(data, checkpoint, total_epochs, on_epoch);
}

PolFeature finalize_feature(const ParamVector& decoded, int& flags) {
    PolFeature f;
    Eigen::Vector3d d = decoded.head<3>().cwiseMax(0.0).cwiseMin(1.0);
    const double total = d.sum();
    if (total < kDeltaFloor) {
        d.setConstant(1.0 / 3.0);
        flags |= kDeltaFallback;
    } else {
        d /= total;
    }
    f.delta = d;
    for (int i = 0; i < 3; ++i) {
        Complex r(decoded[3 + 2 * i], decoded[4 + 2 * i]);
        const double m = std::abs(r);
        if (m > 1.0) {
            r /= m;
            flags |= kRhoClamped;
        }
        f.rho[i] = r;
    }
    const auto corrected = psd_correct(f);
    if (!(corrected.feature == f)) flags |= kPsdCorrected;
    return corrected.feature;
}

CovarianceMatrix covariance_from_channel(const PolFeature& feat, double intensity, Channel channel, int& flags) {
    const int c = static_cast<int>(channel);
    if (feat.delta[c] > kDeltaFloor) {
        CovarianceMatrix cov = reconstruct(feat, power_from_channel(intensity, feat, channel));
        cov(c, c) = intensity;
        return cov;
    }
    flags |= kPowerFallback;
    return reconstruct(feat, intensity);
}

ColorizeResult colorize(const Plane& intensity, const ModelCheckpoint& checkpoint, const ColorizeOptions& options) {
    const int w = static_cast<int>(intensity.cols());
    const int h = static_cast<int>(intensity.rows());
    if ((intensity < 0.0).any() || !intensity.isFinite().all())
        throw InvalidInput("input intensity must be finite and nonnegative");
    const ColorizationNet<double> net(checkpoint.extractor, checkpoint.translator, checkpoint.params, checkpoint.stats);
    const Plane pre = preprocess_plane(intensity, checkpoint.train.db_floor);

    ColorizeResult out;
    out.covariance = CovarianceImage(w, h);
    out.params.assign(static_cast<std::size_t>(w) * h, ParamVector::Zero());
    out.flags = LabelPlane::Zero(h, w);

    constexpr int kChunk = 4096;
    const int bins = checkpoint.translator.bins;
    for (const Tile& t : make_tiles(w, h, checkpoint.train.patch)) {
        const auto patch = plane_to_tensor<double>(pre.block(t.y0, t.x0, t.height, t.width));
        const auto features = net.extract_features(patch);
        const int hw = t.width * t.height;
        for (int start = 0; start < hw; start += kChunk) {
            const int count = std::min(kChunk, hw - start);
            std::vector<int> pixels(static_cast<std::size_t>(count));
            std::iota(pixels.begin(), pixels.end(), start);
            const auto probs = net.translate(net.hypercolumns(patch, features, pixels));
            for (int j = 0; j < count; ++j) {
                const int p = pixels[static_cast<std::size_t>(j)];
                const int y = t.y0 + p / t.width;
                const int x = t.x0 + p % t.width;
                ParamVector decoded;
                for (int k = 0; k < kNumParams; ++k)
                    decoded[k] = decode(std::span<const double>(probs[static_cast<std::size_t>(k)].col(j).data(),
                                                                static_cast<std::size_t>(bins)),
                                        checkpoint.quantizers[static_cast<std::size_t>(k)], options.rule);
                int flags = 0;
                const PolFeature feat = finalize_feature(decoded, flags);
                out.covariance.at(y, x) = covariance_from_channel(feat, intensity(y, x), options.channel, flags);
                out.params[static_cast<std::size_t>(y) * w + x] = to_params(feat);
                out.flags(y, x) = flags;
            }
        }
    }
    return out;
}

template nn::Tensor<float> plane_to_tensor<float>(const Plane&);
template nn::Tensor<double> plane_to_tensor<double>(const Plane&);
template void apply_norm_stats<float>(std::vector<nn::Tensor<float>>&, const NormStats&);
template void apply_norm_stats<double>(std::vector<nn::Tensor<double>>&, const NormStats&);
template NormStats compute_norm_stats<float>(std::span<const std::vector<nn::Tensor<float>>>);
template NormStats compute_norm_stats<double>(std::span<const std::vector<nn::Tensor<double>>>);
template class ColorizationNet<float>;
template class ColorizationNet<double>;
template NormStats fit_norm_stats<float>(std::span<const nn::Tensor<float>>, const ColorizationNet<float>&);
template NormStats fit_norm_stats<double>(std::span<const nn::Tensor<double>>, const ColorizationNet<double>&);

}  // namespace polcolor
