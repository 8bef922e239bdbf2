#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "polcolor/image.hpp"
#include "polcolor/nn/adam.hpp"
#include "polcolor/nn/layers.hpp"
#include "polcolor/nn/loss.hpp"
#include "polcolor/nn/sequential.hpp"
#include "polcolor/polmath.hpp"
#include "polcolor/quantizer.hpp"

namespace polcolor {

/// Seven 3x3 conv stages laid out as (conv,relu)x2, pool, (conv,relu)x2, pool,
/// (conv,relu)x3. Every ReLU output is a feature tap.
struct ExtractorConfig {
    std::array<int, 7> widths{8, 8, 16, 16, 32, 32, 32};

    static ExtractorConfig desk() { return {}; }
    static ExtractorConfig full() { return {{64, 64, 128, 128, 256, 256, 256}}; }

    int feature_channels() const;
    int hypercolumn_length() const { return 1 + feature_channels(); }
    std::vector<nn::LayerSpec> layers() const;
    /// Index (into layers()) of each ReLU whose output is a feature map.
    std::vector<int> taps() const;
    /// Downsampling factor of the stage each tap belongs to (1, 2 or 4).
    std::vector<int> tap_strides() const;

    bool operator==(const ExtractorConfig&) const = default;
};

/// Shared fully connected trunk followed by independent two-layer heads, each
/// ending in a softmax over `bins`.
struct TranslatorConfig {
    std::vector<int> trunk{128, 64};
    int head_hidden = 32;
    int heads = kNumParams;
    int bins = kDefaultBins;

    static TranslatorConfig desk() { return {}; }
    static TranslatorConfig full() { return {{2048, 1024}, 512, kNumParams, kDefaultBins}; }

    bool operator==(const TranslatorConfig&) const = default;
};

/// Per-feature-layer mean and standard deviation used to standardize features.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    bool operator==(const NormStats&) const = default;
};

inline constexpr double kStdFloor = 1e-8;
inline constexpr double kDefaultDbFloor = -25.0;

enum class Precision { Single, Double };

struct TrainConfig {
    int batch_pixels = 2000;
    int patch = 64;
    int epochs = 1;
    std::uint64_t seed = 1;
    Precision precision = Precision::Single;
    nn::AdamConfig adam;
    bool train_extractor = true;
    Channel channel = Channel::VV;
    double db_floor = kDefaultDbFloor;

    bool operator==(const TrainConfig&) const = default;
};

/// 10 log10(intensity) clamped to [db_floor, 0] and mapped linearly onto [0, 1].
double preprocess_intensity(double intensity, double db_floor = kDefaultDbFloor);
Plane preprocess_plane(const Plane& intensity, double db_floor = kDefaultDbFloor);

template <typename Scalar>
nn::Tensor<Scalar> plane_to_tensor(const Plane& plane);

/// Standardizes every feature layer in place: (f - mean_k) / stddev_k.
template <typename Scalar>
void apply_norm_stats(std::vector<nn::Tensor<Scalar>>& layers, const NormStats& stats);

/// Pooled mean/stddev of each layer over every channel and pixel of every
/// sample; stddev floored at kStdFloor.
template <typename Scalar>
NormStats compute_norm_stats(std::span<const std::vector<nn::Tensor<Scalar>>> samples);

template <typename Scalar>
struct TranslatorTape {
    nn::Tape<Scalar> trunk;
    std::vector<nn::Tape<Scalar>> heads;
};

/// Feature extractor plus feature translator with one flat parameter list:
/// extractor layers, trunk layers, then each head's layers.
template <typename Scalar>
class ColorizationNet {
public:
    ColorizationNet(const ExtractorConfig& extractor, const TranslatorConfig& translator,
                    std::uint64_t seed);
    ColorizationNet(const ExtractorConfig& extractor, const TranslatorConfig& translator,
                    nn::NetParams<Scalar> params, NormStats stats);

    const ExtractorConfig& extractor_config() const { return extractor_; }
    const TranslatorConfig& translator_config() const { return translator_; }
    const std::vector<nn::LayerSpec>& specs() const { return specs_; }
    nn::NetParams<Scalar>& params() { return params_; }
    const nn::NetParams<Scalar>& params() const { return params_; }
    const NormStats& norm_stats() const { return stats_; }
    void set_norm_stats(NormStats stats);

    /// ReLU taps upsampled to the patch size, before standardization.
    std::vector<nn::Tensor<Scalar>> raw_features(const nn::Tensor<Scalar>& patch,
                                                 nn::Tape<Scalar>* tape = nullptr) const;
    /// Standardized taps; requires norm stats.
    std::vector<nn::Tensor<Scalar>> extract_features(const nn::Tensor<Scalar>& patch,
                                                     nn::Tape<Scalar>* tape = nullptr) const;

    /// (hypercolumn_length x pixels): input value first, then every tap channel.
    nn::Matrix<Scalar> hypercolumns(const nn::Tensor<Scalar>& patch,
                                    const std::vector<nn::Tensor<Scalar>>& features,
                                    std::span<const int> pixels) const;

    std::vector<nn::Matrix<Scalar>> translate_logits(const nn::Matrix<Scalar>& columns,
                                                     TranslatorTape<Scalar>* tape = nullptr) const;
    /// Per-head softmax distributions, each (bins x pixels).
    std::vector<nn::Matrix<Scalar>> translate(const nn::Matrix<Scalar>& columns) const;

    double translator_loss(const nn::Matrix<Scalar>& columns, const nn::TargetMatrix& targets) const;
    double translator_loss_and_gradient(const nn::Matrix<Scalar>& columns, const nn::TargetMatrix& targets,
                                        nn::NetParams<Scalar>& grads) const;

    double loss(const nn::Tensor<Scalar>& patch, std::span<const int> pixels,
                const nn::TargetMatrix& targets) const;
    /// Gradient of the loss for all parameters; extractor gradients are left
    /// zero unless `through_extractor`.
    double loss_and_gradient(const nn::Tensor<Scalar>& patch, std::span<const int> pixels,
                             const nn::TargetMatrix& targets, nn::NetParams<Scalar>& grads,
                             bool through_extractor = true) const;

    std::size_t extractor_layers() const { return extractor_layers_; }

private:
    std::span<const nn::LayerSpec> extractor_specs() const;
    std::span<const nn::LayerSpec> trunk_specs() const;
    std::span<const nn::LayerSpec> head_specs(int head) const;
    std::span<const nn::LayerParams<Scalar>> extractor_params() const;
    std::span<const nn::LayerParams<Scalar>> trunk_params() const;
    std::span<const nn::LayerParams<Scalar>> head_params(int head) const;
    std::size_t head_offset(int head) const;

    double backprop_translator(const nn::Matrix<Scalar>& columns, const nn::TargetMatrix& targets,
                               nn::NetParams<Scalar>& grads, nn::Matrix<Scalar>* grad_columns) const;

    ExtractorConfig extractor_;
    TranslatorConfig translator_;
    std::vector<nn::LayerSpec> specs_;
    nn::NetParams<Scalar> params_;
    NormStats stats_;
    std::size_t extractor_layers_ = 0;
    std::size_t trunk_layers_ = 0;
    std::size_t head_layers_ = 0;
};

template <typename Scalar>
NormStats fit_norm_stats(std::span<const nn::Tensor<Scalar>> patches, const ColorizationNet<Scalar>& net);

/// One full-pol training scene: the single-pol input intensity and the truth.
struct TrainingScene {
    Plane intensity;
    CovarianceImage truth;
};

/// Everything needed to run inference or to resume training.
struct ModelCheckpoint {
    static constexpr std::uint16_t kFormatVersion = 1;

    ExtractorConfig extractor;
    TranslatorConfig translator;
    TrainConfig train;
    nn::NetParams<double> params;
    NormStats stats;
    QuantizerSet quantizers;
    int epochs_completed = 0;
    nn::AdamState<double> adam;
};

struct TrainResult {
    ModelCheckpoint checkpoint;
    std::vector<double> step_losses;
    std::vector<int> step_epochs;
    std::vector<double> epoch_losses;
};

/// Non-overlapping tiles of at most `patch` pixels per side covering the image.
struct Tile {
    int x0, y0, width, height;
};
std::vector<Tile> make_tiles(int width, int height, int patch);

/// Per-head target bins for a covariance tile, (heads x pixels). Pixels with
/// zero power are reported through `valid` and given bin 0.
nn::TargetMatrix encode_targets(const CovarianceImage& truth, const QuantizerSet& quantizers,
                                std::vector<int>* valid_pixels = nullptr);

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Fits quantizers and norm stats on the data, then trains with Adam on
/// shuffled mini-batches for `config.epochs` epochs.
TrainResult train(std::span<const TrainingScene> data, const ExtractorConfig& extractor,
                  const TranslatorConfig& translator, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Continues training from a checkpoint up to `total_epochs`; the continued
/// loss trace is identical to an uninterrupted run.
TrainResult resume_training(std::span<const TrainingScene> data, const ModelCheckpoint& checkpoint,
                            int total_epochs, const EpochCallback& on_epoch = {});

enum PixelFlag : int {
    kPowerFallback = 1,   // input-channel delta below floor, P = intensity
    kDeltaFallback = 2,   // decoded deltas summed to ~0, replaced by 1/3 each
    kPsdCorrected = 4,
    kRhoClamped = 8,
};

struct ColorizeOptions {
    Channel channel = Channel::VV;
    DecodeRule rule = DecodeRule::Mode;
};

struct ColorizeResult {
    CovarianceImage covariance;
    std::vector<ParamVector> params;  // final per-pixel feature parameters
    LabelPlane flags;
};

/// Clamps decoded deltas onto the simplex and |rho| <= 1, then applies the PSD
/// correction. Adds PixelFlag bits to `flags`.
PolFeature finalize_feature(const ParamVector& decoded, int& flags);

/// Turns a finalized feature and the measured channel intensity into a
/// covariance whose input-channel diagonal equals the intensity exactly.
CovarianceMatrix covariance_from_channel(const PolFeature& feat, double intensity, Channel channel,
                                         int& flags);

ColorizeResult colorize(const Plane& intensity, const ModelCheckpoint& checkpoint,
                        const ColorizeOptions& options = {});

}  // namespace polcolor
