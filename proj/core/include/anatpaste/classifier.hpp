#pragma once

// Small feed-forward binary classifier trained on (original, augmented) pairs.
// Images are summarized by a fixed descriptor; the network's last hidden layer
// is the embedding later fed to kernel density scoring.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "anatpaste/augment.hpp"
#include "anatpaste/image.hpp"
#include "anatpaste/rng.hpp"

namespace anatpaste::nn {

using FeatureVector = std::vector<double>;

/// Per-cell mean intensities on a grid, followed by a normalized histogram.
struct Descriptor {
    int grid_size = 16;
    int histogram_bins = 32;

    std::size_t dimension() const noexcept {
        return static_cast<std::size_t>(grid_size) * static_cast<std::size_t>(grid_size) +
               static_cast<std::size_t>(histogram_bins);
    }
};

/// Cells split the frame at floor(i * size / grid) boundaries. Throws
/// InvalidDimensions when the image is smaller than the grid.
FeatureVector extract_features(const GrayImage& img, const Descriptor& d);

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major
    std::vector<double> bias;     // outputs
};

class MlpModel {
public:
    MlpModel() = default;

    /// Zero-initialized network; sizes = {d_in, hidden..., 2}.
    static MlpModel zeros(std::span<const std::size_t> layer_sizes);
    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpModel random(std::span<const std::size_t> layer_sizes, Rng& rng);

    std::vector<std::size_t> layer_sizes() const;
    std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().inputs; }
    std::size_t parameter_count() const noexcept;

    std::span<const DenseLayer> layers() const noexcept { return layers_; }
    std::span<DenseLayer> layers() noexcept { return layers_; }

    friend bool operator==(const MlpModel& a, const MlpModel& b);

private:
    std::vector<DenseLayer> layers_;
};

struct ForwardResult {
    std::array<double, 2> logits{};
    FeatureVector penultimate;  // activation of the last hidden layer
};

/// Affine layers with rectifiers between them; the last layer emits 2 logits.
ForwardResult forward(const MlpModel& model, std::span<const double> x);

std::array<double, 2> softmax(std::array<double, 2> logits) noexcept;

/// -log softmax(logits)[label], evaluated with log-sum-exp.
double cross_entropy(std::array<double, 2> logits, int label);

/// d cross_entropy / d logits.
std::array<double, 2> cross_entropy_grad(std::array<double, 2> logits, int label);

/// Gradient buffers laid out exactly like the model's parameters.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;

    static Gradients like(const MlpModel& model);
    void clear();
};

/// Adds scale * d loss / d params into `acc` and returns the sample loss.
double accumulate_gradients(const MlpModel& model, std::span<const double> x, int label,
                            Gradients& acc, double scale = 1.0);

/// Gradient of cross_entropy(forward(model, x).logits, label).
Gradients backward(const MlpModel& model, std::span<const double> x, int label);

struct OptimState {
    double momentum = 0.9;
    double weight_decay = 0.00003;
    Gradients velocity;

    static OptimState for_model(const MlpModel& model, double momentum = 0.9,
                                double weight_decay = 0.00003);
};

/// v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v.
void sgd_step(MlpModel& model, const Gradients& grads, OptimState& opt, double learning_rate);

/// Per-dimension map x -> (x - mean) / scale, with scale the feature's
/// standard deviation floored at `floor`.
struct InputScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    static InputScaler fit(std::span<const FeatureVector> features, double floor);
    FeatureVector apply(std::span<const double> x) const;
};

/// Network g with g(x) = f(scaler.apply(x)) up to rounding, obtained by
/// absorbing the map into the first layer.
MlpModel fold_input_scaler(const MlpModel& model, const InputScaler& scaler);

/// Single-cycle cosine annealing from base_lr at t = 0 down to 0 at t = total.
double cosine_lr(std::size_t t, std::size_t total, double base_lr);

enum class BatchCounting {
    normals,  // batch_size originals plus as many augmentations
    samples,  // batch_size counts originals and augmentations together
};

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 64;
    double base_lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 0.00003;
    std::vector<std::size_t> hidden{128, 64, 32};
    BatchCounting batch_counting = BatchCounting::normals;
    /// Train on standardized descriptors; the returned model takes raw ones.
    bool standardize_inputs = true;
    double input_std_floor = 0.01;
    std::uint64_t seed = 0;
    /// Worker threads for producing augmented samples; results do not depend on it.
    std::size_t workers = 1;

    void validate() const;
};

struct EpochLog {
    std::size_t epoch = 0;
    double learning_rate = 0.0;  // at the epoch's first step
    double mean_loss = 0.0;      // mean per-pair loss over the epoch's batches
    std::size_t loss_terms = 0;  // cross-entropy terms evaluated this epoch
    std::size_t batches = 0;
};

struct TrainResult {
    MlpModel model;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;  // only meaningful with an epoch hook
};

/// Produces the feature vector of sample `index`; `rng` is a stream private to
/// (seed, epoch, index), so the call may run on any thread.
using OriginalFeatures = std::function<FeatureVector(std::size_t index)>;
using AugmentedFeatures = std::function<FeatureVector(std::size_t index, Rng& rng)>;
/// Called after each epoch; the parameters of the epoch with the highest
/// returned value are kept. Without a hook the final epoch is returned.
using EpochHook = std::function<double(const MlpModel& model, std::size_t epoch)>;

/// Minimizes the mean over normals of CE(f(x), 0) + CE(f(Aug(x)), 1).
/// Normals are reshuffled every epoch and augmentations are redrawn.
TrainResult train_pairs(std::size_t count, std::size_t input_dim, const OriginalFeatures& original,
                        const AugmentedFeatures& augmented, const TrainConfig& cfg,
                        const EpochHook& hook = {});

/// Image-level training with the given augmentation.
TrainResult train(std::span<const GrayImage> normals, std::span<const BinaryMask> lungs,
                  const aug::Augmenter& augmenter, const Descriptor& descriptor,
                  const TrainConfig& cfg, const EpochHook& hook = {});

/// Text checkpoint: header, descriptor, layer sizes, then every parameter as
/// a hexadecimal float so a save/load round trip is exact.
void save_checkpoint(std::ostream& out, const MlpModel& model, const Descriptor& descriptor);
std::pair<MlpModel, Descriptor> load_checkpoint(std::istream& in);

}  // namespace anatpaste::nn
