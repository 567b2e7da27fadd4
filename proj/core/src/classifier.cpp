#include "anatpaste/classifier.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "anatpaste/error.hpp"
#include "anatpaste/parallel.hpp"

namespace anatpaste::nn {

namespace {

// Stream ids for Rng::derive inside training.
constexpr std::uint64_t kInitStream = 0x494e4954;     // "INIT"
constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"
constexpr std::uint64_t kAugmentStream = 0x41554753;  // "AUGS"

void check_input(const MlpModel& model, std::span<const double> x) {
    if (model.layers().empty()) throw Error(Errc::InvalidDimensions, "model has no layers");
    if (x.size() != model.input_dim()) {
        throw Error(Errc::InvalidDimensions, "input has dimension " + std::to_string(x.size()) +
                                                 ", model expects " + std::to_string(model.input_dim()));
    }
}

void check_sizes(std::span<const std::size_t> sizes) {
    if (sizes.size() < 2 || sizes.back() != 2) {
        throw Error(Errc::InvalidArgument, "layer sizes must be {d_in, hidden..., 2}");
    }
    for (std::size_t s : sizes) {
        if (s == 0) throw Error(Errc::InvalidArgument, "layer sizes must be positive");
    }
}

// Pre-activations per layer (the last entry holds the logits).
std::vector<std::vector<double>> pre_activations(const MlpModel& model, std::span<const double> x) {
    const auto layers = model.layers();
    std::vector<std::vector<double>> z(layers.size());
    std::vector<double> input(x.begin(), x.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        z[l].resize(layer.outputs);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double* row = layer.weights.data() + o * layer.inputs;
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < layer.inputs; ++i) acc += row[i] * input[i];
            z[l][o] = acc;
        }
        if (l + 1 < layers.size()) {
            input = z[l];
            for (double& v : input) v = v > 0.0 ? v : 0.0;
        }
    }
    return z;
}

}  // namespace

FeatureVector extract_features(const GrayImage& img, const Descriptor& d) {
    if (d.grid_size < 1 || d.histogram_bins < 1) throw Error(Errc::InvalidArgument, "descriptor sizes must be >= 1");
    if (img.width() < d.grid_size || img.height() < d.grid_size) {
        throw Error(Errc::InvalidDimensions, "image smaller than the descriptor grid");
    }
    const int w = img.width();
    const int h = img.height();
    const int g = d.grid_size;
    FeatureVector out(d.dimension(), 0.0);

    std::vector<double> sums(static_cast<std::size_t>(g) * static_cast<std::size_t>(g), 0.0);
    std::vector<int> col_cell(static_cast<std::size_t>(w));
    for (int c = 0; c < g; ++c) {
        for (int x = c * w / g; x < (c + 1) * w / g; ++x) col_cell[static_cast<std::size_t>(x)] = c;
    }
    std::vector<double> hist(static_cast<std::size_t>(d.histogram_bins), 0.0);
    for (int r = 0; r < g; ++r) {
        for (int y = r * h / g; y < (r + 1) * h / g; ++y) {
            for (int x = 0; x < w; ++x) {
                const double v = img.at(x, y);
                sums[static_cast<std::size_t>(r * g + col_cell[static_cast<std::size_t>(x)])] += v;
                const int b = std::min(d.histogram_bins - 1, static_cast<int>(std::floor(v * d.histogram_bins)));
                hist[static_cast<std::size_t>(b)] += 1.0;
            }
        }
    }
    for (int r = 0; r < g; ++r) {
        const int rows = (r + 1) * h / g - r * h / g;
        for (int c = 0; c < g; ++c) {
            const int cols = (c + 1) * w / g - c * w / g;
            out[static_cast<std::size_t>(r * g + c)] =
                sums[static_cast<std::size_t>(r * g + c)] / (static_cast<double>(rows) * cols);
        }
    }
    const double n = static_cast<double>(img.size());
    for (int b = 0; b < d.histogram_bins; ++b) {
        out[static_cast<std::size_t>(g * g + b)] = hist[static_cast<std::size_t>(b)] / n;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

MlpModel MlpModel::zeros(std::span<const std::size_t> layer_sizes) {
    check_sizes(layer_sizes);
    MlpModel m;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        DenseLayer layer;
        layer.inputs = layer_sizes[l];
        layer.outputs = layer_sizes[l + 1];
        layer.weights.assign(layer.inputs * layer.outputs, 0.0);
        layer.bias.assign(layer.outputs, 0.0);
        m.layers_.push_back(std::move(layer));
    }
    return m;
}

MlpModel MlpModel::random(std::span<const std::size_t> layer_sizes, Rng& rng) {
    MlpModel m = zeros(layer_sizes);
    for (DenseLayer& layer : m.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.inputs));
        for (double& w : layer.weights) w = rng.uniform(-bound, bound);
        for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    }
    return m;
}

std::vector<std::size_t> MlpModel::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers_.empty()) return sizes;
    sizes.push_back(layers_.front().inputs);
    for (const DenseLayer& l : layers_) sizes.push_back(l.outputs);
    return sizes;
}

std::size_t MlpModel::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const DenseLayer& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

bool operator==(const MlpModel& a, const MlpModel& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
        const DenseLayer& x = a.layers_[l];
        const DenseLayer& y = b.layers_[l];
        if (x.inputs != y.inputs || x.outputs != y.outputs || x.weights != y.weights || x.bias != y.bias) {
            return false;
        }
    }
    return true;
}

ForwardResult forward(const MlpModel& model, std::span<const double> x) {
    check_input(model, x);
    auto z = pre_activations(model, x);
    ForwardResult out;
    out.logits = {z.back()[0], z.back()[1]};
    if (z.size() >= 2) {
        out.penultimate = z[z.size() - 2];
        for (double& v : out.penultimate) v = v > 0.0 ? v : 0.0;
    } else {
        out.penultimate.assign(x.begin(), x.end());
    }
    return out;
}

std::array<double, 2> softmax(std::array<double, 2> logits) noexcept {
    const double m = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double cross_entropy(std::array<double, 2> logits, int label) {
    if (label != 0 && label != 1) throw Error(Errc::InvalidArgument, "label must be 0 or 1");
    const double m = std::max(logits[0], logits[1]);
    const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    return std::max(0.0, lse - logits[static_cast<std::size_t>(label)]);
}

std::array<double, 2> cross_entropy_grad(std::array<double, 2> logits, int label) {
    if (label != 0 && label != 1) throw Error(Errc::InvalidArgument, "label must be 0 or 1");
    auto p = softmax(logits);
    p[static_cast<std::size_t>(label)] -= 1.0;
    return p;
}

// ---------------------------------------------------------------------------
// Gradients and optimizer
// ---------------------------------------------------------------------------

Gradients Gradients::like(const MlpModel& model) {
    Gradients g;
    for (const DenseLayer& l : model.layers()) {
        g.weights.emplace_back(l.weights.size(), 0.0);
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

void Gradients::clear() {
    for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

double accumulate_gradients(const MlpModel& model, std::span<const double> x, int label,
                            Gradients& acc, double scale) {
    check_input(model, x);
    const auto layers = model.layers();
    if (acc.weights.size() != layers.size()) throw Error(Errc::InvalidDimensions, "gradient buffer shape mismatch");
    const auto z = pre_activations(model, x);
    const std::array<double, 2> logits{z.back()[0], z.back()[1]};
    const double loss = cross_entropy(logits, label);
    const auto dlogits = cross_entropy_grad(logits, label);

    std::vector<double> delta(dlogits.begin(), dlogits.end());
    std::vector<double> activation;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const DenseLayer& layer = layers[l];
        if (l == 0) {
            activation.assign(x.begin(), x.end());
        } else {
            activation = z[l - 1];
            for (double& v : activation) v = v > 0.0 ? v : 0.0;
        }
        auto& gw = acc.weights[l];
        auto& gb = acc.bias[l];
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = scale * delta[o];
            gb[o] += d;
            if (d == 0.0) continue;
            double* row = gw.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) row[i] += d * activation[i];
        }
        if (l == 0) break;
        std::vector<double> prev(layer.inputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* row = layer.weights.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) prev[i] += row[i] * d;
        }
        for (std::size_t i = 0; i < layer.inputs; ++i) {
            if (!(z[l - 1][i] > 0.0)) prev[i] = 0.0;
        }
        delta = std::move(prev);
    }
    return loss;
}

Gradients backward(const MlpModel& model, std::span<const double> x, int label) {
    Gradients g = Gradients::like(model);
    accumulate_gradients(model, x, label, g, 1.0);
    return g;
}

OptimState OptimState::for_model(const MlpModel& model, double momentum, double weight_decay) {
    return {momentum, weight_decay, Gradients::like(model)};
}

void sgd_step(MlpModel& model, const Gradients& grads, OptimState& opt, double learning_rate) {
    auto layers = model.layers();
    auto shape_ok = [&](const Gradients& g) {
        if (g.weights.size() != layers.size() || g.bias.size() != layers.size()) return false;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (g.weights[l].size() != layers[l].weights.size() || g.bias[l].size() != layers[l].bias.size()) {
                return false;
            }
        }
        return true;
    };
    if (!shape_ok(grads) || !shape_ok(opt.velocity)) {
        throw Error(Errc::InvalidDimensions, "sgd_step: gradient or velocity shape mismatch");
    }
    auto update = [&](std::vector<double>& params, const std::vector<double>& g, std::vector<double>& v) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            v[i] = opt.momentum * v[i] + (g[i] + opt.weight_decay * params[i]);
            params[i] -= learning_rate * v[i];
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, grads.weights[l], opt.velocity.weights[l]);
        update(layers[l].bias, grads.bias[l], opt.velocity.bias[l]);
    }
}

double cosine_lr(std::size_t t, std::size_t total, double base_lr) {
    if (total == 0) throw Error(Errc::InvalidArgument, "cosine_lr: total steps must be > 0");
    if (t > total) throw Error(Errc::InvalidArgument, "cosine_lr: step beyond schedule");
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
    return std::max(0.0, 0.5 * base_lr * (1.0 + std::cos(phase)));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

InputScaler InputScaler::fit(std::span<const FeatureVector> features, double floor) {
    if (features.empty()) throw Error(Errc::EmptyDataset, "cannot fit a scaler to no features");
    if (!(floor > 0.0)) throw Error(Errc::InvalidArgument, "scaler floor must be > 0");
    const std::size_t d = features.front().size();
    InputScaler s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (const auto& f : features) {
        if (f.size() != d) throw Error(Errc::InvalidDimensions, "features have differing dimensions");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += f[j];
    }
    const double n = static_cast<double>(features.size());
    for (double& m : s.mean) m /= n;
    for (const auto& f : features) {
        for (std::size_t j = 0; j < d; ++j) s.scale[j] += (f[j] - s.mean[j]) * (f[j] - s.mean[j]);
    }
    for (double& v : s.scale) v = std::max(std::sqrt(v / n), floor);
    return s;
}

FeatureVector InputScaler::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) throw Error(Errc::InvalidDimensions, "scaler dimension mismatch");
    FeatureVector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
}

MlpModel fold_input_scaler(const MlpModel& model, const InputScaler& scaler) {
    MlpModel out = model;
    if (out.layers().empty()) return out;
    DenseLayer& first = out.layers().front();
    if (first.inputs != scaler.mean.size()) throw Error(Errc::InvalidDimensions, "scaler dimension mismatch");
    for (std::size_t o = 0; o < first.outputs; ++o) {
        double shift = 0.0;
        for (std::size_t j = 0; j < first.inputs; ++j) {
            double& w = first.weights[o * first.inputs + j];
            w /= scaler.scale[j];
            shift += w * scaler.mean[j];
        }
        first.bias[o] -= shift;
    }
    return out;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
    if (batch_counting == BatchCounting::samples && batch_size < 2) {
        throw Error(Errc::InvalidArgument, "batch_size must be >= 2 when counting samples");
    }
    if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
    if (!(base_lr > 0.0)) throw Error(Errc::InvalidArgument, "base learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::InvalidArgument, "momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw Error(Errc::InvalidArgument, "weight decay must be >= 0");
    for (std::size_t h : hidden) {
        if (h == 0) throw Error(Errc::InvalidArgument, "hidden layer sizes must be positive");
    }
    if (standardize_inputs && !(input_std_floor > 0.0)) {
        throw Error(Errc::InvalidArgument, "input_std_floor must be > 0");
    }
}

TrainResult train_pairs(std::size_t count, std::size_t input_dim, const OriginalFeatures& original,
                        const AugmentedFeatures& augmented, const TrainConfig& cfg, const EpochHook& hook) {
    cfg.validate();
    if (count == 0) throw Error(Errc::EmptyDataset, "training set is empty");

    std::vector<std::size_t> sizes{input_dim};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2);
    Rng init = Rng::derive(cfg.seed, {kInitStream});
    TrainResult result;
    result.model = MlpModel::random(sizes, init);
    OptimState opt = OptimState::for_model(result.model, cfg.momentum, cfg.weight_decay);
    Gradients grads = Gradients::like(result.model);

    std::vector<FeatureVector> originals(count);
    parallel_for(count, cfg.workers, [&](std::size_t i) { originals[i] = original(i); });
    for (const auto& f : originals) {
        if (f.size() != input_dim) throw Error(Errc::InvalidDimensions, "feature dimension mismatch");
    }
    std::optional<InputScaler> scaler;
    if (cfg.standardize_inputs) {
        scaler = InputScaler::fit(originals, cfg.input_std_floor);
        for (auto& f : originals) f = scaler->apply(f);
    }
    auto external = [&](const MlpModel& m) { return scaler ? fold_input_scaler(m, *scaler) : m; };

    const std::size_t per_batch =
        cfg.batch_counting == BatchCounting::normals ? cfg.batch_size : cfg.batch_size / 2;
    const std::size_t batches = (count + per_batch - 1) / per_batch;
    const std::size_t total_steps = batches * cfg.epochs;

    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    MlpModel best_model;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle = Rng::derive(cfg.seed, {kShuffleStream, epoch});
        shuffle.shuffle(std::span<std::size_t>(order));

        EpochLog entry;
        entry.epoch = epoch;
        entry.learning_rate = cosine_lr(step, total_steps, cfg.base_lr);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * per_batch;
            const std::size_t end = std::min(count, begin + per_batch);
            const std::size_t n = end - begin;

            std::vector<FeatureVector> aug(n);
            parallel_for(n, cfg.workers, [&](std::size_t k) {
                const std::size_t id = order[begin + k];
                Rng rng = Rng::derive(cfg.seed, {kAugmentStream, epoch, id});
                aug[k] = augmented(id, rng);
                if (scaler && aug[k].size() == input_dim) aug[k] = scaler->apply(aug[k]);
            });

            grads.clear();
            const double scale = 1.0 / static_cast<double>(n);
            double batch_loss = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (aug[k].size() != input_dim) throw Error(Errc::InvalidDimensions, "feature dimension mismatch");
                batch_loss += accumulate_gradients(result.model, originals[order[begin + k]], 0, grads, scale);
                batch_loss += accumulate_gradients(result.model, aug[k], 1, grads, scale);
            }
            sgd_step(result.model, grads, opt, cosine_lr(step, total_steps, cfg.base_lr));
            ++step;
            loss_sum += batch_loss * scale;
            entry.loss_terms += 2 * n;
            ++entry.batches;
        }
        entry.mean_loss = loss_sum / static_cast<double>(batches);
        result.log.push_back(entry);

        if (hook) {
            MlpModel current = external(result.model);
            const double score = hook(current, epoch);
            if (score > best_score) {
                best_score = score;
                best_model = std::move(current);
                result.best_epoch = epoch;
            }
        } else {
            result.best_epoch = epoch;
        }
    }
    result.model = hook ? std::move(best_model) : external(result.model);
    return result;
}

TrainResult train(std::span<const GrayImage> normals, std::span<const BinaryMask> lungs,
                  const aug::Augmenter& augmenter, const Descriptor& descriptor, const TrainConfig& cfg,
                  const EpochHook& hook) {
    if (normals.empty()) throw Error(Errc::EmptyDataset, "no normal images to train on");
    const bool need_lung = augmenter.needs_lung();
    if (lungs.size() != normals.size() && (need_lung || !lungs.empty())) {
        throw Error(Errc::InvalidDimensions, "expected one lung mask per training image");
    }
    static const BinaryMask kNoLung;
    auto lung_of = [&](std::size_t i) -> const BinaryMask& { return lungs.empty() ? kNoLung : lungs[i]; };

    return train_pairs(
        normals.size(), descriptor.dimension(),
        [&](std::size_t i) { return extract_features(normals[i], descriptor); },
        [&](std::size_t i, Rng& rng) {
            try {
                return extract_features(augmenter(normals[i], lung_of(i), rng).anomaly_image, descriptor);
            } catch (const Error& e) {
                throw Error(e.code(), "training image " + std::to_string(i) + ": " + e.what());
            }
        },
        cfg, hook);
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "anatpaste-mlp";
constexpr int kVersion = 1;

void write_values(std::ostream& out, const double* values, std::size_t n) {
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        auto res = std::to_chars(buf, buf + sizeof buf, values[i], std::chars_format::hex);
        if (i) out << ' ';
        out.write(buf, res.ptr - buf);
    }
    out << '\n';
}

double parse_hex(const std::string& token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    bool negative = false;
    if (first != last && *first == '-') {
        negative = true;
        ++first;
    }
    auto res = std::from_chars(first, last, v, std::chars_format::hex);
    if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        throw Error(Errc::ParseError, "checkpoint: bad parameter value '" + token + "'");
    }
    return negative ? -v : v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const MlpModel& model, const Descriptor& descriptor) {
    out << kMagic << ' ' << kVersion << '\n';
    out << "descriptor " << descriptor.grid_size << ' ' << descriptor.histogram_bins << '\n';
    const auto sizes = model.layer_sizes();
    out << "layers " << sizes.size();
    for (std::size_t s : sizes) out << ' ' << s;
    out << '\n';
    for (const DenseLayer& layer : model.layers()) {
        for (std::size_t o = 0; o < layer.outputs; ++o) write_values(out, layer.weights.data() + o * layer.inputs, layer.inputs);
        write_values(out, layer.bias.data(), layer.outputs);
    }
}

std::pair<MlpModel, Descriptor> load_checkpoint(std::istream& in) {
    auto fail = [](const std::string& what) { throw Error(Errc::ParseError, "checkpoint: " + what); };
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kMagic) fail("missing header");
    if (version != kVersion) fail("unsupported version " + std::to_string(version));
    std::string key;
    Descriptor d;
    if (!(in >> key >> d.grid_size >> d.histogram_bins) || key != "descriptor" || d.grid_size < 1 ||
        d.histogram_bins < 1) {
        fail("bad descriptor line");
    }
    std::size_t n = 0;
    if (!(in >> key >> n) || key != "layers" || n < 2 || n > 64) fail("bad layers line");
    std::vector<std::size_t> sizes(n);
    for (auto& s : sizes) {
        if (!(in >> s) || s == 0 || s > (1u << 20)) fail("bad layer size");
    }
    if (sizes.back() != 2) fail("output layer must have 2 units");
    if (sizes.front() != d.dimension()) fail("input size does not match the descriptor");
    MlpModel model = MlpModel::zeros(sizes);
    std::string token;
    for (DenseLayer& layer : model.layers()) {
        for (double& w : layer.weights) {
            if (!(in >> token)) fail("truncated weights");
            w = parse_hex(token);
        }
        for (double& b : layer.bias) {
            if (!(in >> token)) fail("truncated biases");
            b = parse_hex(token);
        }
    }
    if (in >> token) fail("trailing data");
    return {std::move(model), d};
}

}  // namespace anatpaste::nn
