#include "anatpaste/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "anatpaste/error.hpp"
#include "anatpaste/parallel.hpp"
#include "anatpaste/rng.hpp"

namespace anatpaste::phantom {

namespace {

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kLesionStream = 3;

bool valid_range(const Range& r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; }

bool inside(const Ellipse& e, double x, double y, double scale = 1.0) {
    const double u = (x - e.cx) / (e.half_x * scale);
    const double v = (y - e.cy) / (e.half_y * scale);
    return u * u + v * v <= 1.0;
}

// Every boundary point of `inner` lies within `outer` shrunk by `margin`.
bool contained(const Ellipse& inner, const Ellipse& outer, double margin) {
    for (int k = 0; k < 72; ++k) {
        const double t = 2.0 * std::numbers::pi * k / 72.0;
        const double x = inner.cx + inner.half_x * std::cos(t);
        const double y = inner.cy + inner.half_y * std::sin(t);
        if (!inside(outer, x, y, margin)) return false;
    }
    return true;
}

double sample(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

}  // namespace

void PhantomConfig::validate() const {
    auto bad = [](const char* what) { throw Error(Errc::InvalidArgument, std::string("PhantomConfig: ") + what); };
    if (width < 16 || height < 16) bad("dimensions must be at least 16x16");
    for (const Range* r : {&body_half_x, &body_half_y, &lung_half_x, &lung_half_y, &lung_offset_x,
                           &center_jitter, &lesion_amplitude, &lesion_radius}) {
        if (!valid_range(*r)) bad("ranges must be finite with lo <= hi");
    }
    for (double level : {background_level, body_level, lung_level}) {
        if (!(level >= 0.0 && level <= 1.0)) bad("intensity levels must lie in [0,1]");
    }
    if (!(noise_sigma >= 0.0) || !(rib_amplitude >= 0.0) || !(rib_period > 0.0)) bad("noise and rib parameters must be >= 0");
    if (lesion_count_min < 1 || lesion_count_min > lesion_count_max) bad("lesion count range must satisfy 1 <= min <= max");
    if (!(lesion_radius.lo > 0.0) || !(lesion_amplitude.lo >= 0.0)) bad("lesion radius must be > 0");
    if (max_attempts < 1) bad("max_attempts must be >= 1");
}

std::string_view to_string(SampleClass c) noexcept {
    return c == SampleClass::normal ? "normal" : "abnormal";
}

PhantomSample generate(const PhantomConfig& cfg, std::uint64_t index, SampleClass sample_class) {
    cfg.validate();
    const int w = cfg.width;
    const int h = cfg.height;

    PhantomSample s;
    s.index = index;
    s.seed = Rng::mix(cfg.seed, {index});
    s.sample_class = sample_class;
    s.label = sample_class == SampleClass::abnormal ? 1 : 0;
    char id[32];
    std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(index));
    s.id = id;

    Rng geo = Rng::derive(s.seed, {kGeometryStream});
    bool feasible = false;
    for (int attempt = 0; attempt < cfg.max_attempts && !feasible; ++attempt) {
        Ellipse body{0.5 * (w - 1) + sample(geo, cfg.center_jitter) * w,
                     0.5 * (h - 1) + sample(geo, cfg.center_jitter) * h, sample(geo, cfg.body_half_x) * w,
                     sample(geo, cfg.body_half_y) * h};
        const double lung_cy = body.cy - geo.uniform(0.0, 0.04) * h;
        Ellipse lungs[2];
        for (int k = 0; k < 2; ++k) {
            const double offset = sample(geo, cfg.lung_offset_x) * w;
            lungs[k] = {body.cx + (k == 0 ? -offset : offset), lung_cy + geo.uniform(-0.01, 0.01) * h,
                        sample(geo, cfg.lung_half_x) * w, sample(geo, cfg.lung_half_y) * h};
        }
        const bool in_frame = body.cx - body.half_x >= 2.0 && body.cx + body.half_x <= w - 3.0 &&
                              body.cy - body.half_y >= 2.0 && body.cy + body.half_y <= h - 3.0;
        const bool separated = lungs[0].cx + lungs[0].half_x + 4.0 < lungs[1].cx - lungs[1].half_x;
        feasible = in_frame && separated && contained(lungs[0], body, 0.95) && contained(lungs[1], body, 0.95) &&
                   lungs[0].half_x >= 2.0 && lungs[1].half_x >= 2.0;
        if (feasible) {
            s.body = body;
            s.lungs[0] = lungs[0];
            s.lungs[1] = lungs[1];
        }
    }
    if (!feasible) throw Error(Errc::GenerationFailed, "no feasible phantom geometry for sample " + s.id);
    const double rib_phase = geo.uniform(0.0, 2.0 * std::numbers::pi);
    const double rib_period = cfg.rib_period * h / 256.0;

    std::vector<double> pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    s.gt_lung = BinaryMask(w, h);
    s.gt_lesion = BinaryMask(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double v = cfg.background_level;
            if (inside(s.body, x, y)) {
                const bool lung = inside(s.lungs[0], x, y) || inside(s.lungs[1], x, y);
                v = lung ? cfg.lung_level : cfg.body_level;
                if (cfg.rib_texture) {
                    const double dx = (x - s.body.cx) / w;
                    const double phase = 2.0 * std::numbers::pi * (y + 40.0 * dx * dx * h / 256.0) / rib_period;
                    v += cfg.rib_amplitude * std::sin(phase + rib_phase);
                }
                if (lung) s.gt_lung.set(x, y, true);
            }
            pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = v;
        }
    }

    if (sample_class == SampleClass::abnormal) {
        Rng les = Rng::derive(s.seed, {kLesionStream});
        const auto count = les.uniform_int(cfg.lesion_count_min, cfg.lesion_count_max);
        for (std::int64_t n = 0; n < count; ++n) {
            bool placed = false;
            for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
                const Ellipse& lung = s.lungs[les.uniform_int(0, 1)];
                const double t = les.uniform(0.0, 2.0 * std::numbers::pi);
                const double r = 0.75 * std::sqrt(les.uniform());
                Lesion lesion{lung.cx + r * lung.half_x * std::cos(t), lung.cy + r * lung.half_y * std::sin(t),
                              sample(les, cfg.lesion_radius), sample(les, cfg.lesion_amplitude)};
                const int px = static_cast<int>(std::lround(lesion.cx));
                const int py = static_cast<int>(std::lround(lesion.cy));
                if (px < 0 || py < 0 || px >= w || py >= h || !s.gt_lung.at(px, py)) continue;
                s.lesions.push_back(lesion);
                placed = true;
            }
            if (!placed) throw Error(Errc::GenerationFailed, "could not place a lesion inside the lungs of " + s.id);
        }
        for (const Lesion& lesion : s.lesions) {
            const double sigma = 0.5 * lesion.radius;
            const double reach = 2.5 * lesion.radius;
            const int x0 = std::max(0, static_cast<int>(std::floor(lesion.cx - reach)));
            const int x1 = std::min(w - 1, static_cast<int>(std::ceil(lesion.cx + reach)));
            const int y0 = std::max(0, static_cast<int>(std::floor(lesion.cy - reach)));
            const int y1 = std::min(h - 1, static_cast<int>(std::ceil(lesion.cy + reach)));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    if (!s.gt_lung.at(x, y)) continue;
                    const double d2 = (x - lesion.cx) * (x - lesion.cx) + (y - lesion.cy) * (y - lesion.cy);
                    pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] +=
                        lesion.amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
                    if (d2 <= lesion.radius * lesion.radius) s.gt_lesion.set(x, y, true);
                }
            }
        }
    }

    Rng noise = Rng::derive(s.seed, {kNoiseStream});
    for (double& v : pixels) {
        if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise.normal();
        v = std::clamp(v, 0.0, 1.0);
    }
    s.image = GrayImage::from_data(w, h, std::move(pixels));
    return s;
}

std::vector<PhantomSample> generate_corpus(const PhantomConfig& cfg, std::size_t n_normal, std::size_t n_abnormal,
                                           std::uint64_t first_index, std::size_t workers) {
    std::vector<PhantomSample> samples(n_normal + n_abnormal);
    parallel_for(samples.size(), workers, [&](std::size_t i) {
        const SampleClass c = i < n_normal ? SampleClass::normal : SampleClass::abnormal;
        samples[i] = generate(cfg, first_index + i, c);
    });
    return samples;
}

std::string lesion_stratum(const PhantomSample& sample) {
    if (sample.lesions.empty()) return {};
    double largest = 0.0;
    for (const auto& l : sample.lesions) largest = std::max(largest, l.radius);
    return largest < 14.0 ? "small" : "large";
}

std::string manifest_csv(const std::vector<PhantomSample>& samples) {
    std::string out = "id,class,seed,label,lesion_count,lesions\n";
    char buf[128];
    for (const auto& s : samples) {
        out += s.id;
        out += ',';
        out += to_string(s.sample_class);
        std::snprintf(buf, sizeof buf, ",%llu,%d,%zu,", static_cast<unsigned long long>(s.seed), s.label,
                      s.lesions.size());
        out += buf;
        for (std::size_t i = 0; i < s.lesions.size(); ++i) {
            const auto& l = s.lesions[i];
            std::snprintf(buf, sizeof buf, "%s%.4f:%.4f:%.4f:%.4f", i ? ";" : "", l.cx, l.cy, l.radius, l.amplitude);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace anatpaste::phantom
