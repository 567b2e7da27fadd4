#pragma once

// Brute-force reference implementations. Each one is written from the
// definition of the quantity rather than from the library's algorithm, so an
// agreement between the two is evidence about both.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "anatpaste/image.hpp"
#include "anatpaste/imgcore.hpp"
#include "anatpaste/metrics.hpp"
#include "anatpaste/rng.hpp"

namespace oracle {

using anatpaste::BinaryMask;
using anatpaste::GrayImage;
using Rational = boost::multiprecision::cpp_rational;

inline int bin_of(double v) {
    if (v <= 0.0) return 0;
    const int b = static_cast<int>(v * 256.0);
    return b > 255 ? 255 : b;
}

/// Threshold bin maximizing w0 * w1 * (mu0 - mu1)^2 in exact rationals, the
/// lowest on ties; nullopt when every split has zero between-class variance.
inline std::optional<int> otsu(const GrayImage& img) {
    std::array<long long, 256> hist{};
    for (double v : img.pixels()) ++hist[static_cast<std::size_t>(bin_of(v))];
    const long long n = static_cast<long long>(img.pixels().size());
    std::optional<int> best;
    Rational best_var = 0;
    for (int t = 0; t < 255; ++t) {
        long long n0 = 0, s0 = 0, s1 = 0;
        for (int k = 0; k <= t; ++k) {
            n0 += hist[static_cast<std::size_t>(k)];
            s0 += k * hist[static_cast<std::size_t>(k)];
        }
        for (int k = t + 1; k < 256; ++k) s1 += k * hist[static_cast<std::size_t>(k)];
        const long long n1 = n - n0;
        if (n0 == 0 || n1 == 0) continue;
        const Rational w0(n0, n), w1(n1, n);
        const Rational mu0(s0, n0), mu1(s1, n1);
        const Rational var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best = t;
        }
    }
    return best;
}

/// Breadth-first flood fill; labels 1..count in order of first raster visit.
inline std::vector<int> flood_fill(const BinaryMask& m, int connectivity, int* count = nullptr) {
    const int w = m.width(), h = m.height();
    std::vector<int> labels(static_cast<std::size_t>(w * h), 0);
    int next = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!m.at(x, y) || labels[static_cast<std::size_t>(y * w + x)]) continue;
            ++next;
            std::deque<std::pair<int, int>> queue{{x, y}};
            labels[static_cast<std::size_t>(y * w + x)] = next;
            while (!queue.empty()) {
                auto [cx, cy] = queue.front();
                queue.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (connectivity == 4 && dx != 0 && dy != 0) continue;
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h || !m.at(nx, ny)) continue;
                        int& l = labels[static_cast<std::size_t>(ny * w + nx)];
                        if (l) continue;
                        l = next;
                        queue.emplace_back(nx, ny);
                    }
                }
            }
        }
    }
    if (count) *count = next;
    return labels;
}

/// True when both labelings induce the same partition of the pixels.
inline bool same_partition(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == 0) != (b[i] == 0)) return false;
        if (a[i] == 0) continue;
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

/// Mask minus every flood-fill component that touches the frame border.
inline BinaryMask clear_border(const BinaryMask& m, int connectivity) {
    const auto labels = flood_fill(m, connectivity);
    const int w = m.width(), h = m.height();
    std::vector<bool> touching(labels.size() + 1, false);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels[static_cast<std::size_t>(y * w + x)];
            if (l && (x == 0 || y == 0 || x == w - 1 || y == h - 1)) touching[static_cast<std::size_t>(l)] = true;
        }
    }
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = labels[static_cast<std::size_t>(y * w + x)];
            if (l && !touching[static_cast<std::size_t>(l)]) out.set(x, y, true);
        }
    }
    return out;
}

/// Offsets of a disk (dx^2 + dy^2 <= r^2) or square (max(|dx|,|dy|) <= r).
inline std::vector<std::pair<int, int>> element_offsets(const anatpaste::img::StructuringElement& se) {
    std::vector<std::pair<int, int>> out;
    const int r = se.radius;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (se.shape == anatpaste::img::StructuringElement::Shape::square || dx * dx + dy * dy <= r * r) {
                out.emplace_back(dx, dy);
            }
        }
    }
    return out;
}

/// Minkowski definitions with everything outside the frame treated as background.
inline BinaryMask erode(const BinaryMask& m, const anatpaste::img::StructuringElement& se) {
    const auto offs = element_offsets(se);
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool all = true;
            for (auto [dx, dy] : offs) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height() || !m.at(nx, ny)) {
                    all = false;
                    break;
                }
            }
            out.set(x, y, all);
        }
    }
    return out;
}

inline BinaryMask dilate(const BinaryMask& m, const anatpaste::img::StructuringElement& se) {
    const auto offs = element_offsets(se);
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            bool any = false;
            for (auto [dx, dy] : offs) {
                const int nx = x - dx, ny = y - dy;
                if (nx >= 0 && ny >= 0 && nx < m.width() && ny < m.height() && m.at(nx, ny)) {
                    any = true;
                    break;
                }
            }
            out.set(x, y, any);
        }
    }
    return out;
}

/// A(z) = (1/N) sum_i exp(-sum_j ((z_j - x_ij) / (s_j h))^2 / 2), with the
/// per-dimension population std s_j floored at max(1e-8, 0.01 max_k s_k). Mean and std are
/// accumulated in long double.
inline double kde_density(const std::vector<std::vector<double>>& refs, const std::vector<double>& z, double h) {
    const std::size_t n = refs.size(), d = z.size();
    std::vector<long double> mean(d, 0.0L), sd(d, 0.0L);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) mean[j] += refs[i][j];
        mean[j] /= static_cast<long double>(n);
        for (std::size_t i = 0; i < n; ++i) sd[j] += (refs[i][j] - mean[j]) * (refs[i][j] - mean[j]);
        sd[j] = std::sqrt(sd[j] / static_cast<long double>(n));
    }
    const long double floor = std::max(1e-8L, 0.01L * *std::max_element(sd.begin(), sd.end()));
    for (auto& s : sd) s = std::max(s, floor);
    long double sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        long double q = 0.0L;
        for (std::size_t j = 0; j < d; ++j) {
            const long double u = ((z[j] - mean[j]) / sd[j] - (refs[i][j] - mean[j]) / sd[j]) / h;
            q += u * u;
        }
        sum += std::exp(-q / 2.0L);
    }
    return static_cast<double>(sum / static_cast<long double>(n));
}

/// P(score_abnormal > score_normal) + 0.5 P(equal), over all pairs.
inline double mann_whitney_auc(std::span<const anatpaste::eval::LabeledScore> data) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const auto& a : data) {
        if (a.label != 1) continue;
        for (const auto& b : data) {
            if (b.label != 0) continue;
            ++pairs;
            if (a.score > b.score) wins += 1.0;
            else if (a.score == b.score) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

/// F1 of the rule "abnormal iff score > t", counted directly.
inline double f1_at(std::span<const anatpaste::eval::LabeledScore> data, double t) {
    long tp = 0, fp = 0, fn = 0;
    for (const auto& e : data) {
        const bool pos = e.score > t;
        if (pos && e.label == 1) ++tp;
        if (pos && e.label == 0) ++fp;
        if (!pos && e.label == 1) ++fn;
    }
    return 2 * tp + fp + fn == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// ---------------------------------------------------------------- fixtures

inline GrayImage random_image(anatpaste::Rng& rng, int w, int h) {
    GrayImage img(w, h);
    for (double& v : img.pixels()) v = rng.uniform();
    return img;
}

/// Random mask with clustered foreground: a few random rectangles plus noise.
inline BinaryMask random_mask(anatpaste::Rng& rng, int w, int h, double density = 0.35) {
    BinaryMask m(w, h);
    const auto blobs = rng.uniform_int(0, 6);
    for (std::int64_t b = 0; b < blobs; ++b) {
        const int x0 = static_cast<int>(rng.uniform_int(0, w - 1));
        const int y0 = static_cast<int>(rng.uniform_int(0, h - 1));
        const int x1 = std::min(w - 1, x0 + static_cast<int>(rng.uniform_int(0, w / 3)));
        const int y1 = std::min(h - 1, y0 + static_cast<int>(rng.uniform_int(0, h / 3)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) m.set(x, y, true);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (rng.uniform() < density * 0.5) m.set(x, y, !m.at(x, y));
        }
    }
    return m;
}

}  // namespace oracle
