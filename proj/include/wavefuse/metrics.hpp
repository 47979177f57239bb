#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wavefuse/dataset.hpp"
#include "wavefuse/error.hpp"

namespace wavefuse {

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) throw Error(ErrorKind::length_mismatch, std::to_string(a) + " predictions vs " + std::to_string(b) + " labels");
    if (a == 0) throw Error(ErrorKind::length_mismatch, "metrics need at least one sample");
}
}  // namespace detail

inline double accuracy(std::span<const int> preds, std::span<const int> labels) {
    detail::check_lengths(preds.size(), labels.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Per-class F1; a class absent from both predictions and labels scores 0.
inline std::vector<double> per_class_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
    detail::check_lengths(preds.size(), labels.size());
    const auto k = static_cast<std::size_t>(num_classes);
    std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes || preds[i] < 0 || preds[i] >= num_classes) {
            throw Error(ErrorKind::shape, "class id out of range at sample " + std::to_string(i));
        }
        const auto p = static_cast<std::size_t>(preds[i]);
        const auto y = static_cast<std::size_t>(labels[i]);
        if (p == y) {
            ++tp[y];
        } else {
            ++fp[p];
            ++fn[y];
        }
    }
    std::vector<double> f1(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
        f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    }
    return f1;
}

inline double macro_f1(std::span<const int> preds, std::span<const int> labels, int num_classes) {
    const auto f1 = per_class_f1(preds, labels, num_classes);
    double sum = 0.0;
    for (double v : f1) sum += v;
    return sum / static_cast<double>(f1.size());
}

// Reported F1: positive-class (label 1) F1 for binary tasks, macro F1 otherwise.
inline double f1_score(std::span<const int> preds, std::span<const int> labels, int num_classes) {
    if (num_classes == 2) return per_class_f1(preds, labels, 2)[1];
    return macro_f1(preds, labels, num_classes);
}

namespace detail {
struct Overlap {
    std::size_t a = 0, b = 0, both = 0;
};

inline Overlap overlap(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size() ||
        a.pixels.size() != a.height * a.width) {
        throw Error(ErrorKind::shape, "mask shapes differ");
    }
    Overlap o;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const bool x = a.pixels[i] != 0;
        const bool y = b.pixels[i] != 0;
        o.a += x;
        o.b += y;
        o.both += x && y;
    }
    return o;
}
}  // namespace detail

// Both-empty masks count as a perfect match.
inline double dice(const BinaryMask& a, const BinaryMask& b) {
    const auto o = detail::overlap(a, b);
    if (o.a + o.b == 0) return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

inline double iou(const BinaryMask& a, const BinaryMask& b) {
    const auto o = detail::overlap(a, b);
    const std::size_t uni = o.a + o.b - o.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

}  // namespace wavefuse
