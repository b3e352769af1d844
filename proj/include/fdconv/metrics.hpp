// Copyright (c) 2026 fdconv contributors
// SPDX-License-Identifier: Apache-2.0
//
// Segmentation metrics from an accumulated class-confusion matrix: pixel
// accuracy, mean class accuracy, mean IoU and frequency-weighted IoU.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fdconv/errors.hpp"
#include "fdconv/tensor.hpp"

namespace fdconv {

struct MetricsResult {
  double pixel_acc = 0.0;
  double cls_acc = 0.0;
  double mean_iou = 0.0;
  double fw_iou = 0.0;
};

/// counts[i][j] = pixels of true class i predicted as class j. Accumulation
/// is additive across batches; per-worker matrices merge by summation.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes < 1) throw ArgumentError("ConfusionMatrix: num_classes must be >= 1");
    counts_.assign(static_cast<std::size_t>(k_) * k_, 0);
  }

  int num_classes() const { return k_; }
  std::uint64_t count(int true_cls, int pred_cls) const {
    check_class(true_cls);
    check_class(pred_cls);
    return counts_[static_cast<std::size_t>(true_cls) * k_ + pred_cls];
  }
  void add(int true_cls, int pred_cls, std::uint64_t n = 1) {
    check_class(true_cls);
    check_class(pred_cls);
    counts_[static_cast<std::size_t>(true_cls) * k_ + pred_cls] += n;
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  /// Per-pixel accumulation; pixels whose label equals ignore_label are
  /// skipped. Out-of-range class ids are an error, never silently dropped.
  void accumulate(const LabelMap& pred, const LabelMap& label, int ignore_label = 255) {
    if (pred.n != label.n || pred.h != label.h || pred.w != label.w)
      throw ShapeError("ConfusionMatrix::accumulate: pred/label shapes disagree");
    for (std::size_t i = 0; i < label.v.size(); ++i) {
      const int l = label.v[i];
      if (l == ignore_label) continue;
      const int p = pred.v[i];
      if (l >= k_) throw ArgumentError("ConfusionMatrix: label class " + std::to_string(l) + " >= k");
      if (p >= k_) throw ArgumentError("ConfusionMatrix: predicted class " + std::to_string(p) + " >= k");
      counts_[static_cast<std::size_t>(l) * k_ + p] += 1;
    }
  }

  ConfusionMatrix& merge(const ConfusionMatrix& other) {
    if (other.k_ != k_) throw ShapeError("ConfusionMatrix::merge: class counts disagree");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  /// With t_i = row sums, p_i = column sums, n_ii = diagonal:
  ///   pixel_acc = sum n_ii / sum t_i
  ///   cls_acc   = mean over {t_i > 0} of n_ii / t_i
  ///   iou_i     = n_ii / (t_i + p_i - n_ii)
  ///   mean_iou  = mean over {t_i > 0 or p_i > 0} of iou_i
  ///   fw_iou    = sum t_i * iou_i / sum t_i
  /// Classes absent from both labels and predictions are excluded from the
  /// means (0/0 guard).
  MetricsResult compute() const {
    std::vector<std::uint64_t> t(k_, 0), p(k_, 0), diag(k_, 0);
    std::uint64_t total = 0, correct = 0;
    for (int i = 0; i < k_; ++i)
      for (int j = 0; j < k_; ++j) {
        const std::uint64_t c = counts_[static_cast<std::size_t>(i) * k_ + j];
        t[i] += c;
        p[j] += c;
        if (i == j) {
          diag[i] = c;
          correct += c;
        }
        total += c;
      }
    if (total == 0) throw EvalError("ConfusionMatrix::compute: empty matrix");

    MetricsResult r;
    r.pixel_acc = static_cast<double>(correct) / static_cast<double>(total);

    int acc_classes = 0, iou_classes = 0;
    double acc_sum = 0.0, iou_sum = 0.0, fw_sum = 0.0;
    for (int i = 0; i < k_; ++i) {
      if (t[i] > 0) {
        acc_sum += static_cast<double>(diag[i]) / static_cast<double>(t[i]);
        ++acc_classes;
      }
      if (t[i] > 0 || p[i] > 0) {
        const double denom = static_cast<double>(t[i] + p[i] - diag[i]);
        const double iou = static_cast<double>(diag[i]) / denom;
        iou_sum += iou;
        ++iou_classes;
        fw_sum += static_cast<double>(t[i]) * iou;
      }
    }
    r.cls_acc = acc_classes > 0 ? acc_sum / acc_classes : 0.0;
    r.mean_iou = iou_classes > 0 ? iou_sum / iou_classes : 0.0;
    r.fw_iou = fw_sum / static_cast<double>(total);
    return r;
  }

 private:
  void check_class(int c) const {
    if (c < 0 || c >= k_) throw ArgumentError("ConfusionMatrix: class id out of range");
  }

  int k_;
  std::vector<std::uint64_t> counts_;
};

/// Argmax over the class dimension of logits.
inline LabelMap argmax_predictions(const Tensor4& logits) {
  const int N = logits.n(), K = logits.c(), H = logits.h(), W = logits.w();
  LabelMap pred(N, H, W, 0);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int b = 0; b < N; ++b) {
    const double* base = logits.plane(b, 0);
    for (std::size_t off = 0; off < plane; ++off) {
      int best = 0;
      double bv = base[off];
      for (int k = 1; k < K; ++k) {
        const double v = base[off + k * plane];
        if (v > bv) {
          bv = v;
          best = k;
        }
      }
      pred.v[static_cast<std::size_t>(b) * plane + off] = static_cast<std::uint8_t>(best);
    }
  }
  return pred;
}

}  // namespace fdconv
