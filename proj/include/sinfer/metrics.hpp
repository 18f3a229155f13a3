#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "sinfer/errors.hpp"

namespace sinfer {

// Share of positions where the two prediction lists agree.
inline double matching_rate(const std::vector<size_t>& a, const std::vector<size_t>& b) {
  if (a.size() != b.size()) throw ShapeError("prediction lists differ in length");
  if (a.empty()) throw ShapeError("cannot compare empty prediction lists");
  size_t same = 0;
  for (size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

// Counts of (true label, predicted label) pairs; row = true, column =
// predicted.
struct ConfusionMatrix {
  size_t classes = 8;
  std::vector<size_t> counts;

  explicit ConfusionMatrix(size_t n = 8) : classes(n), counts(n * n, 0) {}

  size_t& at(size_t truth, size_t pred) { return counts[truth * classes + pred]; }
  size_t at(size_t truth, size_t pred) const { return counts[truth * classes + pred]; }

  size_t total() const {
    size_t s = 0;
    for (size_t c : counts) s += c;
    return s;
  }
  size_t row_total(size_t truth) const {
    size_t s = 0;
    for (size_t p = 0; p < classes; ++p) s += at(truth, p);
    return s;
  }
  size_t diagonal() const {
    size_t s = 0;
    for (size_t c = 0; c < classes; ++c) s += at(c, c);
    return s;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(const std::vector<size_t>& pred,
                                 const std::vector<size_t>& truth, size_t classes = 8) {
  if (pred.size() != truth.size()) throw ShapeError("prediction lists differ in length");
  ConfusionMatrix cm(classes);
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= classes || truth[i] >= classes)
      throw ShapeError("label out of range at item " + std::to_string(i));
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

// Two-class view: one designated benign class against the union of the
// rest.  A rate whose denominator is empty is reported as undefined, not
// as zero.
struct BinaryMetrics {
  double accuracy = 0;
  double tpr = 0;
  double fpr = 0;
  bool tpr_defined = false;
  bool fpr_defined = false;

  bool operator==(const BinaryMetrics&) const = default;
};

inline BinaryMetrics binary_metrics(const ConfusionMatrix& cm, size_t normal_class = 0) {
  if (normal_class >= cm.classes) throw ShapeError("benign class out of range");
  size_t total = cm.total();
  if (total == 0) throw ShapeError("empty confusion matrix");

  size_t attacks = 0, detected = 0;
  for (size_t t = 0; t < cm.classes; ++t) {
    if (t == normal_class) continue;
    size_t row = cm.row_total(t);
    attacks += row;
    detected += row - cm.at(t, normal_class);
  }
  size_t normals = cm.row_total(normal_class);
  size_t flagged = normals - cm.at(normal_class, normal_class);

  BinaryMetrics m;
  m.accuracy = static_cast<double>(detected + normals - flagged) / static_cast<double>(total);
  if (attacks > 0) {
    m.tpr_defined = true;
    m.tpr = static_cast<double>(detected) / static_cast<double>(attacks);
  }
  if (normals > 0) {
    m.fpr_defined = true;
    m.fpr = static_cast<double>(flagged) / static_cast<double>(normals);
  }
  return m;
}

inline std::string percent_or_na(double value, bool defined) {
  if (!defined) return "n/a";
  char buf[32];
  snprintf(buf, sizeof buf, "%.1f%%", value * 100.0);
  return buf;
}

}  // namespace sinfer
