#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace cxrnet {

using CountMatrix = Eigen::Matrix<std::size_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::vector<std::string> class_names;
  CountMatrix counts;

  std::size_t num_classes() const { return static_cast<std::size_t>(counts.rows()); }
  std::size_t total() const { return counts.sum(); }
  std::size_t correct() const { return counts.trace(); }
  std::size_t support(std::size_t c) const { return counts.row(static_cast<Eigen::Index>(c)).sum(); }
};

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& predictions,
                                 const std::vector<std::size_t>& labels, std::size_t num_classes,
                                 std::vector<std::string> class_names = {});

/// Builds a matrix directly from K x K row-major counts.
ConfusionMatrix confusion_matrix_from_counts(const std::vector<std::vector<std::size_t>>& rows,
                                             std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  /// Set when a zero denominator forced precision or recall to 0.
  bool undefined = false;
};

struct ClassificationReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
};

// Per class c: TP = counts(c, c), FP = column sum - TP, FN = row sum - TP;
// precision = TP / (TP + FP), recall = TP / (TP + FN),
// F1 = 2 P R / (P + R). Accuracy is trace / total.
ClassificationReport classification_report(const ConfusionMatrix& cm);

/// Rounds half away from zero to `decimals` places.
double round_to(double value, int decimals);

nlohmann::json to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_matrix_from_json(const nlohmann::json& j);
/// Four-decimal machine-readable form.
nlohmann::json to_json(const ClassificationReport& report);
/// Two-decimal aligned text table (class, precision, recall, F1, support)
/// followed by the overall accuracy.
std::string format_report(const ClassificationReport& report);
std::string format_confusion_matrix(const ConfusionMatrix& cm);

}  // namespace cxrnet
