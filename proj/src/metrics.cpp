#include "cxrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace cxrnet {

namespace {

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t k) {
  if (names.empty()) {
    for (std::size_t i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
  }
  if (names.size() != k) {
    throw std::invalid_argument("expected " + std::to_string(k) + " class names, got " +
                                std::to_string(names.size()));
  }
  return names;
}

}  // namespace

ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& predictions,
                                 const std::vector<std::size_t>& labels, std::size_t num_classes,
                                 std::vector<std::string> class_names) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("confusion_matrix: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (num_classes == 0) throw std::invalid_argument("confusion_matrix: num_classes >= 1");
  ConfusionMatrix cm;
  cm.class_names = default_names(std::move(class_names), num_classes);
  const auto k = static_cast<Eigen::Index>(num_classes);
  cm.counts = CountMatrix::Zero(k, k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw std::out_of_range("confusion_matrix: class index out of range at position " +
                              std::to_string(i));
    }
    ++cm.counts(static_cast<Eigen::Index>(labels[i]), static_cast<Eigen::Index>(predictions[i]));
  }
  return cm;
}

ConfusionMatrix confusion_matrix_from_counts(const std::vector<std::vector<std::size_t>>& rows,
                                             std::vector<std::string> class_names) {
  const std::size_t k = rows.size();
  if (k == 0) throw std::invalid_argument("confusion matrix needs at least one class");
  ConfusionMatrix cm;
  cm.class_names = default_names(std::move(class_names), k);
  cm.counts = CountMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i].size() != k) throw std::invalid_argument("confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      cm.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return cm;
}

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) {
    throw std::invalid_argument("classification_report: confusion matrix is empty");
  }
  ClassificationReport report;
  report.total = cm.total();
  report.correct = cm.correct();
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    const std::size_t tp = cm.counts(i, i);
    const std::size_t predicted = cm.counts.col(i).sum();
    const std::size_t actual = cm.counts.row(i).sum();
    ClassMetrics m;
    m.name = cm.class_names[c];
    m.support = actual;
    if (predicted > 0) {
      m.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    } else {
      m.undefined = true;
    }
    if (actual > 0) {
      m.recall = static_cast<double>(tp) / static_cast<double>(actual);
    } else {
      m.undefined = true;
    }
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    report.classes.push_back(std::move(m));
  }
  return report;
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cm.counts.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < cm.counts.cols(); ++j) row.push_back(cm.counts(i, j));
    rows.push_back(std::move(row));
  }
  return {{"class_names", cm.class_names}, {"counts", std::move(rows)}};
}

ConfusionMatrix confusion_matrix_from_json(const nlohmann::json& j) {
  return confusion_matrix_from_counts(j.at("counts").get<std::vector<std::vector<std::size_t>>>(),
                                      j.at("class_names").get<std::vector<std::string>>());
}

nlohmann::json to_json(const ClassificationReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : report.classes) {
    classes.push_back({{"name", m.name},
                       {"precision", round_to(m.precision, 4)},
                       {"recall", round_to(m.recall, 4)},
                       {"f1", round_to(m.f1, 4)},
                       {"support", m.support},
                       {"undefined", m.undefined}});
  }
  return {{"classes", std::move(classes)},
          {"accuracy", round_to(report.accuracy, 4)},
          {"correct", report.correct},
          {"total", report.total}};
}

std::string format_report(const ClassificationReport& report) {
  std::size_t name_width = 7;
  for (const auto& m : report.classes) name_width = std::max(name_width, m.name.size());
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::left << std::setw(static_cast<int>(name_width)) << "Classes" << std::right
      << std::setw(11) << "Precision" << std::setw(9) << "Recall" << std::setw(11) << "F1-score"
      << std::setw(10) << "Support" << '\n';
  for (const auto& m : report.classes) {
    out << std::left << std::setw(static_cast<int>(name_width)) << m.name << std::right
        << std::setw(11) << round_to(m.precision, 2) << std::setw(9) << round_to(m.recall, 2)
        << std::setw(11) << round_to(m.f1, 2) << std::setw(10) << m.support
        << (m.undefined ? "  (undefined: zero denominator)" : "") << '\n';
  }
  out << std::left << std::setw(static_cast<int>(name_width)) << "Accuracy" << std::right
      << std::setw(11) << round_to(report.accuracy, 2) << std::setw(30) << report.total << '\n';
  return out.str();
}

std::string format_confusion_matrix(const ConfusionMatrix& cm) {
  std::size_t width = 6;
  for (const auto& n : cm.class_names) width = std::max(width, n.size() + 1);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "true\\pred";
  for (const auto& n : cm.class_names) out << std::right << std::setw(static_cast<int>(width)) << n;
  out << '\n';
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    out << std::left << std::setw(static_cast<int>(width)) << cm.class_names[i];
    for (std::size_t j = 0; j < cm.num_classes(); ++j) {
      out << std::right << std::setw(static_cast<int>(width))
          << cm.counts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace cxrnet
