#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "csdetect/core.hpp"

namespace csdetect {

struct Match {
    std::size_t prediction;
    std::size_t truth;
    double distance;
};

struct MatchReport {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::vector<Match> matches;

    MatchReport& operator+=(const MatchReport& other);
};

/// One-to-one greedy matching: candidate pairs closer than rho are taken in
/// ascending distance order (ties by prediction, then truth index) whenever
/// both ends are still free.
MatchReport match_detections(const DetectionResult& predictions, const AnnotationSet& truth, double rho);
MatchReport match_detections(const std::vector<Point2>& predictions, const std::vector<Point2>& truth, double rho);

struct Scores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision, recall and F1; any empty denominator yields 0.
Scores prf1(const MatchReport& report);
Scores prf1(std::size_t tp, std::size_t fp, std::size_t fn);

/// Mean of the per-image scores.
Scores macro_average(const std::vector<MatchReport>& reports);

struct PrPoint {
    double threshold;
    double precision;
    double recall;
};

/// Evaluates `evaluate(threshold)` at each threshold and returns the points
/// sorted by recall (ties by threshold).
std::vector<PrPoint> pr_curve(const std::vector<double>& thresholds,
                              const std::function<MatchReport(double)>& evaluate);

/// Area under a recall-sorted PR curve by the trapezoid rule, anchored at
/// recall 0 with the first point's precision.
double pr_auc(const std::vector<PrPoint>& curve);

struct ImageEvaluation {
    std::string image_id;
    MatchReport report;
};

/// CSV `image_id,tp,fp,fn,precision,recall,f1` with a trailing aggregate row
/// (summed counts, or mean scores when `macro` is set).
void write_evaluation_csv(const std::filesystem::path& path, const std::vector<ImageEvaluation>& rows,
                          bool macro = false);
void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& curve);

}  // namespace csdetect
