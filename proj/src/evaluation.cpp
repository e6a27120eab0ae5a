#include "csdetect/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>

namespace csdetect {

MatchReport& MatchReport::operator+=(const MatchReport& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    return *this;
}

MatchReport match_detections(const std::vector<Point2>& predictions, const std::vector<Point2>& truth, double rho) {
    if (!(rho > 0.0)) throw std::invalid_argument("matching radius must be positive");
    std::vector<Match> pairs;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            const double d = distance(predictions[i], truth[j]);
            if (d < rho) pairs.push_back({i, j, d});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Match& a, const Match& b) {
        return std::tie(a.distance, a.prediction, a.truth) < std::tie(b.distance, b.prediction, b.truth);
    });
    std::vector<bool> pred_used(predictions.size(), false), truth_used(truth.size(), false);
    MatchReport report;
    for (const auto& m : pairs) {
        if (pred_used[m.prediction] || truth_used[m.truth]) continue;
        pred_used[m.prediction] = truth_used[m.truth] = true;
        report.matches.push_back(m);
    }
    report.tp = report.matches.size();
    report.fp = predictions.size() - report.tp;
    report.fn = truth.size() - report.tp;
    return report;
}

MatchReport match_detections(const DetectionResult& predictions, const AnnotationSet& truth, double rho) {
    std::vector<Point2> pts;
    pts.reserve(predictions.size());
    for (const auto& d : predictions.points) pts.push_back({d.x, d.y});
    return match_detections(pts, truth.cells(), rho);
}

Scores prf1(std::size_t tp, std::size_t fp, std::size_t fn) {
    Scores s;
    if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

Scores prf1(const MatchReport& report) { return prf1(report.tp, report.fp, report.fn); }

Scores macro_average(const std::vector<MatchReport>& reports) {
    Scores mean;
    if (reports.empty()) return mean;
    for (const auto& r : reports) {
        const auto s = prf1(r);
        mean.precision += s.precision;
        mean.recall += s.recall;
        mean.f1 += s.f1;
    }
    const auto n = static_cast<double>(reports.size());
    mean.precision /= n;
    mean.recall /= n;
    mean.f1 /= n;
    return mean;
}

std::vector<PrPoint> pr_curve(const std::vector<double>& thresholds,
                              const std::function<MatchReport(double)>& evaluate) {
    if (thresholds.size() < 2) throw std::invalid_argument("a PR sweep needs at least two thresholds");
    std::vector<PrPoint> curve;
    curve.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto s = prf1(evaluate(t));
        curve.push_back({t, s.precision, s.recall});
    }
    std::sort(curve.begin(), curve.end(), [](const PrPoint& a, const PrPoint& b) {
        return std::tie(a.recall, a.threshold) < std::tie(b.recall, b.threshold);
    });
    return curve;
}

double pr_auc(const std::vector<PrPoint>& curve) {
    if (curve.empty()) return 0.0;
    double area = curve.front().recall * curve.front().precision;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].recall - curve[i - 1].recall) * 0.5 * (curve[i].precision + curve[i - 1].precision);
    }
    return area;
}

void write_evaluation_csv(const std::filesystem::path& path, const std::vector<ImageEvaluation>& rows, bool macro) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "image_id,tp,fp,fn,precision,recall,f1\n";
    MatchReport total;
    std::vector<MatchReport> reports;
    for (const auto& row : rows) {
        const auto s = prf1(row.report);
        out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f}\n", row.image_id, row.report.tp, row.report.fp,
                           row.report.fn, s.precision, s.recall, s.f1);
        total += row.report;
        reports.push_back(row.report);
    }
    const auto s = macro ? macro_average(reports) : prf1(total);
    out << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f}\n", macro ? "MACRO" : "ALL", total.tp, total.fp, total.fn,
                       s.precision, s.recall, s.f1);
}

void write_pr_csv(const std::filesystem::path& path, const std::vector<PrPoint>& curve) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "threshold,precision,recall\n";
    for (const auto& p : curve) out << fmt::format("{},{:.6f},{:.6f}\n", p.threshold, p.precision, p.recall);
}

}  // namespace csdetect
