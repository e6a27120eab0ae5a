#pragma once

#include <vector>

#include "csdetect/core.hpp"
#include "csdetect/encoder.hpp"
#include "csdetect/recovery.hpp"
#include "csdetect/sensing.hpp"

namespace csdetect {

struct CandidatePoint {
    double x = 0.0;
    double y = 0.0;
    int source_axis = 0;
    double magnitude = 0.0;  // |signed distance|
};

enum class Solver { BasisPursuit, Omp };

struct DecodeParams {
    double scheme1_threshold = 0.5;
    /// Mean-shift radius; 0 selects noise_margin / 2.
    double bandwidth = 0.0;
    /// Candidates required per cluster; 0 selects ceil(L / 2).
    int min_support = 0;
    /// Candidate filter margin; 0 selects the axis layout margin.
    double noise_margin = 0.0;
    double merge_radius = 9.0;
    int merge_min_count = 6;
    Solver solver = Solver::BasisPursuit;

    /// Fills the layout-dependent defaults and checks the result.
    DecodeParams resolved(const AxisLayout& layout) const;
};

DetectionResult decode_scheme1(const SparseLocationSignal& f_hat, const ImageGrid& grid, double threshold);

/// Each nonzero (bin r, value d) becomes origin + r * direction + d * normal.
std::vector<CandidatePoint> backproject_axis(const SparseLocationSignal& f_hat, const ObservationAxis& axis);

/// Drops candidates closer than noise_margin to their axis or outside the
/// image rectangle grown by noise_margin.
std::vector<CandidatePoint> filter_noise_candidates(const std::vector<CandidatePoint>& candidates,
                                                    const ImageGrid& grid, double noise_margin);

struct Cluster {
    Point2 mean;          // average of the member candidates
    int support = 0;      // number of member candidates
};

/// Flat-kernel mean shift. Every candidate climbs to the mean of its
/// neighbours within `bandwidth` until it moves less than 1e-3 px (at most 100
/// steps); modes closer than bandwidth / 2 are merged. Clusters are returned
/// in lexicographic (x, y) order of their first member, independent of input
/// order.
std::vector<Cluster> meanshift_cluster(const std::vector<CandidatePoint>& candidates, double bandwidth);

/// Clusters with support >= min_support as detections.
DetectionResult clusters_to_detections(const std::vector<Cluster>& clusters, int min_support);

struct Scheme2Decoding {
    DetectionResult detections;
    std::vector<Cluster> clusters;                           // before the support cut
    std::vector<std::vector<CandidatePoint>> axis_candidates;  // raw back-projections per axis
    std::vector<RecoveryResult> axis_recoveries;
    std::size_t failed_axes = 0;  // solver did not converge
};

/// Splits y_hat into per-axis blocks, recovers and back-projects each, filters
/// axis noise, clusters, and keeps clusters with enough support. Solver
/// failures on one axis leave the others untouched.
Scheme2Decoding decode_scheme2(const CompressedSignal& y_hat, const AxisLayout& layout, const SensingMatrix& phi,
                               const DecodeParams& params, const RecoveryParams& recovery, int workers = 1);

/// Pools detections from several runs and keeps locations confirmed by at
/// least merge_min_count detections within merge_radius. Greedy: the
/// unconsumed detection with the most unconsumed neighbours (ties: lowest x,
/// then y) seeds a group; groups that are large enough are averaged and
/// consumed, otherwise only the seed is consumed.
DetectionResult merge_ensemble(const std::vector<DetectionResult>& detection_sets, double merge_radius,
                               int merge_min_count);

}  // namespace csdetect
