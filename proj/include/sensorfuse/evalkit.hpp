#pragma once

// Detection metrics: rotated BEV / 3D IoU, class-threshold matching,
// interpolated AP and distance-binned, condition-split reports.

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sensorfuse/box.hpp"

namespace sensorfuse::evalkit {

enum class IouMode { k3D, kBev };

std::string_view mode_name(IouMode m);

struct EvalConfig {
  /// Indexed by ObjectClass.
  std::array<double, kNumClasses> iou_thresholds{0.2, 0.1};
  int recall_positions = 40;
  /// Half-open [lo, hi) BEV ranges in metres.
  std::vector<std::pair<double, double>> bins{{0.0, 30.0}, {30.0, 50.0}, {50.0, 80.0}};
  IouMode mode = IouMode::k3D;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  std::string bin_label(std::size_t bin) const;
  /// Index of the bin containing `range`, if any.
  std::optional<std::size_t> bin_of(double range) const;
};

double bev_iou(const Box3D& a, const Box3D& b);
/// BEV intersection times vertical overlap, over the union of volumes.
double iou3d(const Box3D& a, const Box3D& b);
double iou(const Box3D& a, const Box3D& b, IouMode mode);

/// Predictions and labels of one frame.
struct FrameDetections {
  std::string condition;
  std::vector<Box3D> predictions;
  std::vector<Box3D> labels;
};

/// Mean over r = k / positions (k = 1..positions) of the maximum precision
/// at recall >= r. `hits` lists predictions in descending score order.
double interpolated_ap(const std::vector<bool>& hits, std::size_t labels, int positions);

struct ApResult {
  ObjectClass cls = ObjectClass::kCar;
  std::size_t bin = 0;
  double ap = 0.0;
  std::size_t labels = 0;
};

/// AP per (class, bin) with labels; pairs without labels are absent.
/// Predictions are matched greedily in descending score order to the best
/// unmatched label of the same class, frame and bin with IoU >= threshold.
std::vector<ApResult> compute_ap(const std::vector<FrameDetections>& frames, const EvalConfig& cfg);

struct ReportRow {
  std::string condition;
  ObjectClass cls = ObjectClass::kCar;
  std::string bin;
  IouMode mode = IouMode::k3D;
  double ap = 0.0;
};

/// Rows for every condition (sorted) x class x bin x mode (3D, then BEV).
/// The mode of `cfg` is ignored; both modes are reported.
std::vector<ReportRow> report(const std::vector<FrameDetections>& frames, const EvalConfig& cfg);

/// Header "condition,class,bin,mode,ap", values with 6 decimals.
std::string to_csv(const std::vector<ReportRow>& rows);
nlohmann::json to_json(const std::vector<ReportRow>& rows);

}  // namespace sensorfuse::evalkit
