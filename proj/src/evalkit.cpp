#include "sensorfuse/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "sensorfuse/errors.hpp"
#include "sensorfuse/iou.hpp"

namespace sensorfuse::evalkit {

std::string_view mode_name(IouMode m) { return m == IouMode::k3D ? "3D" : "BEV"; }

void EvalConfig::validate() const {
  for (int c = 0; c < kNumClasses; ++c) {
    const double t = iou_thresholds[c];
    if (!(t > 0.0 && t < 1.0)) {
      throw ValidationError(std::string("eval.iou_") + std::string(class_name(static_cast<ObjectClass>(c))),
                            "threshold must lie in (0, 1)");
    }
  }
  if (recall_positions < 1) throw ValidationError("eval.recall_positions", "must be >= 1");
  if (bins.empty()) throw ValidationError("eval.bins", "at least one bin is required");
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (!(bins[i].first >= 0.0 && bins[i].first < bins[i].second)) {
      throw ValidationError("eval.bins", "each bin needs 0 <= lo < hi");
    }
    if (i > 0 && bins[i].first < bins[i - 1].second) {
      throw ValidationError("eval.bins", "bins must be ascending and non-overlapping");
    }
  }
}

std::string EvalConfig::bin_label(std::size_t bin) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g-%g", bins[bin].first, bins[bin].second);
  return buf;
}

std::optional<std::size_t> EvalConfig::bin_of(double range) const {
  for (std::size_t i = 0; i < bins.size(); ++i) {
    if (range >= bins[i].first && range < bins[i].second) return i;
  }
  return std::nullopt;
}

double bev_iou(const Box3D& a, const Box3D& b) {
  return iou::bev_iou(iou::rect_of(a), iou::rect_of(b));
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double inter_bev =
      iou::intersection_area(iou::corners(iou::rect_of(a)), iou::corners(iou::rect_of(b)));
  const double lo = std::max(a.y - a.h / 2, b.y - b.h / 2);
  const double hi = std::min(a.y + a.h / 2, b.y + b.h / 2);
  const double inter = inter_bev * std::max(0.0, hi - lo);
  const double uni = a.w * a.l * a.h + b.w * b.l * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const Box3D& a, const Box3D& b, IouMode mode) {
  return mode == IouMode::k3D ? iou3d(a, b) : bev_iou(a, b);
}

double interpolated_ap(const std::vector<bool>& hits, std::size_t labels, int positions) {
  if (labels == 0) throw ContractViolation("interpolated_ap: no labels");
  std::vector<double> precision(hits.size()), recall(hits.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(labels);
  }
  // Running maximum of precision from the right.
  for (std::size_t i = hits.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  std::size_t j = 0;
  for (int k = 1; k <= positions; ++k) {
    const double r = static_cast<double>(k) / positions;
    while (j < recall.size() && recall[j] < r - 1e-12) ++j;
    if (j < recall.size()) sum += precision[j];
  }
  return sum / positions;
}

std::vector<ApResult> compute_ap(const std::vector<FrameDetections>& frames, const EvalConfig& cfg) {
  cfg.validate();
  struct Scored {
    double score;
    std::size_t frame;
    std::size_t index;
  };
  std::vector<ApResult> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = static_cast<ObjectClass>(c);
    for (std::size_t bin = 0; bin < cfg.bins.size(); ++bin) {
      std::size_t n_labels = 0;
      std::vector<Scored> preds;
      for (std::size_t f = 0; f < frames.size(); ++f) {
        for (const auto& l : frames[f].labels)
          if (l.cls == cls && cfg.bin_of(l.bev_range()) == bin) ++n_labels;
        const auto& ps = frames[f].predictions;
        for (std::size_t i = 0; i < ps.size(); ++i)
          if (ps[i].cls == cls && cfg.bin_of(ps[i].bev_range()) == bin) preds.push_back({ps[i].score, f, i});
      }
      if (n_labels == 0) continue;
      std::stable_sort(preds.begin(), preds.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.index < b.index;
      });
      std::set<std::pair<std::size_t, std::size_t>> used;
      std::vector<bool> hits;
      hits.reserve(preds.size());
      for (const auto& p : preds) {
        const Box3D& pb = frames[p.frame].predictions[p.index];
        const auto& labels = frames[p.frame].labels;
        double best = -1.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < labels.size(); ++j) {
          if (labels[j].cls != cls || cfg.bin_of(labels[j].bev_range()) != bin) continue;
          if (used.count({p.frame, j})) continue;
          const double v = iou(pb, labels[j], cfg.mode);
          if (v >= cfg.iou_thresholds[c] && v > best) {
            best = v;
            best_j = j;
          }
        }
        if (best >= 0.0) used.insert({p.frame, best_j});
        hits.push_back(best >= 0.0);
      }
      out.push_back({cls, bin, interpolated_ap(hits, n_labels, cfg.recall_positions), n_labels});
    }
  }
  return out;
}

std::vector<ReportRow> report(const std::vector<FrameDetections>& frames, const EvalConfig& cfg) {
  std::map<std::string, std::vector<FrameDetections>> groups;
  for (const auto& f : frames) groups[f.condition].push_back(f);
  std::vector<ReportRow> rows;
  for (auto& [condition, group] : groups) {
    // Frame order inside a group follows a canonical sort so the report does
    // not depend on the order scenes were supplied in.
    std::sort(group.begin(), group.end(), [](const FrameDetections& a, const FrameDetections& b) {
      const auto key = [](const FrameDetections& f) {
        std::vector<double> k;
        for (const auto* list : {&f.labels, &f.predictions})
          for (const auto& x : *list) k.insert(k.end(), {x.x, x.y, x.z, x.w, x.l, x.h, x.yaw, x.score,
                                                           static_cast<double>(x.cls)});
        return k;
      };
      return key(a) < key(b);
    });
    std::map<std::tuple<int, std::size_t, int>, double> ap;
    for (IouMode mode : {IouMode::k3D, IouMode::kBev}) {
      EvalConfig c = cfg;
      c.mode = mode;
      for (const auto& r : compute_ap(group, c)) {
        ap[{static_cast<int>(r.cls), r.bin, static_cast<int>(mode)}] = r.ap;
      }
    }
    for (int cls = 0; cls < kNumClasses; ++cls) {
      for (std::size_t bin = 0; bin < cfg.bins.size(); ++bin) {
        for (IouMode mode : {IouMode::k3D, IouMode::kBev}) {
          const auto it = ap.find({cls, bin, static_cast<int>(mode)});
          if (it == ap.end()) continue;
          rows.push_back({condition, static_cast<ObjectClass>(cls), cfg.bin_label(bin), mode, it->second});
        }
      }
    }
  }
  return rows;
}

std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out = "condition,class,bin,mode,ap\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%s,%s,%s,%.6f\n", r.condition.c_str(),
                  std::string(class_name(r.cls)).c_str(), r.bin.c_str(),
                  std::string(mode_name(r.mode)).c_str(), r.ap);
    out += line;
  }
  return out;
}

nlohmann::json to_json(const std::vector<ReportRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    char ap[32];
    std::snprintf(ap, sizeof ap, "%.6f", r.ap);
    arr.push_back({{"condition", r.condition},
                   {"class", std::string(class_name(r.cls))},
                   {"bin", r.bin},
                   {"mode", std::string(mode_name(r.mode))},
                   {"ap", std::stod(ap)}});
  }
  return arr;
}

}  // namespace sensorfuse::evalkit
