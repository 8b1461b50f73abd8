#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "glasskit/error.hpp"
#include "glasskit/metrics.hpp"

namespace glasskit {

/// Flat "key: value" lines with keys acc, iou, fbeta, mae, ber, n_images.
inline std::string format_report_flat(const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "acc: %.6f\niou: %.6f\nfbeta: %.6f\nmae: %.6f\nber: %.4f\nn_images: %zu\n", r.acc,
                r.iou, r.f_beta, r.mae, r.ber, r.image_count);
  return buf;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j{{"acc", r.acc}, {"iou", r.iou}, {"fbeta", r.f_beta}, {"mae", r.mae}, {"ber", r.ber},
                   {"n_images", r.image_count}};
  auto rows = nlohmann::json::array();
  for (const auto& row : r.per_image)
    rows.push_back({{"name", row.name}, {"acc", row.acc}, {"iou", row.iou}, {"fbeta", row.f_beta},
                    {"mae", row.mae}, {"ber", row.ber}});
  j["per_image"] = rows;
  return j;
}

/// Human-readable table.
inline void print_report_table(std::ostream& os, const MetricsReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%-8s %-8s %-8s %-8s %-8s %s\n%-8.3f %-8.3f %-8.3f %-8.3f %-8.2f %zu\n", "acc", "IoU", "F_beta",
                "MAE", "BER", "images", r.acc, r.iou, r.f_beta, r.mae, r.ber, r.image_count);
  os << buf;
}

/// JSON when the path ends in ".json", flat key/value text otherwise.
inline void write_report(const std::string& path, const MetricsReport& r) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
    os << report_to_json(r).dump(2) << '\n';
  else
    os << format_report_flat(r);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace glasskit
