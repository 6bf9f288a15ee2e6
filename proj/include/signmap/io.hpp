#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "signmap/camera.hpp"
#include "signmap/errors.hpp"
#include "signmap/metrics.hpp"
#include "signmap/pipeline.hpp"
#include "signmap/triangulate.hpp"

namespace signmap::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

// Writes to a sibling temporary file, then renames over the target.
inline void atomic_write(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), std::streamsize(contents.size()));
    out.flush();
    if (!out) throw Error("write to " + tmp.string() + " failed");
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Minimal CSV reader for the fixed, quote-free schemas used here.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::vector<std::string> expected_header)
      : path_(path.string()), header_(std::move(expected_header)) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      auto fields = split(line);
      if (!saw_header) {
        if (fields != header_) {
          throw SchemaError(where(line_no) + "expected header '" + join(header_) + "'");
        }
        saw_header = true;
        continue;
      }
      if (fields.size() != header_.size()) {
        throw SchemaError(where(line_no) + "expected " + std::to_string(header_.size()) +
                          " fields, got " + std::to_string(fields.size()));
      }
      rows_.push_back({line_no, std::move(fields)});
    }
    if (!saw_header) throw SchemaError(path_ + ": empty file, missing header");
  }

  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };

  const std::vector<Row>& rows() const { return rows_; }

  double number(const Row& r, std::size_t col) const {
    const std::string& s = r.fields[col];
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw SchemaError(where(r.line) + "column '" + header_[col] + "' is not a finite number: '" +
                        s + "'");
    }
    return v;
  }

  std::int64_t integer(const Row& r, std::size_t col) const {
    const std::string& s = r.fields[col];
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      throw SchemaError(where(r.line) + "column '" + header_[col] + "' is not an integer: '" +
                        s + "'");
    }
    return v;
  }

  std::string where(std::size_t line) const { return path_ + ":" + std::to_string(line) + ": "; }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
  }
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      out.push_back(trim(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }
  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  }

  std::string path_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

// ---- calibration ---------------------------------------------------------

inline json calibration_to_json(const Calibration& c) {
  const auto& k = c.intrinsics;
  return json{{"fx", k.fx()},         {"fy", k.fy()},
              {"cx", k.cx()},         {"cy", k.cy()},
              {"width", k.width()},   {"height", k.height()},
              {"lambda1", c.distortion.lambda1()}, {"lambda2", c.distortion.lambda2()}};
}

inline Calibration calibration_from_json(const json& j, const std::string& source) {
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number()) {
      throw SchemaError(source + ": calibration key '" + key + "' missing or not a number");
    }
    return j.at(key).get<double>();
  };
  auto whole = [&](const char* key) {
    const double v = num(key);
    if (v != std::floor(v)) throw SchemaError(source + ": '" + key + "' must be an integer");
    return int(v);
  };
  try {
    return Calibration(CameraIntrinsics(num("fx"), num("fy"), num("cx"), num("cy"),
                                        whole("width"), whole("height")),
                       num("lambda1"), num("lambda2"));
  } catch (const InvalidArgument& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

inline Calibration read_calibration(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw SchemaError(path.string() + ": calibration must be a JSON object");
  return calibration_from_json(j, path.string());
}

inline void write_calibration(const fs::path& path, const Calibration& c) {
  atomic_write(path, calibration_to_json(c).dump(2) + "\n");
}

// ---- GPS -----------------------------------------------------------------

inline std::vector<GpsFix> read_gps(const fs::path& path) {
  CsvReader csv(path, {"frame_id", "lat", "lon", "alt"});
  std::vector<GpsFix> out;
  for (const auto& r : csv.rows()) {
    GpsFix g{csv.integer(r, 0), {csv.number(r, 1), csv.number(r, 2), csv.number(r, 3)}};
    if (!g.geo.valid()) throw SchemaError(csv.where(r.line) + "latitude/longitude out of range");
    if (!out.empty() && g.frame_id <= out.back().frame_id) {
      throw SchemaError(csv.where(r.line) + "frame_id must be strictly increasing");
    }
    out.push_back(g);
  }
  return out;
}

inline void write_gps(const fs::path& path, std::span<const GpsFix> gps) {
  std::string s = "frame_id,lat,lon,alt\n";
  for (const auto& g : gps) {
    s += std::to_string(g.frame_id) + "," + format_double(g.geo.lat) + "," +
         format_double(g.geo.lon) + "," + format_double(g.geo.alt) + "\n";
  }
  atomic_write(path, s);
}

// ---- poses ---------------------------------------------------------------

inline std::vector<FramePose> read_poses(const fs::path& path) {
  CsvReader csv(path, {"frame_id", "tx", "ty", "tz", "qx", "qy", "qz", "qw"});
  std::vector<FramePose> out;
  for (const auto& r : csv.rows()) {
    Eigen::Quaterniond q(csv.number(r, 7), csv.number(r, 4), csv.number(r, 5), csv.number(r, 6));
    const double norm = q.norm();
    if (!(norm > 1e-9)) throw SchemaError(csv.where(r.line) + "zero quaternion");
    q.coeffs() /= norm;
    FramePose p{csv.integer(r, 0), q.toRotationMatrix(),
                Vec3(csv.number(r, 1), csv.number(r, 2), csv.number(r, 3))};
    if (!out.empty() && p.frame_id <= out.back().frame_id) {
      throw SchemaError(csv.where(r.line) + "frame_id must be strictly increasing");
    }
    out.push_back(p);
  }
  return out;
}

inline void write_poses(const fs::path& path, std::span<const FramePose> poses) {
  std::string s = "frame_id,tx,ty,tz,qx,qy,qz,qw\n";
  for (const auto& p : poses) {
    const Eigen::Quaterniond q(p.rotation);
    s += std::to_string(p.frame_id);
    for (double v : {p.position.x(), p.position.y(), p.position.z(), q.x(), q.y(), q.z(), q.w()}) {
      s += "," + format_double(v);
    }
    s += "\n";
  }
  atomic_write(path, s);
}

// ---- detections ----------------------------------------------------------

inline std::vector<SignObservation> read_detections(const fs::path& path) {
  CsvReader csv(path, {"frame_id", "sign_id", "class", "u", "v"});
  std::vector<SignObservation> out;
  std::map<std::pair<SignId, FrameId>, std::size_t> seen;
  for (const auto& r : csv.rows()) {
    SignObservation o{csv.integer(r, 1), csv.integer(r, 0),
                      {csv.number(r, 3), csv.number(r, 4)}, r.fields[2]};
    if (!seen.emplace(std::make_pair(o.sign_id, o.frame_id), r.line).second) {
      throw SchemaError(csv.where(r.line) + "sign " + std::to_string(o.sign_id) +
                        " detected twice in frame " + std::to_string(o.frame_id));
    }
    out.push_back(std::move(o));
  }
  return out;
}

// Observations outside the image are a schema error once the image size is
// known.
inline void check_detections_in_image(std::span<const SignObservation> detections,
                                      const CameraIntrinsics& k, const std::string& source) {
  for (const auto& d : detections) {
    if (!k.contains(d.pixel)) {
      throw SchemaError(source + ": detection of sign " + std::to_string(d.sign_id) +
                        " in frame " + std::to_string(d.frame_id) + " lies outside the image");
    }
  }
}

inline void write_detections(const fs::path& path, std::span<const SignObservation> detections) {
  std::string s = "frame_id,sign_id,class,u,v\n";
  for (const auto& d : detections) {
    s += std::to_string(d.frame_id) + "," + std::to_string(d.sign_id) + "," + d.class_label +
         "," + format_double(d.pixel.u) + "," + format_double(d.pixel.v) + "\n";
  }
  atomic_write(path, s);
}

// ---- ground-truth signs --------------------------------------------------

inline std::vector<SignGroundTruth> read_gt_signs(const fs::path& path) {
  CsvReader csv(path, {"sign_id", "class", "x", "y", "z"});
  std::vector<SignGroundTruth> out;
  for (const auto& r : csv.rows()) {
    out.push_back({csv.integer(r, 0), r.fields[1],
                   Vec3(csv.number(r, 2), csv.number(r, 3), csv.number(r, 4)), {}});
  }
  return out;
}

inline void write_gt_signs(const fs::path& path, std::span<const SignGroundTruth> signs) {
  std::string s = "sign_id,class,x,y,z\n";
  for (const auto& g : signs) {
    s += std::to_string(g.sign_id) + "," + g.class_label + "," +
         format_double(g.abs_position.x()) + "," + format_double(g.abs_position.y()) + "," +
         format_double(g.abs_position.z()) + "\n";
  }
  atomic_write(path, s);
}

// ---- sign map ------------------------------------------------------------

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json map_record(const TrackResult& r) {
  if (const auto* s = std::get_if<TriangulatedSign>(&r)) {
    json rel = json::array();
    for (const auto& [f, p] : s->rel_positions) rel.push_back({{"frame_id", f}, {"xyz", vec_json(p)}});
    return json{{"sign_id", s->sign_id},
                {"class", s->class_label},
                {"lat", s->geo.lat},
                {"lon", s->geo.lon},
                {"xyz", vec_json(s->abs_position)},
                {"residual_px", s->residual_px},
                {"mode", to_string(s->mode)},
                {"frames", s->frames},
                {"rel", rel}};
  }
  const auto& f = std::get<TriangulationFailure>(r);
  return json{{"sign_id", f.sign_id}, {"class", f.class_label},
              {"mode", to_string(f.mode)}, {"frames", f.frames},
              {"failure", to_string(f.reason)}, {"message", f.message}};
}

inline std::string map_json(std::span<const TrackResult> results) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(map_record(r));
  return arr.dump(2) + "\n";
}

inline void write_map(const fs::path& path, std::span<const TrackResult> results) {
  atomic_write(path, map_json(results));
}

struct MapFile {
  std::vector<TriangulatedSign> signs;
  std::vector<TriangulationFailure> failures;
};

inline MapFile read_map(const fs::path& path) {
  json arr;
  try {
    arr = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw SchemaError(path.string() + ": map must be a JSON array");
  MapFile out;
  std::size_t index = 0;
  try {
    for (const auto& rec : arr) {
      if (rec.contains("failure")) {
        TriangulationFailure f;
        f.sign_id = rec.at("sign_id").get<SignId>();
        f.class_label = rec.at("class").get<std::string>();
        f.mode = parse_mode(rec.at("mode").get<std::string>());
        f.frames = rec.at("frames").get<std::vector<FrameId>>();
        f.message = rec.value("message", "");
        out.failures.push_back(std::move(f));
      } else {
        TriangulatedSign s;
        s.sign_id = rec.at("sign_id").get<SignId>();
        s.class_label = rec.at("class").get<std::string>();
        s.geo.lat = rec.at("lat").get<double>();
        s.geo.lon = rec.at("lon").get<double>();
        const auto xyz = rec.at("xyz").get<std::vector<double>>();
        if (xyz.size() != 3) throw SchemaError("xyz must have 3 entries");
        s.abs_position = Vec3(xyz[0], xyz[1], xyz[2]);
        s.geo.alt = xyz[2];
        s.residual_px = rec.at("residual_px").get<double>();
        s.mode = parse_mode(rec.at("mode").get<std::string>());
        s.frames = rec.at("frames").get<std::vector<FrameId>>();
        if (rec.contains("rel")) {
          for (const auto& e : rec.at("rel")) {
            const auto v = e.at("xyz").get<std::vector<double>>();
            if (v.size() != 3) throw SchemaError("rel xyz must have 3 entries");
            s.rel_positions[e.at("frame_id").get<FrameId>()] = Vec3(v[0], v[1], v[2]);
          }
        }
        out.signs.push_back(std::move(s));
      }
      ++index;
    }
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw SchemaError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": record " + std::to_string(index) + ": " + e.what());
  }
  return out;
}

}  // namespace signmap::io
