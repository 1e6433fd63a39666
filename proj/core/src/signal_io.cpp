#include "hloc/signal_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "hloc/error.hpp"

namespace hloc {
namespace {

using nlohmann::json;

std::string step_label(std::int64_t step_id) {
  return "step_id " + std::to_string(step_id);
}

json vec_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json pose_to_json(const Pose& p) {
  const auto& q = p.rotation;
  return {{"t", vec_to_json(p.translation)},
          {"q", json::array({q.w(), q.x(), q.y(), q.z()})}};
}

double number_at(const json& arr, std::size_t i) {
  const json& v = arr.at(i);
  if (!v.is_number()) throw std::invalid_argument("expected a number");
  return v.get<double>();
}

Eigen::Vector3d vec_from_json(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) {
    throw std::invalid_argument(std::string(key) + " must be an array of 3 numbers");
  }
  return {number_at(j, 0), number_at(j, 1), number_at(j, 2)};
}

Pose pose_from_json(const json& j, const char* key) {
  if (!j.is_object() || !j.contains("t") || !j.contains("q")) {
    throw std::invalid_argument(std::string(key) + " must be {\"t\":[..],\"q\":[..]}");
  }
  Pose p;
  p.translation = vec_from_json(j.at("t"), key);
  const json& q = j.at("q");
  if (!q.is_array() || q.size() != 4) {
    throw std::invalid_argument(std::string(key) + ".q must have 4 numbers");
  }
  p.rotation = Eigen::Quaterniond(number_at(q, 0), number_at(q, 1),
                                  number_at(q, 2), number_at(q, 3));
  return p;
}

json event_to_json(const StepEvent& e) {
  json signal = json::array();
  const auto& s = e.signal.samples;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.cols(); ++c) signal.push_back(s(r, c));
  }
  json j = {{"step_id", e.step_id},
            {"timestamp", e.timestamp},
            {"foot_id", e.foot_id},
            {"signal", std::move(signal)},
            {"foothold_base", vec_to_json(e.foothold_base)},
            {"odom_pose", pose_to_json(e.odom_pose)}};
  if (e.truth_pose) j["truth_pose"] = pose_to_json(*e.truth_pose);
  if (e.foothold_world_truth) {
    j["foothold_world_truth"] = vec_to_json(*e.foothold_world_truth);
  }
  return j;
}

StepEvent event_from_json(const json& j) {
  static const char* kRequired[] = {"step_id",       "timestamp", "foot_id",
                                    "signal",        "foothold_base",
                                    "odom_pose"};
  if (!j.is_object()) throw std::invalid_argument("step record must be an object");
  for (const char* key : kRequired) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing key ") + key);
  }
  StepEvent e;
  e.step_id = j.at("step_id").get<std::int64_t>();
  e.timestamp = j.at("timestamp").get<double>();
  e.foot_id = j.at("foot_id").get<int>();

  const json& signal = j.at("signal");
  if (!signal.is_array()) throw std::invalid_argument("signal must be an array");
  const std::size_t expected = std::size_t{kSignalLength} * kSignalChannels;
  if (signal.size() != expected) {
    throw InvariantError(step_label(e.step_id) + ": signal has " +
                         std::to_string(signal.size()) + " values, expected " +
                         std::to_string(expected) + " (160 rows x 6 channels)");
  }
  e.signal.samples.resize(kSignalLength, kSignalChannels);
  for (int r = 0; r < kSignalLength; ++r) {
    for (int c = 0; c < kSignalChannels; ++c) {
      e.signal.samples(r, c) = number_at(signal, std::size_t(r) * kSignalChannels + c);
    }
  }
  e.foothold_base = vec_from_json(j.at("foothold_base"), "foothold_base");
  e.odom_pose = pose_from_json(j.at("odom_pose"), "odom_pose");
  if (j.contains("truth_pose") && !j.at("truth_pose").is_null()) {
    e.truth_pose = pose_from_json(j.at("truth_pose"), "truth_pose");
  }
  if (j.contains("foothold_world_truth") && !j.at("foothold_world_truth").is_null()) {
    e.foothold_world_truth =
        vec_from_json(j.at("foothold_world_truth"), "foothold_world_truth");
  }
  return e;
}

void validate_pose(const Pose& p, std::int64_t step_id, const char* name) {
  if (!is_finite(p)) {
    throw InvariantError(step_label(step_id) + ": " + name + " is not finite");
  }
  if (!is_unit_quaternion(p.rotation)) {
    throw InvariantError(step_label(step_id) + ": " + name +
                         " quaternion is not unit norm");
  }
}

}  // namespace

void validate_signal(const HapticSignal& signal, int rows, int cols) {
  if (signal.rows() != rows || signal.cols() != cols) {
    throw InvariantError("signal shape " + std::to_string(signal.rows()) + "x" +
                         std::to_string(signal.cols()) + ", expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (!signal.samples.allFinite()) throw InvariantError("signal has non-finite values");
}

bool StepEvent::operator==(const StepEvent& rhs) const {
  return step_id == rhs.step_id && timestamp == rhs.timestamp &&
         foot_id == rhs.foot_id && signal == rhs.signal &&
         foothold_base == rhs.foothold_base && odom_pose == rhs.odom_pose &&
         truth_pose == rhs.truth_pose &&
         foothold_world_truth == rhs.foothold_world_truth;
}

void validate_trial(const Trial& trial) {
  if (trial.events.empty()) throw InvariantError("empty trial: no step events");
  const StepEvent* prev = nullptr;
  for (const StepEvent& e : trial.events) {
    try {
      validate_signal(e.signal);
    } catch (const InvariantError& err) {
      throw InvariantError(step_label(e.step_id) + ": " + err.what());
    }
    if (e.foot_id < 0 || e.foot_id > 3) {
      throw InvariantError(step_label(e.step_id) + ": foot_id must be in 0..3");
    }
    if (!std::isfinite(e.timestamp) || !e.foothold_base.allFinite()) {
      throw InvariantError(step_label(e.step_id) + ": non-finite field");
    }
    validate_pose(e.odom_pose, e.step_id, "odom_pose");
    if (e.truth_pose) {
      validate_pose(*e.truth_pose, e.step_id, "truth_pose");
      if (!e.foothold_world_truth) {
        throw InvariantError(step_label(e.step_id) +
                             ": truth_pose present without foothold_world_truth");
      }
    }
    if (e.foothold_world_truth && !e.foothold_world_truth->allFinite()) {
      throw InvariantError(step_label(e.step_id) + ": foothold_world_truth not finite");
    }
    if (prev && (e.step_id <= prev->step_id || e.timestamp <= prev->timestamp)) {
      throw InvariantError(step_label(e.step_id) +
                           ": step_id and timestamp must strictly increase");
    }
    prev = &e;
  }
}

Trial read_trial(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial file " + path.string());

  Trial trial;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& err) {
      throw ParseError(err.what(), line_no);
    }
    try {
      if (!have_header) {
        if (!j.is_object() || !j.contains("trial_id")) {
          throw std::invalid_argument("first record must be the trial header");
        }
        trial.trial_id = j.at("trial_id").get<std::string>();
        if (j.contains("metadata")) {
          for (const auto& [k, v] : j.at("metadata").items()) {
            trial.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
          }
        }
        have_header = true;
      } else {
        trial.events.push_back(event_from_json(j));
      }
    } catch (const InvariantError&) {
      throw;
    } catch (const std::exception& err) {
      throw ParseError(err.what(), line_no);
    }
  }
  if (!have_header || trial.events.empty()) {
    throw InvariantError("empty trial: " + path.string() + " has no step events");
  }
  validate_trial(trial);
  return trial;
}

void write_trial(const Trial& trial, const std::filesystem::path& path) {
  validate_trial(trial);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  json header = {{"trial_id", trial.trial_id}, {"metadata", json::object()}};
  for (const auto& [k, v] : trial.metadata) header["metadata"][k] = v;
  out << header.dump() << '\n';
  for (const StepEvent& e : trial.events) out << event_to_json(e).dump() << '\n';
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf, ptr);
}

}  // namespace hloc
