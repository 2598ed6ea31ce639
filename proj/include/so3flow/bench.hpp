// Copyright 2026 The so3flow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pose metrics, evaluation reports and ablation sweeps.

#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "so3flow/decimal.hpp"
#include "so3flow/inference.hpp"
#include "so3flow/neural/checkpoint.hpp"
#include "so3flow/synthetic.hpp"
#include "so3flow/training.hpp"

namespace so3flow::bench {

inline constexpr double kDegThreshold = 5.0;
inline constexpr double kShiftTight = 0.02;
inline constexpr double kShiftLoose = 0.05;
inline constexpr std::size_t kAddsPoints = 512;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;

// ---------------------------------------------------------------- metrics

/// Geodesic angle in degrees, in [0, 180].
inline double metric_deg(const Rotation& pred, const Rotation& gt) {
  return std::clamp(geodesic_distance(pred, gt) * 180.0 / kPi, 0.0, 180.0);
}

inline double metric_shift(const Vec3& pred_center, const Vec3& gt_center) { return (pred_center - gt_center).norm(); }

struct Pose {
  Rotation rotation;
  Vec3 center = Vec3::Zero();
};

inline PointCloud posed(const PointCloud& canonical, const Pose& pose) {
  PointCloud out = canonical * pose.rotation.matrix().transpose();
  out.rowwise() += pose.center.transpose();
  return out;
}

/// ADD-S: mean over canonical points of the distance from each gt-posed point
/// to the nearest pred-posed point.
inline double metric_adds(const Pose& pred, const Pose& gt, const PointCloud& canonical) {
  if (canonical.rows() == 0) throw Error(ErrorKind::WrongPointCount, "ADD-S needs a non-empty cloud");
  const PointCloud a = posed(canonical, gt);
  const PointCloud b = posed(canonical, pred);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    sum += std::sqrt((b.rowwise() - a.row(i)).rowwise().squaredNorm().minCoeff());
  }
  return sum / static_cast<double>(a.rows());
}

/// Mean distance from each point to its nearest other point.
inline double mean_nn_spacing(const PointCloud& p) {
  if (p.rows() < 2) throw Error(ErrorKind::WrongPointCount, "spacing needs two points");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::VectorXd d = (p.rowwise() - p.row(i)).rowwise().squaredNorm();
    d(i) = std::numeric_limits<double>::infinity();
    sum += std::sqrt(d.minCoeff());
  }
  return sum / static_cast<double>(p.rows());
}

// ---------------------------------------------------------------- reports

struct EvalRecord {
  std::int64_t instance_id = 0;
  std::size_t category = 0;
  double deg_error = 0.0;
  double shift = 0.0;
  bool success_5deg_2cm = false;
  bool success_5deg_5cm = false;
  double adds = 0.0;
  double wall_ms = 0.0;

  bool operator==(const EvalRecord&) const = default;
};

struct EvalSummary {
  std::size_t count = 0;
  double mean_deg = 0.0;
  double median_deg = 0.0;
  double mean_shift = 0.0;
  double rate_5deg_2cm = 0.0;
  double rate_5deg_5cm = 0.0;
  double mean_adds = 0.0;
  double mean_wall_ms = 0.0;

  bool operator==(const EvalSummary&) const = default;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  EvalSummary summary;

  bool operator==(const EvalReport&) const = default;
};

inline EvalRecord make_record(std::int64_t id, std::size_t category, double deg, double shift, double adds,
                              double wall_ms) {
  return {id,
          category,
          deg,
          shift,
          deg < kDegThreshold && shift < kShiftTight,
          deg < kDegThreshold && shift < kShiftLoose,
          adds,
          wall_ms};
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline EvalSummary summarize(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  s.count = records.size();
  if (records.empty()) return s;
  std::vector<double> degs;
  for (const auto& r : records) {
    degs.push_back(r.deg_error);
    s.mean_deg += r.deg_error;
    s.mean_shift += r.shift;
    s.rate_5deg_2cm += r.success_5deg_2cm ? 1.0 : 0.0;
    s.rate_5deg_5cm += r.success_5deg_5cm ? 1.0 : 0.0;
    s.mean_adds += r.adds;
    s.mean_wall_ms += r.wall_ms;
  }
  const double n = static_cast<double>(records.size());
  s.mean_deg /= n;
  s.mean_shift /= n;
  s.rate_5deg_2cm /= n;
  s.rate_5deg_5cm /= n;
  s.mean_adds /= n;
  s.mean_wall_ms /= n;
  s.median_deg = median(std::move(degs));
  return s;
}

/// Throws InvariantViolation naming the first broken record.
inline void validate(const EvalReport& report) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvariantViolation, what); };
  for (const auto& r : report.records) {
    const std::string id = "instance " + std::to_string(r.instance_id) + ": ";
    if (r.success_5deg_2cm && !r.success_5deg_5cm) fail(id + "5deg/2cm success without 5deg/5cm success");
    if (!(r.deg_error >= 0.0 && r.deg_error <= 180.0)) fail(id + "deg_error outside [0, 180]");
    if (!(r.shift >= 0.0) || !(r.adds >= 0.0)) fail(id + "negative or non-finite distance");
  }
  const auto& s = report.summary;
  for (double rate : {s.rate_5deg_2cm, s.rate_5deg_5cm}) {
    if (!(rate >= 0.0 && rate <= 1.0)) fail("success rate outside [0, 1]");
  }
  if (s.rate_5deg_2cm > s.rate_5deg_5cm) fail("5deg/2cm rate exceeds 5deg/5cm rate");
  if (s.count != report.records.size()) fail("summary count differs from record count");
}

inline constexpr std::string_view kRecordHeader =
    "instance_id,category,deg_error,shift,success_5deg_2cm,success_5deg_5cm,adds,wall_ms";

inline nlohmann::json summary_to_json(const EvalSummary& s) {
  // decimals as strings keep the round trip exact
  return {{"count", s.count},
          {"mean_deg", format_double(s.mean_deg)},
          {"median_deg", format_double(s.median_deg)},
          {"mean_shift", format_double(s.mean_shift)},
          {"rate_5deg_2cm", format_double(s.rate_5deg_2cm)},
          {"rate_5deg_5cm", format_double(s.rate_5deg_5cm)},
          {"mean_adds", format_double(s.mean_adds)},
          {"mean_wall_ms", format_double(s.mean_wall_ms)}};
}

inline EvalSummary summary_from_json(const nlohmann::json& j) {
  auto num = [&](const char* key) { return parse_double(j.at(key).get<std::string>()); };
  EvalSummary s;
  s.count = j.at("count").get<std::size_t>();
  s.mean_deg = num("mean_deg");
  s.median_deg = num("median_deg");
  s.mean_shift = num("mean_shift");
  s.rate_5deg_2cm = num("rate_5deg_2cm");
  s.rate_5deg_5cm = num("rate_5deg_5cm");
  s.mean_adds = num("mean_adds");
  s.mean_wall_ms = num("mean_wall_ms");
  return s;
}

inline std::string records_to_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << r.instance_id << ',' << r.category << ',' << format_double(r.deg_error) << ','
        << format_double(r.shift) << ',' << (r.success_5deg_2cm ? 1 : 0) << ',' << (r.success_5deg_5cm ? 1 : 0)
        << ',' << format_double(r.adds) << ',' << format_double(r.wall_ms) << '\n';
  }
  return out.str();
}

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

inline bool parse_flag(const std::string& s) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(ErrorKind::IoError, "malformed flag '" + s + "'");
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorKind::IoError, "cannot write " + p.string());
}

}  // namespace detail

inline std::vector<EvalRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) throw Error(ErrorKind::IoError, "missing report header");
  std::vector<EvalRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 8) throw Error(ErrorKind::IoError, "report row needs 8 fields: " + line);
    try {
      EvalRecord r;
      r.instance_id = std::stoll(f[0]);
      r.category = static_cast<std::size_t>(std::stoull(f[1]));
      r.deg_error = parse_double(f[2]);
      r.shift = parse_double(f[3]);
      r.success_5deg_2cm = detail::parse_flag(f[4]);
      r.success_5deg_5cm = detail::parse_flag(f[5]);
      r.adds = parse_double(f[6]);
      r.wall_ms = parse_double(f[7]);
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::IoError, "malformed report row: " + line);
    }
  }
  return out;
}

/// `<stem>.csv` holds the records, `<stem>.json` the summary.
inline void write_report(const EvalReport& report, const std::filesystem::path& stem) {
  validate(report);
  auto csv = stem;
  csv += ".csv";
  auto json = stem;
  json += ".json";
  detail::write_file(csv, records_to_csv(report.records));
  detail::write_file(json, summary_to_json(report.summary).dump(2) + "\n");
}

inline EvalReport read_report(const std::filesystem::path& stem) {
  auto csv = stem;
  csv += ".csv";
  auto json = stem;
  json += ".json";
  EvalReport r;
  r.records = records_from_csv(detail::read_file(csv));
  try {
    r.summary = summary_from_json(nlohmann::json::parse(detail::read_file(json)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::IoError, std::string("malformed summary: ") + e.what());
  }
  validate(r);
  return r;
}

// ---------------------------------------------------------------- evaluation

/// Reference clouds keyed by (kind, scale), built once per instance.
inline PointCloud adds_cloud(const synthetic::SceneInstance& inst) {
  return synthetic::reference_cloud(inst.kind, inst.scale, kAddsPoints);
}

/// Evaluates every test instance in instance_id order. Each instance gets its
/// own hypothesis stream so results do not depend on evaluation order.
inline EvalReport run_eval(const neural::Model& model, const synthetic::Dataset& data, const IntegratorConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  auto test = data.split(synthetic::Split::Test);
  std::vector<const synthetic::SceneInstance*> order(test.begin(), test.end());
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->instance_id < b->instance_id; });

  EvalReport report;
  for (const auto* inst : order) {
    Rng rng(synthetic::instance_seed(seed, inst->instance_id, kEvalStream));
    const auto start = std::chrono::steady_clock::now();
    const PoseEstimate est = estimate_pose(inst->observed, inst->category, model, cfg, rng);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    const double adds = metric_adds({est.rotation, est.center}, {inst->gt_rotation, inst->gt_center}, adds_cloud(*inst));
    report.records.push_back(make_record(inst->instance_id, inst->category, metric_deg(est.rotation, inst->gt_rotation),
                                         metric_shift(est.center, inst->gt_center), adds, ms));
  }
  report.summary = summarize(report.records);
  validate(report);
  return report;
}

/// Identical metrics apart from timing.
inline bool same_metrics(const EvalReport& a, const EvalReport& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    auto x = a.records[i];
    auto y = b.records[i];
    x.wall_ms = y.wall_ms = 0.0;
    if (!(x == y)) return false;
  }
  auto s = a.summary;
  auto t = b.summary;
  s.mean_wall_ms = t.mean_wall_ms = 0.0;
  return s == t;
}

// ---------------------------------------------------------------- run config

/// Everything a CLI run can configure. Every key of the file is optional.
struct RunConfig {
  synthetic::GenConfig gen;
  training::TrainConfig train;
  neural::ModelConfig model;
  IntegratorConfig integrator;
};

inline nlohmann::json integrator_config_to_json(const IntegratorConfig& c) {
  return {{"n_steps", c.n_steps},
          {"t_start", c.t_start},
          {"t_end", c.t_end},
          {"scheme", std::string(to_string(c.scheme))},
          {"n_hypotheses", c.n_hypotheses},
          {"init_mode", std::string(to_string(c.init_mode))}};
}

inline IntegratorConfig integrator_config_from_json(const nlohmann::json& j, IntegratorConfig c = {}) {
  c.n_steps = j.value("n_steps", c.n_steps);
  c.t_start = j.value("t_start", c.t_start);
  c.t_end = j.value("t_end", c.t_end);
  if (j.contains("scheme")) c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  c.n_hypotheses = j.value("n_hypotheses", c.n_hypotheses);
  if (j.contains("init_mode")) c.init_mode = init_mode_from_string(j.at("init_mode").get<std::string>());
  if (c.init_mode == InitMode::Given) throw Error(ErrorKind::BadConfig, "init_mode 'given' is not available from files");
  return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"gen", synthetic::gen_config_to_json(c.gen)},
          {"train", training::train_config_to_json(c.train)},
          {"model", neural::config_to_json(c.model)},
          {"integrator", integrator_config_to_json(c.integrator)}};
}

/// Unknown sections or keys are rejected so typos do not silently fall back to
/// defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  static const std::map<std::string, std::vector<std::string>> known = {
      {"gen",
       {"n_train", "n_test", "categories", "noise_sigma", "occlusion_fraction", "seed", "n_points", "scale_min",
        "scale_max", "center_extent"}},
      {"train", {"epochs", "batch_size", "learning_rate", "adam_betas", "adam_eps", "loss_weights", "seed"}},
      {"model",
       {"d_s", "d_g", "d_z", "encoder_hidden", "hidden", "box_hidden", "n_categories", "time_frequencies", "fusion",
        "rotation_head", "rng_seed"}},
      {"integrator", {"n_steps", "t_start", "t_end", "scheme", "n_hypotheses", "init_mode"}}};
  if (!j.is_object()) throw Error(ErrorKind::BadConfig, "config must be an object");
  for (const auto& [section, body] : j.items()) {
    const auto it = known.find(section);
    if (it == known.end()) throw Error(ErrorKind::BadConfig, "unknown config section '" + section + "'");
    if (!body.is_object()) throw Error(ErrorKind::BadConfig, "config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
        throw Error(ErrorKind::BadConfig, "unknown key '" + section + "." + key + "'");
      }
    }
  }
  RunConfig c;
  try {
    const nlohmann::json empty = nlohmann::json::object();
    c.gen = synthetic::gen_config_from_json(j.value("gen", empty));
    c.train = training::train_config_from_json(j.value("train", empty));
    c.model = neural::config_from_json(j.value("model", empty));
    c.integrator = integrator_config_from_json(j.value("integrator", empty));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadConfig, std::string("bad config value: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  c.gen.validate();
  c.train.validate();
  c.integrator.validate();
  if (c.model.n_categories < c.gen.categories.size()) {
    throw Error(ErrorKind::BadConfig, "model.n_categories is smaller than the number of dataset categories");
  }
  return c;
}

// ---------------------------------------------------------------- ablations

enum class AblationKind { Steps, Scheme, Fusion, Representation };

constexpr std::string_view to_string(AblationKind k) {
  switch (k) {
    case AblationKind::Steps: return "steps";
    case AblationKind::Scheme: return "scheme";
    case AblationKind::Fusion: return "fusion";
    case AblationKind::Representation: return "representation";
  }
  return "steps";
}

inline AblationKind ablation_from_string(std::string_view s) {
  for (auto k : {AblationKind::Steps, AblationKind::Scheme, AblationKind::Fusion, AblationKind::Representation}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorKind::BadConfig, "unknown ablation '" + std::string(s) + "'");
}

inline constexpr std::size_t kStepSweep[] = {1, 2, 5, 10, 20};

struct AblationRow {
  std::string variant;
  std::size_t n_steps = 0;
  Scheme scheme = Scheme::RK2;
  EvalSummary summary;

  bool operator==(const AblationRow&) const = default;
};

/// Supplies a trained model for a model configuration. The CLI caches these
/// as checkpoints; tests can pass a memoizing lambda.
using ModelProvider = std::function<const neural::Model&(const std::string& variant, const neural::ModelConfig&)>;

inline std::vector<AblationRow> run_ablation(AblationKind kind, const RunConfig& base, const synthetic::Dataset& data,
                                             const ModelProvider& provide, std::uint64_t seed) {
  std::vector<AblationRow> rows;
  auto eval_row = [&](const std::string& variant, const neural::Model& m, IntegratorConfig ic) {
    rows.push_back({variant, ic.n_steps, ic.scheme, run_eval(m, data, ic, seed).summary});
  };
  neural::ModelConfig flow_cfg = base.model;
  flow_cfg.rotation_head = neural::RotationHeadKind::Flow;

  switch (kind) {
    case AblationKind::Steps: {
      flow_cfg.fusion = neural::FusionMode::FiLM;
      const auto& m = provide("film", flow_cfg);
      for (std::size_t n : kStepSweep) {
        IntegratorConfig ic = base.integrator;
        ic.n_steps = n;
        ic.scheme = Scheme::RK2;
        eval_row("film", m, ic);
      }
      break;
    }
    case AblationKind::Scheme: {
      flow_cfg.fusion = neural::FusionMode::FiLM;
      const auto& m = provide("film", flow_cfg);
      for (std::size_t n : kStepSweep) {
        for (Scheme s : {Scheme::RK2, Scheme::Euler}) {
          IntegratorConfig ic = base.integrator;
          ic.n_steps = n;
          ic.scheme = s;
          eval_row("film", m, ic);
        }
      }
      break;
    }
    case AblationKind::Fusion:
      for (auto f : {neural::FusionMode::GeometryOnly, neural::FusionMode::Pointwise, neural::FusionMode::FiLM}) {
        neural::ModelConfig mc = flow_cfg;
        mc.fusion = f;
        const std::string name(to_string(f));
        eval_row(name, provide(name, mc), base.integrator);
      }
      break;
    case AblationKind::Representation: {
      neural::ModelConfig reg = base.model;
      reg.fusion = neural::FusionMode::FiLM;
      reg.rotation_head = neural::RotationHeadKind::Regression;
      flow_cfg.fusion = neural::FusionMode::FiLM;
      eval_row("regression", provide("regression", reg), base.integrator);
      eval_row("film", provide("film", flow_cfg), base.integrator);
      break;
    }
  }
  return rows;
}

inline constexpr std::string_view kAblationHeader =
    "ablation,variant,n_steps,scheme,count,mean_deg,median_deg,mean_shift,rate_5deg_2cm,rate_5deg_5cm,mean_adds,"
    "mean_wall_ms";

inline std::string ablation_to_csv(const std::vector<std::pair<AblationKind, std::vector<AblationRow>>>& tables) {
  std::ostringstream out;
  out << kAblationHeader << '\n';
  for (const auto& [kind, rows] : tables) {
    for (const auto& r : rows) {
      const auto& s = r.summary;
      out << to_string(kind) << ',' << r.variant << ',' << r.n_steps << ',' << to_string(r.scheme) << ',' << s.count
          << ',' << format_double(s.mean_deg) << ',' << format_double(s.median_deg) << ','
          << format_double(s.mean_shift) << ',' << format_double(s.rate_5deg_2cm) << ','
          << format_double(s.rate_5deg_5cm) << ',' << format_double(s.mean_adds) << ','
          << format_double(s.mean_wall_ms) << '\n';
    }
  }
  return out.str();
}

/// Inverse of ablation_to_csv; consecutive rows of one ablation form a table.
inline std::vector<std::pair<AblationKind, std::vector<AblationRow>>> ablation_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kAblationHeader) throw Error(ErrorKind::IoError, "missing ablation header");
  std::vector<std::pair<AblationKind, std::vector<AblationRow>>> tables;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 12) throw Error(ErrorKind::IoError, "ablation row needs 12 fields: " + line);
    try {
      const AblationKind kind = ablation_from_string(f[0]);
      AblationRow r;
      r.variant = f[1];
      r.n_steps = static_cast<std::size_t>(std::stoull(f[2]));
      r.scheme = scheme_from_string(f[3]);
      r.summary.count = static_cast<std::size_t>(std::stoull(f[4]));
      r.summary.mean_deg = parse_double(f[5]);
      r.summary.median_deg = parse_double(f[6]);
      r.summary.mean_shift = parse_double(f[7]);
      r.summary.rate_5deg_2cm = parse_double(f[8]);
      r.summary.rate_5deg_5cm = parse_double(f[9]);
      r.summary.mean_adds = parse_double(f[10]);
      r.summary.mean_wall_ms = parse_double(f[11]);
      if (tables.empty() || tables.back().first != kind) tables.emplace_back(kind, std::vector<AblationRow>{});
      tables.back().second.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::IoError, "malformed ablation row: " + line);
    } catch (const Error&) {
      throw Error(ErrorKind::IoError, "malformed ablation row: " + line);
    }
  }
  return tables;
}

}  // namespace so3flow::bench
