#include "cellgan/profiler.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "cellgan/error.hpp"

namespace cellgan::metrics {

std::string_view routine_name(Routine r) {
  switch (r) {
    case Routine::Gather:
      return "gather";
    case Routine::Train:
      return "train";
    case Routine::UpdateGenomes:
      return "update_genomes";
    case Routine::Mutate:
      return "mutate";
    case Routine::Other:
      return "other";
  }
  return "other";
}

Routine parse_routine(std::string_view name) {
  for (std::size_t i = 0; i < kRoutineCount; ++i) {
    const auto r = static_cast<Routine>(i);
    if (routine_name(r) == name) return r;
  }
  throw UsageError("unknown profile routine '" + std::string(name) + "'");
}

double ProfileReport::routine_sum() const {
  double s = 0.0;
  for (auto r : kProfiledRoutines) s += (*this)[r];
  return s;
}

void to_json(nlohmann::json& j, const ProfileReport& p) {
  j = nlohmann::json::object();
  for (std::size_t i = 0; i < kRoutineCount; ++i)
    j[std::string(routine_name(static_cast<Routine>(i)))] = p.seconds[i];
  j["wall"] = p.wall;
}

void from_json(const nlohmann::json& j, ProfileReport& p) {
  for (std::size_t i = 0; i < kRoutineCount; ++i)
    p.seconds[i] = j.value(std::string(routine_name(static_cast<Routine>(i))), 0.0);
  p.wall = j.value("wall", 0.0);
}

void Profiler::close_top() {
  Frame frame = stack_.back();
  stack_.pop_back();
  const double elapsed = std::chrono::duration<double>(Clock::now() - frame.start).count();
  const double own = std::max(0.0, elapsed - frame.child_seconds);
  report_[frame.routine] += own;
  last_ = own;
  if (!stack_.empty()) stack_.back().child_seconds += elapsed;
}

ProfileReport Profiler::finish() {
  report_.wall = std::chrono::duration<double>(Clock::now() - started_).count();
  return report_;
}

double speedup_ratio(double baseline_seconds, double parallel_seconds) {
  if (parallel_seconds <= 0.0) throw UsageError("speedup undefined for zero parallel time");
  return baseline_seconds / parallel_seconds;
}

double acceleration_percent(double baseline_seconds, double parallel_seconds) {
  if (baseline_seconds <= 0.0) throw UsageError("acceleration undefined for zero baseline time");
  return 100.0 * (1.0 - parallel_seconds / baseline_seconds);
}

SpeedupReport speedup(const ProfileReport& baseline, const ProfileReport& parallel) {
  SpeedupReport out;
  out.overall_speedup = speedup_ratio(baseline.wall, parallel.wall);
  out.overall_acceleration = acceleration_percent(baseline.wall, parallel.wall);
  for (auto r : kProfiledRoutines) {
    RoutineSpeedup rs{r, baseline[r], parallel[r], std::nullopt, std::nullopt};
    if (parallel[r] > 0.0) rs.speedup = baseline[r] / parallel[r];
    if (baseline[r] > 0.0) rs.acceleration = acceleration_percent(baseline[r], parallel[r]);
    out.routines.push_back(rs);
  }
  return out;
}

void to_json(nlohmann::json& j, const SpeedupReport& s) {
  j = nlohmann::json::object();
  j["overall"] = {{"speedup", s.overall_speedup}, {"acceleration_pct", s.overall_acceleration}};
  for (const auto& r : s.routines) {
    nlohmann::json e = {{"baseline", r.baseline}, {"parallel", r.parallel}};
    e["speedup"] = r.speedup ? nlohmann::json(*r.speedup) : nlohmann::json(nullptr);
    e["acceleration_pct"] = r.acceleration ? nlohmann::json(*r.acceleration) : nlohmann::json(nullptr);
    j[std::string(routine_name(r.routine))] = e;
  }
}

MergedProfile merge_profiles(const std::vector<ProfileReport>& reports, double overall_wall) {
  MergedProfile m;
  m.per_worker = reports;
  if (!reports.empty()) {
    for (const auto& rep : reports)
      for (std::size_t i = 0; i < kRoutineCount; ++i) {
        m.mean.seconds[i] += rep.seconds[i] / static_cast<double>(reports.size());
        m.max.seconds[i] = std::max(m.max.seconds[i], rep.seconds[i]);
      }
  }
  m.mean.wall = overall_wall;
  m.max.wall = overall_wall;
  return m;
}

}  // namespace cellgan::metrics
