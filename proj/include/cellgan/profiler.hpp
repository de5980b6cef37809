#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace cellgan::metrics {

/// The routines broken out by the profile, plus a catch-all.
enum class Routine : std::size_t { Gather, Train, UpdateGenomes, Mutate, Other };
inline constexpr std::size_t kRoutineCount = 5;
inline constexpr std::array<Routine, 4> kProfiledRoutines = {Routine::Gather, Routine::Train,
                                                             Routine::UpdateGenomes, Routine::Mutate};

std::string_view routine_name(Routine r);
/// Throws UsageError for names outside the four routines and "other".
Routine parse_routine(std::string_view name);

/// Cumulative wall seconds per routine. `wall` is the elapsed time of the
/// whole run and bounds the routine sum.
struct ProfileReport {
  std::array<double, kRoutineCount> seconds{};
  double wall = 0.0;

  double& operator[](Routine r) { return seconds[static_cast<std::size_t>(r)]; }
  double operator[](Routine r) const { return seconds[static_cast<std::size_t>(r)]; }
  /// Sum of the four profiled routines.
  double routine_sum() const;

  bool operator==(const ProfileReport&) const = default;
};

void to_json(nlohmann::json& j, const ProfileReport& p);
void from_json(const nlohmann::json& j, ProfileReport& p);

/// Accumulates section times into a ProfileReport. Nested sections charge
/// their time to the innermost routine only. One profiler per thread.
class Profiler {
 public:
  using Clock = std::chrono::steady_clock;

  Profiler() : started_(Clock::now()) {}

  template <class F>
  decltype(auto) section(Routine routine, F&& thunk) {
    Scope scope(*this, routine);
    return std::forward<F>(thunk)();
  }

  /// Seconds charged to the most recently closed section.
  double last_section_seconds() const { return last_; }
  const ProfileReport& report() const { return report_; }
  /// Finalizes `wall` as the time since construction.
  ProfileReport finish();

 private:
  struct Frame {
    Routine routine;
    Clock::time_point start;
    double child_seconds = 0.0;
  };

  class Scope {
   public:
    Scope(Profiler& p, Routine r) : p_(p) { p_.stack_.push_back({r, Clock::now(), 0.0}); }
    ~Scope() { p_.close_top(); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Profiler& p_;
  };

  void close_top();

  Clock::time_point started_;
  ProfileReport report_;
  std::vector<Frame> stack_;
  double last_ = 0.0;
};

/// Runs `thunk` under `routine_name`, charging its wall time to that routine.
template <class F>
decltype(auto) profile_section(Profiler& profiler, std::string_view routine_name, F&& thunk) {
  return profiler.section(parse_routine(routine_name), std::forward<F>(thunk));
}

struct RoutineSpeedup {
  Routine routine;
  double baseline = 0.0;
  double parallel = 0.0;
  std::optional<double> speedup;       // baseline / parallel; empty when parallel is 0
  std::optional<double> acceleration;  // percent, 100 * (1 - parallel / baseline)
};

struct SpeedupReport {
  std::vector<RoutineSpeedup> routines;
  double overall_speedup = 0.0;
  double overall_acceleration = 0.0;  // percent
};

/// Ratio of baseline to parallel time, overall and per routine. Throws
/// UsageError when the parallel wall time is zero.
SpeedupReport speedup(const ProfileReport& baseline, const ProfileReport& parallel);
/// Scalar form used for table rows.
double speedup_ratio(double baseline_seconds, double parallel_seconds);
double acceleration_percent(double baseline_seconds, double parallel_seconds);

void to_json(nlohmann::json& j, const SpeedupReport& s);

/// Merge of worker profiles: per-routine mean (keeps routine sum <= wall),
/// the per-routine max, and the individual reports.
struct MergedProfile {
  ProfileReport mean;
  ProfileReport max;
  std::vector<ProfileReport> per_worker;
};
MergedProfile merge_profiles(const std::vector<ProfileReport>& reports, double overall_wall);

}  // namespace cellgan::metrics
