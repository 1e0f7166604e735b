#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mergeflow/idm.hpp"
#include "mergeflow/rng.hpp"

namespace mergeflow {

enum class VehicleKind { Hdv, Av };

inline const char* to_string(VehicleKind k) {
  return k == VehicleKind::Av ? "av" : "hdv";
}

struct Edge {
  int index = 1;  // 1-based
  double start_pos = 0.0;
  double end_pos = 0.0;
  int lane_count = 3;
};

// A straight multi-lane segment with one lane drop. Route positions run from
// 0 at the spawn line to exit_position(). Lanes are 0-based; the highest lane
// index ends at merge_point and its traffic must merge one lane down.
struct RoadNetwork {
  double free_zone_length = 400.0;
  double coordination_zone_length = 1000.0;
  double merge_point = 1200.0;
  double merge_window = 100.0;
  // Target-lane traffic brakes for the nearest merge candidate ahead of it in
  // the window, opening zip gaps. Without this the continuing lanes never
  // break down and the bottleneck loses its capacity drop.
  bool merge_yield = true;
  double yield_margin = 2.0;  // m, keeps the opened gap acceptably wide
  int edge_count = 5;
  int lane_count = 3;
  std::vector<Edge> edges;  // built over the coordination zone

  double zone_start() const { return free_zone_length; }
  double exit_position() const {
    return free_zone_length + coordination_zone_length;
  }
  int dropped_lane() const { return lane_count - 1; }
  int merge_target_lane() const { return lane_count - 2; }
  int lanes_at(double pos) const {
    return pos < merge_point ? lane_count : lane_count - 1;
  }
  // Edge index (0-based) containing pos, or -1 outside the coordination zone.
  int edge_of(double pos) const;

  void build_edges();
  void validate() const;
};

struct Vehicle {
  std::int64_t id = 0;
  VehicleKind kind = VehicleKind::Hdv;
  double position = 0.0;  // rear bumper, m along the route
  int lane = 0;
  double speed = 0.0;
  double accel = 0.0;
  double v_max = 10.0;
  double entry_time = 0.0;
  std::optional<double> exit_time;
  double length = 5.0;

  double front() const { return position + length; }
};

struct RateSegment {
  double t_start = 0.0;  // s
  double rate = 0.0;     // veh/h
};

struct InflowProcess {
  // Piecewise-constant rate schedule; segments sorted by t_start, first at 0.
  std::vector<RateSegment> schedule{{0.0, 0.0}};
  double penetration = 0.0;   // Bernoulli AV fraction (ignored in fixed mode)
  int fixed_av_count = 0;     // >0: exactly this many AVs, assigned in order
  double warmup = 0.0;        // s; fixed-mode AVs start after this time
  std::uint64_t rng_seed = 0; // informational; Simulation owns the stream

  double rate_at(double t) const;
  void validate() const;
};

// Poisson arrivals for one step. In fixed mode `av_assigned` counts AVs handed
// out so far and is advanced here. Exposed separately from placement so the
// arrival statistics can be tested on their own.
std::vector<VehicleKind> draw_arrivals(const InflowProcess& proc, double t,
                                       double dt, Rng& rng, int& av_assigned);

struct TravelTimeStats {
  double avg_tt = 0.0;
  int count = 0;
};

class Simulation {
 public:
  Simulation(RoadNetwork net, IdmParams idm, InflowProcess inflow, double dt,
             std::uint64_t seed, double hdv_speed = 10.0, double av_speed = 12.0,
             double vehicle_length = 5.0);

  // One timestep: spawn arrivals, apply the merge rule, compute accelerations
  // (IDM for uncontrolled vehicles, commanded-with-safety-override for ids in
  // `controlled`), integrate, remove exited vehicles.
  void step(const std::map<std::int64_t, double>& controlled = {});

  double time() const { return time_; }
  double dt() const { return dt_; }
  const RoadNetwork& network() const { return net_; }
  const IdmParams& idm() const { return idm_; }

  // Vehicles currently on the road, ordered by id.
  std::vector<Vehicle> vehicles() const;
  const std::vector<std::vector<Vehicle>>& lanes() const { return lanes_; }
  std::size_t on_road_count() const;
  const Vehicle* find(std::int64_t id) const;

  // Edge x lane occupancy counts over the coordination zone.
  std::vector<std::vector<int>> count_vehicles() const;

  // Mean over exited vehicles plus (now - entry) for vehicles still on the
  // road; {0,0} when nothing has entered.
  TravelTimeStats travel_time_stats() const;

  // Mean speed of all vehicles inside the coordination zone (0 if empty).
  double zone_mean_speed() const;
  int zone_vehicle_count() const;

  // Conservation bookkeeping: arrivals == on road + exited + queued.
  std::int64_t arrivals_total() const { return arrivals_total_; }
  std::int64_t exited_total() const { return exited_total_; }
  std::size_t queue_size() const { return spawn_queue_.size(); }

  // One "t,id,kind,lane,position,speed" line per vehicle.
  void dump_state(std::ostream& os) const;

  // Test hook: place a vehicle directly (validates lane and overlap).
  std::int64_t add_vehicle(Vehicle v);

  void check_invariants() const;  // throws on violation

 private:
  struct QueuedSpawn {
    VehicleKind kind;
  };

  void spawn_pass();
  void merge_pass();
  void accel_pass(const std::map<std::int64_t, double>& controlled);
  void integrate_pass();
  bool try_place(VehicleKind kind);
  bool merge_feasible(const Vehicle& ego, int target_lane) const;

  RoadNetwork net_;
  IdmParams idm_;
  InflowProcess inflow_;
  double dt_;
  double time_ = 0.0;
  double hdv_speed_, av_speed_, vehicle_length_;
  std::vector<std::vector<Vehicle>> lanes_;  // sorted by position, descending
  std::deque<QueuedSpawn> spawn_queue_;
  Rng rng_;
  std::int64_t next_id_ = 1;
  std::int64_t arrivals_total_ = 0;
  std::int64_t exited_total_ = 0;
  int av_assigned_ = 0;
  double exited_tt_sum_ = 0.0;
};

}  // namespace mergeflow
