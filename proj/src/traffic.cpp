#include "mergeflow/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mergeflow {

namespace {
// Smallest bumper-to-bumper clearance the integrator will leave. Keeps every
// IDM gap query strictly positive.
constexpr double kMinClearance = 0.01;
}  // namespace

int RoadNetwork::edge_of(double pos) const {
  if (pos < zone_start() || pos >= exit_position()) return -1;
  const double edge_len = coordination_zone_length / edge_count;
  int e = static_cast<int>((pos - zone_start()) / edge_len);
  return std::min(e, edge_count - 1);
}

void RoadNetwork::build_edges() {
  edges.clear();
  const double edge_len = coordination_zone_length / edge_count;
  for (int e = 0; e < edge_count; ++e) {
    Edge edge;
    edge.index = e + 1;
    edge.start_pos = zone_start() + e * edge_len;
    edge.end_pos = zone_start() + (e + 1) * edge_len;
    edge.lane_count = lanes_at(edge.start_pos);
    edges.push_back(edge);
  }
}

void RoadNetwork::validate() const {
  if (free_zone_length <= 0 || coordination_zone_length <= 0)
    throw std::invalid_argument("RoadNetwork: zone lengths must be positive");
  if (lane_count != 3)
    throw std::invalid_argument("RoadNetwork: expected 3 lanes upstream of the drop");
  if (!(merge_point > zone_start() && merge_point < exit_position()))
    throw std::invalid_argument(
        "RoadNetwork: merge_point must lie strictly inside the coordination zone");
  if (merge_window <= 0 || merge_window > merge_point)
    throw std::invalid_argument("RoadNetwork: bad merge_window");
  if (edge_count < 1) throw std::invalid_argument("RoadNetwork: edge_count < 1");
  double prev_end = zone_start();
  for (const Edge& e : edges) {
    if (e.start_pos >= e.end_pos)
      throw std::invalid_argument("Edge: start_pos must be < end_pos");
    if (std::abs(e.start_pos - prev_end) > 1e-9)
      throw std::invalid_argument("RoadNetwork: edges must be contiguous");
    if (e.lane_count != 2 && e.lane_count != 3)
      throw std::invalid_argument("Edge: lane_count must be 2 or 3");
    prev_end = e.end_pos;
  }
  if (!edges.empty() && std::abs(prev_end - exit_position()) > 1e-9)
    throw std::invalid_argument("RoadNetwork: edges must cover the coordination zone");
}

double InflowProcess::rate_at(double t) const {
  double rate = 0.0;
  for (const RateSegment& seg : schedule) {
    if (t + 1e-12 >= seg.t_start) rate = seg.rate;
  }
  return rate;
}

void InflowProcess::validate() const {
  if (penetration < 0.0 || penetration > 1.0)
    throw std::invalid_argument("InflowProcess: penetration outside [0,1]");
  double prev = -1.0;
  for (const RateSegment& seg : schedule) {
    if (seg.rate < 0.0)
      throw std::invalid_argument("InflowProcess: negative rate");
    if (seg.t_start <= prev)
      throw std::invalid_argument("InflowProcess: schedule not increasing");
    prev = seg.t_start;
  }
  if (fixed_av_count < 0)
    throw std::invalid_argument("InflowProcess: negative fixed_av_count");
}

std::vector<VehicleKind> draw_arrivals(const InflowProcess& proc, double t,
                                       double dt, Rng& rng, int& av_assigned) {
  if (dt <= 0) throw std::invalid_argument("draw_arrivals: dt must be positive");
  const double lambda = proc.rate_at(t) * dt / 3600.0;
  const int n = poisson(rng, lambda);
  std::vector<VehicleKind> kinds;
  kinds.reserve(n);
  for (int i = 0; i < n; ++i) {
    VehicleKind kind = VehicleKind::Hdv;
    if (proc.fixed_av_count > 0) {
      if (t >= proc.warmup && av_assigned < proc.fixed_av_count) {
        kind = VehicleKind::Av;
        ++av_assigned;
      }
    } else if (bernoulli(rng, proc.penetration)) {
      kind = VehicleKind::Av;
    }
    kinds.push_back(kind);
  }
  return kinds;
}

Simulation::Simulation(RoadNetwork net, IdmParams idm, InflowProcess inflow,
                       double dt, std::uint64_t seed, double hdv_speed,
                       double av_speed, double vehicle_length)
    : net_(std::move(net)),
      idm_(idm),
      inflow_(std::move(inflow)),
      dt_(dt),
      hdv_speed_(hdv_speed),
      av_speed_(av_speed),
      vehicle_length_(vehicle_length),
      rng_(seed) {
  if (dt_ <= 0) throw std::invalid_argument("Simulation: dt must be positive");
  if (net_.edges.empty()) net_.build_edges();
  net_.validate();
  idm_.validate();
  inflow_.validate();
  lanes_.resize(net_.lane_count);
}

std::vector<Vehicle> Simulation::vehicles() const {
  std::vector<Vehicle> out;
  for (const auto& lane : lanes_) out.insert(out.end(), lane.begin(), lane.end());
  std::sort(out.begin(), out.end(),
            [](const Vehicle& a, const Vehicle& b) { return a.id < b.id; });
  return out;
}

std::size_t Simulation::on_road_count() const {
  std::size_t n = 0;
  for (const auto& lane : lanes_) n += lane.size();
  return n;
}

const Vehicle* Simulation::find(std::int64_t id) const {
  for (const auto& lane : lanes_)
    for (const Vehicle& v : lane)
      if (v.id == id) return &v;
  return nullptr;
}

std::vector<std::vector<int>> Simulation::count_vehicles() const {
  std::vector<std::vector<int>> n(net_.edge_count,
                                  std::vector<int>(net_.lane_count, 0));
  for (const auto& lane : lanes_) {
    for (const Vehicle& v : lane) {
      const int e = net_.edge_of(v.position);
      if (e >= 0) n[e][v.lane] += 1;
    }
  }
  return n;
}

TravelTimeStats Simulation::travel_time_stats() const {
  double sum = exited_tt_sum_;
  int count = static_cast<int>(exited_total_);
  for (const auto& lane : lanes_) {
    for (const Vehicle& v : lane) {
      sum += time_ - v.entry_time;
      count += 1;
    }
  }
  if (count == 0) return {0.0, 0};
  return {sum / count, count};
}

double Simulation::zone_mean_speed() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& lane : lanes_) {
    for (const Vehicle& v : lane) {
      if (v.position >= net_.zone_start() && v.position < net_.exit_position()) {
        sum += v.speed;
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : sum / n;
}

int Simulation::zone_vehicle_count() const {
  int n = 0;
  for (const auto& lane : lanes_)
    for (const Vehicle& v : lane)
      if (v.position >= net_.zone_start() && v.position < net_.exit_position())
        ++n;
  return n;
}

void Simulation::dump_state(std::ostream& os) const {
  for (const Vehicle& v : vehicles()) {
    os << time_ << ',' << v.id << ',' << to_string(v.kind) << ',' << v.lane
       << ',' << v.position << ',' << v.speed << '\n';
  }
}

std::int64_t Simulation::add_vehicle(Vehicle v) {
  if (v.lane < 0 || v.lane >= net_.lane_count)
    throw std::invalid_argument("add_vehicle: bad lane");
  if (v.id == 0) v.id = next_id_++;
  next_id_ = std::max(next_id_, v.id + 1);
  auto& lane = lanes_[v.lane];
  auto it = std::find_if(lane.begin(), lane.end(), [&](const Vehicle& o) {
    return o.position < v.position;
  });
  if (it != lane.begin()) {
    const Vehicle& leader = *std::prev(it);
    if (v.front() > leader.position)
      throw std::invalid_argument("add_vehicle: overlaps leader");
  }
  if (it != lane.end() && it->front() > v.position)
    throw std::invalid_argument("add_vehicle: overlaps follower");
  ++arrivals_total_;
  return lane.insert(it, v)->id;
}

bool Simulation::try_place(VehicleKind kind) {
  const double v_max = kind == VehicleKind::Av ? av_speed_ : hdv_speed_;
  // A lane admits a spawn if the entry gap supports some speed in
  // {v_max, rear vehicle speed} under the IDM headway rule.
  std::vector<int> feasible;
  std::vector<double> speeds;
  for (int l = 0; l < net_.lane_count; ++l) {
    const auto& lane = lanes_[l];
    if (lane.empty()) {
      feasible.push_back(l);
      speeds.push_back(v_max);
      continue;
    }
    const Vehicle& rear = lane.back();
    const double gap = rear.position - vehicle_length_;
    if (gap >= idm_.min_gap + v_max * idm_.time_headway) {
      feasible.push_back(l);
      speeds.push_back(v_max);
    } else {
      const double v_follow = std::min(rear.speed, v_max);
      if (gap >= idm_.min_gap + v_follow * idm_.time_headway) {
        feasible.push_back(l);
        speeds.push_back(v_follow);
      }
    }
  }
  if (feasible.empty()) return false;
  const int pick = uniform_int(rng_, static_cast<int>(feasible.size()));
  Vehicle v;
  v.id = next_id_++;
  v.kind = kind;
  v.position = 0.0;
  v.lane = feasible[pick];
  v.speed = speeds[pick];
  v.v_max = v_max;
  v.entry_time = time_;
  v.length = vehicle_length_;
  lanes_[v.lane].push_back(v);  // rearmost by construction
  return true;
}

void Simulation::spawn_pass() {
  // Retry deferred spawns first, oldest first.
  std::size_t pending = spawn_queue_.size();
  for (std::size_t i = 0; i < pending; ++i) {
    QueuedSpawn q = spawn_queue_.front();
    spawn_queue_.pop_front();
    if (!try_place(q.kind)) spawn_queue_.push_back(q);
  }
  for (VehicleKind kind : draw_arrivals(inflow_, time_, dt_, rng_, av_assigned_)) {
    ++arrivals_total_;
    if (!try_place(kind)) spawn_queue_.push_back({kind});
  }
}

bool Simulation::merge_feasible(const Vehicle& ego, int target_lane) const {
  const auto& lane = lanes_[target_lane];
  // First vehicle behind ego's rear bumper; everything before it is a leader.
  auto it = std::find_if(lane.begin(), lane.end(), [&](const Vehicle& o) {
    return o.position < ego.position;
  });
  if (it != lane.begin()) {
    const Vehicle& leader = *std::prev(it);
    const double gap = leader.position - ego.front();
    if (gap < idm_.min_gap + ego.speed * idm_.time_headway) return false;
  }
  if (it != lane.end()) {
    const Vehicle& follower = *it;
    const double gap = ego.position - follower.front();
    if (gap < idm_.min_gap + follower.speed * idm_.time_headway) return false;
  }
  return true;
}

void Simulation::merge_pass() {
  const int from = net_.dropped_lane();
  const int to = net_.merge_target_lane();
  auto& lane = lanes_[from];
  const double window_start = net_.merge_point - net_.merge_window;
  // Front to back so a vehicle sees the lane state left by earlier merges.
  for (std::size_t i = 0; i < lane.size();) {
    Vehicle& v = lane[i];
    if (v.position < window_start) break;  // sorted desc: rest are upstream
    if (merge_feasible(v, to)) {
      Vehicle moved = v;
      moved.lane = to;
      lane.erase(lane.begin() + static_cast<std::ptrdiff_t>(i));
      auto& target = lanes_[to];
      auto it = std::find_if(target.begin(), target.end(), [&](const Vehicle& o) {
        return o.position < moved.position;
      });
      target.insert(it, moved);
    } else {
      ++i;
    }
  }
}

void Simulation::accel_pass(const std::map<std::int64_t, double>& controlled) {
  const int dropped = net_.dropped_lane();
  const int target = net_.merge_target_lane();
  const double window_start = net_.merge_point - net_.merge_window;
  std::size_t used = 0;
  for (int l = 0; l < net_.lane_count; ++l) {
    auto& lane = lanes_[l];
    for (std::size_t i = 0; i < lane.size(); ++i) {
      Vehicle& v = lane[i];
      const IdmParams p = idm_.with_desired_speed(v.v_max);
      double gap = kNoLeader;
      double leader_speed = 0.0;
      if (i > 0) {
        gap = lane[i - 1].position - v.front();
        leader_speed = lane[i - 1].speed;
      }
      double a = idm_accel(v.speed, gap, leader_speed, p);
      if (l == dropped) {
        // Unmerged traffic must be able to stop at the lane end.
        const double wall_gap =
            std::max(net_.merge_point - v.front(), kMinClearance / 2);
        a = std::min(a, idm_accel(v.speed, wall_gap, 0.0, p));
      } else if (net_.merge_yield && l == target &&
                 v.position >= window_start - net_.merge_window) {
        // Yield to the nearest merge candidate that would come in ahead.
        const Vehicle* cand = nullptr;
        for (const Vehicle& m : lanes_[dropped]) {
          if (m.position < window_start) break;  // sorted desc
          if (m.position >= v.position &&
              (!cand || m.position < cand->position))
            cand = &m;
        }
        if (cand) {
          const double yield_gap = std::max(
              cand->position - v.front() - net_.yield_margin, kMinClearance / 2);
          a = std::min(a, idm_accel(v.speed, yield_gap, cand->speed, p));
        }
      }
      auto it = controlled.find(v.id);
      if (it != controlled.end()) {
        used++;
        // Safety override: a command may slow the vehicle below its
        // car-following acceleration but never push it above.
        a = std::min(it->second, a);
      }
      v.accel = a;
    }
  }
  if (used != controlled.size()) {
    throw std::invalid_argument(
        "Simulation::step: controlled map references vehicles not on road");
  }
}

void Simulation::integrate_pass() {
  for (int l = 0; l < net_.lane_count; ++l) {
    auto& lane = lanes_[l];
    double leader_new_pos = kNoLeader;
    for (Vehicle& v : lane) {
      double new_speed = std::clamp(v.speed + v.accel * dt_, 0.0, v.v_max);
      double new_pos = v.position + new_speed * dt_;
      double bound = leader_new_pos - v.length - kMinClearance;
      if (l == net_.dropped_lane())
        bound = std::min(bound, net_.merge_point - v.length - kMinClearance);
      if (new_pos > bound) {
        new_pos = std::max(bound, v.position);
        new_speed = (new_pos - v.position) / dt_;
      }
      v.accel = (new_speed - v.speed) / dt_;  // effective accel after clamps
      v.speed = new_speed;
      v.position = new_pos;
      leader_new_pos = new_pos;
    }
  }
}

void Simulation::step(const std::map<std::int64_t, double>& controlled) {
  spawn_pass();
  merge_pass();
  accel_pass(controlled);
  integrate_pass();
  time_ += dt_;
  for (auto& lane : lanes_) {
    while (!lane.empty() && lane.front().position >= net_.exit_position()) {
      Vehicle& v = lane.front();
      v.exit_time = time_;
      exited_tt_sum_ += time_ - v.entry_time;
      ++exited_total_;
      lane.erase(lane.begin());
    }
  }
}

void Simulation::check_invariants() const {
  for (int l = 0; l < net_.lane_count; ++l) {
    const auto& lane = lanes_[l];
    for (std::size_t i = 0; i < lane.size(); ++i) {
      const Vehicle& v = lane[i];
      if (v.speed < 0.0 || v.speed > v.v_max + 1e-9)
        throw std::logic_error("invariant: speed out of [0, v_max]");
      if (i > 0 && v.front() > lane[i - 1].position + 1e-9)
        throw std::logic_error("invariant: overlap in lane");
      if (l == net_.dropped_lane() && v.position > net_.merge_point)
        throw std::logic_error("invariant: vehicle past merge point in dropped lane");
    }
  }
  const std::int64_t accounted = static_cast<std::int64_t>(on_road_count()) +
                                 exited_total_ +
                                 static_cast<std::int64_t>(spawn_queue_.size());
  if (accounted != arrivals_total_)
    throw std::logic_error("invariant: vehicle conservation violated");
}

}  // namespace mergeflow
