#include "edgeyolo/edgecloud/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "edgeyolo/rng.hpp"

namespace edgeyolo::edgecloud {

void NetworkModel::validate() const {
  if (!(uplink_bps > 0) || !(downlink_bps > 0)) {
    throw std::invalid_argument("link rates must be positive");
  }
  if (!(rtt_s >= 0) || !(jitter_s >= 0)) {
    throw std::invalid_argument("rtt and jitter must be non-negative");
  }
  if (!(loss_rate >= 0 && loss_rate <= 1)) {
    throw std::invalid_argument("loss_rate must lie in [0, 1]");
  }
}

void EdgeProfile::validate() const {
  if (!(infer_s > 0) || !(capture_fps > 0) || !(duty_period_s > 0)) {
    throw std::invalid_argument("edge profile " + name + ": rates and latencies must be positive");
  }
  if (!(duty_active > 0 && duty_active < 1)) {
    throw std::invalid_argument("edge profile " + name + ": duty_active must lie in (0, 1)");
  }
  if (store_every < 1) {
    throw std::invalid_argument("edge profile " + name + ": store_every must be >= 1");
  }
}

EdgeProfile xavier_profile() {
  EdgeProfile p;
  p.name = "xavier";
  p.infer_s = 0.0376;
  return p;
}

EdgeProfile nano_profile() {
  EdgeProfile p;
  p.name = "nano";
  p.infer_s = 0.0877;
  return p;
}

Profile parse_profile(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  Profile p;
  EdgeProfile& e = p.edge;
  e.name = j.value("name", e.name);
  e.infer_s = j.value("infer_s", e.infer_s);
  e.capture_fps = j.value("capture_fps", e.capture_fps);
  e.duty_active = j.value("duty_active", e.duty_active);
  e.duty_period_s = j.value("duty_period_s", e.duty_period_s);
  e.store_every = j.value("store_every", e.store_every);
  if (j.contains("network")) {
    const auto& n = j.at("network");
    NetworkModel& m = p.net;
    m.uplink_bps = n.value("uplink_bps", m.uplink_bps);
    m.downlink_bps = n.value("downlink_bps", m.downlink_bps);
    m.rtt_s = n.value("rtt_s", m.rtt_s);
    m.loss_rate = n.value("loss_rate", m.loss_rate);
    m.jitter_s = n.value("jitter_s", m.jitter_s);
  }
  e.validate();
  p.net.validate();
  return p;
}

Profile load_profile(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw std::runtime_error("cannot open profile " + path.string());
  }
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_profile(ss.str());
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

double SimTrace::mean_delay() const {
  double sum = 0.0;
  int n = 0;
  for (double d : delays) {
    if (std::isfinite(d)) {
      sum += d;
      ++n;
    }
  }
  return n > 0 ? sum / n : 0.0;
}

double SimTrace::p95_delay() const {
  std::vector<double> v;
  for (double d : delays) {
    if (std::isfinite(d)) v.push_back(d);
  }
  if (v.empty()) {
    return 0.0;
  }
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * v.size()));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

namespace {

constexpr int kMaxAttempts = 8;

class Sim {
 public:
  explicit Sim(const Scenario& s) : s_(s), rng_(s.seed) {}

  SimTrace run() {
    trace_.delays.assign(std::max(s_.n_frames, 0), std::numeric_limits<double>::infinity());
    if (s_.n_frames > 0) {
      at(0.0, [this] { capture(0, 0.0); });
    }
    while (!queue_.empty()) {
      Event e = queue_.top();
      queue_.pop();
      now_ = e.time;
      e.fn();
    }
    return std::move(trace_);
  }

 private:
  struct Event {
    double time;
    std::uint64_t seq;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  /// One serialized link: transfers occupy it back to back in request order.
  struct Link {
    double bps;
    double free_at = 0.0;
  };

  void at(double t, std::function<void()> fn) { queue_.push({t, seq_++, std::move(fn)}); }

  void log(const char* node, const char* event, std::int64_t frame, double delay = -1.0) {
    trace_.events.push_back({now_, node, event, frame, delay});
  }

  /// Occupies the link from max(now, free) for bytes*8/bps per attempt and
  /// returns the arrival time (plus rtt/2 and jitter), or infinity when every
  /// attempt was lost.
  double transfer(Link& link, std::uint64_t bytes, double* start) {
    const double per = static_cast<double>(bytes) * 8.0 / link.bps;
    int attempts = 1;
    bool delivered = true;
    if (s_.net.loss_rate > 0) {
      while (rng_.bernoulli(s_.net.loss_rate)) {
        if (++attempts > kMaxAttempts) {
          attempts = kMaxAttempts;
          delivered = false;
          break;
        }
      }
    }
    *start = std::max(now_, link.free_at);
    link.free_at = *start + per * attempts;
    if (!delivered) {
      return std::numeric_limits<double>::infinity();
    }
    const double jitter = s_.net.jitter_s > 0 ? rng_.uniform(0, s_.net.jitter_s) : 0.0;
    return link.free_at + s_.net.rtt_s / 2 + jitter;
  }

  bool active(double t) const {
    const double period = s_.edge.duty_period_s;
    const double phase = t - std::floor(t / period) * period;
    return phase < s_.edge.duty_active * period;
  }
  double next_active(double t) const {
    return active(t) ? t : (std::floor(t / s_.edge.duty_period_s) + 1) * s_.edge.duty_period_s;
  }
  double next_idle(double t) const {
    if (!active(t)) return t;
    const double period = s_.edge.duty_period_s;
    return std::floor(t / period) * period + s_.edge.duty_active * period;
  }

  void lost(std::int64_t id) { log("link", "lost", id); }

  // Shared by both paths.
  void capture(int id, double t0) {
    log("edge", "capture", id);
    if (s_.path == SimPath::Cloud) {
      cloud_capture(id, t0);
    } else {
      ecc_capture(id, t0);
    }
    if (id + 1 < s_.n_frames) {
      double next;
      if (s_.path == SimPath::Cloud) {
        next = (id + 1) / s_.edge.capture_fps;
      } else {
        // The camera waits for the detector and for the next ACTIVE window.
        next = next_active(t0 + std::max(1.0 / s_.edge.capture_fps, s_.edge.infer_s));
      }
      at(next, [this, id, next] { capture(id + 1, next); });
    }
  }

  void cloud_capture(int id, double t0) {
    double start;
    const double arrive = transfer(up_, s_.frame_bytes, &start);
    at(start, [this, id] { log("link", "upload_start", id); });
    if (!std::isfinite(arrive)) {
      at(up_.free_at, [this, id] { lost(id); });
      return;
    }
    at(arrive, [this, id, t0] {
      log("cloud", "received", id);
      const double begin = std::max(now_, cloud_free_);
      cloud_free_ = begin + s_.cloud_infer_s;
      at(cloud_free_, [this, id, t0] {
        log("cloud", "infer_done", id);
        double dstart;
        const double back = transfer(down_, s_.result_bytes, &dstart);
        if (!std::isfinite(back)) {
          at(down_.free_at, [this, id] { lost(id); });
          return;
        }
        at(back, [this, id, t0] {
          trace_.delays[id] = now_ - t0;
          log("edge", "delivered", id, now_ - t0);
        });
      });
    });
  }

  void ecc_capture(int id, double t0) {
    at(t0 + s_.edge.infer_s, [this, id, t0] {
      trace_.delays[id] = now_ - t0;
      log("edge", "delivered", id, now_ - t0);
    });
    if (id % s_.edge.store_every == 0) {
      log("edge", "stored", id);
      pending_.push_back(id);
      pump_uploads();
    }
  }

  void pump_uploads() {
    if (uploading_ || pending_.empty()) {
      return;
    }
    uploading_ = true;
    const double start = next_idle(std::max(now_, up_.free_at));
    at(start, [this] {
      const int id = pending_.front();
      pending_.pop_front();
      double begin;
      const double arrive = transfer(up_, s_.frame_bytes, &begin);
      log("link", "upload_start", id);
      at(up_.free_at, [this] {
        uploading_ = false;
        pump_uploads();
      });
      if (!std::isfinite(arrive)) {
        at(up_.free_at, [this, id] { lost(id); });
        return;
      }
      at(arrive, [this, id] { cloud_receive(id); });
    });
  }

  void cloud_receive(int id) {
    log("cloud", "received", id);
    ++trace_.uploaded;
    if (trace_.uploaded % s_.retrain_every != 0) {
      return;
    }
    const double begin = std::max(now_, cloud_free_);
    cloud_free_ = begin + s_.cloud_retrain_s;
    at(begin, [this] { log("cloud", "retrain_start", -1); });
    at(cloud_free_, [this] {
      const int version = ++cloud_version_;
      log("cloud", "retrain_done", -1);
      double start;
      const double arrive = transfer(down_, s_.weight_bytes, &start);
      at(start, [this] { log("link", "weight_push_start", -1); });
      if (!std::isfinite(arrive)) {
        at(down_.free_at, [this] { lost(-1); });
        return;
      }
      at(arrive, [this, version] {
        trace_.edge_version = std::max(trace_.edge_version, version);
        log("edge", "weights_applied", -1);
      });
    });
  }

  const Scenario& s_;
  Rng rng_;
  SimTrace trace_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  Link up_{s_.net.uplink_bps};
  Link down_{s_.net.downlink_bps};
  double cloud_free_ = 0.0;
  int cloud_version_ = 0;
  std::deque<int> pending_;
  bool uploading_ = false;
};

}  // namespace

SimTrace run_sim(const Scenario& s) {
  s.net.validate();
  s.edge.validate();
  if (!(s.cloud_infer_s > 0) || !(s.cloud_retrain_s > 0) || s.retrain_every < 1 ||
      s.n_frames < 0) {
    throw std::invalid_argument("scenario durations and counts must be positive");
  }
  return Sim(s).run();
}

void write_trace_csv(std::ostream& out, const SimTrace& trace) {
  out << "time_s,node,event,frame_id,delay_s\n";
  char buf[64];
  for (const TraceEvent& e : trace.events) {
    std::snprintf(buf, sizeof buf, "%.9f", e.time_s);
    out << buf << ',' << e.node << ',' << e.event << ',';
    if (e.frame_id >= 0) out << e.frame_id;
    out << ',';
    if (e.delay_s >= 0) {
      std::snprintf(buf, sizeof buf, "%.9f", e.delay_s);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace edgeyolo::edgecloud
