#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace edgeyolo::edgecloud {

struct NetworkModel {
  double uplink_bps = 61.4e6;
  double downlink_bps = 20.35e6;
  double rtt_s = 0.014;
  /// Probability that a transfer is lost and sent again.
  double loss_rate = 0.0;
  /// Each transfer gets an extra uniform [0, jitter_s) delay.
  double jitter_s = 0.0;

  void validate() const;
};

/// Edge device: camera rate, detector latency and the ACTIVE/IDLE cycle.
struct EdgeProfile {
  std::string name = "xavier";
  /// Seconds per frame of local inference.
  double infer_s = 0.0376;
  double capture_fps = 30.0;
  /// Fraction of every duty period spent ACTIVE (capturing and detecting).
  double duty_active = 0.8;
  double duty_period_s = 10.0;
  /// Every n-th captured frame is stored for upload.
  int store_every = 8;

  void validate() const;
};

EdgeProfile xavier_profile();
EdgeProfile nano_profile();

/// Reads {"name", "infer_s", "capture_fps", "duty_active", "duty_period_s",
/// "store_every", "network": {...}}; absent keys keep their defaults.
struct Profile {
  EdgeProfile edge;
  NetworkModel net;
};
Profile parse_profile(const std::string& json_text);
Profile load_profile(const std::filesystem::path& path);

enum class SimPath { Ecc, Cloud };

struct Scenario {
  SimPath path = SimPath::Cloud;
  NetworkModel net;
  EdgeProfile edge;
  /// One raw 416x416x3 picture.
  std::uint64_t frame_bytes = 519168;
  std::uint64_t result_bytes = 1024;
  int n_frames = 100;
  double cloud_infer_s = 0.002956;
  double cloud_retrain_s = 5.0;
  /// Uploaded frames per retrain cycle.
  int retrain_every = 32;
  /// Size of a pushed weight blob.
  std::uint64_t weight_bytes = 26'000'000;
  std::uint64_t seed = 0;
};

struct TraceEvent {
  double time_s = 0.0;
  std::string node;
  std::string event;
  /// -1 for events not tied to a frame.
  std::int64_t frame_id = -1;
  /// End-to-end delay on "delivered" events, negative otherwise.
  double delay_s = -1.0;

  bool operator==(const TraceEvent&) const = default;
};

struct SimTrace {
  std::vector<TraceEvent> events;
  /// Per captured frame, capture to detection result, indexed by frame id.
  std::vector<double> delays;
  /// Model version on the edge at the end.
  int edge_version = 0;
  int uploaded = 0;

  double mean_delay() const;
  double p95_delay() const;
};

/// Single-threaded discrete-event run. CLOUD: every frame crosses one FIFO
/// uplink (bytes*8/uplink + rtt/2), waits for the FIFO cloud detector, and
/// its result crosses the FIFO downlink (bytes*8/downlink + rtt/2). ECC: the
/// camera is paced by the local detector and runs only while ACTIVE; stored
/// frames upload only while IDLE; every retrain_every uploads the cloud
/// retrains and pushes weights, which the edge swaps in on arrival.
SimTrace run_sim(const Scenario& s);

/// Columns time_s,node,event,frame_id,delay_s (empty cells when absent).
void write_trace_csv(std::ostream& out, const SimTrace& trace);

}  // namespace edgeyolo::edgecloud
