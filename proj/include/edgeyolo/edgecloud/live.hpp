#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "edgeyolo/edgecloud/transport.hpp"
#include "edgeyolo/netdef/model.hpp"
#include "edgeyolo/training/loss.hpp"
#include "edgeyolo/training/shapes.hpp"

namespace edgeyolo::edgecloud {

/// FRAME_UPLOAD / DETECT_REQUEST payload: frame id u64, width u16,
/// height u16, RGB bytes (planar), label count u32, then per label
/// cx, cy, w, h as f32 and class as i32. Little-endian.
struct FramePayload {
  std::uint64_t frame_id = 0;
  training::Sample sample;
};
std::vector<std::uint8_t> encode_frame(const FramePayload& f);
FramePayload decode_frame(std::span<const std::uint8_t> bytes);

/// ACK payload: the acknowledged frame id (u64).
std::vector<std::uint8_t> encode_ack(std::uint64_t frame_id);
std::uint64_t decode_ack(std::span<const std::uint8_t> bytes);

enum class PushOutcome { Applied, StaleVersion, BadWeights };

struct EdgeConfig {
  int frames = 10;
  /// Frames captured per ACTIVE phase; the queue is uploaded in the IDLE
  /// phase that follows.
  int active_frames = 5;
  /// Ask the cloud for detections of every frame (cloud-computing path).
  bool remote_detect = false;
  std::uint64_t seed = 1;
  training::ShapesConfig shapes;
  std::chrono::milliseconds reply_timeout{60000};
  int max_reconnects = 5;
};

struct EdgeStats {
  int frames = 0;
  int local_detections = 0;
  int remote_results = 0;
  int acked = 0;
  int applied = 0;
  int stale_pushes = 0;
  int bad_pushes = 0;
  int checksum_errors = 0;
  int reconnects = 0;
};

using Connector = std::function<std::unique_ptr<ByteStream>()>;

/// Edge state machine: detect locally while ACTIVE, upload the stored frames
/// while IDLE (a frame leaves the queue only once acknowledged, so a broken
/// connection resumes where it stopped), and swap in pushed weights.
class EdgeNode {
 public:
  EdgeNode(netdef::Model<float> model, EdgeConfig cfg);

  EdgeStats run(const Connector& connect);

  /// Version check (strictly newer than the current one), then an
  /// all-or-nothing load into a copy of the model.
  PushOutcome handle_push(const Message& push);

  const netdef::Model<float>& model() const { return model_; }
  std::uint32_t version() const { return version_; }
  const std::vector<std::string>& log() const { return log_; }

 private:
  void note(std::string line);
  void dispatch(const Channel::Inbound& in);

  netdef::Model<float> model_;
  EdgeConfig cfg_;
  std::uint32_t version_ = 0;
  std::deque<FramePayload> queue_;
  std::uint64_t awaiting_ack_ = 0;
  bool acked_ = false;
  bool result_ = false;
  EdgeStats stats_;
  std::vector<std::string> log_;
};

struct CloudConfig {
  /// New frames per retrain cycle.
  int retrain_every = 5;
  int steps_per_retrain = 4;
  int batch = 4;
  double eta = 0.01;
  training::LossConfig loss;
  std::uint64_t seed = 7;
};

struct CloudStats {
  int frames = 0;
  int duplicates = 0;
  int retrains = 0;
  int failed_retrains = 0;
  int detections = 0;
  int checksum_errors = 0;
  int bad_payloads = 0;
};

/// Cloud state machine: stores uploaded frames (labels come with them in
/// demo mode), fine-tunes every retrain_every new frames and pushes the new
/// weights before acknowledging the frame that triggered the cycle.
class CloudNode {
 public:
  CloudNode(netdef::Model<float> model, CloudConfig cfg);

  /// Serves one connection until the peer closes it.
  void serve(std::unique_ptr<ByteStream> stream);

  CloudStats stats() const;
  std::uint32_t version() const;

 private:
  void retrain();

  mutable std::mutex mu_;
  netdef::Model<float> model_;
  CloudConfig cfg_;
  std::uint32_t version_ = 0;
  std::vector<training::Sample> samples_;
  std::set<std::uint64_t> seen_;
  CloudStats stats_;
};

}  // namespace edgeyolo::edgecloud
