#include "edgeyolo/edgecloud/live.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "edgeyolo/netdef/weights.hpp"
#include "edgeyolo/postprocess/detect.hpp"
#include "edgeyolo/rng.hpp"
#include "edgeyolo/training/sgd.hpp"
#include "edgeyolo/training/targets.hpp"

namespace edgeyolo::edgecloud {

namespace {

class Writer {
 public:
  template <class T>
  void put(T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ProtocolError(ProtocolError::Code::Truncated, "frame payload truncated");
    }
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const FramePayload& f) {
  const Shape s = f.sample.image.shape();
  if (s.n != 1 || s.c != 3 || s.w > 0xFFFF || s.h > 0xFFFF) {
    throw std::invalid_argument("frame must be one 3-channel image");
  }
  Writer w;
  w.put<std::uint64_t>(f.frame_id);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(s.w));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(s.h));
  for (float v : f.sample.image.values()) {
    w.out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.sample.gts.size()));
  for (const auto& g : f.sample.gts) {
    w.put<float>(static_cast<float>(g.box.cx));
    w.put<float>(static_cast<float>(g.box.cy));
    w.put<float>(static_cast<float>(g.box.w));
    w.put<float>(static_cast<float>(g.box.h));
    w.put<std::int32_t>(g.class_id);
  }
  return std::move(w.out);
}

FramePayload decode_frame(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  FramePayload f;
  f.frame_id = r.get<std::uint64_t>();
  const int w = r.get<std::uint16_t>();
  const int h = r.get<std::uint16_t>();
  f.sample.image = Tensor<float>(Shape{1, 3, h, w});
  const auto px = r.take(f.sample.image.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    f.sample.image.values()[i] = px[i] / 255.0f;
  }
  const std::uint32_t n = r.get<std::uint32_t>();
  r.need(static_cast<std::size_t>(n) * 20);
  for (std::uint32_t i = 0; i < n; ++i) {
    post::GroundTruth g;
    g.box.cx = r.get<float>();
    g.box.cy = r.get<float>();
    g.box.w = r.get<float>();
    g.box.h = r.get<float>();
    g.class_id = r.get<std::int32_t>();
    f.sample.gts.push_back(g);
  }
  if (!r.done()) {
    throw ProtocolError(ProtocolError::Code::Malformed, "bytes after frame payload");
  }
  return f;
}

std::vector<std::uint8_t> encode_ack(std::uint64_t frame_id) {
  Writer w;
  w.put(frame_id);
  return std::move(w.out);
}

std::uint64_t decode_ack(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  return r.get<std::uint64_t>();
}

namespace {

std::vector<post::Detection> detect(const netdef::Model<float>& m, const Tensor<float>& image) {
  return post::soft_nms(post::decode_all(m.forward(image), m.graph()));
}

}  // namespace

EdgeNode::EdgeNode(netdef::Model<float> model, EdgeConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {}

void EdgeNode::note(std::string line) { log_.push_back(std::move(line)); }

PushOutcome EdgeNode::handle_push(const Message& push) {
  if (push.version <= version_) {
    ++stats_.stale_pushes;
    note("rejected weights v" + std::to_string(push.version) + ": not newer than v" +
         std::to_string(version_));
    return PushOutcome::StaleVersion;
  }
  netdef::Model<float> next = model_;
  try {
    netdef::deserialize_weights(next, push.payload);
  } catch (const netdef::WeightsError& e) {
    ++stats_.bad_pushes;
    note(std::string("rejected weights v") + std::to_string(push.version) + ": " + e.what());
    return PushOutcome::BadWeights;
  }
  model_ = std::move(next);
  version_ = push.version;
  ++stats_.applied;
  note("applied weights v" + std::to_string(version_));
  return PushOutcome::Applied;
}

void EdgeNode::dispatch(const Channel::Inbound& in) {
  if (const auto* err = std::get_if<ProtocolError>(&in)) {
    ++stats_.checksum_errors;
    note(std::string("dropped frame: ") + err->what());
    return;
  }
  const Message& m = std::get<Message>(in);
  switch (m.type) {
    case MessageType::Ack:
      if (decode_ack(m.payload) == awaiting_ack_) acked_ = true;
      break;
    case MessageType::WeightPush:
      handle_push(m);
      break;
    case MessageType::DetectResult:
      result_ = true;
      break;
    default:
      note("ignored " + std::string(type_name(m.type)));
  }
}

EdgeStats EdgeNode::run(const Connector& connect) {
  stats_ = {};
  queue_.clear();
  std::unique_ptr<Channel> ch;
  const auto open = [&] {
    for (;;) {
      try {
        ch.reset();
        ch = std::make_unique<Channel>(connect());
        return;
      } catch (const TransportError& e) {
        if (++stats_.reconnects > cfg_.max_reconnects) throw;
        note(std::string("connect failed: ") + e.what());
      }
    }
  };
  const auto wait_for = [&](bool& flag) {
    while (!flag) {
      auto in = ch->receive(cfg_.reply_timeout);
      if (!in) throw TransportError("no reply within timeout");
      dispatch(*in);
    }
  };
  // Runs `step` on the current channel, reconnecting on transport failure.
  const auto resilient = [&](const std::function<void()>& step) {
    for (;;) {
      try {
        step();
        return;
      } catch (const TransportError& e) {
        if (++stats_.reconnects > cfg_.max_reconnects) throw;
        note(std::string("connection lost: ") + e.what() + "; reconnecting");
        open();
      }
    }
  };

  open();
  Rng rng(cfg_.seed);
  for (int i = 0; i < cfg_.frames; ++i) {
    FramePayload f{static_cast<std::uint64_t>(i), training::make_sample(rng, cfg_.shapes)};
    stats_.local_detections += static_cast<int>(detect(model_, f.sample.image).size());
    ++stats_.frames;
    if (cfg_.remote_detect) {
      resilient([&] {
        result_ = false;
        ch->send({MessageType::DetectRequest, version_, encode_frame(f)});
        wait_for(result_);
      });
      ++stats_.remote_results;
    }
    queue_.push_back(std::move(f));
    const bool phase_end = (i + 1) % std::max(cfg_.active_frames, 1) == 0;
    if (phase_end || i + 1 == cfg_.frames) {
      note("idle: uploading " + std::to_string(queue_.size()) + " frames");
      resilient([&] {
        while (!queue_.empty()) {
          awaiting_ack_ = queue_.front().frame_id;
          acked_ = false;
          ch->send({MessageType::FrameUpload, version_, encode_frame(queue_.front())});
          wait_for(acked_);
          queue_.pop_front();
          ++stats_.acked;
        }
      });
    }
  }
  ch.reset();
  return stats_;
}

CloudNode::CloudNode(netdef::Model<float> model, CloudConfig cfg)
    : model_(std::move(model)), cfg_(std::move(cfg)) {}

CloudStats CloudNode::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

std::uint32_t CloudNode::version() const {
  std::lock_guard lock(mu_);
  return version_;
}

void CloudNode::retrain() {
  Rng rng(cfg_.seed + version_);
  training::OptimizerConfig opt;
  opt.eta = cfg_.eta;
  opt.batch = cfg_.batch;
  for (int s = 0; s < cfg_.steps_per_retrain; ++s) {
    std::vector<training::Sample> batch;
    std::vector<training::TargetAssignment> targets;
    for (int b = 0; b < cfg_.batch; ++b) {
      batch.push_back(samples_[rng.below(samples_.size())]);
      targets.push_back(training::assign_targets(batch.back().gts, model_.graph()));
    }
    training::backward_and_step(model_, training::stack_images(batch, 0, batch.size()),
                                targets, opt, cfg_.loss);
  }
  ++stats_.retrains;
}

void CloudNode::serve(std::unique_ptr<ByteStream> stream) {
  Channel ch(std::move(stream));
  for (;;) {
    std::optional<Channel::Inbound> in;
    try {
      in = ch.receive(std::chrono::hours(24));
    } catch (const TransportError&) {
      return;
    }
    if (!in) continue;
    std::lock_guard lock(mu_);
    if (std::holds_alternative<ProtocolError>(*in)) {
      ++stats_.checksum_errors;
      continue;
    }
    const Message& m = std::get<Message>(*in);
    try {
      if (m.type == MessageType::FrameUpload) {
        FramePayload f = decode_frame(m.payload);
        if (!seen_.insert(f.frame_id).second) {
          ++stats_.duplicates;
        } else {
          samples_.push_back(std::move(f.sample));
          ++stats_.frames;
          if (stats_.frames % cfg_.retrain_every == 0) {
            try {
              netdef::Model<float> keep = model_;
              try {
                retrain();
              } catch (const training::TrainingError&) {
                model_ = std::move(keep);
                throw;
              }
              ++version_;
              ch.send({MessageType::WeightPush, version_, netdef::serialize_weights(model_)});
            } catch (const training::TrainingError&) {
              ++stats_.failed_retrains;
            }
          }
        }
        ch.send({MessageType::Ack, version_, encode_ack(f.frame_id)});
      } else if (m.type == MessageType::DetectRequest) {
        const FramePayload f = decode_frame(m.payload);
        std::ostringstream out;
        post::write_jsonl(out, std::to_string(f.frame_id), detect(model_, f.sample.image));
        const std::string text = out.str();
        ++stats_.detections;
        ch.send({MessageType::DetectResult, version_, {text.begin(), text.end()}});
      }
    } catch (const TransportError&) {
      return;
    } catch (const ProtocolError&) {
      ++stats_.bad_payloads;
    }
  }
}

}  // namespace edgeyolo::edgecloud
