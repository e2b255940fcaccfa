#include <doctest.h>

#include <algorithm>
#include <thread>

#include "edgeyolo/edgecloud/live.hpp"
#include "edgeyolo/netdef/weights.hpp"
#include "edgeyolo/training/toy.hpp"

using namespace edgeyolo;
using namespace edgeyolo::edgecloud;
using namespace std::chrono_literals;

namespace {

netdef::Model<float> toy_model(std::uint64_t seed = 1) {
  training::ToyConfig cfg;
  cfg.seed = seed;
  return training::make_toy_model(cfg);
}

/// Flips one payload byte of every WEIGHT_PUSH frame written through it.
class CorruptPushes : public ByteStream {
 public:
  explicit CorruptPushes(std::unique_ptr<ByteStream> inner) : inner_(std::move(inner)) {}
  void write(std::span<const std::uint8_t> bytes) override {
    std::vector<std::uint8_t> copy(bytes.begin(), bytes.end());
    if (copy.size() > kFrameOverhead && copy[4] == static_cast<std::uint8_t>(MessageType::WeightPush)) {
      copy[kHeaderBytes + 7] ^= 0x40;
    }
    inner_->write(copy);
  }
  std::size_t read(std::span<std::uint8_t> buf) override { return inner_->read(buf); }
  void close() override { inner_->close(); }

 private:
  std::unique_ptr<ByteStream> inner_;
};

/// Closes the connection in place of its `nth` write.
class CutAtWrite : public ByteStream {
 public:
  CutAtWrite(std::unique_ptr<ByteStream> inner, int nth) : inner_(std::move(inner)), left_(nth) {}
  void write(std::span<const std::uint8_t> bytes) override {
    if (--left_ == 0) {
      inner_->close();
      throw TransportError("cut");
    }
    inner_->write(bytes);
  }
  std::size_t read(std::span<std::uint8_t> buf) override { return inner_->read(buf); }
  void close() override { inner_->close(); }

 private:
  std::unique_ptr<ByteStream> inner_;
  int left_;
};

/// Connector that pairs every new edge connection with a cloud serve thread.
struct Loopback {
  explicit Loopback(CloudNode& c) : cloud(c) {}

  CloudNode& cloud;
  std::vector<std::thread> threads;
  std::function<std::unique_ptr<ByteStream>(std::unique_ptr<ByteStream>)> wrap_edge =
      [](auto s) { return s; };
  std::function<std::unique_ptr<ByteStream>(std::unique_ptr<ByteStream>)> wrap_cloud =
      [](auto s) { return s; };

  Connector connector() {
    return [this] {
      auto [edge, cloud_end] = make_pipe_pair();
      threads.emplace_back(
          [this, s = wrap_cloud(std::move(cloud_end))]() mutable { cloud.serve(std::move(s)); });
      return wrap_edge(std::move(edge));
    };
  }
  ~Loopback() {
    for (auto& t : threads) t.join();
  }
};

}  // namespace

TEST_CASE("frame payload round trip") {
  Rng rng(1);
  training::ShapesConfig shapes;
  for (int i = 0; i < 20; ++i) {
    FramePayload f{static_cast<std::uint64_t>(i) << 40, training::make_sample(rng, shapes)};
    const auto bytes = encode_frame(f);
    const FramePayload back = decode_frame(bytes);
    CHECK(back.frame_id == f.frame_id);
    REQUIRE(back.sample.image.shape() == f.sample.image.shape());
    for (std::size_t k = 0; k < f.sample.image.size(); ++k) {
      REQUIRE(std::abs(back.sample.image.values()[k] - f.sample.image.values()[k]) <=
              0.5f / 255 + 1e-6f);
    }
    REQUIRE(back.sample.gts.size() == f.sample.gts.size());
    for (std::size_t k = 0; k < f.sample.gts.size(); ++k) {
      CHECK(back.sample.gts[k].box == f.sample.gts[k].box);
      CHECK(back.sample.gts[k].class_id == f.sample.gts[k].class_id);
    }
    CHECK(encode_frame(back) == bytes);
    CHECK_THROWS_AS(decode_frame({bytes.data(), bytes.size() - 1}), ProtocolError);
  }
  CHECK(decode_ack(encode_ack(77)) == 77);
}

TEST_CASE("channel over a pipe and over tcp") {
  for (bool tcp : {false, true}) {
    std::unique_ptr<ByteStream> a, b;
    std::unique_ptr<TcpListener> listener;
    if (tcp) {
      listener = std::make_unique<TcpListener>(0);
      std::thread t([&] { b = listener->accept(); });
      a = tcp_connect("127.0.0.1", listener->port());
      t.join();
    } else {
      std::tie(a, b) = make_pipe_pair();
    }
    Channel ca(std::move(a)), cb(std::move(b));
    Rng rng(2);
    std::vector<Message> sent;
    for (int i = 0; i < 50; ++i) {
      Message m{MessageType::FrameUpload, static_cast<std::uint32_t>(i), {}};
      m.payload.resize(rng.below(100000));
      for (auto& x : m.payload) x = static_cast<std::uint8_t>(rng.next());
      ca.send(m);
      sent.push_back(std::move(m));
    }
    for (const Message& m : sent) {
      auto in = cb.receive(10s);
      REQUIRE(in.has_value());
      REQUIRE(std::get<Message>(*in) == m);
    }
    CHECK_FALSE(cb.receive(10ms).has_value());
    ca.close();
    CHECK_THROWS_AS(cb.receive(10s), TransportError);
  }
}

TEST_CASE("a checksum error skips one frame and keeps the channel") {
  auto [a, b] = make_pipe_pair();
  Channel cb(std::move(b));
  auto bad = encode_message({MessageType::Ack, 1, {1, 2, 3}});
  bad[kHeaderBytes] ^= 1;
  a->write(bad);
  a->write(encode_message({MessageType::Ack, 2, {}}));
  auto first = cb.receive(10s);
  REQUIRE(first.has_value());
  REQUIRE(std::holds_alternative<ProtocolError>(*first));
  CHECK(std::get<ProtocolError>(*first).code() == ProtocolError::Code::BadChecksum);
  auto second = cb.receive(10s);
  REQUIRE(second.has_value());
  CHECK(std::get<Message>(*second).version == 2);
  const std::vector<std::uint8_t> garbage(32, 'X');
  a->write(garbage);
  CHECK_THROWS_AS(cb.receive(10s), TransportError);
}

TEST_CASE("loopback pair: the edge picks up the retrained weights") {
  CloudNode cloud(toy_model(), CloudConfig{});
  EdgeConfig cfg;
  cfg.frames = 10;
  cfg.active_frames = 5;
  EdgeNode edge(toy_model(), cfg);
  const auto initial = netdef::serialize_weights(edge.model());
  EdgeStats stats;
  {
    Loopback loop(cloud);
    stats = edge.run(loop.connector());
  }
  CHECK(stats.frames == 10);
  CHECK(stats.acked == 10);
  CHECK(stats.applied == 2);
  CHECK(edge.version() == 2);
  CHECK(cloud.version() == 2);
  CHECK(cloud.stats().frames == 10);
  CHECK(cloud.stats().retrains == 2);
  CHECK(netdef::serialize_weights(edge.model()) != initial);
  CHECK(std::find(edge.log().begin(), edge.log().end(), "applied weights v1") != edge.log().end());
}

TEST_CASE("identical weights change only the version; stale versions are rejected") {
  EdgeNode edge(toy_model(), {});
  const auto before = netdef::serialize_weights(edge.model());
  CHECK(edge.handle_push({MessageType::WeightPush, 1, before}) == PushOutcome::Applied);
  CHECK(edge.version() == 1);
  CHECK(netdef::serialize_weights(edge.model()) == before);

  const auto other = netdef::serialize_weights(toy_model(5));
  CHECK(edge.handle_push({MessageType::WeightPush, 1, other}) == PushOutcome::StaleVersion);
  CHECK(edge.handle_push({MessageType::WeightPush, 0, other}) == PushOutcome::StaleVersion);
  CHECK(edge.version() == 1);
  CHECK(netdef::serialize_weights(edge.model()) == before);
  CHECK(edge.handle_push({MessageType::WeightPush, 3, other}) == PushOutcome::Applied);
  CHECK(edge.version() == 3);
  CHECK(netdef::serialize_weights(edge.model()) == other);
}

TEST_CASE("weights for another graph are rejected whole") {
  EdgeNode edge(toy_model(), {});
  const auto before = netdef::serialize_weights(edge.model());
  training::ToyConfig wide;
  wide.width_divisor = 2;
  const auto foreign = netdef::serialize_weights(training::make_toy_model(wide));
  CHECK(edge.handle_push({MessageType::WeightPush, 1, foreign}) == PushOutcome::BadWeights);
  auto truncated = before;
  truncated.resize(truncated.size() - 3);
  CHECK(edge.handle_push({MessageType::WeightPush, 2, truncated}) == PushOutcome::BadWeights);
  CHECK(edge.version() == 0);
  CHECK(netdef::serialize_weights(edge.model()) == before);
}

TEST_CASE("a corrupted push leaves the edge on its old weights") {
  CloudNode cloud(toy_model(), CloudConfig{});
  EdgeConfig cfg;
  cfg.frames = 5;
  EdgeNode edge(toy_model(), cfg);
  const auto before = netdef::serialize_weights(edge.model());
  EdgeStats stats;
  {
    Loopback loop(cloud);
    loop.wrap_cloud = [](auto s) { return std::make_unique<CorruptPushes>(std::move(s)); };
    stats = edge.run(loop.connector());
  }
  CHECK(cloud.version() == 1);
  CHECK(stats.checksum_errors == 1);
  CHECK(stats.applied == 0);
  CHECK(stats.acked == 5);
  CHECK(edge.version() == 0);
  CHECK(netdef::serialize_weights(edge.model()) == before);
  CHECK(std::any_of(edge.log().begin(), edge.log().end(), [](const std::string& l) {
    return l.find("checksum") != std::string::npos;
  }));
}

TEST_CASE("a dropped connection resumes the upload queue") {
  CloudNode cloud(toy_model(), CloudConfig{});
  EdgeConfig cfg;
  cfg.frames = 10;
  EdgeNode edge(toy_model(), cfg);
  EdgeStats stats;
  {
    Loopback loop(cloud);
    int connections = 0;
    // The third upload reaches the cloud but its ACK never goes out.
    loop.wrap_cloud = [&connections](auto s) -> std::unique_ptr<ByteStream> {
      if (connections++ == 0) return std::make_unique<CutAtWrite>(std::move(s), 3);
      return s;
    };
    stats = edge.run(loop.connector());
  }
  CHECK(stats.reconnects == 1);
  CHECK(stats.acked == 10);
  CHECK(cloud.stats().frames == 10);
  CHECK(cloud.stats().duplicates == 1);
  CHECK(edge.version() == cloud.version());
  CHECK(edge.version() == 2);
}

TEST_CASE("remote detection path") {
  CloudNode cloud(toy_model(), CloudConfig{});
  EdgeConfig cfg;
  cfg.frames = 4;
  cfg.remote_detect = true;
  EdgeNode edge(toy_model(), cfg);
  EdgeStats stats;
  {
    Loopback loop(cloud);
    stats = edge.run(loop.connector());
  }
  CHECK(stats.remote_results == 4);
  CHECK(cloud.stats().detections == 4);
  CHECK(stats.acked == 4);
}
