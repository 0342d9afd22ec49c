#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rap/graph/topic_name.hpp"
#include "rap/graph/value.hpp"

namespace rap {

struct TopicSpec {
  TopicName name;
  std::string type_name;
  bool latched = false;

  bool operator==(const TopicSpec&) const = default;
};

struct ServiceSpec {
  TopicName name;
  std::string request_type;
  std::string response_type;

  bool operator==(const ServiceSpec&) const = default;
};

/// Per-subscription delivery queue. When full, the oldest pending message is
/// discarded. A queue length of zero means unbounded.
struct QueuePolicy {
  std::size_t queue_length = 10;
};

struct MessageEnvelope {
  TopicName topic;
  std::string type_name;
  std::uint64_t publisher_id = 0;
  std::uint64_t seq = 0;
  std::int64_t stamp_ns = 0;
  Value payload;
};

class TypeConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ServiceConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CallStatus { ok, no_provider, timeout, provider_fault };

std::string_view to_string(CallStatus status);

struct CallResult {
  CallStatus status = CallStatus::ok;
  Value response;
  std::string detail;

  bool ok() const noexcept { return status == CallStatus::ok; }
};

namespace detail {
struct GraphCore;
struct PublisherState;
struct SubscriptionState;
struct CallState;
}  // namespace detail

class PublisherHandle {
 public:
  PublisherHandle() = default;
  PublisherHandle(PublisherHandle&&) noexcept = default;
  PublisherHandle& operator=(PublisherHandle&& other) noexcept;
  PublisherHandle(const PublisherHandle&) = delete;
  PublisherHandle& operator=(const PublisherHandle&) = delete;
  ~PublisherHandle();

  /// Stamps with the graph clock. Returns the sequence number assigned.
  std::uint64_t publish(Value payload);
  std::uint64_t publish(Value payload, std::int64_t stamp_ns);

  const TopicSpec& spec() const;
  std::uint64_t id() const;
  std::uint64_t last_seq() const;
  void unadvertise();
  explicit operator bool() const noexcept { return state_ != nullptr; }

 private:
  friend class MessageGraph;
  explicit PublisherHandle(std::shared_ptr<detail::PublisherState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::PublisherState> state_;
};

class SubscriptionHandle {
 public:
  SubscriptionHandle() = default;
  SubscriptionHandle(SubscriptionHandle&&) noexcept = default;
  SubscriptionHandle& operator=(SubscriptionHandle&& other) noexcept;
  SubscriptionHandle(const SubscriptionHandle&) = delete;
  SubscriptionHandle& operator=(const SubscriptionHandle&) = delete;
  ~SubscriptionHandle();

  /// Polling access; only meaningful for subscriptions created without a callback.
  std::optional<MessageEnvelope> try_take();
  std::vector<MessageEnvelope> drain();
  std::size_t pending() const;

  /// Messages discarded by the drop-oldest policy.
  std::uint64_t dropped() const;
  /// Messages accepted into the queue, including ones later dropped.
  std::uint64_t received() const;

  const TopicName& topic() const;
  void unsubscribe();
  explicit operator bool() const noexcept { return state_ != nullptr; }

 private:
  friend class MessageGraph;
  explicit SubscriptionHandle(std::shared_ptr<detail::SubscriptionState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::SubscriptionState> state_;
};

/// Completion side of a service call. Copies share state; the first
/// completion wins and later ones are ignored.
class Responder {
 public:
  bool respond(Value response);
  bool fail(std::string detail, CallStatus status = CallStatus::provider_fault);
  bool done() const;

 private:
  friend class MessageGraph;
  explicit Responder(std::shared_ptr<detail::CallState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::CallState> state_;
};

/// Caller side of an in-flight asynchronous call.
class PendingCall {
 public:
  PendingCall() = default;
  /// Completes the call with Timeout unless it already finished.
  bool expire();
  bool done() const;

 private:
  friend class MessageGraph;
  explicit PendingCall(std::shared_ptr<detail::CallState> s) : state_(std::move(s)) {}
  std::shared_ptr<detail::CallState> state_;
};

using ServiceProvider = std::function<void(const Value& request, Responder responder)>;

class ServiceHandle {
 public:
  ServiceHandle() = default;
  ServiceHandle(ServiceHandle&&) noexcept = default;
  ServiceHandle& operator=(ServiceHandle&& other) noexcept;
  ServiceHandle(const ServiceHandle&) = delete;
  ServiceHandle& operator=(const ServiceHandle&) = delete;
  ~ServiceHandle();

  const ServiceSpec& spec() const { return spec_; }
  void unadvertise();
  explicit operator bool() const noexcept { return token_ != 0; }

 private:
  friend class MessageGraph;
  ServiceHandle(std::weak_ptr<detail::GraphCore> g, ServiceSpec spec, std::uint64_t token)
      : graph_(std::move(g)), spec_(std::move(spec)), token_(token) {}
  std::weak_ptr<detail::GraphCore> graph_;
  ServiceSpec spec_;
  std::uint64_t token_ = 0;
};

struct TopicInfo {
  TopicSpec spec;
  std::size_t publishers = 0;
  std::size_t subscribers = 0;
  bool has_retained = false;
};

struct GraphSnapshot {
  std::vector<TopicInfo> topics;  // sorted by name
  std::vector<ServiceSpec> services;

  const TopicInfo* find_topic(const TopicName& name) const;
};

/// In-process publish/subscribe graph with latched topics and single-provider
/// request/reply services.
///
/// All members are safe to call from multiple threads. Callbacks for one
/// subscription never run concurrently with each other; they run on whichever
/// thread delivered the message, outside any graph lock.
class MessageGraph {
 public:
  using Clock = std::function<std::int64_t()>;
  using Callback = std::function<void(const MessageEnvelope&)>;

  /// Default clock: monotonic nanoseconds since construction.
  MessageGraph();
  explicit MessageGraph(Clock clock);
  ~MessageGraph();

  MessageGraph(const MessageGraph&) = delete;
  MessageGraph& operator=(const MessageGraph&) = delete;

  /// Throws TypeConflict if the topic is live with a different type name.
  PublisherHandle advertise(const TopicSpec& spec);

  SubscriptionHandle subscribe(const TopicName& topic, QueuePolicy policy = {});
  SubscriptionHandle subscribe(const TopicName& topic, QueuePolicy policy, Callback callback);

  /// Throws ServiceConflict if another provider holds the name.
  ServiceHandle advertise_service(const ServiceSpec& spec, ServiceProvider provider);

  /// `on_done` runs exactly once: synchronously for NoProvider, otherwise on
  /// whichever thread completes the call.
  PendingCall call_service_async(const TopicName& name, Value request,
                                 std::function<void(CallResult)> on_done);

  /// Blocking call. A response arriving after the timeout is discarded.
  CallResult call_service(const TopicName& name, Value request,
                          std::chrono::milliseconds timeout);

  bool has_service(const TopicName& name) const;
  GraphSnapshot snapshot() const;
  std::int64_t now_ns() const;

 private:
  std::shared_ptr<detail::GraphCore> core_;
};

}  // namespace rap
