// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <leo/types.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace leo::gateway
{

/// Topic names are slash-separated lowercase segments: `(/[a-z0-9_]+)+`.
[[nodiscard]] bool valid_topic(std::string_view topic) noexcept;

/// A topic name whose segments may also be `+` (one segment), optionally ending in `/#`
/// (any number of further segments, including none).
[[nodiscard]] bool valid_pattern(std::string_view pattern) noexcept;

[[nodiscard]] bool topic_matches(std::string_view pattern, std::string_view topic) noexcept;

class TopicError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

struct BusMessage
{
    std::string topic;
    json payload;
};

/// In-process publish/subscribe. Delivery is synchronous on the publishing thread, so each
/// publisher's messages reach a subscriber in publish order. Nothing is retained.
class MessageBus
{
    struct Subscriber;

public:
    using Callback = std::function<void(const BusMessage&)>;

    /// Unsubscribes on destruction. Once reset() returns the callback is not running and
    /// will not be called again.
    class Subscription
    {
    public:
        Subscription() = default;
        Subscription(Subscription&&) noexcept = default;
        Subscription& operator=(Subscription&& other) noexcept;
        Subscription(const Subscription&) = delete;
        Subscription& operator=(const Subscription&) = delete;
        ~Subscription() { reset(); }

        void reset();
        explicit operator bool() const noexcept { return static_cast<bool>(_sub); }

    private:
        friend class MessageBus;
        Subscription(std::weak_ptr<MessageBus*> bus, std::shared_ptr<Subscriber> sub):
            _bus(std::move(bus)), _sub(std::move(sub))
        {
        }

        std::weak_ptr<MessageBus*> _bus;
        std::shared_ptr<Subscriber> _sub;
    };

    /// Blocking queue fed by a subscription.
    class Queue
    {
    public:
        std::optional<BusMessage> pop(std::chrono::milliseconds timeout);
        [[nodiscard]] std::size_t size() const;

    private:
        friend class MessageBus;
        void push(const BusMessage& msg);

        mutable std::mutex _mutex;
        std::condition_variable _cv;
        std::deque<BusMessage> _items;
    };

    MessageBus();
    ~MessageBus();
    MessageBus(const MessageBus&) = delete;
    MessageBus& operator=(const MessageBus&) = delete;

    /// Throws TopicError for an invalid pattern.
    [[nodiscard]] Subscription subscribe(std::string pattern, Callback callback);
    /// Queue-backed subscription; the queue lives as long as the returned pair's subscription.
    [[nodiscard]] std::pair<Subscription, std::shared_ptr<Queue>> subscribe_queue(std::string pattern);

    /// Returns the number of subscribers reached. Throws TopicError for an invalid name.
    std::size_t publish(std::string_view topic, json payload);

    [[nodiscard]] std::size_t subscriber_count() const;

private:
    void remove(const std::shared_ptr<Subscriber>& sub);

    mutable std::mutex _mutex;
    std::vector<std::shared_ptr<Subscriber>> _subs;
    std::shared_ptr<MessageBus*> _self;
};

} // namespace leo::gateway
