// SPDX-License-Identifier: Apache-2.0
#include <leo/bus.hpp>

#include <algorithm>

namespace leo::gateway
{

namespace
{

bool segment_char(char c) noexcept
{
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

std::vector<std::string_view> split(std::string_view name)
{
    std::vector<std::string_view> out;
    std::size_t pos = 1;
    while (pos <= name.size())
    {
        auto next = name.find('/', pos);
        if (next == std::string_view::npos)
            next = name.size();
        out.push_back(name.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

} // namespace

bool valid_topic(std::string_view topic) noexcept
{
    if (topic.size() < 2 || topic.front() != '/')
        return false;
    for (auto seg: split(topic))
    {
        if (seg.empty() || !std::all_of(seg.begin(), seg.end(), segment_char))
            return false;
    }
    return true;
}

bool valid_pattern(std::string_view pattern) noexcept
{
    if (pattern.size() < 2 || pattern.front() != '/')
        return false;
    auto segs = split(pattern);
    for (std::size_t i = 0; i < segs.size(); ++i)
    {
        auto seg = segs[i];
        if (seg == "+")
            continue;
        if (seg == "#")
        {
            if (i + 1 != segs.size())
                return false;
            continue;
        }
        if (seg.empty() || !std::all_of(seg.begin(), seg.end(), segment_char))
            return false;
    }
    return true;
}

bool topic_matches(std::string_view pattern, std::string_view topic) noexcept
{
    if (!valid_pattern(pattern) || !valid_topic(topic))
        return false;
    auto p = split(pattern);
    auto t = split(topic);
    for (std::size_t i = 0; i < p.size(); ++i)
    {
        if (p[i] == "#")
            return true;
        if (i >= t.size())
            return false;
        if (p[i] != "+" && p[i] != t[i])
            return false;
    }
    return p.size() == t.size();
}

struct MessageBus::Subscriber
{
    std::string pattern;
    Callback callback;
    std::recursive_mutex call_mutex;
    bool active = true;
};

MessageBus::Subscription& MessageBus::Subscription::operator=(Subscription&& other) noexcept
{
    if (this != &other)
    {
        reset();
        _bus = std::move(other._bus);
        _sub = std::move(other._sub);
    }
    return *this;
}

void MessageBus::Subscription::reset()
{
    if (!_sub)
        return;
    if (auto bus = _bus.lock())
        (*bus)->remove(_sub);
    {
        std::lock_guard lock(_sub->call_mutex);
        _sub->active = false;
    }
    _sub.reset();
}

std::optional<BusMessage> MessageBus::Queue::pop(std::chrono::milliseconds timeout)
{
    std::unique_lock lock(_mutex);
    if (!_cv.wait_for(lock, timeout, [this] { return !_items.empty(); }))
        return std::nullopt;
    auto msg = std::move(_items.front());
    _items.pop_front();
    return msg;
}

std::size_t MessageBus::Queue::size() const
{
    std::lock_guard lock(_mutex);
    return _items.size();
}

void MessageBus::Queue::push(const BusMessage& msg)
{
    {
        std::lock_guard lock(_mutex);
        _items.push_back(msg);
    }
    _cv.notify_all();
}

MessageBus::MessageBus(): _self(std::make_shared<MessageBus*>(this)) {}

MessageBus::~MessageBus() = default;

MessageBus::Subscription MessageBus::subscribe(std::string pattern, Callback callback)
{
    if (!valid_pattern(pattern))
        throw TopicError("invalid topic pattern '" + pattern + "'");
    auto sub = std::make_shared<Subscriber>();
    sub->pattern = std::move(pattern);
    sub->callback = std::move(callback);
    {
        std::lock_guard lock(_mutex);
        _subs.push_back(sub);
    }
    return Subscription(_self, sub);
}

std::pair<MessageBus::Subscription, std::shared_ptr<MessageBus::Queue>> MessageBus::subscribe_queue(std::string pattern)
{
    auto queue = std::make_shared<Queue>();
    auto sub = subscribe(std::move(pattern), [queue](const BusMessage& msg) { queue->push(msg); });
    return {std::move(sub), queue};
}

std::size_t MessageBus::publish(std::string_view topic, json payload)
{
    if (!valid_topic(topic))
        throw TopicError("invalid topic name '" + std::string(topic) + "'");
    std::vector<std::shared_ptr<Subscriber>> targets;
    {
        std::lock_guard lock(_mutex);
        for (const auto& sub: _subs)
        {
            if (topic_matches(sub->pattern, topic))
                targets.push_back(sub);
        }
    }
    if (targets.empty())
        return 0;
    BusMessage msg{std::string(topic), std::move(payload)};
    std::size_t reached = 0;
    for (const auto& sub: targets)
    {
        std::lock_guard lock(sub->call_mutex);
        if (!sub->active)
            continue;
        sub->callback(msg);
        ++reached;
    }
    return reached;
}

std::size_t MessageBus::subscriber_count() const
{
    std::lock_guard lock(_mutex);
    return _subs.size();
}

void MessageBus::remove(const std::shared_ptr<Subscriber>& sub)
{
    std::lock_guard lock(_mutex);
    _subs.erase(std::remove(_subs.begin(), _subs.end(), sub), _subs.end());
}

} // namespace leo::gateway
