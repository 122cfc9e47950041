// SPDX-License-Identifier: Apache-2.0
#include <leo/gateway.hpp>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <fmt/format.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <sstream>

namespace leo::gateway
{

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace
{

constexpr const char* kIndexPage = "<!doctype html><html><head><title>LEO gateway</title></head><body>"
                                   "<p>LEO gateway is running. Connect a WebSocket client to <code>/ws</code>.</p>"
                                   "</body></html>";

std::string content_type(const std::filesystem::path& path)
{
    const auto ext = path.extension().string();
    if (ext == ".html" || ext == ".htm")
        return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs")
        return "text/javascript";
    if (ext == ".css")
        return "text/css";
    if (ext == ".json")
        return "application/json";
    if (ext == ".svg")
        return "image/svg+xml";
    if (ext == ".png")
        return "image/png";
    return "application/octet-stream";
}

// Resolves a request target below `root`; nullopt for anything that escapes it.
std::optional<std::filesystem::path> resolve(const std::filesystem::path& root, std::string_view target)
{
    target = target.substr(0, target.find('?'));
    if (target.empty() || target.front() != '/' || target.find("..") != std::string_view::npos)
        return std::nullopt;
    auto rel = std::string(target.substr(1));
    auto path = root / (rel.empty() ? "index.html" : rel);
    if (std::filesystem::is_directory(path))
        path /= "index.html";
    if (!std::filesystem::is_regular_file(path))
        return std::nullopt;
    return path;
}

class WsSession : public std::enable_shared_from_this<WsSession>
{
public:
    WsSession(tcp::socket&& socket, Runtime& runtime, MessageBus& bus, std::size_t max_frames):
        _ws(std::move(socket)), _runtime(runtime), _bus(bus), _queue(max_frames)
    {
    }

    void run(http::request<http::string_body> req)
    {
        _ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        _ws.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
    }

private:
    void on_accept(beast::error_code ec)
    {
        if (ec)
            return;
        std::weak_ptr<WsSession> weak = weak_from_this();
        auto forward = [weak](const BusMessage& msg) {
            if (auto self = weak.lock())
                self->enqueue(event_frame(msg));
        };
        _session_sub = _bus.subscribe("/session/#", forward);
        _tools_sub = _bus.subscribe("/tools/#", forward);
        read();
    }

    void enqueue(json frame)
    {
        _queue.push(std::move(frame));
        net::post(_ws.get_executor(), [self = shared_from_this()] { self->kick(); });
    }

    void read()
    {
        _ws.async_read(_in, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec)
    {
        if (ec)
        {
            close();
            return;
        }
        auto text = beast::buffers_to_string(_in.data());
        _in.consume(_in.size());
        std::function<void()> after;
        _queue.push(dispatch_frame(_runtime, text, &after));
        if (after)
            after();
        kick();
        read();
    }

    void kick()
    {
        if (_writing || _closed)
            return;
        auto frame = _queue.pop();
        if (!frame)
            return;
        _writing = true;
        _out = frame->dump();
        _ws.text(true);
        _ws.async_write(net::buffer(_out), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->_writing = false;
            if (ec)
            {
                self->close();
                return;
            }
            self->kick();
        });
    }

    void close()
    {
        _closed = true;
        _session_sub.reset();
        _tools_sub.reset();
    }

    websocket::stream<beast::tcp_stream> _ws;
    Runtime& _runtime;
    MessageBus& _bus;
    FrameQueue _queue;
    beast::flat_buffer _in;
    std::string _out;
    bool _writing = false;
    bool _closed = false;
    MessageBus::Subscription _session_sub;
    MessageBus::Subscription _tools_sub;
};

class HttpSession : public std::enable_shared_from_this<HttpSession>
{
public:
    HttpSession(tcp::socket&& socket, const GatewayConfig& config, Runtime& runtime, MessageBus& bus):
        _stream(std::move(socket)), _config(config), _runtime(runtime), _bus(bus)
    {
    }

    void run()
    {
        net::dispatch(_stream.get_executor(), [self = shared_from_this()] { self->read(); });
    }

private:
    void read()
    {
        _req = {};
        _stream.expires_after(std::chrono::seconds(30));
        http::async_read(_stream, _buffer, _req,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec)
    {
        if (ec)
            return;
        if (websocket::is_upgrade(_req))
        {
            if (_req.target() == "/ws")
            {
                _stream.expires_never();
                std::make_shared<WsSession>(_stream.release_socket(), _runtime, _bus, _config.max_queued_frames)
                    ->run(std::move(_req));
                return;
            }
            respond(http::status::not_found, "text/plain", "WebSocket endpoint is /ws\n");
            return;
        }
        if (_req.method() != http::verb::get && _req.method() != http::verb::head)
        {
            respond(http::status::method_not_allowed, "text/plain", "GET only\n");
            return;
        }
        const auto target = std::string_view(_req.target().data(), _req.target().size());
        if (_config.static_dir.empty())
        {
            if (target == "/" || target == "/index.html")
                respond(http::status::ok, "text/html; charset=utf-8", kIndexPage);
            else
                respond(http::status::not_found, "text/plain", "not found\n");
            return;
        }
        auto path = resolve(_config.static_dir, target);
        if (!path)
        {
            respond(http::status::not_found, "text/plain", "not found\n");
            return;
        }
        std::ifstream in(*path, std::ios::binary);
        std::ostringstream body;
        body << in.rdbuf();
        respond(http::status::ok, content_type(*path), body.str());
    }

    void respond(http::status status, const std::string& type, std::string body)
    {
        auto res = std::make_shared<http::response<http::string_body>>(status, _req.version());
        res->set(http::field::server, "leo-gateway");
        res->set(http::field::content_type, type);
        res->keep_alive(false);
        res->body() = std::move(body);
        res->prepare_payload();
        http::async_write(_stream, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->_stream.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
    }

    beast::tcp_stream _stream;
    beast::flat_buffer _buffer;
    http::request<http::string_body> _req;
    const GatewayConfig& _config;
    Runtime& _runtime;
    MessageBus& _bus;
};

} // namespace

struct GatewayServer::Impl
{
    explicit Impl(GatewayConfig c): config(std::move(c)), runtime(bus, config.runtime) {}

    void accept()
    {
        acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec)
            {
                if (ec != net::error::operation_aborted)
                    accept();
                return;
            }
            if (config.send_buffer_bytes > 0)
            {
                beast::error_code ignored;
                socket.set_option(net::socket_base::send_buffer_size(config.send_buffer_bytes), ignored);
            }
            std::make_shared<HttpSession>(std::move(socket), config, runtime, bus)->run();
            accept();
        });
    }

    GatewayConfig config;
    MessageBus bus;
    Runtime runtime;
    // Declared after the runtime so connections are torn down first.
    net::io_context ioc;
    std::optional<tcp::acceptor> acceptor;
    std::vector<std::thread> threads;
    unsigned short bound_port = 0;

    std::mutex mutex;
    std::condition_variable cv;
    bool running = false;
};

GatewayServer::GatewayServer(GatewayConfig config): _impl(std::make_unique<Impl>(std::move(config))) {}

GatewayServer::~GatewayServer()
{
    stop();
}

void GatewayServer::start()
{
    auto& impl = *_impl;
    beast::error_code ec;
    auto address = net::ip::make_address(impl.config.address, ec);
    if (ec)
        throw std::runtime_error(fmt::format("bad listen address '{}': {}", impl.config.address, ec.message()));
    tcp::endpoint endpoint(address, impl.config.port);

    impl.acceptor.emplace(impl.ioc);
    impl.acceptor->open(endpoint.protocol(), ec);
    if (!ec)
        impl.acceptor->set_option(net::socket_base::reuse_address(true), ec);
    if (!ec)
        impl.acceptor->bind(endpoint, ec);
    if (!ec)
        impl.acceptor->listen(net::socket_base::max_listen_connections, ec);
    if (ec)
        throw std::runtime_error(fmt::format("cannot listen on {}:{}: {}", impl.config.address, impl.config.port,
                                             ec.message()));
    impl.bound_port = impl.acceptor->local_endpoint().port();
    impl.accept();

    {
        std::lock_guard lock(impl.mutex);
        impl.running = true;
    }
    const int n = std::max(1, impl.config.io_threads);
    for (int i = 0; i < n; ++i)
        impl.threads.emplace_back([&impl] { impl.ioc.run(); });
}

void GatewayServer::stop()
{
    auto& impl = *_impl;
    {
        std::lock_guard lock(impl.mutex);
        if (!impl.running)
            return;
        impl.running = false;
    }
    net::post(impl.ioc, [&impl] {
        beast::error_code ignored;
        if (impl.acceptor)
            impl.acceptor->close(ignored);
    });
    impl.ioc.stop();
    for (auto& t: impl.threads)
    {
        if (t.joinable())
            t.join();
    }
    impl.threads.clear();
    impl.cv.notify_all();
}

void GatewayServer::wait()
{
    std::unique_lock lock(_impl->mutex);
    _impl->cv.wait(lock, [this] { return !_impl->running; });
}

unsigned short GatewayServer::port() const noexcept
{
    return _impl->bound_port;
}

MessageBus& GatewayServer::bus() noexcept
{
    return _impl->bus;
}

Runtime& GatewayServer::runtime() noexcept
{
    return _impl->runtime;
}

} // namespace leo::gateway
