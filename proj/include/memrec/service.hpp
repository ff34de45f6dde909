#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/factory.hpp"
#include "memrec/general_memory.hpp"
#include "memrec/memory_bank.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace memrec {

struct ServiceOptions {
    std::string bind = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::filesystem::path store_root = "memory_store";
    std::vector<std::string> cors_origins;  // "*" allows any origin
    bool reflect_on_end = true;
    std::filesystem::path guidelines_file;  // empty: not persisted
};

ServiceOptions service_options(const Config& cfg);

struct HttpReply {
    int status = 200;
    std::string body;  // JSON
};

// JSON API for live sessions. handle() is the transport-independent core;
// start()/listen() put it behind an HTTP server.
//
//   POST /api/sessions                   {user_id}          -> {session_id}
//   POST /api/sessions/{id}/utterances   {text, feedback?}  -> {reply, recommendations, retrieved, guidelines_version, ...}
//   POST /api/sessions/{id}/end                             -> {entities_added, ...}
//   GET  /api/users/{id}/memory                             -> [{entity, attitude, last_touched}]
class Service {
public:
    Service(Runtime& runtime, Catalog catalog, ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    HttpReply handle(const std::string& method, const std::string& path, const std::string& body);

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Blocks until stop() is called from elsewhere.
    void listen();
    void stop();

    const GuidelineStore& guidelines() const { return guidelines_; }

private:
    enum class State { Open, Ended };

    struct Feedback {
        int turn = 0;
        bool positive = false;
    };

    struct LiveSession {
        std::string session_id;
        std::string user_id;
        SessionTime started_at{};
        std::vector<Utterance> turns;
        State state = State::Open;
        std::string last_trajectory;
        int last_system_turn = 0;
        std::vector<Feedback> feedback;
        std::mutex mutex;
    };

    struct UserSlot {
        std::mutex mutex;
        bool loaded = false;
        MemoryBank bank;
    };

    HttpReply create_session(const std::string& body);
    HttpReply add_utterance(const std::string& session_id, const std::string& body);
    HttpReply end_session(const std::string& session_id);
    HttpReply read_memory(const std::string& user_id);

    std::shared_ptr<LiveSession> find_session(const std::string& id);
    std::shared_ptr<UserSlot> slot_for(const std::string& user_id);
    // Caller holds slot->mutex.
    MemoryBank& loaded_bank(UserSlot& slot, const std::string& user_id);
    void setup_routes();
    int bind_server();

    Runtime& rt_;
    Catalog catalog_;
    ServiceOptions options_;
    MemoryStore store_;
    GuidelineStore guidelines_;

    std::mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
    std::uint64_t next_session_ = 1;

    std::mutex users_mutex_;
    std::map<std::string, std::shared_ptr<UserSlot>> users_;

    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace memrec
