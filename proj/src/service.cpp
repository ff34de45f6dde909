#include "memrec/service.hpp"

#include "memrec/error.hpp"
#include "memrec/recommender.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <set>

namespace memrec {

using ojson = nlohmann::ordered_json;

namespace {

HttpReply json_reply(int status, const ojson& body) { return {status, body.dump()}; }

HttpReply error_reply(int status, std::string_view kind, const std::string& message) {
    ojson j;
    j["error"] = {{"kind", std::string(kind)}, {"message", message}};
    return json_reply(status, j);
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    auto end = path.find('?');
    const std::string p = path.substr(0, end);
    while (pos < p.size()) {
        auto next = p.find('/', pos);
        if (next == std::string::npos) next = p.size();
        if (next > pos) parts.push_back(httplib::detail::decode_url(p.substr(pos, next - pos), false));
        pos = next + 1;
    }
    return parts;
}

struct BadRequest {
    std::string message;
};

ojson parse_object(const std::string& body) {
    auto j = ojson::parse(body, nullptr, false);
    if (j.is_discarded()) throw BadRequest{"body is not valid JSON"};
    if (!j.is_object()) throw BadRequest{"body must be a JSON object"};
    return j;
}

}  // namespace

ServiceOptions service_options(const Config& cfg) {
    ServiceOptions o;
    o.bind = cfg.get_string("service.bind", o.bind);
    const auto port = cfg.get_int("service.port", o.port);
    if (port < 0 || port > 65535) throw Error(ErrorKind::ConfigError, "service.port out of range");
    o.port = static_cast<int>(port);
    if (cfg.has("service.store_root")) o.store_root = cfg.resolve_path("service.store_root");
    auto origins = cfg.get_string("service.cors_origin");
    std::size_t pos = 0;
    while (pos < origins.size()) {
        auto comma = origins.find(',', pos);
        if (comma == std::string::npos) comma = origins.size();
        auto item = origins.substr(pos, comma - pos);
        while (!item.empty() && item.front() == ' ') item.erase(item.begin());
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty()) o.cors_origins.push_back(item);
        pos = comma + 1;
    }
    o.reflect_on_end = cfg.get_bool("service.reflect_on_end", true);
    if (cfg.has("guidelines.file")) o.guidelines_file = cfg.resolve_path("guidelines.file");
    return o;
}

Service::Service(Runtime& runtime, Catalog catalog, ServiceOptions options)
    : rt_(runtime), catalog_(std::move(catalog)), options_(std::move(options)), store_(options_.store_root),
      guidelines_(runtime.guidelines) {}

Service::~Service() { stop(); }

std::shared_ptr<Service::LiveSession> Service::find_session(const std::string& id) {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Service::UserSlot> Service::slot_for(const std::string& user_id) {
    std::lock_guard lock(users_mutex_);
    auto& slot = users_[user_id];
    if (!slot) slot = std::make_shared<UserSlot>();
    return slot;
}

MemoryBank& Service::loaded_bank(UserSlot& slot, const std::string& user_id) {
    if (!slot.loaded) {
        slot.bank = store_.restore(user_id);
        slot.loaded = true;
    }
    return slot.bank;
}

HttpReply Service::handle(const std::string& method, const std::string& path, const std::string& body) {
    const auto parts = split_path(path);
    try {
        if (parts.size() >= 2 && parts[0] == "api") {
            if (parts[1] == "sessions") {
                if (parts.size() == 2 && method == "POST") return create_session(body);
                if (parts.size() == 4 && method == "POST" && parts[3] == "utterances") return add_utterance(parts[2], body);
                if (parts.size() == 4 && method == "POST" && parts[3] == "end") return end_session(parts[2]);
            } else if (parts[1] == "users" && parts.size() == 4 && parts[3] == "memory" && method == "GET") {
                return read_memory(parts[2]);
            }
        }
        return error_reply(404, "NotFound", "no route for " + method + " " + path);
    } catch (const BadRequest& e) {
        return error_reply(400, "BadRequest", e.message);
    } catch (const Error& e) {
        return error_reply(500, to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return error_reply(500, "Internal", e.what());
    }
}

HttpReply Service::create_session(const std::string& body) {
    auto j = parse_object(body);
    auto it = j.find("user_id");
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) throw BadRequest{"user_id must be a non-empty string"};
    const auto user_id = it->get<std::string>();

    {
        auto slot = slot_for(user_id);
        std::lock_guard lock(slot->mutex);
        loaded_bank(*slot, user_id);
    }

    auto session = std::make_shared<LiveSession>();
    session->user_id = user_id;
    session->started_at = std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
    {
        std::lock_guard lock(sessions_mutex_);
        char buf[32];
        std::snprintf(buf, sizeof buf, "live-%06llu", static_cast<unsigned long long>(next_session_++));
        session->session_id = buf;
        sessions_.emplace(session->session_id, session);
    }
    ojson out;
    out["session_id"] = session->session_id;
    out["user_id"] = user_id;
    return json_reply(200, out);
}

HttpReply Service::add_utterance(const std::string& session_id, const std::string& body) {
    auto session = find_session(session_id);
    if (!session) return error_reply(404, "NotFound", "unknown session " + session_id);
    {
        std::lock_guard lock(session->mutex);
        if (session->state == State::Ended) return error_reply(409, "SessionEnded", "session " + session_id + " has ended");
    }
    auto j = parse_object(body);

    std::optional<std::string> text;
    if (auto it = j.find("text"); it != j.end() && !it->is_null()) {
        if (!it->is_string() || it->get<std::string>().empty()) throw BadRequest{"text must be a non-empty string"};
        text = it->get<std::string>();
    }
    std::optional<Feedback> feedback;
    if (auto it = j.find("feedback"); it != j.end() && !it->is_null()) {
        Feedback fb;
        std::string value;
        if (it->is_string()) {
            value = it->get<std::string>();
        } else if (it->is_object() && it->contains("value") && (*it)["value"].is_string()) {
            value = (*it)["value"].get<std::string>();
            if (it->contains("turn")) {
                if (!(*it)["turn"].is_number_integer()) throw BadRequest{"feedback.turn must be an integer"};
                fb.turn = (*it)["turn"].get<int>();
            }
        } else {
            throw BadRequest{"feedback must be \"up\", \"down\" or {\"turn\", \"value\"}"};
        }
        if (value != "up" && value != "down") throw BadRequest{"feedback value must be \"up\" or \"down\""};
        fb.positive = value == "up";
        feedback = fb;
    }
    if (!text && !feedback) throw BadRequest{"text or feedback is required"};

    std::lock_guard session_lock(session->mutex);
    if (session->state == State::Ended) return error_reply(409, "SessionEnded", "session " + session_id + " has ended");

    if (feedback) {
        if (feedback->turn == 0) feedback->turn = session->last_system_turn;
        session->feedback.push_back(*feedback);
    }
    const auto version = guidelines_.snapshot()->version;
    if (!text) {
        ojson out;
        out["feedback_recorded"] = true;
        out["guidelines_version"] = version;
        return json_reply(200, out);
    }

    Utterance user_turn;
    user_turn.turn_index = static_cast<int>(session->turns.size()) + 1;
    user_turn.speaker = Speaker::User;
    user_turn.text = *text;
    user_turn.mentioned_items = catalog_.find_mentions(*text);
    session->turns.push_back(user_turn);

    EvaluationPoint point;
    point.user_id = session->user_id;
    point.session_id = session->session_id;
    point.turn_index = user_turn.turn_index + 1;
    point.session_time = session->started_at;
    point.context = session->turns;

    auto guidelines = guidelines_.snapshot();
    PipelineConfig pcfg = rt_.experiment.pipeline;
    pcfg.want_reply = true;
    const PipelinePorts ports{*rt_.llm, *rt_.embedder, rt_.expert.get(), rt_.templates};

    auto slot = slot_for(session->user_id);
    PipelineOutput out;
    try {
        std::lock_guard user_lock(slot->mutex);
        auto& bank = loaded_bank(*slot, session->user_id);
        const Tick before = bank.clock();
        out = run_pipeline(point, catalog_, &bank, *guidelines, ports, pcfg);
        if (bank.clock() != before) store_.persist(bank);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::LlmUnavailable) throw;
        session->turns.pop_back();
        std::vector<std::string> expert;
        if (rt_.expert) expert = expert_candidates(*rt_.expert, {point.user_id, point.session_id, point.turn_index, point.context}, catalog_);
        auto mentioned = mentioned_items(point.context);
        std::set<std::string> used(mentioned.begin(), mentioned.end());
        ojson recs = ojson::array();
        auto push = [&](const std::string& id) {
            if (recs.size() < pcfg.list_length && used.insert(id).second)
                recs.push_back({{"item_id", id}, {"title", catalog_.title_of(id)}, {"provenance", "fallback_pad"}});
        };
        for (const auto& id : expert) push(id);
        for (const auto& [id, _] : catalog_.items()) push(id);
        ojson reply;
        reply["error"] = {{"kind", "LlmUnavailable"}, {"message", e.what()}};
        reply["fallback"] = true;
        reply["degraded"] = true;
        reply["reply"] = "";
        reply["recommendations"] = std::move(recs);
        reply["retrieved"] = ojson::array();
        reply["guidelines_version"] = guidelines->version;
        return json_reply(502, reply);
    }

    const auto& result = out.result;
    Utterance system_turn;
    system_turn.turn_index = point.turn_index;
    system_turn.speaker = Speaker::System;
    system_turn.text = result.reply.empty() ? std::string("Here are some suggestions.") : result.reply;
    system_turn.mentioned_items = catalog_.find_mentions(system_turn.text);
    session->turns.push_back(system_turn);
    session->last_trajectory = result.trajectory;
    session->last_system_turn = system_turn.turn_index;

    ojson reply;
    reply["session_id"] = session->session_id;
    reply["turn_index"] = system_turn.turn_index;
    reply["reply"] = system_turn.text;
    ojson recs = ojson::array();
    for (std::size_t i = 0; i < result.items.size(); ++i) {
        recs.push_back({{"item_id", result.items[i]},
                        {"title", catalog_.title_of(result.items[i])},
                        {"provenance", std::string(to_string(result.provenance[i]))}});
    }
    reply["recommendations"] = std::move(recs);
    ojson retrieved = ojson::array();
    for (std::size_t i = 0; i < out.retrieved.entities.size(); ++i)
        retrieved.push_back({{"entity", out.retrieved.entities[i]}, {"attitude", out.retrieved.attitudes[i]}});
    reply["retrieved"] = std::move(retrieved);
    reply["guidelines_version"] = guidelines->version;
    reply["degraded"] = result.degraded || out.retrieved.degraded;
    reply["fallback"] = false;
    return json_reply(200, reply);
}

HttpReply Service::end_session(const std::string& session_id) {
    auto session = find_session(session_id);
    if (!session) return error_reply(404, "NotFound", "unknown session " + session_id);
    std::lock_guard session_lock(session->mutex);
    if (session->state == State::Ended) return error_reply(409, "SessionEnded", "session " + session_id + " has ended");

    AddReport report;
    std::vector<std::string> removed;
    auto slot = slot_for(session->user_id);
    try {
        std::lock_guard user_lock(slot->mutex);
        auto& bank = loaded_bank(*slot, session->user_id);
        if (!session->turns.empty()) {
            DialogueSession record{session->session_id, session->user_id, session->started_at, session->turns};
            report = extract_and_add(bank, record, *rt_.llm, rt_.templates);
            if (rt_.delete_threshold > 0) removed = delete_stale(bank, rt_.delete_threshold);
        }
        store_.persist(bank);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::LlmUnavailable) throw;
        ojson body;
        body["error"] = {{"kind", "LlmUnavailable"}, {"message", e.what()}};
        body["fallback"] = true;
        body["entities_added"] = 0;
        return json_reply(502, body);
    }
    session->state = State::Ended;

    bool reflected = false;
    if (options_.reflect_on_end && !session->feedback.empty() && !session->last_trajectory.empty()) {
        const auto& fb = session->feedback.back();
        ReflectionRecord rec{session->last_trajectory, fb.positive ? Outcome::Hit : Outcome::Miss, {}};
        try {
            auto res = guidelines_.reflect_and_publish(rec, *rt_.llm, rt_.templates);
            reflected = res.updated;
            if (reflected && !options_.guidelines_file.empty()) save_guidelines(res.guidelines, options_.guidelines_file);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::LlmUnavailable) throw;
        }
    }

    ojson body;
    body["session_id"] = session->session_id;
    body["entities_added"] = report.added;
    body["entities_merged"] = report.merged;
    body["entities_removed"] = removed.size();
    body["skipped"] = report.skipped;
    body["reflected"] = reflected;
    body["guidelines_version"] = guidelines_.snapshot()->version;
    return json_reply(200, body);
}

HttpReply Service::read_memory(const std::string& user_id) {
    ojson entries = ojson::array();
    auto slot = slot_for(user_id);
    std::lock_guard lock(slot->mutex);
    const MemoryBank bank = slot->loaded ? slot->bank : store_.restore(user_id);
    for (const auto& [_, e] : bank.entries())
        entries.push_back({{"entity", e.entity}, {"attitude", e.attitude}, {"last_touched", e.last_touched}});
    return json_reply(200, entries);
}

void Service::setup_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto cors = [this](const httplib::Request& req, httplib::Response& res) {
        auto origin = req.get_header_value("Origin");
        for (const auto& allowed : options_.cors_origins) {
            if (allowed == "*" || (!origin.empty() && allowed == origin)) {
                res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
                res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type");
                res.set_header("Vary", "Origin");
                break;
            }
        }
    };
    auto dispatch = [this, cors](const httplib::Request& req, httplib::Response& res) {
        auto reply = handle(req.method, req.path, req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
        cors(req, res);
    };
    server_->Post(R"(/.*)", dispatch);
    server_->Get(R"(/.*)", dispatch);
    server_->Options(R"(/.*)", [cors](const httplib::Request& req, httplib::Response& res) {
        res.status = 204;
        cors(req, res);
    });
    server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        res.status = 500;
        res.set_content(R"({"error":{"kind":"Internal","message":"unhandled exception"}})", "application/json");
    });
}

int Service::bind_server() {
    setup_routes();
    int port = options_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(options_.bind);
    } else if (!server_->bind_to_port(options_.bind, port)) {
        port = -1;
    }
    if (port < 0) throw Error(ErrorKind::InvalidArgument, "cannot bind " + options_.bind + ":" + std::to_string(options_.port));
    return port;
}

int Service::start() {
    const int port = bind_server();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::listen() {
    const int port = bind_server();
    std::fprintf(stderr, "listening on %s:%d\n", options_.bind.c_str(), port);
    server_->listen_after_bind();
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace memrec
