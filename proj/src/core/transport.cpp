#include "soacomp/transport.hpp"

#include <algorithm>
#include <thread>

namespace soacomp {

std::string_view to_string(EnvelopeKind k) {
  switch (k) {
    case EnvelopeKind::GetDescriptor: return "GetDescriptor";
    case EnvelopeKind::InvokeRequest: return "InvokeRequest";
    case EnvelopeKind::InvokeResponse: return "InvokeResponse";
    case EnvelopeKind::Fault: return "Fault";
  }
  return "?";
}

std::string Envelope::fault_code() const {
  if (!is_fault() || !body.contains("code") || !body["code"].is_string()) return {};
  return body["code"].get<std::string>();
}

Envelope make_fault(const Envelope& request, std::string_view code, std::string message,
                    const Json& extra) {
  Envelope f;
  f.kind = EnvelopeKind::Fault;
  f.request_id = request.request_id;
  f.sender = request.target;
  f.target = request.sender;
  f.body = Json::object();
  f.body["code"] = std::string(code);
  f.body["message"] = std::move(message);
  for (const auto& [k, v] : extra.items()) f.body[k] = v;
  return f;
}

Envelope make_response(const Envelope& request, Json body) {
  Envelope r;
  r.kind = EnvelopeKind::InvokeResponse;
  r.request_id = request.request_id;
  r.sender = request.target;
  r.target = request.sender;
  r.body = std::move(body);
  return r;
}

Json TraceEntry::to_json() const {
  Json j;
  j["tick"] = tick;
  j["request_id"] = envelope.request_id;
  j["kind"] = std::string(to_string(envelope.kind));
  j["sender"] = envelope.sender;
  j["target"] = envelope.target;
  j["body"] = envelope.body;
  return j;
}

struct Network::Process {
  std::uint64_t id = 0;
  std::string tag;
  std::function<void()> body;
  Process* parent = nullptr;
  std::size_t pending_children = 0;
  bool runnable = false;
  bool finished = false;
  std::condition_variable cv;
  std::exception_ptr error;
  std::thread thread;
};

namespace {

struct ThreadContext {
  const void* network = nullptr;
  void* process = nullptr;
};

thread_local ThreadContext tl_context;

}  // namespace

Network::Network(NetConfig config) : config_(std::move(config)), rng_(config_.seed) {}

Network::~Network() {
  {
    std::lock_guard lock(mutex_);
    shutting_down_ = true;
    for (auto& p : processes_) p->cv.notify_all();
  }
  for (auto& p : processes_) {
    if (p->thread.joinable()) p->thread.join();
  }
}

void Network::register_node(const std::string& id, Handler handler) {
  std::lock_guard lock(mutex_);
  if (handlers_.contains(id)) throw DuplicateNode("node '" + id + "' is already registered");
  handlers_.emplace(id, std::move(handler));
}

std::vector<std::string> Network::node_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, h] : handlers_) ids.push_back(id);
  return ids;
}

void Network::set_unreachable(const std::string& id, bool unreachable) {
  std::lock_guard lock(mutex_);
  if (unreachable) {
    runtime_unreachable_.insert(id);
  } else {
    runtime_unreachable_.erase(id);
  }
}

Network::Process* Network::current() const {
  if (tl_context.network != this) return nullptr;
  return static_cast<Process*>(tl_context.process);
}

void Network::schedule_locked(Tick tick, std::uint64_t key, Process* p) {
  events_.push(Event{std::max(tick, tick_), key, next_seq_++, p});
}

Network::Process* Network::spawn_locked(std::string tag, Tick start, std::function<void()> body,
                                        Process* parent) {
  auto owned = std::make_unique<Process>();
  Process* p = owned.get();
  p->id = processes_.size();
  p->tag = std::move(tag);
  p->body = std::move(body);
  p->parent = parent;
  processes_.push_back(std::move(owned));
  ++live_;
  schedule_locked(start, 0, p);
  p->thread = std::thread([this, p] { thread_main(p); });
  return p;
}

void Network::spawn(std::string tag, Tick start, std::function<void()> body) {
  std::lock_guard lock(mutex_);
  spawn_locked(std::move(tag), start, std::move(body), nullptr);
}

void Network::thread_main(Process* p) {
  tl_context = {this, p};
  {
    std::unique_lock lock(mutex_);
    p->cv.wait(lock, [&] { return p->runnable || shutting_down_; });
    if (!p->runnable) {
      p->finished = true;
      --live_;
      return;
    }
  }
  try {
    p->body();
  } catch (...) {
    p->error = std::current_exception();
  }
  std::lock_guard lock(mutex_);
  p->finished = true;
  --live_;
  if (p->parent && --p->parent->pending_children == 0) schedule_locked(tick_, 0, p->parent);
  p->runnable = false;
  running_ = nullptr;
  loop_cv_.notify_all();
}

void Network::park_locked(std::unique_lock<std::mutex>& lock, Process* p) {
  p->runnable = false;
  running_ = nullptr;
  loop_cv_.notify_all();
  p->cv.wait(lock, [&] { return p->runnable || shutting_down_; });
  if (!p->runnable) throw TransportError("network shut down while a process was waiting");
}

void Network::yield_until(Tick tick, std::uint64_t key) {
  std::unique_lock lock(mutex_);
  Process* p = current();
  schedule_locked(tick, key, p);
  park_locked(lock, p);
}

void Network::run() {
  std::vector<std::unique_ptr<Process>> finished;
  {
    std::unique_lock lock(mutex_);
    if (loop_active_) throw std::logic_error("network loop is already running");
    loop_active_ = true;
    for (;;) {
      loop_cv_.wait(lock, [&] { return running_ == nullptr; });
      if (events_.empty()) break;
      Event e = events_.top();
      events_.pop();
      tick_ = e.tick;
      running_ = e.process;
      e.process->runnable = true;
      e.process->cv.notify_all();
    }
    loop_active_ = false;
    if (live_ != 0) throw std::logic_error("network loop stalled with parked processes");
    finished.swap(processes_);
  }
  std::exception_ptr first;
  for (auto& p : finished) {
    if (p->thread.joinable()) p->thread.join();
    if (!first && p->error) first = p->error;
  }
  if (first) std::rethrow_exception(first);
}

Tick Network::hop_locked(const std::string& from, const std::string& to) {
  Tick latency = config_.latency_ticks;
  for (const auto& link : config_.links) {
    if (link.from == from && link.to == to) {
      latency = link.ticks;
      break;
    }
  }
  if (config_.jitter_ticks > 0) {
    latency += static_cast<Tick>(rng_() % static_cast<std::uint64_t>(config_.jitter_ticks + 1));
  }
  return latency;
}

bool Network::reachable_locked(const std::string& id) const {
  if (!handlers_.contains(id)) return false;
  if (config_.unreachable.contains(id) || runtime_unreachable_.contains(id)) return false;
  auto outage = config_.outages.find(id);
  return outage == config_.outages.end() || tick_ < outage->second;
}

void Network::record_locked(const Envelope& env) {
  Process* p = current();
  trace_.push_back(TraceEntry{tick_, env, p ? p->tag : std::string()});
}

Envelope Network::send(Envelope request) {
  if (!current()) {
    Envelope out;
    spawn("direct", now(), [&] { out = send(std::move(request)); });
    run();
    return out;
  }
  if (request.kind != EnvelopeKind::GetDescriptor && request.kind != EnvelopeKind::InvokeRequest) {
    throw std::invalid_argument("only GetDescriptor and InvokeRequest envelopes can be sent");
  }

  Tick deliver;
  {
    std::lock_guard lock(mutex_);
    if (request.request_id == 0) request.request_id = next_request_id_++;
    deliver = tick_ + hop_locked(request.sender, request.target);
  }
  const std::uint64_t rid = request.request_id;
  yield_until(deliver, rid);

  Handler handler;
  {
    std::lock_guard lock(mutex_);
    record_locked(request);
    if (reachable_locked(request.target)) {
      handler = handlers_.at(request.target);
    } else {
      Envelope f = make_fault(request, fault::kPeerUnreachable,
                              "node '" + request.target + "' is unreachable");
      record_locked(f);
      return f;
    }
  }

  Envelope response;
  try {
    response = handler(request);
  } catch (const std::exception& e) {
    response = make_fault(request, fault::kInternal, e.what());
  }
  if (response.kind != EnvelopeKind::InvokeResponse && response.kind != EnvelopeKind::Fault) {
    response = make_fault(request, fault::kInternal, "handler produced a request envelope");
  }
  response.request_id = rid;
  response.sender = request.target;
  response.target = request.sender;

  Tick back;
  {
    std::lock_guard lock(mutex_);
    back = tick_ + hop_locked(request.target, request.sender);
  }
  yield_until(back, rid);
  {
    std::lock_guard lock(mutex_);
    record_locked(response);
  }
  return response;
}

void Network::fork_join(std::vector<std::function<void()>> branches) {
  if (!current()) {
    spawn("direct", now(), [&] { fork_join(std::move(branches)); });
    run();
    return;
  }
  if (branches.empty()) return;
  std::unique_lock lock(mutex_);
  Process* p = current();
  p->pending_children = branches.size();
  for (auto& branch : branches) spawn_locked(p->tag, tick_, std::move(branch), p);
  park_locked(lock, p);
}

std::vector<BroadcastResult> Network::broadcast_get_descriptors(const std::string& sender,
                                                                const std::set<std::string>& exclude) {
  std::vector<std::string> targets;
  for (auto& id : node_ids()) {
    if (!exclude.contains(id)) targets.push_back(std::move(id));
  }
  std::vector<BroadcastResult> results(targets.size());
  std::vector<std::function<void()>> branches;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    results[i].node = targets[i];
    branches.emplace_back([this, &results, i, &sender] {
      Envelope req;
      req.kind = EnvelopeKind::GetDescriptor;
      req.sender = sender;
      req.target = results[i].node;
      Envelope reply = send(std::move(req));
      if (reply.is_fault()) {
        results[i].skip_reason = reply.fault_code();
      } else if (reply.body.contains("wsdl") && reply.body["wsdl"].is_string()) {
        results[i].wsdl = reply.body["wsdl"].get<std::string>();
      } else {
        results[i].skip_reason = "MalformedReply";
      }
    });
  }
  fork_join(std::move(branches));
  return results;
}

void Network::sleep_until(Tick tick) {
  if (!current()) return;
  yield_until(tick, 0);
}

Tick Network::now() const {
  std::lock_guard lock(mutex_);
  return tick_;
}

void Network::set_tag(std::string tag) {
  std::lock_guard lock(mutex_);
  if (Process* p = current()) p->tag = std::move(tag);
}

std::vector<TraceEntry> Network::trace() const {
  std::lock_guard lock(mutex_);
  return trace_;
}

std::size_t Network::trace_size() const {
  std::lock_guard lock(mutex_);
  return trace_.size();
}

std::string Network::trace_jsonl() const {
  std::lock_guard lock(mutex_);
  std::string out;
  for (const auto& e : trace_) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

}  // namespace soacomp
