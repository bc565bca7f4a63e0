#include "fairdraw/simnet.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace fairdraw::sim {

// ---------------------------------------------------------------------------
// Coalition observation board
// ---------------------------------------------------------------------------

/// Side channel shared by colluding participants: members publish their own
/// secrets and anything they observe; adaptive members read it to defer and
/// craft their reveals.
class CoalitionBoard {
 public:
  std::function<void()> notify;

  void post_number(std::uint64_t a) {
    if (!number) number = a;
    if (notify) notify();
  }
  void post_perm(std::size_t g, const Permutation& p) {
    perms.emplace(g, p);
    if (notify) notify();
  }

  std::optional<std::uint64_t> number;
  std::map<std::size_t, Permutation> perms;
  bool forger_claimed = false;
};

// ---------------------------------------------------------------------------
// Adversarial sessions
// ---------------------------------------------------------------------------

namespace {

class StrategistInitiator : public InitiatorSession {
 public:
  StrategistInitiator(SessionConfig cfg, std::uint64_t k, EntropySource e, Strategy s,
                      CoalitionBoard* board)
      : InitiatorSession(cfg, k, std::move(e)), strat_(s), board_(s.coalition ? board : nullptr) {}

 protected:
  std::uint64_t choose_number() override {
    std::uint64_t v = strat_.kind == Strategy::Kind::constant_input
                          ? strat_.const_number % k_
                          : InitiatorSession::choose_number();
    if (board_) board_->post_number(v);
    return v;
  }

  InitiatorReveal build_reveal() override {
    InitiatorReveal r = InitiatorSession::build_reveal();
    if (strat_.kind == Strategy::Kind::renege) {
      // Swap the salt after the fact; the commitment no longer matches.
      r.salt = entropy_.next_salt();
      r.sig = SignatureBlock{
          name(), own_sign(as_span(signing::initiator_reveal(r.salt, r.draw_no, r.number)))};
    }
    return r;
  }

  void observed_guarantor_reveal(std::size_t g, const GuarantorReveal& gr) override {
    if (board_) board_->post_perm(g, gr.perm);
  }

 private:
  Strategy strat_;
  CoalitionBoard* board_;
};

class StrategistGuarantor : public GuarantorSession {
 public:
  StrategistGuarantor(SessionConfig cfg, EntropySource e, Strategy s, CoalitionBoard* board)
      : GuarantorSession(cfg, std::move(e)),
        strat_(s),
        board_(s.coalition || s.kind == Strategy::Kind::adaptive_reveal ? board : nullptr) {}

 protected:
  Permutation choose_permutation() override {
    Permutation p = [&] {
      if (strat_.kind == Strategy::Kind::constant_input) {
        if (strat_.const_perm && strat_.const_perm->size() == k_) return *strat_.const_perm;
        return Permutation::identity(k_);
      }
      return GuarantorSession::choose_permutation();
    }();
    if (board_) board_->post_perm(own_index_, p);
    return p;
  }

  GuarantorReveal build_reveal() override {
    GuarantorReveal r = GuarantorSession::build_reveal();
    if (strat_.kind == Strategy::Kind::renege) {
      r.salt = entropy_.next_salt();
      r.sig = SignatureBlock{
          name(), own_sign(as_span(signing::guarantor_reveal(r.salt, r.draw_no, r.perm)))};
    }
    return r;
  }

  bool defer_reveal() override { return strat_.kind == Strategy::Kind::adaptive_reveal; }

  void observed_initiator_reveal(const InitiatorReveal& r) override {
    if (board_) board_->post_number(r.number);
  }

  // Adaptive reveal: wait until the initiator's number and every other
  // guarantor's permutation are known, then either force the target result
  // with a fresh permutation (breaking the commitment) or comply with the
  // committed one.
  Output on_board_update() override {
    if (status() != Status::running || !reveal_pending_ || !initiator_reveal_ || !board_)
      return {};
    const std::size_t n = guarantor_count();
    std::vector<const Permutation*> perms(n, nullptr);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == own_index_) continue;
      auto it = board_->perms.find(i);
      if (it == board_->perms.end() || it->second.size() != k_) return {};  // keep waiting
      perms[i] = &it->second;
    }
    const std::uint64_t a = initiator_reveal_->number;
    if (strat_.target && *strat_.target < k_ && k_ >= 3 && !board_->forger_claimed) {
      board_->forger_claimed = true;  // one forger per coalition is enough
      std::uint64_t inner = a;
      for (std::size_t i = n; i-- > own_index_ + 1;) inner = perms[i]->apply(inner);
      std::uint64_t needed = *strat_.target;
      for (std::size_t i = 0; i < own_index_; ++i) needed = perms[i]->inverse().apply(needed);
      std::vector<std::uint64_t> m(k_);
      std::iota(m.begin(), m.end(), 0);
      std::swap(m[inner], m[needed]);
      Permutation forged(std::move(m));
      if (forged == *perm_) {
        // Pick the sibling permutation that still maps `inner` to `needed`.
        std::vector<std::uint64_t> m2 = forged.mapping();
        std::size_t u = (inner == 0) ? 1 : 0;
        std::size_t v = (u + 1 == inner) ? u + 2 : u + 1;
        std::swap(m2[u], m2[v]);
        forged = Permutation(std::move(m2));
      }
      GuarantorReveal r{salt_, draw_no_, std::move(forged), {}};
      r.sig = SignatureBlock{
          name(), own_sign(as_span(signing::guarantor_reveal(r.salt, r.draw_no, r.perm)))};
      return submit_reveal(std::move(r));
    }
    return submit_reveal(build_reveal());
  }

 private:
  Strategy strat_;
  CoalitionBoard* board_;
};

std::optional<WireKind> wire_kind_from_name(const std::string& s) {
  static const std::pair<const char*, WireKind> kNames[] = {
      {"draw_announce", WireKind::draw_announce},
      {"counter_signed_announce", WireKind::counter_signed_announce},
      {"announce_aggregate", WireKind::announce_aggregate},
      {"initiator_commit", WireKind::initiator_commit},
      {"counter_signed_commit", WireKind::counter_signed_commit},
      {"commit_aggregate", WireKind::commit_aggregate},
      {"guarantor_commit", WireKind::guarantor_commit},
      {"guarantor_hash_aggregate", WireKind::guarantor_hash_aggregate},
      {"countersigned_hash_aggregate", WireKind::countersigned_hash_aggregate},
      {"initiator_reveal", WireKind::initiator_reveal},
      {"guarantor_reveal", WireKind::guarantor_reveal},
      {"reveal_aggregate", WireKind::reveal_aggregate},
      {"transcript_publish", WireKind::transcript_publish},
      {"abort_notice", WireKind::abort_notice},
  };
  for (const auto& [name, kind] : kNames)
    if (s == name) return kind;
  return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// SimWorld
// ---------------------------------------------------------------------------

struct SimWorld::Runtime {
  std::unique_ptr<Session> session;
  Strategy strategy;
  std::uint64_t timer_gen = 0;
  bool silenced = false;
};

struct SimWorld::Event {
  SimTime time = 0;
  std::uint64_t seq = 0;
  enum class Type { deliver, timer, board_wake } type = Type::deliver;
  Envelope env;
  std::string participant;
  std::uint64_t timer_gen = 0;
  std::size_t trace_idx = SIZE_MAX;
};

namespace {
struct EventLater {
  bool operator()(const SimWorld::Event&, const SimWorld::Event&) const;
};
}  // namespace

bool EventLater::operator()(const SimWorld::Event& a, const SimWorld::Event& b) const {
  return std::tie(a.time, a.seq) > std::tie(b.time, b.seq);
}

SimWorld::SimWorld(std::vector<ParticipantSpec> specs, SimSchedule schedule, RunOptions opts)
    : specs_(std::move(specs)),
      schedule_(schedule),
      opts_(opts),
      world_entropy_(EntropySource::seeded(schedule.seed)),
      latency_rng_(world_entropy_.fork(1)) {
  // Roster order: the initiator first, guarantors in spec order.
  std::stable_sort(specs_.begin(), specs_.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.role) < static_cast<int>(b.role);
  });
  std::size_t initiators = 0;
  for (const auto& s : specs_)
    if (s.role == Role::initiator) ++initiators;
  if (initiators != 1) throw std::invalid_argument("exactly one initiator required");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    EntropySource key_src = world_entropy_.fork(1000 + i);
    keys_.push_back(generate_keypair(specs_[i].name, key_src));
    roster_.participants.push_back(RosterEntry{specs_[i].role, specs_[i].name, keys_[i].pub});
    registers_.emplace(specs_[i].name, DrawRegister{});
  }
  roster_.validate();
}

SimWorld::~SimWorld() = default;

DrawRegister& SimWorld::register_of(const std::string& name) {
  auto it = registers_.find(name);
  if (it == registers_.end()) throw std::invalid_argument("unknown participant: " + name);
  return it->second;
}

void SimWorld::set_register(const std::string& name, DrawRegister reg) {
  register_of(name) = std::move(reg);
}

void SimWorld::use_keys(std::vector<KeyPair> keys) {
  if (draws_run_ != 0) throw std::logic_error("use_keys must precede the first draw");
  if (keys.size() != specs_.size()) throw std::invalid_argument("one key pair per participant");
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    auto it = std::find_if(keys.begin(), keys.end(),
                           [&](const KeyPair& kp) { return kp.signer_id == specs_[i].name; });
    if (it == keys.end())
      throw std::invalid_argument("no key pair for participant " + specs_[i].name);
    keys_[i] = std::move(*it);
    roster_.participants[i].pub = keys_[i].pub;
  }
}

SimTime SimWorld::sample_latency() {
  if (schedule_.latency.kind == LatencySpec::Kind::fixed) return schedule_.latency.base;
  return schedule_.latency.base + latency_rng_.next_below(schedule_.latency.spread + 1);
}

void SimWorld::schedule_send(Envelope env, bool injected, bool tampered) {
  const SimTime latency = sample_latency();
  auto link = std::make_pair(env.from, env.to);
  SimTime at = std::max(now_ + latency, link_front_[link]);  // per-link FIFO
  link_front_[link] = at;
  std::size_t trace_idx = SIZE_MAX;
  if (opts_.record_trace) {
    trace_idx = trace_.size();
    trace_.push_back(TracedMessage{now_, at, current_draw_, env, injected, tampered, false});
  }
  Event ev;
  ev.time = at;
  ev.seq = ++event_seq_;
  ev.type = Event::Type::deliver;
  ev.env = std::move(env);
  ev.trace_idx = trace_idx;
  queue_.push_back(std::move(ev));
  std::push_heap(queue_.begin(), queue_.end(), EventLater{});
}

void SimWorld::process_output(const std::string& from, Session::Output out) {
  Runtime& rt = *runtimes_.at(from);
  if (rt.silenced) return;

  for (Envelope& env : out.send) {
    // Staller: refuses to participate from its stop step on; nothing leaves
    // it afterwards, not even abort notices.
    if (rt.strategy.kind == Strategy::Kind::staller &&
        step_of(env.kind) >= rt.strategy.stop_at_step) {
      rt.silenced = true;
      ++rt.timer_gen;
      return;
    }
    // Replayer: presents its recorded message from the previous draw as new.
    if (rt.strategy.kind == Strategy::Kind::replayer && current_draw_ >= 2 &&
        opts_.record_trace) {
      for (const TracedMessage& m : trace_) {
        if (m.draw_no == current_draw_ - 1 && m.env.kind == env.kind && m.env.from == env.from &&
            m.env.to == env.to && !m.injected && !m.dropped && !m.tampered) {
          env.payload = m.env.payload;
          break;
        }
      }
    }

    // Fault script: the first matching unconsumed entry applies.
    FaultSpec* hit = nullptr;
    for (FaultSpec& f : faults_left_) {
      if (f.max_uses <= 0) continue;
      if (f.at_step && *f.at_step != step_of(env.kind)) continue;
      if (f.at_draw && *f.at_draw != current_draw_) continue;
      if (f.kind && *f.kind != env.kind) continue;
      if (f.from && *f.from != env.from) continue;
      if (f.to && *f.to != env.to) continue;
      hit = &f;
      break;
    }
    if (!hit) {
      schedule_send(std::move(env), false, false);
      continue;
    }
    --hit->max_uses;
    switch (hit->action) {
      case FaultSpec::Action::drop:
        if (opts_.record_trace)
          trace_.push_back(TracedMessage{now_, 0, current_draw_, env, false, false, true});
        break;
      case FaultSpec::Action::duplicate:
        schedule_send(env, false, false);
        schedule_send(std::move(env), true, false);
        break;
      case FaultSpec::Action::delay: {
        SimTime extra = hit->delay_ms;
        auto link = std::make_pair(env.from, env.to);
        SimTime at = std::max(now_ + sample_latency() + extra, link_front_[link]);
        link_front_[link] = at;
        std::size_t trace_idx = SIZE_MAX;
        if (opts_.record_trace) {
          trace_idx = trace_.size();
          trace_.push_back(TracedMessage{now_, at, current_draw_, env, false, false, false});
        }
        Event ev;
        ev.time = at;
        ev.seq = ++event_seq_;
        ev.type = Event::Type::deliver;
        ev.env = std::move(env);
        ev.trace_idx = trace_idx;
        queue_.push_back(std::move(ev));
        std::push_heap(queue_.begin(), queue_.end(), EventLater{});
        break;
      }
      case FaultSpec::Action::tamper: {
        Envelope t = env;
        if (!t.payload.empty()) t.payload[hit->byte_index % t.payload.size()] ^= 0xff;
        schedule_send(std::move(t), false, true);
        break;
      }
      case FaultSpec::Action::replay: {
        // Inject the recorded message ahead of the genuine one.
        for (const TracedMessage& m : trace_) {
          if (m.draw_no == hit->replay_draw && m.env.kind == env.kind &&
              m.env.from == env.from && m.env.to == env.to && !m.injected && !m.dropped &&
              !m.tampered) {
            schedule_send(m.env, true, false);
            break;
          }
        }
        schedule_send(std::move(env), false, false);
        break;
      }
    }
  }

  if (out.timer.cancel) ++rt.timer_gen;
  if (out.timer.set) {
    ++rt.timer_gen;
    Event ev;
    ev.time = now_ + out.timer.delay_ms;
    ev.seq = ++event_seq_;
    ev.type = Event::Type::timer;
    ev.participant = from;
    ev.timer_gen = rt.timer_gen;
    queue_.push_back(std::move(ev));
    std::push_heap(queue_.begin(), queue_.end(), EventLater{});
  }
}

RunOutcome SimWorld::run_draw(std::uint64_t k) {
  const std::string initiator = roster_.initiator().name;
  current_draw_ = registers_.at(initiator).next_draw_number();
  board_ = std::make_unique<CoalitionBoard>();

  runtimes_.clear();
  queue_.clear();
  link_front_.clear();
  faults_left_ = schedule_.faults;
  now_ = 0;
  event_seq_ = 0;

  std::vector<std::string> watchers;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ParticipantSpec& spec = specs_[i];
    SessionConfig cfg;
    cfg.roster = &roster_;
    cfg.keys = &keys_[i];
    cfg.reg = &registers_.at(spec.name);
    cfg.timeout_ms = schedule_.timeout_ms;
    cfg.abort_mode = schedule_.abort_mode;
    EntropySource entropy = world_entropy_.fork(2000 + i).fork(current_draw_);
    auto rt = std::make_unique<Runtime>();
    rt->strategy = spec.strategy;
    if (spec.role == Role::initiator) {
      rt->session = spec.strategy.honest_kind()
                        ? std::make_unique<InitiatorSession>(cfg, k, std::move(entropy))
                        : std::make_unique<StrategistInitiator>(cfg, k, std::move(entropy),
                                                                spec.strategy, board_.get());
    } else {
      rt->session = spec.strategy.honest_kind()
                        ? std::make_unique<GuarantorSession>(cfg, std::move(entropy))
                        : std::make_unique<StrategistGuarantor>(cfg, std::move(entropy),
                                                                spec.strategy, board_.get());
    }
    if (spec.strategy.kind == Strategy::Kind::adaptive_reveal) watchers.push_back(spec.name);
    runtimes_.emplace(spec.name, std::move(rt));
  }
  board_->notify = [this, watchers] {
    for (const std::string& w : watchers) {
      Event ev;
      ev.time = now_;
      ev.seq = ++event_seq_;
      ev.type = Event::Type::board_wake;
      ev.participant = w;
      queue_.push_back(std::move(ev));
      std::push_heap(queue_.begin(), queue_.end(), EventLater{});
    }
  };

  process_output(initiator, runtimes_.at(initiator)->session->start());

  while (!queue_.empty()) {
    std::pop_heap(queue_.begin(), queue_.end(), EventLater{});
    Event ev = std::move(queue_.back());
    queue_.pop_back();
    if (ev.time > schedule_.horizon) break;
    now_ = ev.time;
    switch (ev.type) {
      case Event::Type::deliver: {
        auto it = runtimes_.find(ev.env.to);
        if (it == runtimes_.end()) break;
        if (ev.trace_idx != SIZE_MAX) trace_[ev.trace_idx].delivered = now_;
        const std::string to = ev.env.to;
        process_output(to, it->second->session->on_message(ev.env));
        break;
      }
      case Event::Type::timer: {
        Runtime& rt = *runtimes_.at(ev.participant);
        if (ev.timer_gen != rt.timer_gen || rt.silenced) break;
        process_output(ev.participant, rt.session->on_timeout());
        break;
      }
      case Event::Type::board_wake: {
        Runtime& rt = *runtimes_.at(ev.participant);
        if (rt.silenced) break;
        process_output(ev.participant, rt.session->on_board_update());
        break;
      }
    }
    bool all_terminal = true;
    for (const auto& [name, rt] : runtimes_)
      if (rt->session->status() == Session::Status::running && !rt->silenced) {
        all_terminal = false;
        break;
      }
    if (all_terminal) break;
  }

  RunOutcome out;
  out.duration = now_;
  for (const auto& [name, rt] : runtimes_) {
    if (rt->session->status() == Session::Status::running)
      rt->session->force_abort(FaultCause::timeout);
    ParticipantOutcome po;
    po.status = rt->session->status();
    po.result = rt->session->result();
    po.abort = rt->session->abort_record();
    po.forged_submission = rt->session->forged_submission();
    out.participants.emplace(name, po);
    if (const DrawTranscript* t = rt->session->final_transcript()) {
      registers_.at(name).append(*t);
      if (opts_.keep_transcripts && rt->strategy.honest_kind())
        out.transcripts.emplace(name, *t);
    }
  }
  // Agreement is judged over the honest participants; an all-adversarial
  // roster (negative controls) is judged over everyone.
  bool any_honest = false;
  for (const ParticipantSpec& spec : specs_) any_honest = any_honest || spec.strategy.honest_kind();
  out.completed = true;
  for (const ParticipantSpec& spec : specs_) {
    if (any_honest && !spec.strategy.honest_kind()) continue;
    const ParticipantOutcome& po = out.participants.at(spec.name);
    if (po.status == Session::Status::completed) {
      if (any_honest && out.result && *out.result != *po.result)
        throw std::logic_error("honest participants disagree on the result");
      if (!out.result) out.result = po.result;
    } else {
      out.completed = false;
      if (!out.first_abort) out.first_abort = po.abort;
    }
  }
  if (!out.completed) out.result.reset();

  ++draws_run_;
  runtimes_.clear();
  board_.reset();
  return out;
}

// ---------------------------------------------------------------------------
// No-forgery assertion
// ---------------------------------------------------------------------------

namespace {

struct SigCtx {
  std::string signer;
  Bytes msg;
  Bytes sig;
};

void collect_structure_sigs(StructureTag tag, ConstSpan bytes, std::vector<SigCtx>& out) {
  switch (tag) {
    case StructureTag::draw_announce: {
      DrawAnnounce s = decode_draw_announce(bytes);
      out.push_back({s.sig.signer_id, signing::draw_announce(s.k, s.draw_no), s.sig.signature});
      return;
    }
    case StructureTag::counter_signed_announce: {
      CounterSignedAnnounce s = decode_counter_signed_announce(bytes);
      out.push_back({s.announce.sig.signer_id,
                     signing::draw_announce(s.announce.k, s.announce.draw_no),
                     s.announce.sig.signature});
      out.push_back({s.guarantor_sig.signer_id, signing::counter_signed_announce(s.announce),
                     s.guarantor_sig.signature});
      return;
    }
    case StructureTag::announce_aggregate: {
      AnnounceAggregate s = decode_announce_aggregate(bytes);
      for (const auto& e : s.entries)
        collect_structure_sigs(StructureTag::counter_signed_announce, as_span(encode(e)), out);
      out.push_back({s.covering_sig.signer_id, signing::announce_aggregate(s.entries),
                     s.covering_sig.signature});
      return;
    }
    case StructureTag::initiator_commit: {
      InitiatorCommit s = decode_initiator_commit(bytes);
      out.push_back(
          {s.sig.signer_id, signing::initiator_commit(s.draw_no, s.hash), s.sig.signature});
      return;
    }
    case StructureTag::counter_signed_commit: {
      CounterSignedCommit s = decode_counter_signed_commit(bytes);
      out.push_back({s.commit.sig.signer_id,
                     signing::initiator_commit(s.commit.draw_no, s.commit.hash),
                     s.commit.sig.signature});
      out.push_back({s.guarantor_sig.signer_id, signing::counter_signed_commit(s.commit),
                     s.guarantor_sig.signature});
      return;
    }
    case StructureTag::commit_aggregate: {
      CommitAggregate s = decode_commit_aggregate(bytes);
      for (const auto& e : s.entries)
        collect_structure_sigs(StructureTag::counter_signed_commit, as_span(encode(e)), out);
      out.push_back({s.covering_sig.signer_id, signing::commit_aggregate(s.entries),
                     s.covering_sig.signature});
      return;
    }
    case StructureTag::guarantor_commit: {
      GuarantorCommit s = decode_guarantor_commit(bytes);
      out.push_back(
          {s.sig.signer_id, signing::guarantor_commit(s.draw_no, s.hash), s.sig.signature});
      return;
    }
    case StructureTag::guarantor_hash_aggregate: {
      GuarantorHashAggregate s = decode_guarantor_hash_aggregate(bytes);
      for (const auto& e : s.entries)
        collect_structure_sigs(StructureTag::guarantor_commit, as_span(encode(e)), out);
      out.push_back(
          {s.covering_sig.signer_id, signing::hash_aggregate(s.entries), s.covering_sig.signature});
      return;
    }
    case StructureTag::countersigned_hash_aggregate: {
      CountersignedHashAggregate s = decode_countersigned_hash_aggregate(bytes);
      collect_structure_sigs(StructureTag::guarantor_hash_aggregate, as_span(encode(s.inner)),
                             out);
      out.push_back({s.guarantor_sig.signer_id, signing::countersigned_hash_aggregate(s.inner),
                     s.guarantor_sig.signature});
      return;
    }
    case StructureTag::initiator_reveal: {
      InitiatorReveal s = decode_initiator_reveal(bytes);
      out.push_back({s.sig.signer_id, signing::initiator_reveal(s.salt, s.draw_no, s.number),
                     s.sig.signature});
      return;
    }
    case StructureTag::guarantor_reveal: {
      GuarantorReveal s = decode_guarantor_reveal(bytes);
      out.push_back({s.sig.signer_id, signing::guarantor_reveal(s.salt, s.draw_no, s.perm),
                     s.sig.signature});
      return;
    }
    case StructureTag::reveal_aggregate: {
      RevealAggregate s = decode_reveal_aggregate(bytes);
      for (const auto& e : s.entries)
        collect_structure_sigs(StructureTag::guarantor_reveal, as_span(encode(e)), out);
      out.push_back({s.covering_sig.signer_id, signing::reveal_aggregate(s.entries),
                     s.covering_sig.signature});
      return;
    }
    case StructureTag::abort_notice: {
      AbortNotice s = decode_abort_notice(bytes);
      out.push_back({s.sig.signer_id,
                     signing::abort_notice(s.draw_no, s.phase, s.cause_code, s.culprit),
                     s.sig.signature});
      return;
    }
  }
}

void collect_sigs(const Envelope& env, std::vector<SigCtx>& out) {
  if (env.kind == WireKind::transcript_publish) {
    DrawTranscript t = DrawTranscript::from_file_bytes(as_span(env.payload));
    for (const Bytes& s : t.structures)
      collect_structure_sigs(peek_tag(as_span(s)), as_span(s), out);
    return;
  }
  if (auto tag = structure_tag_of(env.kind)) collect_structure_sigs(*tag, as_span(env.payload), out);
}

}  // namespace

void check_no_forgery(const std::vector<TracedMessage>& trace, const Roster& roster) {
  std::set<std::pair<std::string, Bytes>> owned;
  for (const TracedMessage& m : trace) {
    if (m.dropped) continue;
    std::vector<SigCtx> sigs;
    try {
      collect_sigs(m.env, sigs);
    } catch (const CodecError&) {
      continue;  // tampered payloads need not decode
    }
    for (const SigCtx& s : sigs) {
      const PublicKey* pk = roster.key_of(s.signer);
      if (!pk) continue;
      bool ok = false;
      try {
        ok = verify(*pk, as_span(s.msg), as_span(s.sig));
      } catch (const CryptoError&) {
      }
      if (!ok) continue;
      if (m.env.from == s.signer) {
        owned.insert({s.signer, s.sig});
      } else if (!owned.count({s.signer, s.sig})) {
        throw std::logic_error("verifying signature by " + s.signer +
                               " appeared first in traffic from " + m.env.from);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

std::array<std::uint8_t, 32> trial_seed(const std::array<std::uint8_t, 32>& base,
                                        std::uint64_t trial) {
  ByteWriter w;
  w.raw(ConstSpan(base.data(), base.size()));
  w.raw(as_span(std::string("fairdraw.trial")));
  w.u64(trial);
  return sha3_256(as_span(w.bytes())).bytes;
}

}  // namespace

ChiSquareReport coalition_bias_experiment(const ExperimentSpec& spec) {
  if (spec.k < 1) throw std::invalid_argument("k must be >= 1");
  if (spec.trials == 0) throw std::invalid_argument("trials must be >= 1");

  std::vector<std::uint64_t> bins(spec.k, 0);
  std::uint64_t aborted = 0;
  std::uint64_t completed = 0;

  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());

  auto run_attempt = [&](std::uint64_t attempt) -> std::optional<std::uint64_t> {
    SimSchedule sch;
    sch.seed = trial_seed(spec.seed, attempt);
    sch.latency = LatencySpec{LatencySpec::Kind::fixed, 1, 0};
    sch.timeout_ms = spec.timeout_ms;
    SimWorld world(spec.participants, sch, RunOptions{false, false});
    RunOutcome out = world.run_draw(spec.k);
    return out.completed ? out.result : std::nullopt;
  };

  // Attempts run in deterministic index batches; the batch split depends only
  // on outcomes, so the tally is identical for any thread count.
  const std::uint64_t cap = spec.trials * std::max<std::uint64_t>(1, spec.attempt_factor);
  std::uint64_t next_attempt = 0;
  while (completed < spec.trials && next_attempt < cap) {
    const std::uint64_t batch = std::min(spec.trials - completed, cap - next_attempt);
    const std::uint64_t begin = next_attempt;
    const std::uint64_t end = next_attempt + batch;
    next_attempt = end;

    std::atomic<std::uint64_t> cursor{begin};
    std::mutex merge;
    auto worker = [&] {
      std::vector<std::uint64_t> local_bins(spec.k, 0);
      std::uint64_t local_aborted = 0;
      for (;;) {
        std::uint64_t i = cursor.fetch_add(1);
        if (i >= end) break;
        auto r = run_attempt(i);
        if (r) {
          if (*r >= spec.k) throw std::logic_error("draw result out of range");
          ++local_bins[*r];
        } else {
          ++local_aborted;
        }
      }
      std::lock_guard<std::mutex> lock(merge);
      for (std::size_t b = 0; b < bins.size(); ++b) bins[b] += local_bins[b];
      aborted += local_aborted;
    };
    if (threads <= 1 || batch < 2 * threads) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    completed = std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
  }

  if (spec.k == 1) {
    // One bin has zero degrees of freedom; report a trivially exact fit.
    ChiSquareReport r;
    r.bins = bins;
    r.statistic = 0.0;
    r.degrees_of_freedom = 0;
    r.threshold = 0.0;
    r.pass = true;
    r.trials = completed;
    r.aborted_runs = aborted;
    return r;
  }
  return uniformity_report(std::move(bins), aborted);
}

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

namespace {

std::uint64_t parse_u64(const std::string& s, int line_no) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  }
}

std::array<std::uint8_t, 32> parse_seed(const std::string& s, int line_no) {
  std::array<std::uint8_t, 32> seed{};
  if (s.rfind("0x", 0) == 0) {
    std::string hex = s.substr(2);
    if (hex.size() > 64 || hex.size() % 2 != 0)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": bad hex seed");
    Bytes raw = from_hex(hex);
    std::copy(raw.begin(), raw.end(), seed.begin() + (32 - raw.size()));
    return seed;
  }
  std::uint64_t v = parse_u64(s, line_no);
  for (int i = 0; i < 8; ++i) seed[31 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  return seed;
}

std::map<std::string, std::string> parse_kv(const std::vector<std::string>& tokens,
                                            std::size_t from, int line_no) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = from; i < tokens.size(); ++i) {
    auto eq = tokens[i].find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value, got '" +
                                  tokens[i] + "'");
    kv[tokens[i].substr(0, eq)] = tokens[i].substr(eq + 1);
  }
  return kv;
}

Strategy parse_strategy(const std::vector<std::string>& tokens, std::size_t from, int line_no) {
  Strategy s;
  const std::string& kind = tokens[from];
  if (kind == "honest") s.kind = Strategy::Kind::honest;
  else if (kind == "renege") s.kind = Strategy::Kind::renege;
  else if (kind == "adaptive-reveal" || kind == "adaptive") s.kind = Strategy::Kind::adaptive_reveal;
  else if (kind == "replayer") s.kind = Strategy::Kind::replayer;
  else if (kind == "staller") s.kind = Strategy::Kind::staller;
  else if (kind == "constant-input" || kind == "constant") s.kind = Strategy::Kind::constant_input;
  else
    throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown strategy '" + kind +
                                "'");
  auto kv = parse_kv(tokens, from + 1, line_no);
  for (const auto& [key, value] : kv) {
    if (key == "target") s.target = parse_u64(value, line_no);
    else if (key == "stop_at") s.stop_at_step = static_cast<int>(parse_u64(value, line_no));
    else if (key == "number") s.const_number = parse_u64(value, line_no);
    else if (key == "perm") {
      if (value == "identity") {
        s.const_perm.reset();  // identity of the announced k
      } else {
        std::vector<std::uint64_t> m;
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) m.push_back(parse_u64(part, line_no));
        s.const_perm = Permutation(std::move(m));
      }
    } else {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown parameter '" +
                                  key + "'");
    }
  }
  return s;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty()) continue;
    const std::string& cmd = tok[0];
    auto need = [&](std::size_t n) {
      if (tok.size() < n)
        throw std::invalid_argument("line " + std::to_string(line_no) + ": '" + cmd +
                                    "' needs more arguments");
    };
    if (cmd == "seed") {
      need(2);
      cfg.schedule.seed = parse_seed(tok[1], line_no);
    } else if (cmd == "k") {
      need(2);
      cfg.k = parse_u64(tok[1], line_no);
    } else if (cmd == "draws") {
      need(2);
      cfg.draws = parse_u64(tok[1], line_no);
    } else if (cmd == "trials") {
      need(2);
      cfg.trials = parse_u64(tok[1], line_no);
    } else if (cmd == "threads") {
      need(2);
      cfg.threads = static_cast<unsigned>(parse_u64(tok[1], line_no));
    } else if (cmd == "timeout") {
      need(2);
      cfg.schedule.timeout_ms = parse_u64(tok[1], line_no);
    } else if (cmd == "horizon") {
      need(2);
      cfg.schedule.horizon = parse_u64(tok[1], line_no);
    } else if (cmd == "abort-mode") {
      need(2);
      if (tok[1] == "signed") cfg.schedule.abort_mode = AbortMode::signed_error;
      else if (tok[1] == "silent") cfg.schedule.abort_mode = AbortMode::silent;
      else throw std::invalid_argument("line " + std::to_string(line_no) + ": bad abort mode");
    } else if (cmd == "latency") {
      need(3);
      if (tok[1] == "fixed") {
        cfg.schedule.latency = LatencySpec{LatencySpec::Kind::fixed, parse_u64(tok[2], line_no), 0};
      } else if (tok[1] == "random") {
        need(4);
        cfg.schedule.latency = LatencySpec{LatencySpec::Kind::randomized,
                                           parse_u64(tok[2], line_no), parse_u64(tok[3], line_no)};
      } else {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": bad latency model");
      }
    } else if (cmd == "participant") {
      need(4);
      ParticipantSpec p;
      if (tok[1] == "initiator") p.role = Role::initiator;
      else if (tok[1] == "guarantor") p.role = Role::guarantor;
      else throw std::invalid_argument("line " + std::to_string(line_no) + ": bad role");
      p.name = tok[2];
      p.strategy = parse_strategy(tok, 3, line_no);
      cfg.participants.push_back(std::move(p));
    } else if (cmd == "coalition") {
      need(2);
      for (std::size_t i = 1; i < tok.size(); ++i) {
        bool found = false;
        for (auto& p : cfg.participants)
          if (p.name == tok[i]) {
            p.strategy.coalition = true;
            found = true;
          }
        if (!found)
          throw std::invalid_argument("line " + std::to_string(line_no) +
                                      ": coalition member '" + tok[i] + "' not declared");
      }
    } else if (cmd == "fault") {
      need(2);
      FaultSpec f;
      if (tok[1] == "drop") f.action = FaultSpec::Action::drop;
      else if (tok[1] == "duplicate") f.action = FaultSpec::Action::duplicate;
      else if (tok[1] == "delay") f.action = FaultSpec::Action::delay;
      else if (tok[1] == "tamper") f.action = FaultSpec::Action::tamper;
      else if (tok[1] == "replay") f.action = FaultSpec::Action::replay;
      else throw std::invalid_argument("line " + std::to_string(line_no) + ": bad fault action");
      auto kv = parse_kv(tok, 2, line_no);
      for (const auto& [key, value] : kv) {
        if (key == "step") f.at_step = static_cast<int>(parse_u64(value, line_no));
        else if (key == "at_draw") f.at_draw = parse_u64(value, line_no);
        else if (key == "kind") {
          auto k = wire_kind_from_name(value);
          if (!k)
            throw std::invalid_argument("line " + std::to_string(line_no) +
                                        ": unknown message kind '" + value + "'");
          f.kind = *k;
        } else if (key == "from") f.from = value;
        else if (key == "to") f.to = value;
        else if (key == "delay") f.delay_ms = parse_u64(value, line_no);
        else if (key == "byte") f.byte_index = parse_u64(value, line_no);
        else if (key == "draw") f.replay_draw = parse_u64(value, line_no);
        else if (key == "uses") f.max_uses = static_cast<int>(parse_u64(value, line_no));
        else
          throw std::invalid_argument("line " + std::to_string(line_no) +
                                      ": unknown fault parameter '" + key + "'");
      }
      cfg.schedule.faults.push_back(std::move(f));
    } else {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown directive '" +
                                  cmd + "'");
    }
  }
  if (cfg.participants.empty())
    throw std::invalid_argument("scenario declares no participants");
  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

}  // namespace fairdraw::sim
