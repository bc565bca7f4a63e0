#include "fairdraw/protocol.hpp"

#include <algorithm>

namespace fairdraw {

const char* wire_kind_name(WireKind k) {
  if (k == WireKind::transcript_publish) return "transcript_publish";
  if (k == WireKind::abort_notice) return "abort_notice";
  return structure_name(static_cast<StructureTag>(k));
}

int step_of(WireKind k) {
  switch (k) {
    case WireKind::draw_announce: return 1;
    case WireKind::counter_signed_announce: return 2;
    case WireKind::announce_aggregate: return 3;
    case WireKind::initiator_commit: return 5;
    case WireKind::counter_signed_commit: return 6;
    case WireKind::commit_aggregate: return 7;
    case WireKind::guarantor_commit: return 9;
    case WireKind::guarantor_hash_aggregate: return 10;
    case WireKind::countersigned_hash_aggregate: return 11;
    case WireKind::initiator_reveal: return 12;
    case WireKind::guarantor_reveal: return 13;
    case WireKind::reveal_aggregate: return 14;
    case WireKind::transcript_publish: return 15;
    case WireKind::abort_notice: return 0;
  }
  return 0;
}

std::optional<StructureTag> structure_tag_of(WireKind k) {
  if (k == WireKind::transcript_publish) return std::nullopt;
  return static_cast<StructureTag>(k);
}

std::size_t transcript_position(int step, std::size_t sub, std::size_t n) {
  switch (step) {
    case 1: return 0;
    case 2: return 1 + sub;
    case 3: return 1 + n;
    case 5: return 2 + n;
    case 6: return 3 + n + sub;
    case 7: return 3 + 2 * n;
    case 9: return 4 + 2 * n + sub;
    case 10: return 4 + 3 * n;
    case 11: return 5 + 3 * n + sub;
    case 12: return 5 + 4 * n;
    case 13: return 6 + 4 * n + sub;
    case 14: return 6 + 5 * n;
  }
  throw std::invalid_argument("no transcript position for step " + std::to_string(step));
}

// ---------------------------------------------------------------------------
// Session base
// ---------------------------------------------------------------------------

Session::Session(SessionConfig cfg) : cfg_(cfg) {
  if (!cfg_.roster || !cfg_.keys) throw std::invalid_argument("session needs roster and keys");
  cfg_.roster->validate();
}

bool Session::peer_verify(const SignatureBlock& sig, const std::string& expected_signer,
                          const Bytes& msg) const {
  if (sig.signer_id != expected_signer) return false;
  const PublicKey* pk = cfg_.roster->key_of(sig.signer_id);
  if (!pk) return false;
  try {
    return verify(*pk, as_span(msg), as_span(sig.signature));
  } catch (const CryptoError&) {
    return false;
  }
}

void Session::record(int step, std::size_t sub, const Bytes& bytes) {
  seen_[{step, sub}] = bytes;
}

DrawTranscript Session::evidence_transcript(const DrawOutcome& outcome) const {
  DrawTranscript t;
  t.header.scheme = SchemeId::ed25519;
  t.header.k = k_;
  t.header.draw_no = draw_no_;
  t.header.roster = *cfg_.roster;
  t.header.outcome = outcome;
  for (const auto& [key, bytes] : seen_) t.structures.push_back(bytes);
  return t;
}

Session::Output Session::fail(int phase, FaultCause cause, std::optional<std::string> culprit) {
  status_ = Status::aborted;
  abort_ = Abort{static_cast<std::uint32_t>(phase), cause, culprit, cfg_.abort_mode};
  transcript_ = evidence_transcript(DrawOutcome{std::nullopt, abort_});
  Output out;
  out.timer.cancel = true;
  if (cfg_.abort_mode == AbortMode::signed_error) {
    AbortNotice notice;
    notice.draw_no = draw_no_;
    notice.phase = static_cast<std::uint64_t>(phase);
    notice.cause_code = static_cast<std::uint64_t>(cause);
    notice.culprit = culprit.value_or("");
    notice.sig = SignatureBlock{
        name(), own_sign(as_span(signing::abort_notice(notice.draw_no, notice.phase,
                                                       notice.cause_code, notice.culprit)))};
    Bytes payload = encode(notice);
    for (const RosterEntry& e : cfg_.roster->participants) {
      if (e.name == name()) continue;
      out.send.push_back(Envelope{name(), e.name, WireKind::abort_notice, payload});
    }
  }
  return out;
}

void Session::force_abort(FaultCause cause) {
  if (status_ != Status::running) return;
  status_ = Status::aborted;
  abort_ = Abort{static_cast<std::uint32_t>(current_step()), cause, std::nullopt,
                 AbortMode::silent};
  transcript_ = evidence_transcript(DrawOutcome{std::nullopt, abort_});
}

void Session::complete(std::uint64_t result, DrawTranscript transcript) {
  status_ = Status::completed;
  result_ = result;
  transcript_ = std::move(transcript);
}

bool Session::duplicate_delivery(const Envelope& env) const {
  auto it = accepted_.find({env.kind, env.from});
  return it != accepted_.end() && it->second == env.payload;
}

void Session::remember_delivery(const Envelope& env) {
  accepted_[{env.kind, env.from}] = env.payload;
}

Session::Output Session::handle_abort_notice(const Envelope& env) {
  try {
    AbortNotice notice = decode_abort_notice(as_span(env.payload));
    if (notice.draw_no != draw_no_) return {};
    if (notice.cause_code < 1 || notice.cause_code > 6) return {};
    if (notice.phase < 1 || notice.phase > 15) return {};
    if (!peer_verify(notice.sig, env.from,
                     signing::abort_notice(notice.draw_no, notice.phase, notice.cause_code,
                                           notice.culprit)))
      return {};
    status_ = Status::aborted;
    abort_ = Abort{static_cast<std::uint32_t>(notice.phase),
                   static_cast<FaultCause>(notice.cause_code),
                   notice.culprit.empty() ? std::nullopt
                                          : std::optional<std::string>(notice.culprit),
                   AbortMode::signed_error};
    transcript_ = evidence_transcript(DrawOutcome{std::nullopt, abort_});
    Output out;
    out.timer.cancel = true;
    return out;
  } catch (const CodecError&) {
    return {};  // unverifiable notices cannot end a draw
  }
}

Session::Output Session::unexpected(const Envelope& env) {
  // Stale traffic is rejected on its draw number first; everything else is a
  // malformed or out-of-position message.
  if (auto tag = structure_tag_of(env.kind)) {
    try {
      std::uint64_t dn = draw_no_of(*tag, as_span(env.payload));
      if (dn != draw_no_) return fail(current_step(), FaultCause::bad_draw_no, std::nullopt);
    } catch (const CodecError&) {
    }
  }
  return fail(current_step(), FaultCause::decode_error, std::nullopt);
}

// ---------------------------------------------------------------------------
// InitiatorSession
// ---------------------------------------------------------------------------

InitiatorSession::InitiatorSession(SessionConfig cfg, std::uint64_t k, EntropySource entropy)
    : Session(cfg), entropy_(std::move(entropy)) {
  if (cfg_.keys->signer_id != initiator_name())
    throw std::invalid_argument("initiator session requires the initiator's keys");
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (k > cfg_.max_k) throw std::invalid_argument("k exceeds the configured maximum");
  k_ = k;
  draw_no_ = cfg_.reg ? cfg_.reg->next_draw_number() : 1;
  const std::size_t n = guarantor_count();
  have_counter_announce_.assign(n, false);
  counter_announces_.resize(n);
  have_counter_commit_.assign(n, false);
  counter_commits_.resize(n);
  guarantor_commits_.resize(n);
  have_countersigned_hash_.assign(n, false);
  reveals_.resize(n);
}

Session::Output InitiatorSession::broadcast(WireKind kind, const Bytes& payload, Output out) {
  for (std::size_t i = 0; i < guarantor_count(); ++i)
    out.send.push_back(Envelope{name(), cfg_.roster->guarantor(i).name, kind, payload});
  return out;
}

std::optional<std::string> InitiatorSession::first_missing(const std::vector<bool>& got) const {
  for (std::size_t i = 0; i < got.size(); ++i)
    if (!got[i]) return cfg_.roster->guarantor(i).name;
  return std::nullopt;
}

Session::Output InitiatorSession::start() {
  DrawAnnounce announce;
  announce.k = k_;
  announce.draw_no = draw_no_;
  announce.sig = SignatureBlock{name(), own_sign(as_span(signing::draw_announce(k_, draw_no_)))};
  announce_bytes_ = encode(announce);
  record(1, 0, announce_bytes_);
  Output out = broadcast(WireKind::draw_announce, announce_bytes_);
  out.timer = {true, cfg_.timeout_ms, false};
  return out;
}

int InitiatorSession::current_step() const {
  switch (phase_) {
    case Phase::collect_counter_announce: return 2;
    case Phase::collect_counter_commit: return 6;
    case Phase::collect_guarantor_commit: return 9;
    case Phase::collect_countersigned_hash: return 11;
    case Phase::collect_reveal: return 13;
    case Phase::done: return 15;
  }
  return 0;
}

Session::Output InitiatorSession::on_timeout() {
  if (status_ != Status::running) return {};
  const int step = current_step();
  std::optional<std::string> culprit;
  if (step >= 11) {
    // Missing input after the commitment point is strong evidence against a
    // specific participant; earlier it cannot be attributed.
    if (phase_ == Phase::collect_countersigned_hash) culprit = first_missing(have_countersigned_hash_);
    if (phase_ == Phase::collect_reveal) {
      std::vector<bool> got(guarantor_count());
      for (std::size_t i = 0; i < got.size(); ++i) got[i] = reveals_[i].has_value();
      culprit = first_missing(got);
    }
  }
  return fail(step, FaultCause::missing_peer, culprit);
}

InitiatorReveal InitiatorSession::build_reveal() {
  InitiatorReveal r;
  r.salt = salt_;
  r.draw_no = draw_no_;
  r.number = number_;
  r.sig = SignatureBlock{name(),
                         own_sign(as_span(signing::initiator_reveal(r.salt, r.draw_no, r.number)))};
  return r;
}

Session::Output InitiatorSession::on_message(const Envelope& env) {
  if (status_ != Status::running) return {};
  auto sender = cfg_.roster->index_of(env.from);
  if (!sender || env.from == name()) return {};
  if (env.kind == WireKind::abort_notice) return handle_abort_notice(env);
  if (duplicate_delivery(env)) return {};
  if (*sender == 0) return unexpected(env);  // the initiator talks to guarantors only
  const std::size_t g = *sender - 1;
  const std::string& gname = cfg_.roster->guarantor(g).name;

  switch (phase_) {
    case Phase::collect_counter_announce: {
      if (env.kind != WireKind::counter_signed_announce) return unexpected(env);
      if (have_counter_announce_[g]) return unexpected(env);  // equivocation
      CounterSignedAnnounce cs;
      try {
        cs = decode_counter_signed_announce(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(2, FaultCause::decode_error, gname);
      }
      if (encode(cs.announce) != announce_bytes_)
        return fail(2,
                    cs.announce.draw_no != draw_no_ ? FaultCause::bad_draw_no
                                                    : FaultCause::bad_signature,
                    gname);
      if (!peer_verify(cs.guarantor_sig, gname, signing::counter_signed_announce(cs.announce)))
        return fail(2, FaultCause::bad_signature, gname);
      remember_delivery(env);
      have_counter_announce_[g] = true;
      counter_announces_[g] = std::move(cs);
      record(2, g, env.payload);
      if (std::find(have_counter_announce_.begin(), have_counter_announce_.end(), false) !=
          have_counter_announce_.end())
        return {};

      // Step 3: aggregate and redistribute, then continue to step 5.
      AnnounceAggregate agg;
      agg.entries = counter_announces_;
      agg.covering_sig =
          SignatureBlock{name(), own_sign(as_span(signing::announce_aggregate(agg.entries)))};
      Bytes agg_bytes = encode(agg);
      record(3, 0, agg_bytes);
      Output out = broadcast(WireKind::announce_aggregate, agg_bytes);

      // Step 5: draw the number, commit under a fresh salt. Only the hash
      // leaves this process before step 12.
      number_ = choose_number();
      salt_ = entropy_.next_salt();
      own_hash_ = commit(as_span(number_secret_bytes(draw_no_, number_)), salt_);
      InitiatorCommit c;
      c.draw_no = draw_no_;
      c.hash = own_hash_;
      c.sig = SignatureBlock{name(),
                             own_sign(as_span(signing::initiator_commit(draw_no_, own_hash_)))};
      commit_bytes_ = encode(c);
      record(5, 0, commit_bytes_);
      out = broadcast(WireKind::initiator_commit, commit_bytes_, std::move(out));
      phase_ = Phase::collect_counter_commit;
      out.timer = {true, cfg_.timeout_ms, false};
      return out;
    }

    case Phase::collect_counter_commit: {
      if (env.kind != WireKind::counter_signed_commit) return unexpected(env);
      if (have_counter_commit_[g]) return unexpected(env);
      CounterSignedCommit cs;
      try {
        cs = decode_counter_signed_commit(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(6, FaultCause::decode_error, gname);
      }
      if (encode(cs.commit) != commit_bytes_)
        return fail(6,
                    cs.commit.draw_no != draw_no_ ? FaultCause::bad_draw_no
                                                  : FaultCause::bad_signature,
                    gname);
      if (!peer_verify(cs.guarantor_sig, gname, signing::counter_signed_commit(cs.commit)))
        return fail(6, FaultCause::bad_signature, gname);
      remember_delivery(env);
      have_counter_commit_[g] = true;
      counter_commits_[g] = std::move(cs);
      record(6, g, env.payload);
      if (std::find(have_counter_commit_.begin(), have_counter_commit_.end(), false) !=
          have_counter_commit_.end())
        return {};

      // Step 7: commitment aggregate.
      CommitAggregate agg;
      agg.entries = counter_commits_;
      agg.covering_sig =
          SignatureBlock{name(), own_sign(as_span(signing::commit_aggregate(agg.entries)))};
      Bytes agg_bytes = encode(agg);
      record(7, 0, agg_bytes);
      Output out = broadcast(WireKind::commit_aggregate, agg_bytes);
      phase_ = Phase::collect_guarantor_commit;
      out.timer = {true, cfg_.timeout_ms, false};
      return out;
    }

    case Phase::collect_guarantor_commit: {
      if (env.kind != WireKind::guarantor_commit) return unexpected(env);
      if (guarantor_commits_[g]) return unexpected(env);
      GuarantorCommit gc;
      try {
        gc = decode_guarantor_commit(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(9, FaultCause::decode_error, gname);
      }
      if (gc.draw_no != draw_no_) return fail(9, FaultCause::bad_draw_no, gname);
      if (!peer_verify(gc.sig, gname, signing::guarantor_commit(gc.draw_no, gc.hash)))
        return fail(9, FaultCause::bad_signature, gname);
      remember_delivery(env);
      guarantor_commits_[g] = std::move(gc);
      record(9, g, env.payload);
      for (const auto& c : guarantor_commits_)
        if (!c) return {};

      // Step 10: hash aggregate.
      GuarantorHashAggregate agg;
      for (const auto& c : guarantor_commits_) agg.entries.push_back(*c);
      agg.covering_sig =
          SignatureBlock{name(), own_sign(as_span(signing::hash_aggregate(agg.entries)))};
      hash_aggregate_bytes_ = encode(agg);
      record(10, 0, hash_aggregate_bytes_);
      Output out = broadcast(WireKind::guarantor_hash_aggregate, hash_aggregate_bytes_);
      phase_ = Phase::collect_countersigned_hash;
      out.timer = {true, cfg_.timeout_ms, false};
      return out;
    }

    case Phase::collect_countersigned_hash: {
      if (env.kind != WireKind::countersigned_hash_aggregate) return unexpected(env);
      if (have_countersigned_hash_[g]) return unexpected(env);
      CountersignedHashAggregate cs;
      try {
        cs = decode_countersigned_hash_aggregate(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(11, FaultCause::decode_error, gname);
      }
      if (cs.inner.entries.front().draw_no != draw_no_)
        return fail(11, FaultCause::bad_draw_no, gname);
      if (encode(cs.inner) != hash_aggregate_bytes_)
        return fail(11, FaultCause::bad_signature, gname);
      if (!peer_verify(cs.guarantor_sig, gname, signing::countersigned_hash_aggregate(cs.inner)))
        return fail(11, FaultCause::bad_signature, gname);
      remember_delivery(env);
      have_countersigned_hash_[g] = true;
      record(11, g, env.payload);
      if (std::find(have_countersigned_hash_.begin(), have_countersigned_hash_.end(), false) !=
          have_countersigned_hash_.end())
        return {};

      // Every party is now bound to its value. Step 12: reveal.
      InitiatorReveal r = build_reveal();
      forged_submission_ =
          !verify_commitment(own_hash_, as_span(number_secret_bytes(draw_no_, r.number)), r.salt);
      Bytes reveal_bytes = encode(r);
      record(12, 0, reveal_bytes);
      Output out = broadcast(WireKind::initiator_reveal, reveal_bytes);
      phase_ = Phase::collect_reveal;
      out.timer = {true, cfg_.timeout_ms, false};
      return out;
    }

    case Phase::collect_reveal: {
      if (env.kind != WireKind::guarantor_reveal) return unexpected(env);
      if (reveals_[g]) return unexpected(env);
      std::optional<GuarantorReveal> gr;
      try {
        gr = decode_guarantor_reveal(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(13, FaultCause::decode_error, gname);
      }
      if (gr->draw_no != draw_no_) return fail(13, FaultCause::bad_draw_no, gname);
      if (gr->perm.size() != k_) return fail(13, FaultCause::decode_error, gname);
      if (!peer_verify(gr->sig, gname, signing::guarantor_reveal(gr->salt, gr->draw_no, gr->perm)))
        return fail(13, FaultCause::bad_signature, gname);
      if (!verify_commitment(guarantor_commits_[g]->hash,
                             as_span(permutation_secret_bytes(draw_no_, gr->perm)), gr->salt))
        return fail(13, FaultCause::bad_hash, gname);
      remember_delivery(env);
      observed_guarantor_reveal(g, *gr);
      reveals_[g] = std::move(*gr);
      record(13, g, env.payload);
      for (const auto& r : reveals_)
        if (!r) return {};

      // Step 14: reveal aggregate.
      RevealAggregate agg;
      for (const auto& r : reveals_) agg.entries.push_back(*r);
      agg.covering_sig =
          SignatureBlock{name(), own_sign(as_span(signing::reveal_aggregate(agg.entries)))};
      Bytes agg_bytes = encode(agg);
      record(14, 0, agg_bytes);
      Output out = broadcast(WireKind::reveal_aggregate, agg_bytes);

      // Step 15: compose the permutations, apply to the number, publish.
      std::uint64_t value = number_;
      for (std::size_t i = guarantor_count(); i-- > 0;) value = reveals_[i]->perm.apply(value);
      DrawTranscript transcript =
          evidence_transcript(DrawOutcome{value, std::nullopt});
      out = broadcast(WireKind::transcript_publish, transcript.to_file_bytes(), std::move(out));
      phase_ = Phase::done;
      complete(value, std::move(transcript));
      out.timer.cancel = true;
      return out;
    }

    case Phase::done:
      return {};
  }
  return {};
}

// ---------------------------------------------------------------------------
// GuarantorSession
// ---------------------------------------------------------------------------

GuarantorSession::GuarantorSession(SessionConfig cfg, EntropySource entropy)
    : Session(cfg), entropy_(std::move(entropy)) {
  auto idx = cfg_.roster->index_of(cfg_.keys->signer_id);
  if (!idx || *idx == 0)
    throw std::invalid_argument("guarantor session requires a guarantor's keys");
  own_index_ = *idx - 1;
  draw_no_ = cfg_.reg ? cfg_.reg->next_draw_number() : 1;
}

Session::Output GuarantorSession::arm(Output out) const {
  out.timer = {true, cfg_.timeout_ms, false};
  return out;
}

int GuarantorSession::current_step() const {
  switch (phase_) {
    case Phase::await_announce: return 1;
    case Phase::await_announce_agg: return 3;
    case Phase::await_commit: return 5;
    case Phase::await_commit_agg: return 7;
    case Phase::await_hash_agg: return 10;
    case Phase::await_reveal: return 12;
    case Phase::await_reveal_agg: return 14;
    case Phase::await_publish: return 15;
    case Phase::done: return 15;
  }
  return 0;
}

Session::Output GuarantorSession::on_timeout() {
  if (status_ != Status::running) return {};
  const int step = current_step();
  std::optional<std::string> culprit;
  if (step >= 11) culprit = initiator_name();
  return fail(step, FaultCause::missing_peer, culprit);
}

GuarantorReveal GuarantorSession::build_reveal() {
  GuarantorReveal r{salt_, draw_no_, *perm_, {}};
  r.sig = SignatureBlock{
      name(), own_sign(as_span(signing::guarantor_reveal(r.salt, r.draw_no, r.perm)))};
  return r;
}

Session::Output GuarantorSession::submit_reveal(GuarantorReveal reveal) {
  forged_submission_ = !verify_commitment(
      own_hash_, as_span(permutation_secret_bytes(draw_no_, reveal.perm)), reveal.salt);
  own_reveal_bytes_ = encode(reveal);
  record(13, own_index_, own_reveal_bytes_);
  reveal_sent_ = true;
  reveal_pending_ = false;
  Output out;
  out.send.push_back(
      Envelope{name(), initiator_name(), WireKind::guarantor_reveal, own_reveal_bytes_});
  return arm(std::move(out));
}

Session::Output GuarantorSession::on_message(const Envelope& env) {
  if (status_ != Status::running) return {};
  auto sender = cfg_.roster->index_of(env.from);
  if (!sender || env.from == name()) return {};
  if (env.kind == WireKind::abort_notice) return handle_abort_notice(env);
  if (duplicate_delivery(env)) return {};
  if (env.from != initiator_name()) return unexpected(env);
  const std::size_t n = guarantor_count();
  const std::string init = initiator_name();

  switch (phase_) {
    case Phase::await_announce: {
      if (env.kind != WireKind::draw_announce) return unexpected(env);
      DrawAnnounce a;
      try {
        a = decode_draw_announce(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(2, FaultCause::decode_error, std::nullopt);
      }
      // The draw register check: stale or skipped numbers end participation.
      if (a.draw_no != draw_no_) return fail(2, FaultCause::bad_draw_no, std::nullopt);
      if (a.k > cfg_.max_k) return fail(2, FaultCause::decode_error, init);
      if (!peer_verify(a.sig, init, signing::draw_announce(a.k, a.draw_no)))
        return fail(2, FaultCause::bad_signature, init);
      remember_delivery(env);
      k_ = a.k;
      announce_ = a;
      announce_bytes_ = env.payload;
      record(1, 0, announce_bytes_);

      CounterSignedAnnounce cs{a, {}};
      cs.guarantor_sig =
          SignatureBlock{name(), own_sign(as_span(signing::counter_signed_announce(a)))};
      own_counter_announce_bytes_ = encode(cs);
      record(2, own_index_, own_counter_announce_bytes_);
      Output out;
      out.send.push_back(Envelope{name(), init, WireKind::counter_signed_announce,
                                  own_counter_announce_bytes_});
      phase_ = Phase::await_announce_agg;
      return arm(std::move(out));
    }

    case Phase::await_announce_agg: {
      if (env.kind != WireKind::announce_aggregate) return unexpected(env);
      AnnounceAggregate agg;
      try {
        agg = decode_announce_aggregate(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(4, FaultCause::decode_error, init);
      }
      if (agg.entries.size() != n) return fail(4, FaultCause::decode_error, init);
      counter_announce_entry_bytes_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const CounterSignedAnnounce& cs = agg.entries[i];
        if (encode(cs.announce) != announce_bytes_)
          return fail(4,
                      cs.announce.draw_no != draw_no_ ? FaultCause::bad_draw_no
                                                      : FaultCause::bad_signature,
                      init);
        counter_announce_entry_bytes_[i] = encode(cs);
        if (i == own_index_) {
          if (counter_announce_entry_bytes_[i] != own_counter_announce_bytes_)
            return fail(4, FaultCause::bad_signature, init);  // self-inclusion check
        } else if (!peer_verify(cs.guarantor_sig, cfg_.roster->guarantor(i).name,
                                signing::counter_signed_announce(cs.announce))) {
          return fail(4, FaultCause::bad_signature, init);
        }
      }
      if (!peer_verify(agg.covering_sig, init, signing::announce_aggregate(agg.entries)))
        return fail(4, FaultCause::bad_signature, init);
      remember_delivery(env);
      announce_agg_bytes_ = env.payload;
      record(3, 0, announce_agg_bytes_);
      phase_ = Phase::await_commit;
      return arm({});
    }

    case Phase::await_commit: {
      if (env.kind != WireKind::initiator_commit) return unexpected(env);
      InitiatorCommit c;
      try {
        c = decode_initiator_commit(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(6, FaultCause::decode_error, init);
      }
      if (c.draw_no != draw_no_) return fail(6, FaultCause::bad_draw_no, init);
      if (!peer_verify(c.sig, init, signing::initiator_commit(c.draw_no, c.hash)))
        return fail(6, FaultCause::bad_signature, init);
      remember_delivery(env);
      initiator_commit_ = c;
      initiator_commit_bytes_ = env.payload;
      record(5, 0, initiator_commit_bytes_);

      CounterSignedCommit cs{c, {}};
      cs.guarantor_sig =
          SignatureBlock{name(), own_sign(as_span(signing::counter_signed_commit(c)))};
      own_counter_commit_bytes_ = encode(cs);
      record(6, own_index_, own_counter_commit_bytes_);
      Output out;
      out.send.push_back(
          Envelope{name(), init, WireKind::counter_signed_commit, own_counter_commit_bytes_});
      phase_ = Phase::await_commit_agg;
      return arm(std::move(out));
    }

    case Phase::await_commit_agg: {
      if (env.kind != WireKind::commit_aggregate) return unexpected(env);
      CommitAggregate agg;
      try {
        agg = decode_commit_aggregate(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(8, FaultCause::decode_error, init);
      }
      if (agg.entries.size() != n) return fail(8, FaultCause::decode_error, init);
      counter_commit_entry_bytes_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const CounterSignedCommit& cs = agg.entries[i];
        if (encode(cs.commit) != initiator_commit_bytes_)
          return fail(8,
                      cs.commit.draw_no != draw_no_ ? FaultCause::bad_draw_no
                                                    : FaultCause::bad_signature,
                      init);
        counter_commit_entry_bytes_[i] = encode(cs);
        if (i == own_index_) {
          if (counter_commit_entry_bytes_[i] != own_counter_commit_bytes_)
            return fail(8, FaultCause::bad_signature, init);
        } else if (!peer_verify(cs.guarantor_sig, cfg_.roster->guarantor(i).name,
                                signing::counter_signed_commit(cs.commit))) {
          return fail(8, FaultCause::bad_signature, init);
        }
      }
      if (!peer_verify(agg.covering_sig, init, signing::commit_aggregate(agg.entries)))
        return fail(8, FaultCause::bad_signature, init);
      remember_delivery(env);
      commit_agg_bytes_ = env.payload;
      record(7, 0, commit_agg_bytes_);

      // Step 9: generate the permutation, commit under a fresh salt. The
      // permutation and salt stay private until step 13.
      perm_ = choose_permutation();
      salt_ = entropy_.next_salt();
      own_hash_ = commit(as_span(permutation_secret_bytes(draw_no_, *perm_)), salt_);
      GuarantorCommit gc;
      gc.draw_no = draw_no_;
      gc.hash = own_hash_;
      gc.sig = SignatureBlock{name(),
                              own_sign(as_span(signing::guarantor_commit(draw_no_, own_hash_)))};
      own_commit_bytes_ = encode(gc);
      record(9, own_index_, own_commit_bytes_);
      Output out;
      out.send.push_back(Envelope{name(), init, WireKind::guarantor_commit, own_commit_bytes_});
      phase_ = Phase::await_hash_agg;
      return arm(std::move(out));
    }

    case Phase::await_hash_agg: {
      if (env.kind != WireKind::guarantor_hash_aggregate) return unexpected(env);
      GuarantorHashAggregate agg;
      try {
        agg = decode_guarantor_hash_aggregate(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(11, FaultCause::decode_error, init);
      }
      if (agg.entries.size() != n) return fail(11, FaultCause::decode_error, init);
      guarantor_commit_entry_bytes_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const GuarantorCommit& gc = agg.entries[i];
        if (gc.draw_no != draw_no_) return fail(11, FaultCause::bad_draw_no, init);
        guarantor_commit_entry_bytes_[i] = encode(gc);
        if (i == own_index_) {
          // Self-inclusion: the aggregate must carry exactly the hash this
          // guarantor sent, and nothing else under its name.
          if (guarantor_commit_entry_bytes_[i] != own_commit_bytes_)
            return fail(11, FaultCause::bad_signature, init);
        } else if (!peer_verify(gc.sig, cfg_.roster->guarantor(i).name,
                                signing::guarantor_commit(gc.draw_no, gc.hash))) {
          return fail(11, FaultCause::bad_signature, init);
        }
      }
      if (!peer_verify(agg.covering_sig, init, signing::hash_aggregate(agg.entries)))
        return fail(11, FaultCause::bad_signature, init);
      remember_delivery(env);
      hash_agg_bytes_ = env.payload;
      hash_agg_ = std::move(agg);
      record(10, 0, hash_agg_bytes_);

      // Step 11: countersign. From here on every party is committed.
      CountersignedHashAggregate cs{*hash_agg_, {}};
      cs.guarantor_sig = SignatureBlock{
          name(), own_sign(as_span(signing::countersigned_hash_aggregate(cs.inner)))};
      own_countersigned_hash_bytes_ = encode(cs);
      record(11, own_index_, own_countersigned_hash_bytes_);
      Output out;
      out.send.push_back(Envelope{name(), init, WireKind::countersigned_hash_aggregate,
                                  own_countersigned_hash_bytes_});
      phase_ = Phase::await_reveal;
      return arm(std::move(out));
    }

    case Phase::await_reveal: {
      if (env.kind != WireKind::initiator_reveal) return unexpected(env);
      InitiatorReveal r{{}, 0, 0, {}};
      try {
        r = decode_initiator_reveal(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(12, FaultCause::decode_error, init);
      }
      if (r.draw_no != draw_no_) return fail(12, FaultCause::bad_draw_no, init);
      if (r.number >= k_) return fail(12, FaultCause::decode_error, init);
      if (!peer_verify(r.sig, init, signing::initiator_reveal(r.salt, r.draw_no, r.number)))
        return fail(12, FaultCause::bad_signature, init);
      if (!verify_commitment(initiator_commit_->hash,
                             as_span(number_secret_bytes(draw_no_, r.number)), r.salt))
        return fail(12, FaultCause::bad_hash, init);  // renege on the committed number
      remember_delivery(env);
      initiator_reveal_ = r;
      initiator_reveal_bytes_ = env.payload;
      record(12, 0, initiator_reveal_bytes_);
      observed_initiator_reveal(r);
      if (defer_reveal()) {
        reveal_pending_ = true;
        phase_ = Phase::await_reveal_agg;
        return arm({});
      }
      phase_ = Phase::await_reveal_agg;
      return submit_reveal(build_reveal());
    }

    case Phase::await_reveal_agg: {
      if (env.kind != WireKind::reveal_aggregate) return unexpected(env);
      RevealAggregate agg;
      try {
        agg = decode_reveal_aggregate(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(14, FaultCause::decode_error, init);
      }
      if (agg.entries.size() != n) return fail(14, FaultCause::decode_error, init);
      reveal_entry_bytes_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const GuarantorReveal& gr = agg.entries[i];
        const std::string& who = cfg_.roster->guarantor(i).name;
        if (gr.draw_no != draw_no_) return fail(13, FaultCause::bad_draw_no, who);
        if (gr.perm.size() != k_) return fail(13, FaultCause::decode_error, who);
        reveal_entry_bytes_[i] = encode(gr);
        if (i == own_index_) {
          if (reveal_entry_bytes_[i] != own_reveal_bytes_)
            return fail(14, FaultCause::bad_signature, init);
          continue;
        }
        if (!peer_verify(gr.sig, who, signing::guarantor_reveal(gr.salt, gr.draw_no, gr.perm)))
          return fail(13, FaultCause::bad_signature, who);
        // Independent re-verification of every reveal against the hashes
        // countersigned at step 11.
        if (!verify_commitment(hash_agg_->entries[i].hash,
                               as_span(permutation_secret_bytes(draw_no_, gr.perm)), gr.salt))
          return fail(13, FaultCause::bad_hash, who);
      }
      if (!peer_verify(agg.covering_sig, init, signing::reveal_aggregate(agg.entries)))
        return fail(14, FaultCause::bad_signature, init);
      remember_delivery(env);
      reveal_agg_bytes_ = env.payload;
      record(14, 0, reveal_agg_bytes_);

      std::uint64_t value = initiator_reveal_->number;
      for (std::size_t i = n; i-- > 0;) value = agg.entries[i].perm.apply(value);
      computed_result_ = value;
      phase_ = Phase::await_publish;
      return arm({});
    }

    case Phase::await_publish: {
      if (env.kind != WireKind::transcript_publish) return unexpected(env);
      DrawTranscript t;
      try {
        t = DrawTranscript::from_file_bytes(as_span(env.payload));
      } catch (const CodecError&) {
        return fail(15, FaultCause::decode_error, init);
      }
      if (t.header.draw_no != draw_no_) return fail(15, FaultCause::bad_draw_no, init);
      if (t.header.scheme != SchemeId::ed25519 || t.header.k != k_ ||
          t.header.roster != *cfg_.roster)
        return fail(15, FaultCause::bad_hash, init);
      if (!t.header.outcome.completed() || *t.header.outcome.result != *computed_result_)
        return fail(15, FaultCause::bad_hash, init);
      if (t.structures.size() != 7 + 5 * n) return fail(15, FaultCause::decode_error, init);

      // Adopt only a transcript that matches this guarantor's own view of the
      // draw byte for byte; the step-11 structures of the other guarantors are
      // the one part we have not seen, so verify those signatures afresh.
      auto at = [&](int step, std::size_t sub) -> const Bytes& {
        return t.structures[transcript_position(step, sub, n)];
      };
      bool ok = at(1, 0) == announce_bytes_ && at(3, 0) == announce_agg_bytes_ &&
                at(5, 0) == initiator_commit_bytes_ && at(7, 0) == commit_agg_bytes_ &&
                at(10, 0) == hash_agg_bytes_ && at(12, 0) == initiator_reveal_bytes_ &&
                at(14, 0) == reveal_agg_bytes_;
      for (std::size_t i = 0; ok && i < n; ++i) {
        ok = at(2, i) == counter_announce_entry_bytes_[i] &&
             at(6, i) == counter_commit_entry_bytes_[i] &&
             at(9, i) == guarantor_commit_entry_bytes_[i] &&
             at(13, i) == reveal_entry_bytes_[i];
      }
      if (!ok) return fail(15, FaultCause::bad_hash, init);
      for (std::size_t i = 0; i < n; ++i) {
        const Bytes& b = at(11, i);
        if (i == own_index_) {
          if (b != own_countersigned_hash_bytes_) return fail(15, FaultCause::bad_hash, init);
          continue;
        }
        CountersignedHashAggregate cs{{}, {}};
        try {
          cs = decode_countersigned_hash_aggregate(as_span(b));
        } catch (const CodecError&) {
          return fail(15, FaultCause::decode_error, init);
        }
        if (encode(cs.inner) != hash_agg_bytes_) return fail(15, FaultCause::bad_hash, init);
        if (!peer_verify(cs.guarantor_sig, cfg_.roster->guarantor(i).name,
                         signing::countersigned_hash_aggregate(cs.inner)))
          return fail(15, FaultCause::bad_signature, init);
      }
      remember_delivery(env);
      phase_ = Phase::done;
      complete(*computed_result_, std::move(t));
      Output out;
      out.timer.cancel = true;
      return out;
    }

    case Phase::done:
      return {};
  }
  return {};
}

}  // namespace fairdraw
