#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairdraw/codec.hpp"
#include "fairdraw/register.hpp"
#include "fairdraw/roster.hpp"

namespace fairdraw {

/// Everything that can travel between participants: the twelve protocol
/// structures, the signed abort notice, and the final transcript publication.
enum class WireKind : std::uint8_t {
  draw_announce = 0x01,
  counter_signed_announce = 0x02,
  announce_aggregate = 0x03,
  initiator_commit = 0x04,
  counter_signed_commit = 0x05,
  commit_aggregate = 0x06,
  guarantor_commit = 0x07,
  guarantor_hash_aggregate = 0x08,
  countersigned_hash_aggregate = 0x09,
  initiator_reveal = 0x0a,
  guarantor_reveal = 0x0b,
  reveal_aggregate = 0x0c,
  transcript_publish = 0xd0,
  abort_notice = 0xe0,
};

const char* wire_kind_name(WireKind k);

/// Protocol step a message kind belongs to (announce = 1 … reveal aggregate
/// = 14, publication = 15); abort notices report 0.
int step_of(WireKind k);

std::optional<StructureTag> structure_tag_of(WireKind k);

struct Envelope {
  std::string from;
  std::string to;
  WireKind kind = WireKind::abort_notice;
  Bytes payload;
  bool operator==(const Envelope&) const = default;
};

/// Canonical position of the structure (step, per-guarantor sub-index) in a
/// complete transcript with n guarantors.
std::size_t transcript_position(int step, std::size_t sub, std::size_t n);

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

struct SessionConfig {
  const Roster* roster = nullptr;
  const KeyPair* keys = nullptr;
  DrawRegister* reg = nullptr;  // may be null in unit tests
  std::uint64_t timeout_ms = 30'000;
  std::uint64_t max_k = std::uint64_t{1} << 20;
  AbortMode abort_mode = AbortMode::signed_error;
};

/// One participant's reactive state machine for a single draw. Messages are
/// delivered one at a time; each delivery runs to completion. Not shared
/// across threads.
class Session {
 public:
  enum class Status { running, completed, aborted };

  struct TimerCmd {
    bool set = false;
    std::uint64_t delay_ms = 0;
    bool cancel = false;
  };

  struct Output {
    std::vector<Envelope> send;
    TimerCmd timer;
  };

  virtual ~Session() = default;

  virtual Output start() { return {}; }
  virtual Output on_message(const Envelope& env) = 0;
  virtual Output on_timeout() = 0;
  virtual Output on_board_update() { return {}; }  // adversary wake-up hook

  Status status() const { return status_; }
  const std::optional<Abort>& abort_record() const { return abort_; }
  std::optional<std::uint64_t> result() const { return result_; }
  std::uint64_t draw_no() const { return draw_no_; }
  std::uint64_t k() const { return k_; }
  const std::string& name() const { return cfg_.keys->signer_id; }

  /// Step the session currently waits at (for abort phase attribution).
  virtual int current_step() const = 0;

  /// The register-appended transcript once the session is terminal.
  const DrawTranscript* final_transcript() const {
    return transcript_ ? &*transcript_ : nullptr;
  }

  /// True if this session submitted a reveal different from its commitment
  /// (adversary instrumentation; always false for honest sessions).
  bool forged_submission() const { return forged_submission_; }

  /// Local termination without peer notification (driver-side: stalled or
  /// deadlocked participants at the end of a run).
  void force_abort(FaultCause cause);

 protected:
  explicit Session(SessionConfig cfg);

  Bytes own_sign(ConstSpan msg) const { return sign(cfg_.keys->sec, msg); }
  bool peer_verify(const SignatureBlock& sig, const std::string& expected_signer,
                   const Bytes& msg) const;

  std::size_t guarantor_count() const { return cfg_.roster->guarantor_count(); }
  const std::string& initiator_name() const { return cfg_.roster->initiator().name; }

  void record(int step, std::size_t sub, const Bytes& bytes);

  /// Terminal failure: records the abort, appends the evidence transcript to
  /// the register and, in signed-error mode, notifies every peer.
  Output fail(int phase, FaultCause cause, std::optional<std::string> culprit);

  /// Terminal success bookkeeping (register append happens in subclasses).
  void complete(std::uint64_t result, DrawTranscript transcript);

  /// Accept-once bookkeeping; returns true when `env` is a byte-identical
  /// redelivery that should be silently ignored.
  bool duplicate_delivery(const Envelope& env) const;
  void remember_delivery(const Envelope& env);

  Output handle_abort_notice(const Envelope& env);
  Output unexpected(const Envelope& env);

  DrawTranscript evidence_transcript(const DrawOutcome& outcome) const;

  SessionConfig cfg_;
  Status status_ = Status::running;
  std::optional<Abort> abort_;
  std::optional<std::uint64_t> result_;
  std::optional<DrawTranscript> transcript_;
  std::uint64_t draw_no_ = 0;
  std::uint64_t k_ = 0;
  bool forged_submission_ = false;

  std::map<std::pair<int, std::size_t>, Bytes> seen_;  // (step, sub) -> canonical bytes
  std::map<std::pair<WireKind, std::string>, Bytes> accepted_;
};

// ---------------------------------------------------------------------------

class InitiatorSession : public Session {
 public:
  InitiatorSession(SessionConfig cfg, std::uint64_t k, EntropySource entropy);

  Output start() override;
  Output on_message(const Envelope& env) override;
  Output on_timeout() override;
  int current_step() const override;

 protected:
  // Strategy hooks.
  virtual std::uint64_t choose_number() { return entropy_.next_below(k_); }
  virtual InitiatorReveal build_reveal();
  virtual void observed_guarantor_reveal(std::size_t, const GuarantorReveal&) {}

  enum class Phase {
    collect_counter_announce,
    collect_counter_commit,
    collect_guarantor_commit,
    collect_countersigned_hash,
    collect_reveal,
    done,
  };

  Output broadcast(WireKind kind, const Bytes& payload, Output out = {});
  std::optional<std::string> first_missing(const std::vector<bool>& got) const;

  Phase phase_ = Phase::collect_counter_announce;
  EntropySource entropy_;

  Bytes announce_bytes_;
  std::vector<bool> have_counter_announce_;
  std::vector<CounterSignedAnnounce> counter_announces_;

  std::uint64_t number_ = 0;
  Salt salt_;
  CommitmentHash own_hash_;
  Bytes commit_bytes_;
  std::vector<bool> have_counter_commit_;
  std::vector<CounterSignedCommit> counter_commits_;

  std::vector<std::optional<GuarantorCommit>> guarantor_commits_;
  Bytes hash_aggregate_bytes_;

  std::vector<bool> have_countersigned_hash_;

  std::vector<std::optional<GuarantorReveal>> reveals_;
};

// ---------------------------------------------------------------------------

class GuarantorSession : public Session {
 public:
  GuarantorSession(SessionConfig cfg, EntropySource entropy);

  Output on_message(const Envelope& env) override;
  Output on_timeout() override;
  int current_step() const override;

 protected:
  // Strategy hooks.
  virtual Permutation choose_permutation() { return random_permutation(k_, entropy_); }
  virtual GuarantorReveal build_reveal();
  /// Return true to withhold the step-13 reveal for now; the subclass emits
  /// it later via submit_reveal() (e.g. from on_board_update).
  virtual bool defer_reveal() { return false; }
  virtual void observed_initiator_reveal(const InitiatorReveal&) {}

  Output submit_reveal(GuarantorReveal reveal);

  enum class Phase {
    await_announce,
    await_announce_agg,
    await_commit,
    await_commit_agg,
    await_hash_agg,
    await_reveal,
    await_reveal_agg,
    await_publish,
    done,
  };

  Output arm(Output out) const;

  Phase phase_ = Phase::await_announce;
  EntropySource entropy_;
  std::size_t own_index_ = 0;  // guarantor index in the roster

  Bytes announce_bytes_;
  std::optional<DrawAnnounce> announce_;
  Bytes own_counter_announce_bytes_;
  Bytes announce_agg_bytes_;
  std::vector<Bytes> counter_announce_entry_bytes_;

  Bytes initiator_commit_bytes_;
  std::optional<InitiatorCommit> initiator_commit_;
  Bytes own_counter_commit_bytes_;
  Bytes commit_agg_bytes_;
  std::vector<Bytes> counter_commit_entry_bytes_;

  std::optional<Permutation> perm_;
  Salt salt_;
  CommitmentHash own_hash_;
  Bytes own_commit_bytes_;
  Bytes hash_agg_bytes_;
  std::optional<GuarantorHashAggregate> hash_agg_;
  std::vector<Bytes> guarantor_commit_entry_bytes_;
  Bytes own_countersigned_hash_bytes_;

  std::optional<InitiatorReveal> initiator_reveal_;
  Bytes initiator_reveal_bytes_;
  bool reveal_pending_ = false;  // withheld by defer_reveal()
  bool reveal_sent_ = false;
  Bytes own_reveal_bytes_;

  Bytes reveal_agg_bytes_;
  std::vector<Bytes> reveal_entry_bytes_;
  std::optional<std::uint64_t> computed_result_;
};

}  // namespace fairdraw
