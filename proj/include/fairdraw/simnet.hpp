#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairdraw/protocol.hpp"
#include "fairdraw/stats.hpp"

namespace fairdraw::sim {

using SimTime = std::uint64_t;  // virtual milliseconds

struct LatencySpec {
  enum class Kind { fixed, randomized };
  Kind kind = Kind::fixed;
  SimTime base = 5;
  SimTime spread = 0;  // randomized: uniform in [base, base+spread]
};

struct FaultSpec {
  enum class Action { drop, duplicate, delay, tamper, replay };
  Action action = Action::drop;
  // Send-time matching; every specified filter must match.
  std::optional<int> at_step;
  std::optional<std::uint64_t> at_draw;
  std::optional<WireKind> kind;
  std::optional<std::string> from;
  std::optional<std::string> to;
  SimTime delay_ms = 0;          // delay
  std::size_t byte_index = 0;    // tamper: which payload byte to flip
  std::uint64_t replay_draw = 1; // replay: draw to take the recorded bytes from
  int max_uses = 1;              // per draw; the script is re-armed each draw
};

struct Strategy {
  enum class Kind { honest, renege, adaptive_reveal, replayer, staller, constant_input };
  Kind kind = Kind::honest;
  std::optional<std::uint64_t> target;    // adaptive-reveal; nullopt = waits-but-complies
  int stop_at_step = 9;                   // staller
  std::uint64_t const_number = 0;         // constant-input, initiator role
  std::optional<Permutation> const_perm;  // constant-input, guarantor role (default identity)
  bool coalition = false;                 // shares the coalition observation board

  bool honest_kind() const { return kind == Kind::honest; }
};

struct ParticipantSpec {
  Role role = Role::guarantor;
  std::string name;
  Strategy strategy;
};

struct SimSchedule {
  std::array<std::uint8_t, 32> seed{};
  LatencySpec latency;
  std::vector<FaultSpec> faults;
  std::uint64_t timeout_ms = 30'000;
  SimTime horizon = 3'600'000;
  AbortMode abort_mode = AbortMode::signed_error;
};

struct TracedMessage {
  SimTime sent = 0;
  SimTime delivered = 0;
  std::uint64_t draw_no = 0;
  Envelope env;
  bool injected = false;  // created by a fault (replay or duplicate copy)
  bool tampered = false;
  bool dropped = false;
};

struct ParticipantOutcome {
  Session::Status status = Session::Status::running;
  std::optional<std::uint64_t> result;
  std::optional<Abort> abort;
  bool forged_submission = false;
};

struct RunOutcome {
  bool completed = false;               // every honest participant completed
  std::optional<std::uint64_t> result;  // the honest participants' agreed result
  std::optional<Abort> first_abort;     // roster-order first honest abort
  std::map<std::string, ParticipantOutcome> participants;
  std::map<std::string, DrawTranscript> transcripts;  // honest terminal transcripts
  SimTime duration = 0;
};

struct RunOptions {
  bool record_trace = true;
  bool keep_transcripts = true;
};

class CoalitionBoard;

/// Deterministic in-process transport plus the participant set of one
/// deployment. Virtual-time event loop; identical seeds and schedules give
/// bit-for-bit identical runs. Registers persist across draws.
class SimWorld {
 public:
  SimWorld(std::vector<ParticipantSpec> specs, SimSchedule schedule, RunOptions opts = {});
  ~SimWorld();

  RunOutcome run_draw(std::uint64_t k);

  const Roster& roster() const { return roster_; }
  const std::vector<KeyPair>& keys() const { return keys_; }
  const std::vector<TracedMessage>& trace() const { return trace_; }
  DrawRegister& register_of(const std::string& name);
  std::uint64_t draws_run() const { return draws_run_; }

  void set_register(const std::string& name, DrawRegister reg);

  /// Replaces the world-derived key pairs with externally provided ones
  /// (operator key files). Must be called before the first draw.
  void use_keys(std::vector<KeyPair> keys);

  struct Runtime;
  struct Event;

 private:

  void process_output(const std::string& from, Session::Output out);
  void deliver_now(std::size_t trace_idx);
  void schedule_send(Envelope env, bool injected, bool tampered);
  SimTime sample_latency();

  std::vector<ParticipantSpec> specs_;
  SimSchedule schedule_;
  RunOptions opts_;
  Roster roster_;
  std::vector<KeyPair> keys_;
  std::map<std::string, DrawRegister> registers_;
  std::vector<TracedMessage> trace_;
  std::uint64_t draws_run_ = 0;

  EntropySource world_entropy_;
  EntropySource latency_rng_;

  // per-draw state
  std::map<std::string, std::unique_ptr<Runtime>> runtimes_;
  std::unique_ptr<CoalitionBoard> board_;
  std::vector<Event> queue_;
  std::map<std::pair<std::string, std::string>, SimTime> link_front_;
  std::vector<FaultSpec> faults_left_;
  SimTime now_ = 0;
  std::uint64_t event_seq_ = 0;
  std::uint64_t current_draw_ = 0;
};

/// Asserts no signature on the wire that verifies under a participant's key
/// was produced by anyone but that participant (byte-equality against the
/// signer's own earlier traffic). Throws std::logic_error on violation.
void check_no_forgery(const std::vector<TracedMessage>& trace, const Roster& roster);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentSpec {
  std::vector<ParticipantSpec> participants;
  std::uint64_t k = 3;
  std::uint64_t trials = 60'000;  // completed draws entering the histogram
  std::array<std::uint8_t, 32> seed{};
  unsigned threads = 0;  // 0 = hardware concurrency
  std::uint64_t timeout_ms = 30'000;
  // Aborting strategies may need extra attempts to reach `trials` completed
  // draws; attempts are capped at trials * attempt_factor.
  std::uint64_t attempt_factor = 2;
};

/// Runs independent seeded draws until `trials` completed ones are tallied
/// (or the attempt cap is hit); aborted runs are counted separately. The
/// result histogram is deterministic for a fixed spec regardless of the
/// thread count.
ChiSquareReport coalition_bias_experiment(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Scenario files
// ---------------------------------------------------------------------------

struct ScenarioConfig {
  std::vector<ParticipantSpec> participants;
  SimSchedule schedule;
  std::uint64_t k = 10;
  std::uint64_t draws = 1;
  std::uint64_t trials = 0;  // for stats runs
  unsigned threads = 0;
};

/// One directive per line: seed, k, draws, trials, threads, timeout, latency,
/// abort-mode, participant, coalition, fault. '#' starts a comment.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario_file(const std::string& path);

}  // namespace fairdraw::sim
