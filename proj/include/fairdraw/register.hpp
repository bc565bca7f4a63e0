#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairdraw/bytes.hpp"
#include "fairdraw/codec.hpp"
#include "fairdraw/roster.hpp"

namespace fairdraw {

enum class FaultCause : std::uint8_t {
  bad_signature = 1,
  bad_draw_no = 2,
  bad_hash = 3,
  missing_peer = 4,
  decode_error = 5,
  timeout = 6,
  // transcript verification only:
  result_mismatch = 7,
  roster_mismatch = 8,
};

const char* fault_cause_name(FaultCause c);

enum class AbortMode : std::uint8_t { signed_error = 0, silent = 1 };

/// Protocol termination without a result. Aborts at or after step 12 keep
/// every commitment in the evidence transcript for offline resolution.
struct Abort {
  std::uint32_t phase = 0;  // protocol step 1..15
  FaultCause cause = FaultCause::decode_error;
  std::optional<std::string> culprit;
  AbortMode mode = AbortMode::signed_error;
  bool operator==(const Abort&) const = default;
};

struct DrawOutcome {
  std::optional<std::uint64_t> result;  // set iff completed
  std::optional<Abort> abort;           // set iff aborted
  bool completed() const { return result.has_value(); }
  bool operator==(const DrawOutcome&) const = default;
};

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

struct TranscriptHeader {
  SchemeId scheme = SchemeId::ed25519;
  std::uint64_t k = 0;
  std::uint64_t draw_no = 0;
  Roster roster;
  DrawOutcome outcome;
  bool operator==(const TranscriptHeader&) const = default;
};

/// The complete ordered set of structures exchanged in one draw, in step
/// order — the unit of publication and verification. File form: 4-byte magic
/// "FDRW", version byte, header block, then length-prefixed canonical
/// structure encodings.
struct DrawTranscript {
  TranscriptHeader header;
  std::vector<Bytes> structures;

  Bytes to_file_bytes() const;
  static DrawTranscript from_file_bytes(ConstSpan);  // throws CodecError

  bool operator==(const DrawTranscript&) const = default;
};

// ---------------------------------------------------------------------------
// Draw register
// ---------------------------------------------------------------------------

struct RegisterEntry {
  std::uint64_t draw_no = 0;
  std::uint64_t k = 0;
  DrawOutcome outcome;
  Hash32 transcript_hash;     // SHA3-256 of the transcript file bytes
  std::string transcript_ref; // filename when stored on disk
  bool operator==(const RegisterEntry&) const = default;
};

/// Append-only record of past draws; draw numbers increase by exactly one
/// with no gaps. This is the replay defense: every participant knows the
/// number of the next draw.
class DrawRegister {
 public:
  std::uint64_t next_draw_number() const { return next_; }

  /// Appends the entry for `t`. Caller must have verified the transcript
  /// (or the abort evidence). Throws std::invalid_argument on a draw-number
  /// gap or duplicate.
  const RegisterEntry& append(const DrawTranscript& t, std::string ref = {});

  const std::vector<RegisterEntry>& entries() const { return entries_; }

  /// Restores a register from previously recorded entries (disk load).
  static DrawRegister restore(std::vector<RegisterEntry> entries);

 private:
  std::vector<RegisterEntry> entries_;
  std::uint64_t next_ = 1;
};

/// Register directory on disk: transcript files plus an index with one line
/// per draw — draw_no, k, result or ABORT, filename, transcript file hash.
class RegisterStore {
 public:
  explicit RegisterStore(std::string dir);  // creates or loads

  DrawRegister& reg() { return reg_; }
  const std::string& dir() const { return dir_; }

  /// Writes the transcript file, appends the index line and the in-memory
  /// entry. Returns the transcript filename.
  std::string append(const DrawTranscript& t);

  Bytes read_transcript(const RegisterEntry& e) const;

  static constexpr const char* kIndexName = "index.txt";

 private:
  std::string dir_;
  DrawRegister reg_;
};

// ---------------------------------------------------------------------------
// Third-party verification
// ---------------------------------------------------------------------------

struct VerifyFailure {
  int step = 0;  // earliest failing protocol step; 0 = header/envelope
  FaultCause cause = FaultCause::decode_error;
  std::optional<std::string> culprit;
  std::string detail;
};

struct VerifyOutcome {
  enum class Kind { valid, aborted_evidence, invalid };
  Kind kind = Kind::invalid;
  std::optional<std::uint64_t> result;   // valid: the recomputed result
  std::optional<Abort> abort;            // aborted_evidence
  std::optional<VerifyFailure> failure;  // invalid

  bool valid() const { return kind == Kind::valid; }
};

/// The auditor entry point: assumes nothing, re-runs every check a
/// participant would have made — all signatures, draw-number consistency,
/// commitment-reveal matching, permutation bijectivity — and recomputes the
/// result. Never throws on malformed bytes.
VerifyOutcome verify_transcript(ConstSpan file_bytes, const Roster& roster);
VerifyOutcome verify_transcript(const DrawTranscript& t, const Roster& roster);

}  // namespace fairdraw
