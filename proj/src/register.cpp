#include "fairdraw/register.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fairdraw {

namespace fs = std::filesystem;

const char* fault_cause_name(FaultCause c) {
  switch (c) {
    case FaultCause::bad_signature: return "bad-signature";
    case FaultCause::bad_draw_no: return "bad-draw-no";
    case FaultCause::bad_hash: return "bad-hash";
    case FaultCause::missing_peer: return "missing-peer";
    case FaultCause::decode_error: return "decode-error";
    case FaultCause::timeout: return "timeout";
    case FaultCause::result_mismatch: return "result-mismatch";
    case FaultCause::roster_mismatch: return "roster-mismatch";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Transcript file form
// ---------------------------------------------------------------------------

static constexpr char kMagic[4] = {'F', 'D', 'R', 'W'};
static constexpr std::uint8_t kVersion = 1;
static constexpr std::size_t kMaxName = 256;
static constexpr std::size_t kMaxKeyBytes = 1024;
static constexpr std::size_t kMaxStructures = 1024;

Bytes DrawTranscript::to_file_bytes() const {
  ByteWriter w;
  w.raw(ConstSpan(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(header.scheme));
  w.u64(header.k);
  w.u64(header.draw_no);
  w.u32(static_cast<std::uint32_t>(header.roster.participants.size()));
  for (const RosterEntry& e : header.roster.participants) {
    w.u8(static_cast<std::uint8_t>(e.role));
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.raw(as_span(e.name));
    w.u32(static_cast<std::uint32_t>(e.pub.bytes.size()));
    w.raw(e.pub.bytes);
  }
  if (header.outcome.completed()) {
    w.u8(0);
    w.u64(*header.outcome.result);
  } else {
    const Abort& a = header.outcome.abort.value();
    w.u8(1);
    w.u8(static_cast<std::uint8_t>(a.phase));
    w.u8(static_cast<std::uint8_t>(a.cause));
    w.u8(static_cast<std::uint8_t>(a.mode));
    const std::string culprit = a.culprit.value_or("");
    w.u32(static_cast<std::uint32_t>(culprit.size()));
    w.raw(as_span(culprit));
  }
  w.u32(static_cast<std::uint32_t>(structures.size()));
  for (const Bytes& s : structures) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    w.raw(s);
  }
  return w.take();
}

DrawTranscript DrawTranscript::from_file_bytes(ConstSpan bytes) {
  ByteReader r(bytes);
  ConstSpan magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CodecError(0, "bad transcript magic");
  if (r.u8() != kVersion) throw CodecError(4, "unsupported transcript version");
  DrawTranscript t;
  std::size_t at = r.offset();
  std::uint8_t scheme = r.u8();
  if (scheme != static_cast<std::uint8_t>(SchemeId::ed25519))
    throw CodecError(at, "unknown signature scheme");
  t.header.scheme = static_cast<SchemeId>(scheme);
  t.header.k = r.u64();  // 0 = unknown, legal only for abort evidence
  at = r.offset();
  t.header.draw_no = r.u64();
  if (t.header.draw_no == 0) throw CodecError(at, "draw_no must be >= 1");
  at = r.offset();
  std::uint32_t count = r.u32();
  if (count < 2 || count > 17) throw CodecError(at, "roster size out of range");
  for (std::uint32_t i = 0; i < count; ++i) {
    RosterEntry e;
    at = r.offset();
    std::uint8_t role = r.u8();
    if (role > 1) throw CodecError(at, "bad role byte");
    e.role = static_cast<Role>(role);
    at = r.offset();
    std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > kMaxName) throw CodecError(at, "name length out of range");
    ConstSpan name = r.raw(name_len);
    e.name.assign(name.begin(), name.end());
    at = r.offset();
    std::uint32_t pk_len = r.u32();
    if (pk_len == 0 || pk_len > kMaxKeyBytes) throw CodecError(at, "key length out of range");
    ConstSpan pk = r.raw(pk_len);
    e.pub.scheme = t.header.scheme;
    e.pub.bytes.assign(pk.begin(), pk.end());
    t.header.roster.participants.push_back(std::move(e));
  }
  at = r.offset();
  std::uint8_t outcome_kind = r.u8();
  if (outcome_kind == 0) {
    t.header.outcome.result = r.u64();
  } else if (outcome_kind == 1) {
    Abort a;
    at = r.offset();
    a.phase = r.u8();
    if (a.phase < 1 || a.phase > 15) throw CodecError(at, "abort phase out of range");
    at = r.offset();
    std::uint8_t cause = r.u8();
    if (cause < 1 || cause > 6) throw CodecError(at, "abort cause out of range");
    a.cause = static_cast<FaultCause>(cause);
    at = r.offset();
    std::uint8_t mode = r.u8();
    if (mode > 1) throw CodecError(at, "abort mode out of range");
    a.mode = static_cast<AbortMode>(mode);
    at = r.offset();
    std::uint32_t culprit_len = r.u32();
    if (culprit_len > kMaxName) throw CodecError(at, "culprit length out of range");
    if (culprit_len > 0) {
      ConstSpan culprit = r.raw(culprit_len);
      a.culprit = std::string(culprit.begin(), culprit.end());
    }
    t.header.outcome.abort = std::move(a);
  } else {
    throw CodecError(at, "bad outcome kind");
  }
  at = r.offset();
  std::uint32_t n_structures = r.u32();
  if (n_structures > kMaxStructures) throw CodecError(at, "structure count out of range");
  for (std::uint32_t i = 0; i < n_structures; ++i) {
    std::uint32_t len = r.u32();
    ConstSpan s = r.raw(len);
    t.structures.emplace_back(s.begin(), s.end());
  }
  r.expect_end();
  return t;
}

// ---------------------------------------------------------------------------
// DrawRegister
// ---------------------------------------------------------------------------

const RegisterEntry& DrawRegister::append(const DrawTranscript& t, std::string ref) {
  if (t.header.draw_no < next_)
    throw std::invalid_argument("duplicate draw number " + std::to_string(t.header.draw_no));
  if (t.header.draw_no > next_)
    throw std::invalid_argument("draw number gap: expected " + std::to_string(next_) + ", got " +
                                std::to_string(t.header.draw_no));
  RegisterEntry e;
  e.draw_no = t.header.draw_no;
  e.k = t.header.k;
  e.outcome = t.header.outcome;
  e.transcript_hash = sha3_256(as_span(t.to_file_bytes()));
  e.transcript_ref = std::move(ref);
  entries_.push_back(std::move(e));
  ++next_;
  return entries_.back();
}

DrawRegister DrawRegister::restore(std::vector<RegisterEntry> entries) {
  DrawRegister reg;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].draw_no != i + 1)
      throw std::invalid_argument("register entries are not gap-free");
  }
  reg.entries_ = std::move(entries);
  reg.next_ = reg.entries_.size() + 1;
  return reg;
}

// ---------------------------------------------------------------------------
// RegisterStore
// ---------------------------------------------------------------------------

RegisterStore::RegisterStore(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  const fs::path index = fs::path(dir_) / kIndexName;
  if (!fs::exists(index)) return;
  std::ifstream in(index);
  std::vector<RegisterEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    RegisterEntry e;
    std::string outcome, hash_hex;
    if (!(ls >> e.draw_no >> e.k >> outcome >> e.transcript_ref >> hash_hex))
      throw std::runtime_error("malformed register index line: " + line);
    if (outcome == "ABORT") {
      e.outcome.abort = Abort{};  // full record lives in the transcript file
    } else {
      e.outcome.result = std::stoull(outcome);
    }
    Bytes h = from_hex(hash_hex);
    if (h.size() != Hash32::kSize) throw std::runtime_error("malformed transcript hash in index");
    std::copy(h.begin(), h.end(), e.transcript_hash.bytes.begin());
    entries.push_back(std::move(e));
  }
  reg_ = DrawRegister::restore(std::move(entries));
}

std::string RegisterStore::append(const DrawTranscript& t) {
  char name[32];
  std::snprintf(name, sizeof name, "draw_%06llu.fdrw",
                static_cast<unsigned long long>(t.header.draw_no));
  const Bytes file = t.to_file_bytes();
  const RegisterEntry& e = reg_.append(t, name);
  const fs::path path = fs::path(dir_) / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!out) throw std::runtime_error("cannot write transcript file: " + path.string());
  out.close();
  std::ofstream idx(fs::path(dir_) / kIndexName, std::ios::app);
  idx << e.draw_no << ' ' << e.k << ' ';
  if (e.outcome.completed())
    idx << *e.outcome.result;
  else
    idx << "ABORT";
  idx << ' ' << name << ' ' << e.transcript_hash.hex() << '\n';
  if (!idx) throw std::runtime_error("cannot update register index in " + dir_);
  return name;
}

Bytes RegisterStore::read_transcript(const RegisterEntry& e) const {
  const fs::path path = fs::path(dir_) / e.transcript_ref;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read transcript file: " + path.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// verify_transcript
// ---------------------------------------------------------------------------

namespace {

struct Verifier {
  const DrawTranscript& t;
  const Roster& roster;
  std::size_t n;       // guarantor count
  bool strict;         // completed transcripts: every structure must be present
  std::size_t idx = 0;

  VerifyOutcome fail(int step, FaultCause cause, std::optional<std::string> culprit,
                     std::string detail) const {
    VerifyOutcome out;
    out.kind = VerifyOutcome::Kind::invalid;
    out.failure = VerifyFailure{step, cause, std::move(culprit), std::move(detail)};
    return out;
  }

  const Bytes* take(StructureTag tag) {
    if (idx >= t.structures.size()) return nullptr;
    const Bytes& s = t.structures[idx];
    if (s.empty() || s[0] != static_cast<std::uint8_t>(tag)) return nullptr;
    ++idx;
    return &s;
  }

  bool check_sig(const SignatureBlock& sig, const std::string& expected_signer,
                 const Bytes& message) const {
    if (sig.signer_id != expected_signer) return false;
    const PublicKey* pk = roster.key_of(sig.signer_id);
    if (!pk) return false;
    try {
      return verify(*pk, as_span(message), as_span(sig.signature));
    } catch (const CryptoError&) {
      return false;
    }
  }

  std::optional<std::size_t> guarantor_index(const std::string& name) const {
    auto i = roster.index_of(name);
    if (!i || *i == 0) return std::nullopt;
    return *i - 1;
  }
};

}  // namespace

VerifyOutcome verify_transcript(const DrawTranscript& t, const Roster& roster) {
  try {
    roster.validate();
    t.header.roster.validate();
  } catch (const std::invalid_argument& e) {
    VerifyOutcome out;
    out.failure = VerifyFailure{0, FaultCause::roster_mismatch, std::nullopt, e.what()};
    return out;
  }
  Verifier v{t, roster, roster.guarantor_count(), t.header.outcome.completed()};
  if (t.header.roster != roster)
    return v.fail(0, FaultCause::roster_mismatch, std::nullopt,
                  "transcript roster differs from the trusted roster");
  const std::string initiator = roster.initiator().name;
  const std::uint64_t k = t.header.k;
  const std::uint64_t draw_no = t.header.draw_no;
  const std::size_t n = v.n;

  if (v.strict && k == 0)
    return v.fail(0, FaultCause::decode_error, std::nullopt,
                  "completed transcript with k = 0");
  if (v.strict && t.structures.size() != 7 + 5 * n)
    return v.fail(0, FaultCause::decode_error, std::nullopt,
                  "completed transcript must contain all exchanged structures");

  try {
    // Step 1: announce.
    const Bytes* announce_bytes = v.take(StructureTag::draw_announce);
    DrawAnnounce announce;
    if (announce_bytes) {
      announce = decode_draw_announce(as_span(*announce_bytes));
      if (announce.k != k || announce.draw_no != draw_no)
        return v.fail(1, FaultCause::bad_draw_no, std::nullopt,
                      "announce disagrees with transcript header");
      if (!v.check_sig(announce.sig, initiator, signing::draw_announce(k, draw_no)))
        return v.fail(1, FaultCause::bad_signature, initiator, "announce signature");
    } else if (v.strict || v.idx < t.structures.size()) {
      return v.fail(1, FaultCause::decode_error, std::nullopt, "missing announce");
    }

    // Step 2: countersigned announces, ascending guarantor index.
    std::vector<const Bytes*> counter_ann(n, nullptr);
    {
      std::int64_t last = -1;
      while (const Bytes* b = v.take(StructureTag::counter_signed_announce)) {
        CounterSignedAnnounce cs = decode_counter_signed_announce(as_span(*b));
        auto gi = v.guarantor_index(cs.guarantor_sig.signer_id);
        if (!gi || static_cast<std::int64_t>(*gi) <= last)
          return v.fail(2, FaultCause::bad_signature, std::nullopt,
                        "countersigned announces out of order");
        last = static_cast<std::int64_t>(*gi);
        if (announce_bytes && encode(cs.announce) != *announce_bytes)
          return v.fail(2, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "inner announce differs");
        if (!v.check_sig(cs.guarantor_sig, roster.guarantor(*gi).name,
                         signing::counter_signed_announce(cs.announce)))
          return v.fail(2, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "countersignature");
        counter_ann[*gi] = b;
      }
      if (v.strict)
        for (std::size_t i = 0; i < n; ++i)
          if (!counter_ann[i])
            return v.fail(2, FaultCause::decode_error, std::nullopt,
                          "missing countersigned announce");
    }

    // Step 3: announce aggregate.
    if (const Bytes* b = v.take(StructureTag::announce_aggregate)) {
      AnnounceAggregate agg = decode_announce_aggregate(as_span(*b));
      if (agg.entries.size() != n)
        return v.fail(3, FaultCause::decode_error, initiator, "aggregate entry count");
      for (std::size_t i = 0; i < n; ++i) {
        Bytes enc = encode(agg.entries[i]);
        if (counter_ann[i] && enc != *counter_ann[i])
          return v.fail(3, FaultCause::bad_signature, initiator,
                        "aggregate entry differs from countersigned announce");
        CounterSignedAnnounce& cs = agg.entries[i];
        if (cs.announce.k != k || cs.announce.draw_no != draw_no)
          return v.fail(3, FaultCause::bad_draw_no, initiator, "aggregate entry draw");
        if (!v.check_sig(cs.guarantor_sig, roster.guarantor(i).name,
                         signing::counter_signed_announce(cs.announce)))
          return v.fail(3, FaultCause::bad_signature, initiator, "aggregate entry signature");
        if (!v.check_sig(cs.announce.sig, initiator, signing::draw_announce(k, draw_no)))
          return v.fail(3, FaultCause::bad_signature, initiator, "aggregate inner announce");
      }
      if (!v.check_sig(agg.covering_sig, initiator, signing::announce_aggregate(agg.entries)))
        return v.fail(3, FaultCause::bad_signature, initiator, "covering signature");
    } else if (v.strict) {
      return v.fail(3, FaultCause::decode_error, std::nullopt, "missing announce aggregate");
    }

    // Step 5: initiator commitment.
    const Bytes* commit_bytes = v.take(StructureTag::initiator_commit);
    InitiatorCommit init_commit;
    if (commit_bytes) {
      init_commit = decode_initiator_commit(as_span(*commit_bytes));
      if (init_commit.draw_no != draw_no)
        return v.fail(5, FaultCause::bad_draw_no, initiator, "commit draw number");
      if (!v.check_sig(init_commit.sig, initiator,
                       signing::initiator_commit(draw_no, init_commit.hash)))
        return v.fail(5, FaultCause::bad_signature, initiator, "commit signature");
    } else if (v.strict) {
      return v.fail(5, FaultCause::decode_error, std::nullopt, "missing initiator commit");
    }

    // Step 6: countersigned commitments.
    std::vector<const Bytes*> counter_commit(n, nullptr);
    {
      std::int64_t last = -1;
      while (const Bytes* b = v.take(StructureTag::counter_signed_commit)) {
        CounterSignedCommit cs = decode_counter_signed_commit(as_span(*b));
        auto gi = v.guarantor_index(cs.guarantor_sig.signer_id);
        if (!gi || static_cast<std::int64_t>(*gi) <= last)
          return v.fail(6, FaultCause::bad_signature, std::nullopt,
                        "countersigned commits out of order");
        last = static_cast<std::int64_t>(*gi);
        if (commit_bytes && encode(cs.commit) != *commit_bytes)
          return v.fail(6, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "inner commit differs");
        if (!v.check_sig(cs.guarantor_sig, roster.guarantor(*gi).name,
                         signing::counter_signed_commit(cs.commit)))
          return v.fail(6, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "countersignature");
        counter_commit[*gi] = b;
      }
      if (v.strict)
        for (std::size_t i = 0; i < n; ++i)
          if (!counter_commit[i])
            return v.fail(6, FaultCause::decode_error, std::nullopt,
                          "missing countersigned commit");
    }

    // Step 7: commit aggregate.
    if (const Bytes* b = v.take(StructureTag::commit_aggregate)) {
      CommitAggregate agg = decode_commit_aggregate(as_span(*b));
      if (agg.entries.size() != n)
        return v.fail(7, FaultCause::decode_error, initiator, "aggregate entry count");
      for (std::size_t i = 0; i < n; ++i) {
        Bytes enc = encode(agg.entries[i]);
        if (counter_commit[i] && enc != *counter_commit[i])
          return v.fail(7, FaultCause::bad_signature, initiator,
                        "aggregate entry differs from countersigned commit");
        CounterSignedCommit& cs = agg.entries[i];
        if (cs.commit.draw_no != draw_no)
          return v.fail(7, FaultCause::bad_draw_no, initiator, "aggregate entry draw");
        if (commit_bytes && encode(cs.commit) != *commit_bytes)
          return v.fail(7, FaultCause::bad_signature, initiator, "aggregate inner commit");
        if (!v.check_sig(cs.guarantor_sig, roster.guarantor(i).name,
                         signing::counter_signed_commit(cs.commit)))
          return v.fail(7, FaultCause::bad_signature, initiator, "aggregate entry signature");
      }
      if (!v.check_sig(agg.covering_sig, initiator, signing::commit_aggregate(agg.entries)))
        return v.fail(7, FaultCause::bad_signature, initiator, "covering signature");
    } else if (v.strict) {
      return v.fail(7, FaultCause::decode_error, std::nullopt, "missing commit aggregate");
    }

    // Step 9: guarantor commitments.
    std::vector<std::optional<GuarantorCommit>> guar_commits(n);
    std::vector<const Bytes*> guar_commit_bytes(n, nullptr);
    {
      std::int64_t last = -1;
      while (const Bytes* b = v.take(StructureTag::guarantor_commit)) {
        GuarantorCommit gc = decode_guarantor_commit(as_span(*b));
        auto gi = v.guarantor_index(gc.sig.signer_id);
        if (!gi || static_cast<std::int64_t>(*gi) <= last)
          return v.fail(9, FaultCause::bad_signature, std::nullopt,
                        "guarantor commits out of order");
        last = static_cast<std::int64_t>(*gi);
        if (gc.draw_no != draw_no)
          return v.fail(9, FaultCause::bad_draw_no, gc.sig.signer_id, "commit draw number");
        if (!v.check_sig(gc.sig, roster.guarantor(*gi).name,
                         signing::guarantor_commit(gc.draw_no, gc.hash)))
          return v.fail(9, FaultCause::bad_signature, gc.sig.signer_id, "commit signature");
        guar_commit_bytes[*gi] = b;
        guar_commits[*gi] = std::move(gc);
      }
      if (v.strict)
        for (std::size_t i = 0; i < n; ++i)
          if (!guar_commits[i])
            return v.fail(9, FaultCause::decode_error, std::nullopt, "missing guarantor commit");
    }

    // Step 10: hash aggregate.
    const Bytes* hash_agg_bytes = v.take(StructureTag::guarantor_hash_aggregate);
    std::optional<GuarantorHashAggregate> hash_agg;
    if (hash_agg_bytes) {
      hash_agg = decode_guarantor_hash_aggregate(as_span(*hash_agg_bytes));
      if (hash_agg->entries.size() != n)
        return v.fail(10, FaultCause::decode_error, initiator, "aggregate entry count");
      for (std::size_t i = 0; i < n; ++i) {
        Bytes enc = encode(hash_agg->entries[i]);
        if (guar_commit_bytes[i] && enc != *guar_commit_bytes[i])
          return v.fail(10, FaultCause::bad_signature, initiator,
                        "aggregate entry differs from guarantor commit");
        const GuarantorCommit& gc = hash_agg->entries[i];
        if (gc.draw_no != draw_no)
          return v.fail(10, FaultCause::bad_draw_no, initiator, "aggregate entry draw");
        if (!v.check_sig(gc.sig, roster.guarantor(i).name,
                         signing::guarantor_commit(gc.draw_no, gc.hash)))
          return v.fail(10, FaultCause::bad_signature, initiator, "aggregate entry signature");
        if (!guar_commits[i]) guar_commits[i] = gc;
      }
      if (!v.check_sig(hash_agg->covering_sig, initiator,
                       signing::hash_aggregate(hash_agg->entries)))
        return v.fail(10, FaultCause::bad_signature, initiator, "covering signature");
    } else if (v.strict) {
      return v.fail(10, FaultCause::decode_error, std::nullopt, "missing hash aggregate");
    }

    // Step 11: countersigned hash aggregates.
    {
      std::int64_t last = -1;
      std::size_t seen = 0;
      while (const Bytes* b = v.take(StructureTag::countersigned_hash_aggregate)) {
        CountersignedHashAggregate cs = decode_countersigned_hash_aggregate(as_span(*b));
        auto gi = v.guarantor_index(cs.guarantor_sig.signer_id);
        if (!gi || static_cast<std::int64_t>(*gi) <= last)
          return v.fail(11, FaultCause::bad_signature, std::nullopt,
                        "countersigned hash aggregates out of order");
        last = static_cast<std::int64_t>(*gi);
        if (hash_agg_bytes && encode(cs.inner) != *hash_agg_bytes)
          return v.fail(11, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "inner aggregate differs");
        if (!v.check_sig(cs.guarantor_sig, roster.guarantor(*gi).name,
                         signing::countersigned_hash_aggregate(cs.inner)))
          return v.fail(11, FaultCause::bad_signature, cs.guarantor_sig.signer_id,
                        "countersignature");
        ++seen;
      }
      if (v.strict && seen != n)
        return v.fail(11, FaultCause::decode_error, std::nullopt,
                      "missing countersigned hash aggregate");
    }

    // Step 12: initiator reveal.
    const Bytes* reveal_bytes = v.take(StructureTag::initiator_reveal);
    std::optional<InitiatorReveal> init_reveal;
    if (reveal_bytes) {
      init_reveal = decode_initiator_reveal(as_span(*reveal_bytes));
      if (init_reveal->draw_no != draw_no)
        return v.fail(12, FaultCause::bad_draw_no, initiator, "reveal draw number");
      if (init_reveal->number >= k)
        return v.fail(12, FaultCause::decode_error, initiator, "revealed number out of range");
      if (!v.check_sig(init_reveal->sig, initiator,
                       signing::initiator_reveal(init_reveal->salt, draw_no, init_reveal->number)))
        return v.fail(12, FaultCause::bad_signature, initiator, "reveal signature");
      if (commit_bytes &&
          !verify_commitment(init_commit.hash,
                             as_span(number_secret_bytes(draw_no, init_reveal->number)),
                             init_reveal->salt))
        return v.fail(12, FaultCause::bad_hash, initiator,
                      "reveal does not match the committed hash");
    } else if (v.strict) {
      return v.fail(12, FaultCause::decode_error, std::nullopt, "missing initiator reveal");
    }

    // Step 13: guarantor reveals.
    std::vector<std::optional<GuarantorReveal>> reveals(n);
    std::vector<const Bytes*> reveal_bytes_by_g(n, nullptr);
    {
      std::int64_t last = -1;
      while (const Bytes* b = v.take(StructureTag::guarantor_reveal)) {
        GuarantorReveal gr = decode_guarantor_reveal(as_span(*b));
        auto gi = v.guarantor_index(gr.sig.signer_id);
        if (!gi || static_cast<std::int64_t>(*gi) <= last)
          return v.fail(13, FaultCause::bad_signature, std::nullopt,
                        "guarantor reveals out of order");
        last = static_cast<std::int64_t>(*gi);
        const std::string who = gr.sig.signer_id;
        if (gr.draw_no != draw_no)
          return v.fail(13, FaultCause::bad_draw_no, who, "reveal draw number");
        if (gr.perm.size() != k)
          return v.fail(13, FaultCause::decode_error, who, "permutation size differs from k");
        if (!v.check_sig(gr.sig, roster.guarantor(*gi).name,
                         signing::guarantor_reveal(gr.salt, draw_no, gr.perm)))
          return v.fail(13, FaultCause::bad_signature, who, "reveal signature");
        if (guar_commits[*gi] &&
            !verify_commitment(guar_commits[*gi]->hash,
                               as_span(permutation_secret_bytes(draw_no, gr.perm)), gr.salt))
          return v.fail(13, FaultCause::bad_hash, who,
                        "reveal does not match the committed hash");
        reveal_bytes_by_g[*gi] = b;
        reveals[*gi] = std::move(gr);
      }
      if (v.strict)
        for (std::size_t i = 0; i < n; ++i)
          if (!reveals[i])
            return v.fail(13, FaultCause::decode_error, std::nullopt,
                          "missing guarantor reveal");
    }

    // Step 14: reveal aggregate.
    if (const Bytes* b = v.take(StructureTag::reveal_aggregate)) {
      RevealAggregate agg = decode_reveal_aggregate(as_span(*b));
      if (agg.entries.size() != n)
        return v.fail(14, FaultCause::decode_error, initiator, "aggregate entry count");
      for (std::size_t i = 0; i < n; ++i) {
        Bytes enc = encode(agg.entries[i]);
        if (reveal_bytes_by_g[i] && enc != *reveal_bytes_by_g[i])
          return v.fail(14, FaultCause::bad_signature, initiator,
                        "aggregate entry differs from guarantor reveal");
        const GuarantorReveal& gr = agg.entries[i];
        if (gr.draw_no != draw_no || gr.perm.size() != k)
          return v.fail(14, FaultCause::bad_draw_no, initiator, "aggregate entry draw");
        if (!v.check_sig(gr.sig, roster.guarantor(i).name,
                         signing::guarantor_reveal(gr.salt, gr.draw_no, gr.perm)))
          return v.fail(14, FaultCause::bad_signature, initiator, "aggregate entry signature");
        if (guar_commits[i] &&
            !verify_commitment(guar_commits[i]->hash,
                               as_span(permutation_secret_bytes(draw_no, gr.perm)), gr.salt))
          return v.fail(14, FaultCause::bad_hash, roster.guarantor(i).name,
                        "aggregate reveal does not match the committed hash");
        if (!reveals[i]) reveals[i] = gr;
      }
      if (!v.check_sig(agg.covering_sig, initiator, signing::reveal_aggregate(agg.entries)))
        return v.fail(14, FaultCause::bad_signature, initiator, "covering signature");
    } else if (v.strict) {
      return v.fail(14, FaultCause::decode_error, std::nullopt, "missing reveal aggregate");
    }

    if (v.idx != t.structures.size())
      return v.fail(0, FaultCause::decode_error, std::nullopt,
                    "unexpected structure at position " + std::to_string(v.idx));

    if (!t.header.outcome.completed()) {
      VerifyOutcome out;
      out.kind = VerifyOutcome::Kind::aborted_evidence;
      out.abort = t.header.outcome.abort;
      return out;
    }

    // Step 15: recompute the result and compare with the published one.
    std::uint64_t value = init_reveal->number;
    for (std::size_t i = n; i-- > 0;) value = reveals[i]->perm.apply(value);
    if (value != *t.header.outcome.result)
      return v.fail(15, FaultCause::result_mismatch, std::nullopt,
                    "recomputed result " + std::to_string(value) + " differs from published " +
                        std::to_string(*t.header.outcome.result));
    VerifyOutcome out;
    out.kind = VerifyOutcome::Kind::valid;
    out.result = value;
    return out;
  } catch (const CodecError& e) {
    return v.fail(0, FaultCause::decode_error, std::nullopt, e.what());
  }
}

VerifyOutcome verify_transcript(ConstSpan file_bytes, const Roster& roster) {
  try {
    DrawTranscript t = DrawTranscript::from_file_bytes(file_bytes);
    return verify_transcript(t, roster);
  } catch (const CodecError& e) {
    VerifyOutcome out;
    out.failure = VerifyFailure{0, FaultCause::decode_error, std::nullopt, e.what()};
    return out;
  }
}

}  // namespace fairdraw
