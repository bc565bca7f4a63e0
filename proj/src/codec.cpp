#include "fairdraw/codec.hpp"

namespace fairdraw {

namespace {

constexpr std::size_t kMaxSignerId = 256;
constexpr std::size_t kMaxSignature = 1024;
constexpr std::size_t kMaxAggregateItems = 4096;
constexpr std::size_t kMaxPermutationEntries = std::size_t{1} << 24;

// --- field writers ----------------------------------------------------------

void put_u64_field(ByteWriter& w, FieldTag tag, std::uint64_t v) {
  w.u8(static_cast<std::uint8_t>(tag));
  w.u32(8);
  w.u64(v);
}

void put_hash_field(ByteWriter& w, const CommitmentHash& h) {
  w.u8(static_cast<std::uint8_t>(FieldTag::hash));
  w.u32(Hash32::kSize);
  w.raw(ConstSpan(h.bytes.data(), h.bytes.size()));
}

void put_salt_field(ByteWriter& w, const Salt& s) {
  w.u8(static_cast<std::uint8_t>(FieldTag::salt));
  w.u32(Salt::kSize);
  w.raw(ConstSpan(s.bytes.data(), s.bytes.size()));
}

void put_perm_field(ByteWriter& w, const Permutation& p) {
  w.u8(static_cast<std::uint8_t>(FieldTag::permutation));
  w.u32(static_cast<std::uint32_t>(4 + 8 * p.size()));
  w.u32(static_cast<std::uint32_t>(p.size()));
  for (std::uint64_t v : p.mapping()) w.u64(v);
}

void put_sig_field(ByteWriter& w, const SignatureBlock& sig) {
  w.u8(static_cast<std::uint8_t>(FieldTag::signature_block));
  w.u32(static_cast<std::uint32_t>(4 + sig.signer_id.size() + 4 + sig.signature.size()));
  w.u32(static_cast<std::uint32_t>(sig.signer_id.size()));
  w.raw(as_span(sig.signer_id));
  w.u32(static_cast<std::uint32_t>(sig.signature.size()));
  w.raw(sig.signature);
}

void put_text_field(ByteWriter& w, const std::string& s) {
  w.u8(static_cast<std::uint8_t>(FieldTag::text));
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.raw(as_span(s));
}

template <typename T>
void put_aggregate_field(ByteWriter& w, std::span<const T> items) {
  ByteWriter inner;
  inner.u32(static_cast<std::uint32_t>(items.size()));
  for (const T& item : items) {
    Bytes enc = encode(item);
    inner.u32(static_cast<std::uint32_t>(enc.size()));
    inner.raw(enc);
  }
  w.u8(static_cast<std::uint8_t>(FieldTag::aggregate));
  w.u32(static_cast<std::uint32_t>(inner.size()));
  w.raw(inner.bytes());
}

// --- field readers ----------------------------------------------------------

void expect_field(ByteReader& r, FieldTag tag, const char* what) {
  std::size_t at = r.offset();
  std::uint8_t got = r.u8();
  if (got != static_cast<std::uint8_t>(tag))
    throw CodecError(at, std::string("expected field ") + what);
}

std::uint64_t get_u64_field(ByteReader& r, FieldTag tag, const char* what) {
  expect_field(r, tag, what);
  std::size_t at = r.offset();
  if (r.u32() != 8) throw CodecError(at, std::string("bad length for field ") + what);
  return r.u64();
}

CommitmentHash get_hash_field(ByteReader& r) {
  expect_field(r, FieldTag::hash, "hash");
  std::size_t at = r.offset();
  if (r.u32() != Hash32::kSize) throw CodecError(at, "bad hash length");
  CommitmentHash h;
  ConstSpan raw = r.raw(Hash32::kSize);
  std::copy(raw.begin(), raw.end(), h.bytes.begin());
  return h;
}

Salt get_salt_field(ByteReader& r) {
  expect_field(r, FieldTag::salt, "salt");
  std::size_t at = r.offset();
  if (r.u32() != Salt::kSize) throw CodecError(at, "bad salt length");
  Salt s;
  ConstSpan raw = r.raw(Salt::kSize);
  std::copy(raw.begin(), raw.end(), s.bytes.begin());
  return s;
}

Permutation get_perm_field(ByteReader& r) {
  expect_field(r, FieldTag::permutation, "permutation");
  std::size_t at = r.offset();
  std::uint32_t len = r.u32();
  std::uint32_t count = r.u32();
  if (count == 0 || count > kMaxPermutationEntries)
    throw CodecError(at, "permutation entry count out of range");
  if (len != 4 + 8 * static_cast<std::uint64_t>(count))
    throw CodecError(at, "permutation length mismatch");
  if (r.remaining() < 8 * static_cast<std::uint64_t>(count))
    throw CodecError(r.offset(), "truncated input");
  std::vector<std::uint64_t> mapping(count);
  for (std::uint32_t i = 0; i < count; ++i) mapping[i] = r.u64();
  try {
    return Permutation(std::move(mapping));
  } catch (const std::invalid_argument& e) {
    throw CodecError(at, e.what());
  }
}

SignatureBlock get_sig_field(ByteReader& r) {
  expect_field(r, FieldTag::signature_block, "signature block");
  std::size_t at = r.offset();
  std::uint32_t len = r.u32();
  std::uint32_t id_len = r.u32();
  if (id_len == 0 || id_len > kMaxSignerId) throw CodecError(at, "signer id length out of range");
  ConstSpan id = r.raw(id_len);
  std::uint32_t sig_len = r.u32();
  if (sig_len == 0 || sig_len > kMaxSignature) throw CodecError(at, "signature length out of range");
  ConstSpan sig = r.raw(sig_len);
  if (len != 4 + id_len + 4 + static_cast<std::uint64_t>(sig_len))
    throw CodecError(at, "signature block length mismatch");
  return SignatureBlock{std::string(id.begin(), id.end()), Bytes(sig.begin(), sig.end())};
}

std::string get_text_field(ByteReader& r) {
  expect_field(r, FieldTag::text, "text");
  std::size_t at = r.offset();
  std::uint32_t len = r.u32();
  if (len > kMaxSignerId) throw CodecError(at, "text length out of range");
  ConstSpan raw = r.raw(len);
  return std::string(raw.begin(), raw.end());
}

template <typename T>
std::vector<T> get_aggregate_field(ByteReader& r, T (*decode_item)(ConstSpan)) {
  expect_field(r, FieldTag::aggregate, "aggregate");
  std::size_t at = r.offset();
  std::uint32_t len = r.u32();
  std::size_t start = r.offset();
  std::uint32_t count = r.u32();
  if (count == 0 || count > kMaxAggregateItems)
    throw CodecError(at, "aggregate item count out of range");
  std::vector<T> items;
  items.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t item_len = r.u32();
    std::size_t item_at = r.offset();
    ConstSpan enc = r.raw(item_len);
    try {
      items.push_back(decode_item(enc));
    } catch (const CodecError& e) {
      throw CodecError(item_at + e.offset(), e.what());
    }
  }
  if (r.offset() - start != len) throw CodecError(at, "aggregate length mismatch");
  return items;
}

void begin(ByteWriter& w, StructureTag tag) { w.u8(static_cast<std::uint8_t>(tag)); }

ByteReader open(ConstSpan bytes, StructureTag tag) {
  ByteReader r(bytes);
  std::size_t at = r.offset();
  std::uint8_t got = r.u8();
  if (got != static_cast<std::uint8_t>(tag))
    throw CodecError(at, std::string("wrong structure tag for ") +
                             structure_name(tag));
  return r;
}

}  // namespace

const char* structure_name(StructureTag tag) {
  switch (tag) {
    case StructureTag::draw_announce: return "draw_announce";
    case StructureTag::counter_signed_announce: return "counter_signed_announce";
    case StructureTag::announce_aggregate: return "announce_aggregate";
    case StructureTag::initiator_commit: return "initiator_commit";
    case StructureTag::counter_signed_commit: return "counter_signed_commit";
    case StructureTag::commit_aggregate: return "commit_aggregate";
    case StructureTag::guarantor_commit: return "guarantor_commit";
    case StructureTag::guarantor_hash_aggregate: return "guarantor_hash_aggregate";
    case StructureTag::countersigned_hash_aggregate: return "countersigned_hash_aggregate";
    case StructureTag::initiator_reveal: return "initiator_reveal";
    case StructureTag::guarantor_reveal: return "guarantor_reveal";
    case StructureTag::reveal_aggregate: return "reveal_aggregate";
    case StructureTag::abort_notice: return "abort_notice";
  }
  return "unknown";
}

// --- signing prefixes ---------------------------------------------------------

namespace signing {

Bytes draw_announce(std::uint64_t k, std::uint64_t draw_no) {
  ByteWriter w;
  begin(w, StructureTag::draw_announce);
  put_u64_field(w, FieldTag::upper_bound, k);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  return w.take();
}

Bytes counter_signed_announce(const DrawAnnounce& a) {
  ByteWriter w;
  begin(w, StructureTag::counter_signed_announce);
  put_u64_field(w, FieldTag::upper_bound, a.k);
  put_u64_field(w, FieldTag::draw_no, a.draw_no);
  put_sig_field(w, a.sig);
  return w.take();
}

Bytes announce_aggregate(std::span<const CounterSignedAnnounce> entries) {
  ByteWriter w;
  begin(w, StructureTag::announce_aggregate);
  put_aggregate_field(w, entries);
  return w.take();
}

Bytes initiator_commit(std::uint64_t draw_no, const CommitmentHash& h) {
  ByteWriter w;
  begin(w, StructureTag::initiator_commit);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_hash_field(w, h);
  return w.take();
}

Bytes counter_signed_commit(const InitiatorCommit& c) {
  ByteWriter w;
  begin(w, StructureTag::counter_signed_commit);
  put_u64_field(w, FieldTag::draw_no, c.draw_no);
  put_hash_field(w, c.hash);
  put_sig_field(w, c.sig);
  return w.take();
}

Bytes commit_aggregate(std::span<const CounterSignedCommit> entries) {
  ByteWriter w;
  begin(w, StructureTag::commit_aggregate);
  put_aggregate_field(w, entries);
  return w.take();
}

Bytes guarantor_commit(std::uint64_t draw_no, const CommitmentHash& h) {
  ByteWriter w;
  begin(w, StructureTag::guarantor_commit);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_hash_field(w, h);
  return w.take();
}

Bytes hash_aggregate(std::span<const GuarantorCommit> entries) {
  ByteWriter w;
  begin(w, StructureTag::guarantor_hash_aggregate);
  put_aggregate_field(w, entries);
  return w.take();
}

Bytes countersigned_hash_aggregate(const GuarantorHashAggregate& agg) {
  ByteWriter w;
  begin(w, StructureTag::countersigned_hash_aggregate);
  put_aggregate_field(w, std::span<const GuarantorCommit>(agg.entries));
  put_sig_field(w, agg.covering_sig);
  return w.take();
}

Bytes initiator_reveal(const Salt& salt, std::uint64_t draw_no, std::uint64_t number) {
  ByteWriter w;
  begin(w, StructureTag::initiator_reveal);
  put_salt_field(w, salt);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_u64_field(w, FieldTag::number, number);
  return w.take();
}

Bytes guarantor_reveal(const Salt& salt, std::uint64_t draw_no, const Permutation& perm) {
  ByteWriter w;
  begin(w, StructureTag::guarantor_reveal);
  put_salt_field(w, salt);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_perm_field(w, perm);
  return w.take();
}

Bytes reveal_aggregate(std::span<const GuarantorReveal> entries) {
  ByteWriter w;
  begin(w, StructureTag::reveal_aggregate);
  put_aggregate_field(w, entries);
  return w.take();
}

Bytes abort_notice(std::uint64_t draw_no, std::uint64_t phase, std::uint64_t cause_code,
                   const std::string& culprit) {
  ByteWriter w;
  begin(w, StructureTag::abort_notice);
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_u64_field(w, FieldTag::number, phase);
  put_u64_field(w, FieldTag::number, cause_code);
  put_text_field(w, culprit);
  return w.take();
}

}  // namespace signing

// --- encode -------------------------------------------------------------------

static Bytes with_sig(Bytes prefix, const SignatureBlock& sig) {
  ByteWriter w;
  w.raw(prefix);
  put_sig_field(w, sig);
  return w.take();
}

Bytes encode(const DrawAnnounce& s) { return with_sig(signing::draw_announce(s.k, s.draw_no), s.sig); }

Bytes encode(const CounterSignedAnnounce& s) {
  return with_sig(signing::counter_signed_announce(s.announce), s.guarantor_sig);
}

Bytes encode(const AnnounceAggregate& s) {
  return with_sig(signing::announce_aggregate(s.entries), s.covering_sig);
}

Bytes encode(const InitiatorCommit& s) {
  return with_sig(signing::initiator_commit(s.draw_no, s.hash), s.sig);
}

Bytes encode(const CounterSignedCommit& s) {
  return with_sig(signing::counter_signed_commit(s.commit), s.guarantor_sig);
}

Bytes encode(const CommitAggregate& s) {
  return with_sig(signing::commit_aggregate(s.entries), s.covering_sig);
}

Bytes encode(const GuarantorCommit& s) {
  return with_sig(signing::guarantor_commit(s.draw_no, s.hash), s.sig);
}

Bytes encode(const GuarantorHashAggregate& s) {
  return with_sig(signing::hash_aggregate(s.entries), s.covering_sig);
}

Bytes encode(const CountersignedHashAggregate& s) {
  return with_sig(signing::countersigned_hash_aggregate(s.inner), s.guarantor_sig);
}

Bytes encode(const InitiatorReveal& s) {
  return with_sig(signing::initiator_reveal(s.salt, s.draw_no, s.number), s.sig);
}

Bytes encode(const GuarantorReveal& s) {
  return with_sig(signing::guarantor_reveal(s.salt, s.draw_no, s.perm), s.sig);
}

Bytes encode(const RevealAggregate& s) {
  return with_sig(signing::reveal_aggregate(s.entries), s.covering_sig);
}

Bytes encode(const AbortNotice& s) {
  return with_sig(signing::abort_notice(s.draw_no, s.phase, s.cause_code, s.culprit), s.sig);
}

// --- commitment preimages -------------------------------------------------------

Bytes number_secret_bytes(std::uint64_t draw_no, std::uint64_t number) {
  ByteWriter w;
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_u64_field(w, FieldTag::number, number);
  return w.take();
}

Bytes permutation_secret_bytes(std::uint64_t draw_no, const Permutation& perm) {
  ByteWriter w;
  put_u64_field(w, FieldTag::draw_no, draw_no);
  put_perm_field(w, perm);
  return w.take();
}

// --- decode ---------------------------------------------------------------------

StructureTag peek_tag(ConstSpan bytes) {
  if (bytes.empty()) throw CodecError(0, "empty input");
  return static_cast<StructureTag>(bytes[0]);
}

DrawAnnounce decode_draw_announce(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::draw_announce);
  DrawAnnounce s;
  std::size_t k_at = r.offset();
  s.k = get_u64_field(r, FieldTag::upper_bound, "k");
  if (s.k == 0) throw CodecError(k_at, "k must be >= 1");
  s.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.sig = get_sig_field(r);
  r.expect_end();
  return s;
}

CounterSignedAnnounce decode_counter_signed_announce(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::counter_signed_announce);
  CounterSignedAnnounce s;
  std::size_t k_at = r.offset();
  s.announce.k = get_u64_field(r, FieldTag::upper_bound, "k");
  if (s.announce.k == 0) throw CodecError(k_at, "k must be >= 1");
  s.announce.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.announce.sig = get_sig_field(r);
  s.guarantor_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

AnnounceAggregate decode_announce_aggregate(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::announce_aggregate);
  AnnounceAggregate s;
  s.entries = get_aggregate_field(r, decode_counter_signed_announce);
  s.covering_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

InitiatorCommit decode_initiator_commit(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::initiator_commit);
  InitiatorCommit s;
  s.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.hash = get_hash_field(r);
  s.sig = get_sig_field(r);
  r.expect_end();
  return s;
}

CounterSignedCommit decode_counter_signed_commit(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::counter_signed_commit);
  CounterSignedCommit s;
  s.commit.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.commit.hash = get_hash_field(r);
  s.commit.sig = get_sig_field(r);
  s.guarantor_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

CommitAggregate decode_commit_aggregate(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::commit_aggregate);
  CommitAggregate s;
  s.entries = get_aggregate_field(r, decode_counter_signed_commit);
  s.covering_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

GuarantorCommit decode_guarantor_commit(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::guarantor_commit);
  GuarantorCommit s;
  s.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.hash = get_hash_field(r);
  s.sig = get_sig_field(r);
  r.expect_end();
  return s;
}

GuarantorHashAggregate decode_guarantor_hash_aggregate(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::guarantor_hash_aggregate);
  GuarantorHashAggregate s;
  s.entries = get_aggregate_field(r, decode_guarantor_commit);
  s.covering_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

CountersignedHashAggregate decode_countersigned_hash_aggregate(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::countersigned_hash_aggregate);
  CountersignedHashAggregate s;
  s.inner.entries = get_aggregate_field(r, decode_guarantor_commit);
  s.inner.covering_sig = get_sig_field(r);
  s.guarantor_sig = get_sig_field(r);
  r.expect_end();
  return s;
}

InitiatorReveal decode_initiator_reveal(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::initiator_reveal);
  InitiatorReveal s;
  s.salt = get_salt_field(r);
  s.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.number = get_u64_field(r, FieldTag::number, "number");
  s.sig = get_sig_field(r);
  r.expect_end();
  return s;
}

GuarantorReveal decode_guarantor_reveal(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::guarantor_reveal);
  Salt salt = get_salt_field(r);
  std::uint64_t draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  Permutation perm = get_perm_field(r);
  SignatureBlock sig = get_sig_field(r);
  r.expect_end();
  return GuarantorReveal{salt, draw_no, std::move(perm), std::move(sig)};
}

RevealAggregate decode_reveal_aggregate(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::reveal_aggregate);
  std::vector<GuarantorReveal> entries = get_aggregate_field(r, decode_guarantor_reveal);
  SignatureBlock covering = get_sig_field(r);
  r.expect_end();
  return RevealAggregate{std::move(entries), std::move(covering)};
}

AbortNotice decode_abort_notice(ConstSpan bytes) {
  ByteReader r = open(bytes, StructureTag::abort_notice);
  AbortNotice s;
  s.draw_no = get_u64_field(r, FieldTag::draw_no, "draw_no");
  s.phase = get_u64_field(r, FieldTag::number, "phase");
  s.cause_code = get_u64_field(r, FieldTag::number, "cause");
  s.culprit = get_text_field(r);
  s.sig = get_sig_field(r);
  r.expect_end();
  return s;
}

std::uint64_t draw_no_of(StructureTag tag, ConstSpan bytes) {
  switch (tag) {
    case StructureTag::draw_announce: return decode_draw_announce(bytes).draw_no;
    case StructureTag::counter_signed_announce:
      return decode_counter_signed_announce(bytes).announce.draw_no;
    case StructureTag::announce_aggregate:
      return decode_announce_aggregate(bytes).entries.front().announce.draw_no;
    case StructureTag::initiator_commit: return decode_initiator_commit(bytes).draw_no;
    case StructureTag::counter_signed_commit:
      return decode_counter_signed_commit(bytes).commit.draw_no;
    case StructureTag::commit_aggregate:
      return decode_commit_aggregate(bytes).entries.front().commit.draw_no;
    case StructureTag::guarantor_commit: return decode_guarantor_commit(bytes).draw_no;
    case StructureTag::guarantor_hash_aggregate:
      return decode_guarantor_hash_aggregate(bytes).entries.front().draw_no;
    case StructureTag::countersigned_hash_aggregate:
      return decode_countersigned_hash_aggregate(bytes).inner.entries.front().draw_no;
    case StructureTag::initiator_reveal: return decode_initiator_reveal(bytes).draw_no;
    case StructureTag::guarantor_reveal: return decode_guarantor_reveal(bytes).draw_no;
    case StructureTag::reveal_aggregate:
      return decode_reveal_aggregate(bytes).entries.front().draw_no;
    case StructureTag::abort_notice: return decode_abort_notice(bytes).draw_no;
  }
  throw CodecError(0, "unknown structure tag");
}

}  // namespace fairdraw
