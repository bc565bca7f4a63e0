#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fairdraw/register.hpp"
#include "fairdraw/simnet.hpp"

using namespace fairdraw;

namespace {

std::array<std::uint8_t, 32> test_seed(std::uint8_t fill) {
  std::array<std::uint8_t, 32> s{};
  s.fill(fill);
  return s;
}

struct HonestRun {
  sim::SimWorld world;
  sim::RunOutcome outcome;

  explicit HonestRun(std::uint8_t seed_fill, std::uint64_t k = 10, int guarantors = 2)
      : world(
            [&] {
              std::vector<sim::ParticipantSpec> specs;
              specs.push_back({Role::initiator, "alice", {}});
              const char* names[] = {"bob", "carol", "dave", "erin"};
              for (int i = 0; i < guarantors; ++i)
                specs.push_back({Role::guarantor, names[i], {}});
              return specs;
            }(),
            [&] {
              sim::SimSchedule s;
              s.seed = test_seed(seed_fill);
              return s;
            }()),
        outcome(world.run_draw(k)) {}

  const DrawTranscript& transcript() const { return outcome.transcripts.begin()->second; }
};

}  // namespace

TEST_CASE("next draw number starts at one and counts appended draws") {
  DrawRegister reg;
  CHECK(reg.next_draw_number() == 1);
  HonestRun run(70, 4, 1);
  // synthesize successive entries by reusing the run's transcript shape
  DrawTranscript t = run.transcript();
  for (std::uint64_t d = 1; d <= 5; ++d) {
    t.header.draw_no = d;
    reg.append(t);
  }
  CHECK(reg.next_draw_number() == 6);

  // a gap is rejected
  t.header.draw_no = 7;
  CHECK_THROWS_AS((void)reg.append(t), std::invalid_argument);
  // a duplicate is rejected
  t.header.draw_no = 5;
  CHECK_THROWS_AS((void)reg.append(t), std::invalid_argument);
  CHECK(reg.next_draw_number() == 6);
}

TEST_CASE("register entries are monotone and restore rejects gaps") {
  HonestRun run(71, 4, 1);
  DrawRegister reg;
  DrawTranscript t = run.transcript();
  for (std::uint64_t d = 1; d <= 3; ++d) {
    t.header.draw_no = d;
    reg.append(t);
  }
  for (std::size_t i = 0; i < reg.entries().size(); ++i)
    CHECK(reg.entries()[i].draw_no == i + 1);
  auto entries = reg.entries();
  CHECK(DrawRegister::restore(entries).next_draw_number() == 4);
  entries.erase(entries.begin() + 1);
  CHECK_THROWS_AS((void)DrawRegister::restore(entries), std::invalid_argument);
}

TEST_CASE("transcript files round-trip byte-exactly") {
  HonestRun run(72);
  const DrawTranscript& t = run.transcript();
  Bytes file = t.to_file_bytes();
  CHECK(file.size() > 8);
  CHECK(file[0] == 'F');
  CHECK(file[1] == 'D');
  CHECK(file[2] == 'R');
  CHECK(file[3] == 'W');
  CHECK(file[4] == 1);  // version
  DrawTranscript back = DrawTranscript::from_file_bytes(as_span(file));
  CHECK(back == t);
  CHECK(back.to_file_bytes() == file);
}

TEST_CASE("an honest run verifies and the recomputed result matches") {
  HonestRun run(73);
  REQUIRE(run.outcome.completed);
  VerifyOutcome v = verify_transcript(run.transcript(), run.world.roster());
  REQUIRE(v.kind == VerifyOutcome::Kind::valid);
  CHECK(*v.result == *run.outcome.result);
}

TEST_CASE("verification fails against the wrong roster") {
  HonestRun run(74);
  Roster other = run.world.roster();
  other.participants[1].pub.bytes[0] ^= 0xff;
  VerifyOutcome v = verify_transcript(run.transcript(), other);
  REQUIRE(v.kind == VerifyOutcome::Kind::invalid);
  CHECK(v.failure->cause == FaultCause::roster_mismatch);
}

TEST_CASE("sampled byte flips are all detected") {
  HonestRun run(75);
  Bytes file = run.transcript().to_file_bytes();
  // the full per-byte loop runs in the acceptance suite; sample here
  for (std::size_t i = 0; i < file.size(); i += 97) {
    Bytes mutated = file;
    mutated[i] ^= 0xff;
    VerifyOutcome v = verify_transcript(as_span(mutated), run.world.roster());
    INFO("flipped byte ", i);
    CHECK(v.kind == VerifyOutcome::Kind::invalid);
  }
}

TEST_CASE("reveal salt replaced by an outsider fails at step 13") {
  HonestRun run(76);
  DrawTranscript t = run.transcript();
  const std::size_t n = run.world.roster().guarantor_count();
  const std::size_t pos = transcript_position(13, 0, n);
  GuarantorReveal r = decode_guarantor_reveal(as_span(t.structures[pos]));
  r.salt.bytes[5] ^= 0x01;  // signature unchanged: it no longer covers these bytes
  t.structures[pos] = encode(r);
  VerifyOutcome v = verify_transcript(t, run.world.roster());
  REQUIRE(v.kind == VerifyOutcome::Kind::invalid);
  CHECK(v.failure->step == 13);
  CHECK(v.failure->cause == FaultCause::bad_signature);
}

TEST_CASE("reveal salt swapped before signing is bad-hash at step 13 naming the guarantor") {
  // A guarantor key holder who reveals a different salt than committed: the
  // signature is genuine, only the commitment check can catch it.
  std::vector<sim::ParticipantSpec> specs{{Role::initiator, "alice", {}},
                                          {Role::guarantor, "bob", {}},
                                          {Role::guarantor, "carol", {}}};
  sim::SimSchedule sched;
  sched.seed = test_seed(77);
  specs[1].strategy.kind = sim::Strategy::Kind::renege;
  sim::SimWorld world(specs, sched);
  sim::RunOutcome out = world.run_draw(6);
  REQUIRE_FALSE(out.completed);
  REQUIRE(out.first_abort.has_value());
  CHECK(out.first_abort->cause == FaultCause::bad_hash);
  CHECK(out.first_abort->culprit == "bob");
  CHECK(out.first_abort->phase == 13);
}

TEST_CASE("truncated files are invalid with a decode error") {
  HonestRun run(78);
  Bytes file = run.transcript().to_file_bytes();
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, file.size() / 2, file.size() - 1}) {
    VerifyOutcome v = verify_transcript(ConstSpan(file.data(), len), run.world.roster());
    REQUIRE(v.kind == VerifyOutcome::Kind::invalid);
    CHECK(v.failure->cause == FaultCause::decode_error);
  }
}

TEST_CASE("register store persists and reloads") {
  namespace fs = std::filesystem;
  const std::string dir = "test_register_store";
  fs::remove_all(dir);
  HonestRun run(79, 7, 1);
  {
    RegisterStore store(dir);
    std::string name = store.append(run.transcript());
    CHECK(fs::exists(fs::path(dir) / name));
    CHECK(fs::exists(fs::path(dir) / RegisterStore::kIndexName));
    CHECK(store.reg().next_draw_number() == 2);
  }
  RegisterStore reloaded(dir);
  CHECK(reloaded.reg().next_draw_number() == 2);
  REQUIRE(reloaded.reg().entries().size() == 1);
  const RegisterEntry& e = reloaded.reg().entries()[0];
  CHECK(e.k == 7);
  CHECK(e.outcome.completed());
  Bytes file = reloaded.read_transcript(e);
  CHECK(sha3_256(as_span(file)) == e.transcript_hash);
  CHECK(DrawTranscript::from_file_bytes(as_span(file)) == run.transcript());
}

TEST_CASE("honest registers agree entry for entry over 100 draws") {
  std::vector<sim::ParticipantSpec> specs{{Role::initiator, "alice", {}},
                                          {Role::guarantor, "bob", {}}};
  sim::SimSchedule sched;
  sched.seed = test_seed(80);
  sim::SimWorld world(specs, sched, sim::RunOptions{false, false});
  for (int d = 0; d < 100; ++d) {
    sim::RunOutcome out = world.run_draw(5);
    REQUIRE(out.completed);
  }
  const auto& a = world.register_of("alice").entries();
  const auto& b = world.register_of("bob").entries();
  REQUIRE(a.size() == 100);
  REQUIRE(b.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(a[i].draw_no == b[i].draw_no);
    CHECK(a[i].outcome == b[i].outcome);
    CHECK(a[i].transcript_hash == b[i].transcript_hash);
  }
}

TEST_CASE("abort evidence transcripts are stored and readable") {
  std::vector<sim::ParticipantSpec> specs{{Role::initiator, "alice", {}},
                                          {Role::guarantor, "bob", {}}};
  specs[1].strategy.kind = sim::Strategy::Kind::staller;
  specs[1].strategy.stop_at_step = 9;
  sim::SimSchedule sched;
  sched.seed = test_seed(81);
  sim::SimWorld world(specs, sched);
  sim::RunOutcome out = world.run_draw(5);
  REQUIRE_FALSE(out.completed);
  const auto& entries = world.register_of("alice").entries();
  REQUIRE(entries.size() == 1);
  CHECK_FALSE(entries[0].outcome.completed());
  CHECK(entries[0].outcome.abort->cause == FaultCause::missing_peer);

  // the evidence parses and is internally consistent
  const DrawTranscript& evidence = out.transcripts.at("alice");
  VerifyOutcome v = verify_transcript(evidence, world.roster());
  CHECK(v.kind == VerifyOutcome::Kind::aborted_evidence);

  // tampered evidence no longer verifies
  DrawTranscript bad = evidence;
  REQUIRE_FALSE(bad.structures.empty());
  bad.structures[0][10] ^= 0xff;
  CHECK(verify_transcript(bad, world.roster()).kind == VerifyOutcome::Kind::invalid);
}

TEST_CASE("evidence from a guarantor that never learned k still round-trips") {
  // a stale announce is rejected before k is accepted; the evidence header
  // carries k = 0 (unknown)
  std::vector<sim::ParticipantSpec> specs{{Role::initiator, "alice", {}},
                                          {Role::guarantor, "bob", {}}};
  specs[0].strategy.kind = sim::Strategy::Kind::replayer;
  sim::SimSchedule sched;
  sched.seed = test_seed(82);
  sim::SimWorld world(specs, sched);
  REQUIRE(world.run_draw(5).completed);
  sim::RunOutcome out = world.run_draw(5);
  REQUIRE_FALSE(out.completed);
  const DrawTranscript& evidence = out.transcripts.at("bob");
  CHECK(evidence.header.k == 0);
  DrawTranscript back = DrawTranscript::from_file_bytes(as_span(evidence.to_file_bytes()));
  CHECK(back == evidence);
  CHECK(verify_transcript(back, world.roster()).kind == VerifyOutcome::Kind::aborted_evidence);
}
