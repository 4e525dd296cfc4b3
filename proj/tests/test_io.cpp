#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "qkpz/io.hpp"

using namespace qkpz;

TEST(Format, RoundTripsDoubles) {
  for (double v : {0.1, 1.0 / 3.0, 2.5e-3, -1e300, 6.02214076e23}) EXPECT_EQ(std::stod(fmt(v)), v);
}

TEST(Hash, Fnv1a64KnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Csv, SnapshotRows) {
  const auto p = QParameters::asep(1, 0.5);
  Configuration c = initial_condition(InitialKind::step, 2, p);
  const std::string rows = snapshot_csv_rows(c, p);
  EXPECT_EQ(snapshot_csv_header(), "time,x,eta,h,Z\n");
  std::size_t lines = 0;
  for (char ch : rows) lines += ch == '\n';
  EXPECT_EQ(lines, 5u);
  EXPECT_NE(rows.find("0,0,0.5,0,1\n"), std::string::npos);
}

TEST(Binary, EncodeDecodeRoundTrip) {
  for (const auto& p : {QParameters::asep(3, 0.8), QParameters::asip(1.5, 0.8)}) {
    RngStream rng(3, 1);
    Configuration c = initial_condition(InitialKind::bernoulli_product, 15, p, &rng,
                                        {}, p.model == Model::asep ? Boundary::closed : Boundary::periodic);
    const std::vector<double> ts{0.0, 1.0, 4.0};
    const Trajectory tr = simulate_until(c, p, 4.0, ts, rng);
    const std::string bytes = encode_frames(tr, 3, 1);
    EXPECT_EQ(bytes.substr(0, 5), "QKPZ1");
    // header 5 + 1 + 8*6 + 4, frames 8*3 + 4*sites
    const std::size_t sites = tr.snapshots[0].occupancy.size();
    EXPECT_EQ(bytes.size(), 58 + 3 * (24 + 4 * sites));
    const auto [h, frames] = decode_frames(bytes);
    EXPECT_EQ(h.model, p.model);
    EXPECT_EQ(h.boundary, tr.snapshots[0].boundary);
    EXPECT_EQ(h.L, 15);
    EXPECT_EQ(h.spin, p.spin);
    EXPECT_EQ(h.q, p.q);
    EXPECT_EQ(h.nu, p.nu);
    EXPECT_EQ(h.seed, 3u);
    EXPECT_EQ(h.stream, 1u);
    ASSERT_EQ(frames.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(frames[i].time, tr.snapshots[i].time);
      EXPECT_EQ(frames[i].flow, tr.snapshots[i].flow);
      EXPECT_EQ(frames[i].jumps, tr.snapshots[i].jumps);
      EXPECT_EQ(frames[i].occupancy, tr.snapshots[i].occupancy);
    }
    EXPECT_THROW(decode_frames(bytes.substr(0, bytes.size() - 1)), std::runtime_error);
    EXPECT_THROW(decode_frames(bytes + "x"), std::runtime_error);
    EXPECT_THROW(decode_frames("QKPZ2"), std::runtime_error);
  }
}

TEST(KeyValue, ParseAndFormat) {
  const KeyValues kv = parse_key_values("# header\n a = 1 \n\nb=x, y # note\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "x, y");
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);
  EXPECT_THROW(parse_key_values("novalue\n"), DomainError);
  EXPECT_THROW(parse_key_values(" = 3\n"), DomainError);
}

TEST(KeyValue, DoubleLists) {
  const std::vector<double> v{0.04, 0.01, 0.0025};
  EXPECT_EQ(parse_double_list(format_double_list(v)), v);
  EXPECT_EQ(parse_double_list(" 1, 2 ,3"), (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(parse_double_list("1,2x"), DomainError);
}

TEST(Manifest, Lines) {
  const std::string m = manifest_text("k = v\n", 7, {{"a.csv", "abc"}});
  EXPECT_EQ(m.rfind("config_hash = " + hex64(fnv1a64("k = v\n")) + "\n", 0), 0u);
  EXPECT_NE(m.find("seed = 7\n"), std::string::npos);
  EXPECT_NE(m.find("git_revision = "), std::string::npos);
  EXPECT_NE(m.find("artifact a.csv = fnv1a64:" + hex64(fnv1a64("abc")) + "\n"), std::string::npos);
}

TEST(Files, WriteRead) {
  const auto dir = std::filesystem::temp_directory_path() / "qkpz_io_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "x.bin").string();
  const std::string data("a\0b\n", 4);
  write_file(path, data);
  EXPECT_EQ(read_file(path), data);
  std::filesystem::remove_all(dir);
  EXPECT_ANY_THROW(read_file(path));
}
