#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "epiforge/dataset.hpp"

using namespace epiforge;

namespace {

// Daily observed CSV for the regional grid over [first, last] with random counts.
std::string random_observed_csv(int first, int last, std::uint64_t seed, long long pop = 10027602) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long long> count(0, 200000);
  const auto grid = AgeGrid::regional();
  std::ostringstream os;
  os << "date,age_class,infected,recovered,population\n";
  for (int d = first; d <= last; ++d)
    for (std::size_t a = 0; a < grid.size(); ++a)
      os << iso_date(d) << ',' << grid[a].label << ',' << count(rng) << ',' << count(rng) << ',' << pop << '\n';
  return os.str();
}

EpiDataset ingest_string(const std::string& s) {
  std::istringstream in(s);
  return ingest(in);
}

std::string error_of(const std::string& csv) {
  try {
    ingest_string(csv);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

const std::string kHeader = "date,age_class,infected,recovered,population\n";

}  // namespace

TEST(Calendar, DayIndexAndBack) {
  EXPECT_EQ(day_index("2020-10-08"), 2);
  EXPECT_EQ(day_index("2020-10-21"), 15);
  EXPECT_EQ(day_index("2021-01-08"), 94);
  EXPECT_EQ(day_index("2021-01-18"), 104);
  EXPECT_EQ(day_index("2020-11-19"), 44);
  EXPECT_EQ(day_index("2021-01-03"), 89);
  for (int d = -10; d < 400; ++d) EXPECT_EQ(day_index(iso_date(d)), d);
  EXPECT_THROW(day_index("2020-13-01"), DataError);
  EXPECT_THROW(day_index("2020-10-6"), DataError);
  EXPECT_THROW(day_index("yesterday"), DataError);
}

TEST(Ingest, DividesByPopulation) {
  const auto d = ingest_string(kHeader + "2020-10-21,all,2916,14580,10027602\n");
  ASSERT_EQ(d.records.size(), 1u);
  EXPECT_EQ(d.ages.size(), 1u);
  const auto& r = d.records[0];
  EXPECT_EQ(r.t, 15.0);
  EXPECT_NEAR(r.I, 2.908e-4, 5e-8);
  EXPECT_NEAR(r.R, 1.454e-3, 5e-7);
  EXPECT_EQ(r.I, 2916.0 / 10027602.0);
  EXPECT_FALSE(r.node.has_value());
  EXPECT_EQ(d.kind, DataKind::observed);
  EXPECT_EQ(d.resolution, 1.0);
}

TEST(Ingest, RegionalLabelSelectsAgedGrid) {
  const auto d = ingest_string(random_observed_csv(15, 15, 1));
  EXPECT_EQ(d.ages.size(), 6u);
  EXPECT_EQ(d.records.size(), 6u);
  EXPECT_EQ(d.ages[d.records[0].age].label, "0-18");
}

TEST(Ingest, Errors) {
  EXPECT_EQ(error_of(""), "no records");
  EXPECT_EQ(error_of(kHeader), "no records");
  EXPECT_NE(error_of("a,b,c\n2020-10-21,all,1,1,10\n").find("header"), std::string::npos);

  const auto dup = error_of(kHeader + "2020-10-21,all,1,1,10\n2020-10-21,all,2,1,10\n");
  EXPECT_NE(dup.find("line 3"), std::string::npos) << dup;
  EXPECT_NE(dup.find("duplicate"), std::string::npos) << dup;

  EXPECT_NE(error_of(kHeader + "2020-10-21,0-5,1,1,10\n").find("unknown age class"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "2020-10-21,all,-1,1,10\n").find("negative"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "2020-10-21,all,1.5,1,10\n").find("integer"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "2020-10-21,all,1,1,0\n").find("zero population"), std::string::npos);
  EXPECT_NE(error_of(kHeader + "2020-10-21,all,1,1,10\n2020-10-22,all,1,1,12\n2020-10-23,all,1,1,11\n")
                .find("monotone"),
            std::string::npos);
  EXPECT_NE(error_of(kHeader + "2020-10-21,all,1,1,10\n2020-10-23,all,1,1,10\n").find("missing"), std::string::npos);
}

TEST(Ingest, SortsRows) {
  const auto d = ingest_string(kHeader + "2020-10-22,all,2,1,10\n2020-10-21,all,1,1,10\n");
  EXPECT_EQ(d.records[0].t, 15.0);
  EXPECT_EQ(d.records[1].t, 16.0);
}

TEST(Ingest, MissingFileNamesPath) {
  try {
    ingest(std::string("/nonexistent/where.csv"));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/where.csv"), std::string::npos);
  }
}

// ingest(write(ingest(csv))) reproduces every field bit for bit.
TEST(Ingest, PropertyRoundTrip) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = ingest_string(random_observed_csv(2, 30, seed, 1000003 + 17 * static_cast<long long>(seed)));
    std::ostringstream os;
    write_observed_csv(os, d);
    const auto back = ingest_string(os.str());
    EXPECT_EQ(back.records, d.records);
  }
}

TEST(SyntheticCsv, RoundTripBitExact) {
  EpiDataset d;
  d.ages = AgeGrid::regional();
  d.kind = DataKind::synthetic;
  d.resolution = 0.2;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for (int i = 0; i < 5; ++i)
    for (std::size_t a = 0; a < 6; ++a)
      for (std::size_t m = 0; m < 3; ++m) d.records.push_back({15.0 + 0.2 * i, a, m, u(rng), u(rng), u(rng), u(rng), {}});
  std::ostringstream os;
  write_synthetic_csv(os, d);
  std::istringstream in(os.str());
  const auto back = read_synthetic_csv(in, d.ages, 0.2);
  EXPECT_EQ(back.records, d.records);
  EXPECT_EQ(back.n_nodes(), 3u);
}

TEST(Split, ShortTermCounts) {
  const auto d = ingest_string(random_observed_csv(15, 104, 5));
  const auto [train, test] = split(d, SplitMode::short_term);
  EXPECT_EQ(train.times().size(), 80u);
  EXPECT_EQ(test.times().size(), 10u);
  EXPECT_EQ(train.records.size(), 80u * 6);
  EXPECT_EQ(test.records.size(), 10u * 6);
  EXPECT_EQ(test.times().front(), 95.0);
  EXPECT_EQ(train.split, SplitRole::train);
  EXPECT_EQ(test.split, SplitRole::test);
}

TEST(Split, LongTermCounts) {
  const auto d = ingest_string(random_observed_csv(2, 105, 6));
  const auto [train, test] = split(d, SplitMode::long_term);
  EXPECT_EQ(train.times().size(), 30u);
  EXPECT_EQ(test.times().size(), 45u);
  EXPECT_EQ(train.times().front(), 15.0);
  EXPECT_EQ(test.times().back(), 89.0);
}

TEST(Split, CoverageError) {
  const auto d = ingest_string(random_observed_csv(15, 86, 7));  // stops before January
  EXPECT_THROW(split(d, SplitMode::short_term), DataError);
  EXPECT_THROW(split(d, SplitMode::long_term), DataError);
}

// Disjoint pieces whose union is the original window.
TEST(Split, PropertyDisjointCover) {
  const auto d = ingest_string(random_observed_csv(2, 110, 8));
  for (auto mode : {SplitMode::short_term, SplitMode::long_term}) {
    const auto w = split_window(mode);
    const auto [train, test] = split(d, mode);
    const auto window = restrict_time(d, w.train_begin, w.test_end);
    std::vector<EpiRecord> joined = train.records;
    joined.insert(joined.end(), test.records.begin(), test.records.end());
    sort_records(joined);
    EXPECT_EQ(joined, window.records);
    EXPECT_LT(train.times().back(), test.times().front());
  }
}

TEST(Split, Manifest) {
  const auto j = split_manifest(SplitMode::short_term);
  EXPECT_EQ(j["train"]["from"], "2020-10-21");
  EXPECT_EQ(j["train"]["to"], "2021-01-08");
  EXPECT_EQ(j["test"]["from"], "2021-01-09");
  EXPECT_EQ(j["test"]["to"], "2021-01-18");
  const auto l = split_manifest(SplitMode::long_term);
  EXPECT_EQ(l["train"]["to"], "2020-11-19");
  EXPECT_EQ(l["test"]["from"], "2020-11-20");
  EXPECT_EQ(l["test"]["to"], "2021-01-03");
}

TEST(AggregateAges, SumsClasses) {
  const auto d = ingest_string(random_observed_csv(15, 17, 9));
  const auto agg = aggregate_ages(d);
  EXPECT_EQ(agg.ages.size(), 1u);
  ASSERT_EQ(agg.records.size(), 3u);
  double sum = 0.0;
  for (const auto& r : d.records)
    if (r.t == 16.0) sum += r.I;
  EXPECT_NEAR(agg.records[1].I, sum, 1e-15);
}

TEST(ChannelTable, DenseLayout) {
  EpiDataset d;
  d.ages = AgeGrid::single();
  d.kind = DataKind::synthetic;
  for (int i = 0; i < 3; ++i)
    for (std::size_t m = 0; m < 2; ++m) d.records.push_back({double(i), 0, m, 0.1 * i + m, 0.0, 0.5, 0.0, {}});
  const auto tab = channel_table(d, kI);
  EXPECT_EQ(tab.n_nodes, 2u);
  EXPECT_EQ(tab.times.size(), 3u);
  EXPECT_DOUBLE_EQ(tab(2, 0, 1), 1.2);
  EXPECT_EQ(channel_table(d, kS)(0, 0, 0), 0.5);
  d.records.pop_back();
  EXPECT_THROW(channel_table(d, kI), DataError);
  const auto obs = ingest_string(kHeader + "2020-10-21,all,1,1,10\n");
  EXPECT_THROW(channel_table(obs, kS), DataError);
}
