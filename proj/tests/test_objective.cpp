#include <doctest.h>

#include <cmath>
#include <fstream>

#include "retinn/common.hpp"
#include "retinn/locations.hpp"
#include "retinn/loss.hpp"

using namespace retinn;

TEST_CASE("sample_weights degenerate and hand-computed cases") {
  std::vector<int> intervals{1, 1, 1, 1, 2, 2, 3, 4};
  std::array<int, 4> counts{4, 2, 1, 1};

  SUBCASE("alpha 0 gives uniform weights") {
    auto lambda = sample_weights(intervals, counts, 0.0);
    for (double l : lambda) CHECK(l == doctest::Approx(1.0 / 8).epsilon(1e-15));
  }
  SUBCASE("alpha 1 uses only the interval term") {
    auto lambda = sample_weights(intervals, counts, 1.0);
    CHECK(lambda[0] == doctest::Approx(1.0 / 16));
    CHECK(lambda[4] == doctest::Approx(1.0 / 8));
    CHECK(lambda[6] == doctest::Approx(1.0 / 4));
    CHECK(lambda[7] == doctest::Approx(1.0 / 4));
  }
  SUBCASE("alpha 0.5 hand arithmetic") {
    auto lambda = sample_weights(intervals, counts, 0.5);
    CHECK(lambda[0] == doctest::Approx(0.09375).epsilon(1e-15));
    double sum = 0;
    for (double l : lambda) sum += l;
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
  SUBCASE("empty interval with alpha > 0 is rejected") {
    std::vector<int> iv{1, 1, 2, 3};
    std::array<int, 4> c{2, 1, 1, 0};
    CHECK_THROWS_AS(sample_weights(iv, c, 0.5), ConfigError);
    CHECK_NOTHROW(sample_weights(iv, c, 0.0));
  }
}

TEST_CASE("sample_weights sums to one whenever all intervals are populated") {
  Rng rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    std::array<int, 4> counts;
    int n = 0;
    for (int& c : counts) {
      c = 1 + static_cast<int>(rng.uniform_int(0, 30));
      n += c;
    }
    std::vector<int> intervals;
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < counts[static_cast<std::size_t>(k)]; ++i)
        intervals.push_back(k + 1);
    double alpha = rng.uniform();
    auto lambda = sample_weights(intervals, counts, alpha);
    double sum = 0;
    for (double l : lambda) {
      CHECK(l > 0.0);
      sum += l;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("location_weights basics on the shipped table") {
  LocationTable table = LocationTable::builtin();

  SUBCASE("huge gamma approaches the uniform mask") {
    auto rho = location_weights(table, 1e6);
    for (double r : rho) CHECK(std::abs(r - 1.0 / 52) < 1e-9);
  }
  SUBCASE("weights sum to one and decrease with distance") {
    for (double gamma : {0.5, 5.0, 50.0}) {
      auto rho = location_weights(table, gamma);
      double sum = 0;
      for (double r : rho) sum += r;
      CHECK(std::abs(sum - 1.0) < 1e-12);
      auto d = table.center_distances_units();
      for (int a = 0; a < 52; ++a)
        for (int b = 0; b < 52; ++b)
          if (d[static_cast<std::size_t>(a)] < d[static_cast<std::size_t>(b)] - 1e-12)
            CHECK(rho[static_cast<std::size_t>(a)] > rho[static_cast<std::size_t>(b)]);
    }
  }
  SUBCASE("mirror-symmetric locations share a weight") {
    auto rho = location_weights(table, 5.0);
    auto d = table.center_distances_units();
    for (int a = 0; a < 52; ++a)
      for (int b = 0; b < 52; ++b)
        if (std::abs(d[static_cast<std::size_t>(a)] - d[static_cast<std::size_t>(b)]) < 1e-12)
          CHECK(rho[static_cast<std::size_t>(a)] ==
                doctest::Approx(rho[static_cast<std::size_t>(b)]).epsilon(1e-12));
  }
  SUBCASE("gamma 5 central-to-peripheral ratio") {
    auto rho = location_weights(table, 5.0);
    auto d = table.center_distances_units();
    int central = 0, peripheral = 0;
    for (int j = 0; j < 52; ++j) {
      if (d[static_cast<std::size_t>(j)] < d[static_cast<std::size_t>(central)]) central = j;
      if (d[static_cast<std::size_t>(j)] > d[static_cast<std::size_t>(peripheral)]) peripheral = j;
    }
    double dc = d[static_cast<std::size_t>(central)];
    double dp = d[static_cast<std::size_t>(peripheral)];
    CHECK(dc == doctest::Approx(std::sqrt(0.5)));
    CHECK(dp == doctest::Approx(std::sqrt(20.5)));
    double ratio = rho[static_cast<std::size_t>(central)] / rho[static_cast<std::size_t>(peripheral)];
    CHECK(ratio == doctest::Approx(std::exp((dp * dp - dc * dc) / 50.0)).epsilon(1e-9));
    CHECK(ratio == doctest::Approx(1.4918).epsilon(1e-3));
  }
  SUBCASE("gamma must be positive") {
    CHECK_THROWS_AS(location_weights(table, 0.0), ConfigError);
    CHECK_THROWS_AS(location_weights(table, -1.0), ConfigError);
  }
}

TEST_CASE("vf_loss examples and loop oracle") {
  LocationTable table = LocationTable::builtin();
  auto rho = location_weights(table, 5.0);

  SUBCASE("zero residual") {
    std::vector<double> preds(52, 1.5), targets(52, 1.5), lambda{1.0};
    CHECK(vf_loss(preds, targets, lambda, rho) == 0.0);
  }
  SUBCASE("single residual term") {
    std::vector<double> preds(52, 0.0), targets(52, 0.0), lambda{0.25};
    targets[13] = 3.0;
    CHECK(vf_loss(preds, targets, lambda, rho) ==
          doctest::Approx(0.25 * rho[13] * 9.0).epsilon(1e-15));
  }
  SUBCASE("random case matches a naive double loop") {
    Rng rng(5);
    int n = 17;
    std::vector<double> preds(static_cast<std::size_t>(n) * 52), targets(preds.size());
    for (double& v : preds) v = rng.normal() * 4;
    for (double& v : targets) v = rng.normal() * 4;
    std::vector<int> intervals;
    std::array<int, 4> counts{};
    for (int i = 0; i < n; ++i) {
      int iv = 1 + static_cast<int>(rng.uniform_int(0, 3));
      intervals.push_back(iv);
      ++counts[static_cast<std::size_t>(iv - 1)];
    }
    auto lambda = sample_weights(intervals, counts, 0.3);
    double got = vf_loss(preds, targets, lambda, rho);
    double expect = 0;
    for (int i = 0; i < n; ++i) {
      double inner = 0;
      for (int j = 0; j < 52; ++j) {
        double r = targets[static_cast<std::size_t>(i) * 52 + j] -
                   preds[static_cast<std::size_t>(i) * 52 + j];
        inner += rho[static_cast<std::size_t>(j)] * r * r;
      }
      expect += lambda[static_cast<std::size_t>(i)] * inner;
    }
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("md_loss examples and loop oracle") {
  std::vector<double> lambda{0.5, 0.3, 0.2};
  SUBCASE("zero residual") {
    std::vector<double> z{1, 2, 3};
    CHECK(md_loss(z, z, lambda) == 0.0);
  }
  SUBCASE("single pair") {
    std::vector<double> p{0.0}, t{2.0}, l{0.7};
    CHECK(md_loss(p, t, l) == doctest::Approx(0.7 * 4.0));
  }
  SUBCASE("random vs loop") {
    Rng rng(6);
    std::vector<double> p(3), t(3);
    for (double& v : p) v = rng.normal();
    for (double& v : t) v = rng.normal();
    double expect = 0;
    for (int i = 0; i < 3; ++i)
      expect += lambda[static_cast<std::size_t>(i)] *
                (t[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)]) *
                (t[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)]);
    CHECK(md_loss(p, t, lambda) == doctest::Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("total_loss blends the two terms") {
  CHECK(total_loss(4.0, 2.0, 0.0) == 4.0);
  CHECK(total_loss(4.0, 2.0, 1.0) == 2.0);
  CHECK(total_loss(4.0, 2.0, 0.5) == 3.0);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ConfigError);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.1), ConfigError);
}

TEST_CASE("builtin location table structure") {
  LocationTable table = LocationTable::builtin();
  CHECK(table.size() == 52);
  // superior hemifield occupies canonical indices 0..25
  for (int j = 0; j < 26; ++j)
    CHECK(table.at(j).hemifield == Hemifield::superior);
  for (int j = 26; j < 52; ++j)
    CHECK(table.at(j).hemifield == Hemifield::inferior);
  // the two blind-spot locations are absent
  for (int j = 0; j < 52; ++j) {
    bool is_blind = std::abs(table.at(j).x_deg - 15.0) < 1e-9 &&
                    std::abs(std::abs(table.at(j).y_deg) - 3.0) < 1e-9;
    CHECK(!is_blind);
  }
  // kept counts per pass
  for (Hemifield h : {Hemifield::superior, Hemifield::inferior}) {
    std::array<int, 7> per_pass{};
    for (int idx : table.hemifield_indices(h))
      ++per_pass[static_cast<std::size_t>(table.at(idx).pass - 1)];
    CHECK(per_pass == std::array<int, 7>{5, 4, 4, 4, 4, 4, 1});
  }
}

TEST_CASE("location table JSON round trip and shipped file") {
  LocationTable table = LocationTable::builtin();
  LocationTable again = LocationTable::from_json_text(table.to_json_text());
  CHECK(again.to_json_text() == table.to_json_text());

  std::ifstream shipped(std::string(RETINN_SOURCE_DIR) + "/data/locations.json");
  REQUIRE(shipped.good());
  std::string text((std::istreambuf_iterator<char>(shipped)),
                   std::istreambuf_iterator<char>());
  CHECK(text == table.to_json_text());
}

TEST_CASE("location table validation names the violated constraint") {
  LocationTable table = LocationTable::builtin();
  std::string text = table.to_json_text();
  // break the schedule: duplicate a (pass, slot) pair
  auto pos = text.find("\"pass\": 2");
  REQUIRE(pos != std::string::npos);
  std::string broken = text;
  broken.replace(pos, 9, "\"pass\": 1");
  CHECK_THROWS_AS(LocationTable::from_json_text(broken), ConfigError);
}
