// Writes the bundled synthetic dataset: simulated cascades rendered as short
// posts, mixed with unrelated chatter that keyword filtering should drop.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <json.hpp>

#include "hbtm/io.hpp"
#include "hbtm/simulator.hpp"

namespace fs = std::filesystem;
using namespace hbtm;

namespace {

constexpr std::uint64_t kSeed = 7;
constexpr double kDays = 60.0;
constexpr std::size_t kNodes = 12;

const std::vector<std::string> kTopicWords = {
    "risk",    "test",   "vaccine",  "treatment", "masks",    "hospital", "cases",
    "deaths",  "spread", "lockdown", "schools",   "symptoms", "outbreak", "doctors",
    "testing", "relief", "economy",  "workers",   "distance", "quarantine"};

const std::vector<std::string> kChatterWords = {
    "football", "weather", "concert", "recipe", "garden",  "movie",   "birthday",
    "traffic",  "coffee",  "holiday", "puppy",  "weekend", "podcast", "sunset"};

const std::vector<std::string> kFiller = {"the", "and", "for", "this", "with", "our"};

std::string iso(double days) {
  // Epoch 2020-03-01; day fractions rendered to the second.
  const auto base = std::chrono::sys_days{std::chrono::year{2020} / 3 / 1};
  const auto secs = std::chrono::seconds(static_cast<long long>(std::llround(days * 86400.0)));
  const auto tp = std::chrono::sys_seconds(base) + secs;
  const auto day = std::chrono::floor<std::chrono::days>(tp);
  const std::chrono::year_month_day ymd(day);
  const std::chrono::hh_mm_ss hms(tp - day);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

ModelParams truth() {
  const std::size_t S = kNodes, W = kTopicWords.size();
  ModelParams p;
  p.S = S;
  p.W = W;
  p.background = BackgroundRate::make(S, 0.0, kDays, 1.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t k = 0; k < p.background.num_bins(); ++k)
      p.background.bins[s][k] = s < 2 ? 1.2 : 0.4;
  p.p0.assign(S, 0.15);
  p.theta = SquareMatrix(S, 0.005);
  p.omega = SquareMatrix(S, 1.5);
  p.p_on = SquareMatrix(S, 0.02);
  p.p_off = SquareMatrix(S, 0.15);
  // Two hubs, each feeding five followers that sometimes answer back.
  for (std::size_t hub = 0; hub < 2; ++hub) {
    p.theta(hub, hub) = 0.15;
    for (std::size_t k = 0; k < 5; ++k) {
      const std::size_t f = 2 + 5 * hub + k;
      p.theta(f, hub) = 0.3;
      p.theta(hub, f) = 0.12;
      p.omega(f, hub) = 2.0;
    }
  }
  p.theta(0, 1) = p.theta(1, 0) = 0.1;
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("data/fixture");
  fs::create_directories(dir);
  const auto params = truth();
  std::cerr << "branching ratio " << branching_ratio(params) << "\n";
  const auto sim = simulate(params, kDays, kSeed);

  std::mt19937_64 rng(kSeed + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };

  std::vector<nlohmann::json> rows;
  std::size_t next_id = 0;
  auto post_id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%05zu", next_id++);
    return std::string(buf);
  };
  auto node_attrs = [](std::size_t s) {
    return nlohmann::json{{"party", s == kNodes - 1 ? "I" : (s % 2 ? "R" : "D")}};
  };
  auto node_id = [](std::size_t s) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "acct%02zu", s);
    return std::string(buf);
  };

  for (const auto& e : sim) {
    std::string text = unif(rng) < 0.8 ? "COVID update:" : "The pandemic,";
    for (std::size_t w = 0; w < kTopicWords.size(); ++w)
      if (e.event.mark.test(w)) text += " " + kTopicWords[w];
    text += " " + pick(kFiller);
    if (unif(rng) < 0.3) text += " https://example.org/" + std::to_string(next_id);
    rows.push_back({{"post_id", post_id()}, {"timestamp", iso(e.event.t)},
                    {"node_id", node_id(e.event.node)}, {"text", text},
                    {"attrs", node_attrs(e.event.node)}});
  }
  const std::size_t chatter = sim.size() / 2;
  for (std::size_t c = 0; c < chatter; ++c) {
    const std::size_t s = std::uniform_int_distribution<std::size_t>(0, kNodes - 1)(rng);
    std::string text = "@friend";
    const int n = std::uniform_int_distribution<int>(2, 5)(rng);
    for (int k = 0; k < n; ++k) text += " " + pick(kChatterWords);
    text += " " + pick(kFiller);
    rows.push_back({{"post_id", post_id()}, {"timestamp", iso(kDays * unif(rng))},
                    {"node_id", node_id(s)}, {"text", text}, {"attrs", node_attrs(s)}});
  }
  std::shuffle(rows.begin(), rows.end(), rng);

  std::ofstream posts(dir / "posts.jsonl");
  for (const auto& r : rows) posts << r.dump() << "\n";

  std::ofstream stop(dir / "stopwords.txt");
  for (const auto& w : kFiller) stop << w << "\n";
  stop << "update\n";

  std::ofstream truth_params(dir / "truth_params.json");
  truth_params << io::params_to_json(params);

  std::cerr << sim.size() << " cascade posts, " << chatter << " chatter posts\n";
  return 0;
}
