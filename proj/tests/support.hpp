#pragma once

// Helpers shared by the test binaries: scenario files and a seeded builder
// for small random scenarios.

#include <filesystem>
#include <random>
#include <sstream>
#include <string>

#include "sre/scenario.hpp"

namespace sre::testing {

inline std::filesystem::path scenario_dir() { return SRE_SCENARIO_DIR; }

inline Scenario load(const std::string& name) { return load_scenario(scenario_dir() / name); }

inline Scenario from_json(const std::string& json) { return parse_scenario_json(json, scenario_dir()); }

/// `n`-kernel chain on stage 0, each kernel rt=[lo,hi], 1 cu / 3 mu.
inline std::string chain_text(int n, Cycles lo, Cycles hi, Cycles timeout = 100000, int container = 1) {
  std::ostringstream os;
  os << "dff chain" << n << " container=" << container << " timeout=" << timeout << "\n";
  os << "input 0 bytes=64\noutput 0 bytes=64\n";
  for (int t = 1; t <= n; ++t) {
    os << t << " K" << t << " 0 rt=[" << lo << ',' << hi << "] cu=1 mu=3 in=" << (t - 1) << ".0:64 out="
       << (t == n ? 0 : t + 1) << ".0:64\n";
  }
  return os.str();
}

/// Small random scenario: up to 3 sources, up to 3 kernels per DFF,
/// runtime ranges at most 8cc wide, every emission before ~2000cc.
inline Scenario random_small(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int stages = pick(1, 2);
  const int ndff = pick(1, 2);
  std::ostringstream js;
  js << "{\"name\":\"rand\",\"dffs\":[";
  for (int d = 0; d < ndff; ++d) {
    const int n = pick(1, 3);
    std::ostringstream g;
    g << "dff r" << d << " container=" << d + 1 << " timeout=" << pick(20, 160) << "\n";
    g << "input 0 bytes=16\noutput 0 bytes=16\n";
    // random DAG over tags 1..n: kernel t reads from one earlier kernel (or the input)
    // and optionally a second one; the last kernel writes the output
    std::vector<std::vector<std::pair<int, int>>> outs(static_cast<std::size_t>(n + 1));
    std::vector<std::vector<std::string>> ins(static_cast<std::size_t>(n + 1));
    for (int t = 1; t <= n; ++t) {
      const int p = pick(0, t - 1);
      auto add_in = [&](int prod) {
        const int port = static_cast<int>(ins[static_cast<std::size_t>(t)].size());
        if (prod == 0) {
          ins[static_cast<std::size_t>(t)].push_back("0.0:16");
        } else {
          const int oport = static_cast<int>(outs[static_cast<std::size_t>(prod)].size());
          outs[static_cast<std::size_t>(prod)].push_back({t, port});
          ins[static_cast<std::size_t>(t)].push_back(std::to_string(prod) + "." + std::to_string(oport) + ":16");
        }
      };
      add_in(p);
      if (t >= 3 && pick(0, 1)) {
        const int q = pick(1, t - 1);
        if (q != p) add_in(q);
      }
    }
    for (int t = 1; t <= n; ++t) {
      const Cycles lo = pick(2, 20);
      const Cycles hi = lo + pick(0, 8);
      g << t << " K" << t << " " << pick(0, stages - 1) << " rt=[" << lo << ',' << hi << "] cu=" << pick(1, 2)
        << " mu=" << pick(1, 3) << " in=";
      for (std::size_t i = 0; i < ins[static_cast<std::size_t>(t)].size(); ++i)
        g << (i ? "," : "") << ins[static_cast<std::size_t>(t)][i];
      g << " out=";
      auto& o = outs[static_cast<std::size_t>(t)];
      if (t == n) o.push_back({0, 0});
      if (o.empty()) {
        g << "-";
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) g << (i ? "," : "") << o[i].first << '.' << o[i].second << ":16";
      }
      if (pick(0, 2) == 0) g << " deadline=" << pick(10, 80);
      g << "\n";
    }
    std::string text = g.str();
    std::string escaped;
    for (char c : text) escaped += c == '\n' ? std::string("\\n") : std::string(1, c);
    js << (d ? "," : "") << "{\"name\":\"r" << d << "\",\"text\":\"" << escaped << "\"}";
  }
  js << "],\"sources\":[";
  const int nsrc = pick(1, 3);
  for (int s = 0; s < nsrc; ++s) {
    js << (s ? "," : "") << "{\"dff\":\"r" << pick(0, ndff - 1) << "\",\"period\":" << pick(40, 300)
       << ",\"phase\":" << pick(0, 60) << ",\"jitter\":" << pick(0, 4) << ",\"count\":" << pick(1, 2) << "}";
  }
  js << "],\"machine\":{\"director_cost\":" << pick(1, 15) << ",\"scheduler_cost\":" << pick(1, 12)
     << ",\"director_queue\":" << pick(1, 3) << ",\"max_parallel\":" << pick(1, 3)
     << ",\"policy\":\"" << (pick(0, 1) ? "edf" : "fcfs") << "\",\"scheduler_overlap\":"
     << (pick(0, 3) ? "true" : "false") << ",\"dma_latency\":" << (pick(0, 3) ? 0 : pick(1, 3))
     << ",\"memory_hold\":\"" << (pick(0, 3) ? "running" : "consumed") << "\",\"stages\":[";
  for (int st = 0; st < stages; ++st)
    js << (st ? "," : "") << "{\"compute\":" << pick(2, 4) << ",\"memory\":" << pick(3, 8)
       << ",\"ready_queue\":" << pick(1, 4) << "}";
  js << "]}}";
  return from_json(js.str());
}

}  // namespace sre::testing
