#pragma once

#include <charconv>
#include <cstddef>
#include <ostream>
#include <string>
#include <system_error>

#include "masclucb/simulator.hpp"

namespace masclucb {

inline constexpr const char* kTraceCsvHeader =
    "round,episode,phase,episode_type,action,inst_regret,cum_regret,expected_reward,safety_threshold,est_error";

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) return "nan";
  return std::string(buf, res.ptr);
}

// UCB actions are written as their index into the action set; conservative
// mixtures as mix(x1;x2;...).
inline std::string action_descriptor(const RoundRecord& rec) {
  if (rec.episode_type == EpisodeType::ucb && rec.action_index != kNoActionIndex) {
    return std::to_string(rec.action_index);
  }
  std::string out = "mix(";
  for (Eigen::Index i = 0; i < rec.action.size(); ++i) {
    if (i > 0) out += ';';
    out += format_double(rec.action[i]);
  }
  out += ')';
  return out;
}

inline void write_trace_row(std::ostream& os, const RoundRecord& r) {
  os << r.round_t << ',' << r.episode_s << ',' << to_string(r.phase) << ',' << to_string(r.episode_type) << ','
     << action_descriptor(r) << ',' << format_double(r.inst_regret) << ',' << format_double(r.cum_regret) << ','
     << format_double(r.expected_reward) << ',' << format_double(r.safety_threshold) << ','
     << format_double(r.est_error) << '\n';
}

inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  os << kTraceCsvHeader << '\n';
  for (const auto& r : trace.records) write_trace_row(os, r);
}

}  // namespace masclucb
