#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "filtreg/errors.hpp"

namespace filtreg {

// One subject: covariate, delayed-entry time, end of follow-up, event flag.
// The subject is at risk on the half-open interval (entry, exit]; exit is an
// event time when event is true and a censoring time otherwise.
struct EventRecord {
  double x = 0.0;
  double entry = 0.0;
  double exit = 0.0;
  bool event = false;
};

// 1 if the subject is at risk at time y, else 0. The interval is closed at
// exit, so a subject still counts as exposed at its own event time.
inline int exposure_at(const EventRecord& r, double y) {
  return (r.entry < y && y <= r.exit) ? 1 : 0;
}

class Sample {
 public:
  explicit Sample(std::vector<EventRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const EventRecord& r = records_[i];
      if (!std::isfinite(r.x)) throw std::invalid_argument(where(i) + "covariate is not finite");
      if (!std::isfinite(r.entry) || r.entry < 0.0)
        throw std::invalid_argument(where(i) + "entry time must be finite and nonnegative");
      if (!std::isfinite(r.exit)) throw std::invalid_argument(where(i) + "exit time is not finite");
      if (!(r.entry < r.exit))
        throw std::invalid_argument(where(i) + "risk interval (entry, exit] is empty");
    }
    for (const EventRecord& r : records_)
      if (r.event) event_times_.push_back(r.exit);
    std::sort(event_times_.begin(), event_times_.end());
    event_times_.erase(std::unique(event_times_.begin(), event_times_.end()), event_times_.end());
  }

  // Right-censored data: exit = min(y, u), event = (y < u). Pass u = +inf for
  // uncensored subjects.
  static Sample from_right_censored(std::span<const double> xs, std::span<const double> ys,
                                    std::span<const double> us) {
    if (xs.size() != ys.size() || xs.size() != us.size())
      throw std::invalid_argument("from_right_censored: column lengths differ");
    std::vector<EventRecord> recs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const bool event = ys[i] < us[i];
      recs[i] = EventRecord{xs[i], 0.0, event ? ys[i] : us[i], event};
    }
    return Sample(std::move(recs));
  }

  // Left-truncated and right-censored data given directly as risk intervals.
  static Sample from_truncated_censored(std::span<const double> xs, std::span<const double> entries,
                                        std::span<const double> exits,
                                        const std::vector<bool>& events) {
    if (xs.size() != entries.size() || xs.size() != exits.size() || xs.size() != events.size())
      throw std::invalid_argument("from_truncated_censored: column lengths differ");
    std::vector<EventRecord> recs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      recs[i] = EventRecord{xs[i], entries[i], exits[i], events[i]};
    return Sample(std::move(recs));
  }

  // Brace-literal convenience for tiny samples.
  static Sample from_right_censored(std::initializer_list<double> xs,
                                    std::initializer_list<double> ys,
                                    std::initializer_list<double> us) {
    return from_right_censored(std::span<const double>(xs.begin(), xs.size()),
                               std::span<const double>(ys.begin(), ys.size()),
                               std::span<const double>(us.begin(), us.size()));
  }

  const std::vector<EventRecord>& records() const { return records_; }
  // Distinct observed event times, ascending.
  const std::vector<double>& event_times() const { return event_times_; }
  std::size_t size() const { return records_.size(); }

 private:
  static std::string where(std::size_t i) { return "record " + std::to_string(i) + ": "; }

  std::vector<EventRecord> records_;
  std::vector<double> event_times_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ' || field.back() == '\t'))
      field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && (field[start] == ' ' || field[start] == '\t')) ++start;
    out.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_double_field(const std::string& s, std::size_t lineno, const std::string& col) {
  if (s == "inf" || s == "+inf" || s == "Inf") return std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::runtime_error("line " + std::to_string(lineno) + ": cannot parse '" + s +
                             "' as a number in column '" + col + "'");
  return v;
}

inline bool parse_bool_field(const std::string& s, std::size_t lineno) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw std::runtime_error("line " + std::to_string(lineno) + ": cannot parse '" + s +
                           "' as an event flag (expected 0/1/true/false)");
}

}  // namespace detail

// Reads the data CSV format: header with columns x, entry, exit, event (any
// order; entry may be omitted and defaults to 0).
inline Sample read_sample_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("line 1: missing header row");
  const auto header = detail::split_csv_line(line);
  int ix = -1, ientry = -1, iexit = -1, ievent = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& name = header[c];
    int* slot = nullptr;
    if (name == "x") slot = &ix;
    else if (name == "entry") slot = &ientry;
    else if (name == "exit") slot = &iexit;
    else if (name == "event") slot = &ievent;
    else
      throw std::runtime_error("line 1: unknown column '" + name + "'");
    if (*slot != -1) throw std::runtime_error("line 1: duplicate column '" + name + "'");
    *slot = static_cast<int>(c);
  }
  if (ix < 0 || iexit < 0 || ievent < 0)
    throw std::runtime_error("line 1: header must contain columns x, exit and event");

  std::vector<EventRecord> recs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(fields.size()));
    EventRecord r;
    r.x = detail::parse_double_field(fields[static_cast<std::size_t>(ix)], lineno, "x");
    r.entry = ientry >= 0
                  ? detail::parse_double_field(fields[static_cast<std::size_t>(ientry)], lineno, "entry")
                  : 0.0;
    r.exit = detail::parse_double_field(fields[static_cast<std::size_t>(iexit)], lineno, "exit");
    r.event = detail::parse_bool_field(fields[static_cast<std::size_t>(ievent)], lineno);
    recs.push_back(r);
  }
  try {
    return Sample(std::move(recs));
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("invalid data: ") + e.what());
  }
}

inline Sample read_sample_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open input file '" + path + "'");
  return read_sample_csv(in);
}

}  // namespace filtreg
