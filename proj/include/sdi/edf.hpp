#pragma once

// Plain EDF (not EDF+) reader/writer and study-channel selection.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdi/error.hpp"

namespace sdi {

struct DateTime {
  int year = 2000;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  friend bool operator==(const DateTime&, const DateTime&) = default;
};

struct EdfHeader {
  std::string version = "0";
  std::string patient_info;
  std::string recording_info;
  DateTime start_datetime;
  int header_bytes = 0;
  long n_records = 0;
  double record_duration = 1.0;
  int n_signals = 0;
};

struct SignalSpec {
  std::string label;
  double physical_min = -1.0;
  double physical_max = 1.0;
  int digital_min = -32768;
  int digital_max = 32767;
  int samples_per_record = 1;
  std::string transducer;
  std::string physical_dimension;
  std::string prefiltering;

  double gain() const {
    return (physical_max - physical_min) / static_cast<double>(digital_max - digital_min);
  }
  double to_physical(int digital) const {
    return physical_min + static_cast<double>(digital - digital_min) * gain();
  }
  void validate() const {
    if (digital_min >= digital_max) throw FormatError("signal '" + label + "': digital_min >= digital_max");
    if (physical_min == physical_max) throw FormatError("signal '" + label + "': physical_min == physical_max");
    if (samples_per_record <= 0) throw FormatError("signal '" + label + "': samples_per_record <= 0");
    if (digital_min < -32768 || digital_max > 32767)
      throw FormatError("signal '" + label + "': digital range exceeds 16 bits");
  }
};

struct Channel {
  std::string label;
  double sampling_rate = 0.0;  // Hz
  std::vector<double> samples;  // physical units
};

struct Recording {
  std::vector<Channel> channels;
  DateTime start_datetime;
  std::string patient_info;
  std::string recording_info;
};

struct EdfFile {
  EdfHeader header;
  std::vector<SignalSpec> signals;
  Recording recording;
};

namespace edf_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (std::isspace(static_cast<unsigned char>(s[b])) || s[b] == '\0')) ++b;
  while (e > b && (std::isspace(static_cast<unsigned char>(s[e - 1])) || s[e - 1] == '\0')) --e;
  return std::string(s.substr(b, e - b));
}

class FieldReader {
 public:
  explicit FieldReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string text(std::size_t width, std::string_view what) {
    if (pos_ + width > bytes_.size()) throw FormatError("truncated file: header ends inside field '" + std::string(what) + "'");
    std::string out(reinterpret_cast<const char*>(bytes_.data()) + pos_, width);
    pos_ += width;
    return trim(out);
  }

  long integer(std::size_t width, std::string_view what) {
    const std::string s = text(width, what);
    long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
      throw FormatError("non-numeric field '" + std::string(what) + "': \"" + s + "\"");
    return value;
  }

  double real(std::size_t width, std::string_view what) {
    const std::string s = text(width, what);
    if (s.empty()) throw FormatError("non-numeric field '" + std::string(what) + "': empty");
    char* end = nullptr;
    const double value = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(value))
      throw FormatError("non-numeric field '" + std::string(what) + "': \"" + s + "\"");
    return value;
  }

  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline DateTime parse_datetime(const std::string& date, const std::string& time) {
  auto two = [](const std::string& s, std::size_t at, std::string_view what) {
    if (s.size() < at + 2 || !std::isdigit(static_cast<unsigned char>(s[at])) ||
        !std::isdigit(static_cast<unsigned char>(s[at + 1])))
      throw FormatError("non-numeric field '" + std::string(what) + "': \"" + s + "\"");
    return (s[at] - '0') * 10 + (s[at + 1] - '0');
  };
  DateTime dt;
  dt.day = two(date, 0, "start date");
  dt.month = two(date, 3, "start date");
  const int yy = two(date, 6, "start date");
  dt.year = yy >= 85 ? 1900 + yy : 2000 + yy;
  dt.hour = two(time, 0, "start time");
  dt.minute = two(time, 3, "start time");
  dt.second = two(time, 6, "start time");
  return dt;
}

// Shortest representation that fits an 8-character ASCII field.
inline std::string format_number(double v, std::size_t width = 8) {
  char buf[64];
  if (v == std::floor(v) && std::fabs(v) < 1e7) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
    if (std::string(buf).size() <= width) return buf;
  }
  for (int precision = static_cast<int>(width); precision >= 1; --precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    std::string s(buf);
    if (s.size() <= width) return s;
  }
  throw FormatError("value does not fit an EDF header field: " + std::to_string(v));
}

inline void put(std::vector<std::uint8_t>& out, std::string_view s, std::size_t width) {
  if (s.size() > width) s = s.substr(0, width);
  for (char c : s) out.push_back(static_cast<std::uint8_t>(static_cast<unsigned char>(c) < 32 || c > 126 ? ' ' : c));
  for (std::size_t i = s.size(); i < width; ++i) out.push_back(' ');
}

inline std::string two_digits(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v % 100);
  return buf;
}

}  // namespace edf_detail

inline EdfFile read_edf(std::span<const std::uint8_t> bytes) {
  using edf_detail::FieldReader;
  if (bytes.size() < 256) throw FormatError("truncated file: fewer than 256 header bytes");
  FieldReader r(bytes);
  EdfFile f;
  EdfHeader& h = f.header;
  h.version = r.text(8, "version");
  h.patient_info = r.text(80, "patient");
  h.recording_info = r.text(80, "recording");
  const std::string date = r.text(8, "start date");
  const std::string time = r.text(8, "start time");
  h.start_datetime = edf_detail::parse_datetime(date, time);
  h.header_bytes = static_cast<int>(r.integer(8, "header bytes"));
  r.text(44, "reserved");
  h.n_records = r.integer(8, "number of data records");
  h.record_duration = r.real(8, "data record duration");
  h.n_signals = static_cast<int>(r.integer(4, "number of signals"));

  if (h.n_signals <= 0) throw FormatError("number of signals must be positive");
  if (h.header_bytes != 256 * (h.n_signals + 1))
    throw FormatError("header_bytes (" + std::to_string(h.header_bytes) + ") != 256*(n_signals+1)");
  if (h.n_records < 0) throw FormatError("number of data records must be non-negative");
  if (!(h.record_duration > 0)) throw FormatError("data record duration must be positive");
  if (bytes.size() < static_cast<std::size_t>(h.header_bytes))
    throw FormatError("truncated file: signal headers incomplete");

  const auto ns = static_cast<std::size_t>(h.n_signals);
  f.signals.resize(ns);
  for (auto& s : f.signals) s.label = r.text(16, "label");
  for (auto& s : f.signals) s.transducer = r.text(80, "transducer");
  for (auto& s : f.signals) s.physical_dimension = r.text(8, "physical dimension");
  for (auto& s : f.signals) s.physical_min = r.real(8, "physical minimum");
  for (auto& s : f.signals) s.physical_max = r.real(8, "physical maximum");
  for (auto& s : f.signals) s.digital_min = static_cast<int>(r.integer(8, "digital minimum"));
  for (auto& s : f.signals) s.digital_max = static_cast<int>(r.integer(8, "digital maximum"));
  for (auto& s : f.signals) s.prefiltering = r.text(80, "prefiltering");
  for (auto& s : f.signals) s.samples_per_record = static_cast<int>(r.integer(8, "samples per record"));
  for (std::size_t i = 0; i < ns; ++i) r.text(32, "reserved");
  for (const auto& s : f.signals) s.validate();

  std::size_t record_samples = 0;
  for (const auto& s : f.signals) record_samples += static_cast<std::size_t>(s.samples_per_record);
  const std::size_t expected = static_cast<std::size_t>(h.header_bytes) +
                               2 * record_samples * static_cast<std::size_t>(h.n_records);
  if (bytes.size() != expected)
    throw FormatError("data section length mismatch: expected " + std::to_string(expected - h.header_bytes) +
                      " bytes, found " + std::to_string(bytes.size() - h.header_bytes));

  Recording& rec = f.recording;
  rec.start_datetime = h.start_datetime;
  rec.patient_info = h.patient_info;
  rec.recording_info = h.recording_info;
  rec.channels.resize(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    rec.channels[i].label = f.signals[i].label;
    rec.channels[i].sampling_rate = f.signals[i].samples_per_record / h.record_duration;
    rec.channels[i].samples.reserve(static_cast<std::size_t>(f.signals[i].samples_per_record * h.n_records));
  }
  std::size_t pos = static_cast<std::size_t>(h.header_bytes);
  for (long rec_i = 0; rec_i < h.n_records; ++rec_i) {
    for (std::size_t i = 0; i < ns; ++i) {
      const SignalSpec& s = f.signals[i];
      auto& out = rec.channels[i].samples;
      for (int k = 0; k < s.samples_per_record; ++k) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[pos]) |
                                                   (static_cast<std::uint16_t>(bytes[pos + 1]) << 8));
        pos += 2;
        out.push_back(s.to_physical(raw));
      }
    }
  }
  return f;
}

inline Recording parse_edf(std::span<const std::uint8_t> bytes) { return read_edf(bytes).recording; }

// Signal specs that cover each channel's observed range, one-second records.
inline std::vector<SignalSpec> default_signal_specs(const Recording& recording) {
  std::vector<SignalSpec> specs;
  for (const auto& ch : recording.channels) {
    SignalSpec s;
    s.label = ch.label;
    double lo = ch.samples.empty() ? -1.0 : *std::min_element(ch.samples.begin(), ch.samples.end());
    double hi = ch.samples.empty() ? 1.0 : *std::max_element(ch.samples.begin(), ch.samples.end());
    const double pad = std::max(1e-6, 0.01 * (hi - lo));
    s.physical_min = std::stod(edf_detail::format_number(std::floor((lo - pad) * 1000.0) / 1000.0));
    s.physical_max = std::stod(edf_detail::format_number(std::ceil((hi + pad) * 1000.0) / 1000.0));
    s.samples_per_record = static_cast<int>(std::lround(ch.sampling_rate));
    s.physical_dimension = "uV";
    specs.push_back(s);
  }
  return specs;
}

inline std::vector<std::uint8_t> write_edf(const Recording& recording, std::span<const SignalSpec> specs) {
  using edf_detail::format_number;
  using edf_detail::put;
  if (recording.channels.empty()) throw ArgumentError("write_edf: recording has no channels");
  if (specs.size() != recording.channels.size())
    throw ArgumentError("write_edf: one SignalSpec per channel required");
  for (const auto& s : specs) s.validate();

  const double record_duration = specs[0].samples_per_record / recording.channels[0].sampling_rate;
  long n_records = -1;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& ch = recording.channels[i];
    const double d = specs[i].samples_per_record / ch.sampling_rate;
    if (std::fabs(d - record_duration) > 1e-9 * record_duration)
      throw ArgumentError("write_edf: channels imply different record durations");
    if (ch.samples.size() % static_cast<std::size_t>(specs[i].samples_per_record) != 0)
      throw ArgumentError("write_edf: channel '" + ch.label + "' is not a whole number of data records");
    const long n = static_cast<long>(ch.samples.size() / static_cast<std::size_t>(specs[i].samples_per_record));
    if (n_records >= 0 && n != n_records) throw ArgumentError("write_edf: channels span different durations");
    n_records = n;
  }

  const int ns = static_cast<int>(specs.size());
  std::vector<std::uint8_t> out;
  out.reserve(256 * static_cast<std::size_t>(ns + 1));
  const DateTime& dt = recording.start_datetime;
  put(out, "0", 8);
  put(out, recording.patient_info.empty() ? "X X X X" : recording.patient_info, 80);
  put(out, recording.recording_info.empty() ? "Startdate X X X X" : recording.recording_info, 80);
  put(out, edf_detail::two_digits(dt.day) + "." + edf_detail::two_digits(dt.month) + "." + edf_detail::two_digits(dt.year), 8);
  put(out, edf_detail::two_digits(dt.hour) + "." + edf_detail::two_digits(dt.minute) + "." + edf_detail::two_digits(dt.second), 8);
  put(out, std::to_string(256 * (ns + 1)), 8);
  put(out, "", 44);
  put(out, std::to_string(n_records), 8);
  put(out, format_number(record_duration), 8);
  put(out, std::to_string(ns), 4);
  for (const auto& s : specs) put(out, s.label, 16);
  for (const auto& s : specs) put(out, s.transducer, 80);
  for (const auto& s : specs) put(out, s.physical_dimension, 8);
  for (const auto& s : specs) put(out, format_number(s.physical_min), 8);
  for (const auto& s : specs) put(out, format_number(s.physical_max), 8);
  for (const auto& s : specs) put(out, std::to_string(s.digital_min), 8);
  for (const auto& s : specs) put(out, std::to_string(s.digital_max), 8);
  for (const auto& s : specs) put(out, s.prefiltering, 80);
  for (const auto& s : specs) put(out, std::to_string(s.samples_per_record), 8);
  for (int i = 0; i < ns; ++i) put(out, "", 32);

  // Quantize against the header's printed limits so the reader's map matches.
  std::vector<SignalSpec> printed(specs.begin(), specs.end());
  for (auto& s : printed) {
    s.physical_min = std::stod(format_number(s.physical_min));
    s.physical_max = std::stod(format_number(s.physical_max));
  }
  for (long r = 0; r < n_records; ++r) {
    for (int i = 0; i < ns; ++i) {
      const SignalSpec& s = printed[static_cast<std::size_t>(i)];
      const SignalSpec& declared = specs[static_cast<std::size_t>(i)];
      const auto& samples = recording.channels[static_cast<std::size_t>(i)].samples;
      const double lo = std::min(declared.physical_min, declared.physical_max);
      const double hi = std::max(declared.physical_min, declared.physical_max);
      for (int k = 0; k < s.samples_per_record; ++k) {
        const double x = samples[static_cast<std::size_t>(r * s.samples_per_record + k)];
        if (!(x >= lo && x <= hi))
          throw ArgumentError("write_edf: value " + std::to_string(x) + " outside physical range of '" + s.label + "'");
        const double d = std::round((x - s.physical_min) / s.gain()) + s.digital_min;
        const auto digital = static_cast<std::int16_t>(std::clamp(d, double(s.digital_min), double(s.digital_max)));
        const auto u = static_cast<std::uint16_t>(digital);
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return out;
}

// Case-insensitive substring patterns, one per study role.
struct ChannelMap {
  std::string eeg_label = "C4";
  std::string eog_label = "EOG";
  std::string emg_label = "EMG";
  std::string ecg_label = "ECG";
};

inline bool label_matches(std::string_view label, std::string_view pattern) {
  if (pattern.empty()) return false;
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  return lower(label).find(lower(pattern)) != std::string::npos;
}

// Output order is EEG, EOG, EMG, ECG; the first matching label wins.
inline Recording select_channels(const Recording& recording, const ChannelMap& map) {
  const std::array<std::pair<const char*, const std::string*>, 4> roles{{
      {"EEG", &map.eeg_label}, {"EOG", &map.eog_label}, {"EMG", &map.emg_label}, {"ECG", &map.ecg_label}}};
  Recording out;
  out.start_datetime = recording.start_datetime;
  out.patient_info = recording.patient_info;
  out.recording_info = recording.recording_info;
  for (const auto& [role, pattern] : roles) {
    if (pattern->empty()) throw ArgumentError(std::string("channel map pattern for ") + role + " is empty");
    const auto it = std::find_if(recording.channels.begin(), recording.channels.end(),
                                 [&](const Channel& c) { return label_matches(c.label, *pattern); });
    if (it == recording.channels.end())
      throw DataError(std::string("missing channel: no label matches the ") + role + " pattern '" + *pattern + "'");
    out.channels.push_back(*it);
  }
  return out;
}

}  // namespace sdi
