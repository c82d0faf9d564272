#include "emoedit/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "emoedit/error.hpp"

namespace emoedit {
namespace {

EmotionVector make_vector(Eigen::VectorXd v) {
  const bool multi = (v.array() != 0.0).count() > 1;
  return EmotionVector(std::move(v), multi ? EmotionMode::multi_label : EmotionMode::strict);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<Keyframe> read_rows(const std::filesystem::path& path, int n_emotions) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  if (static_cast<int>(split_csv_line(line).size()) != n_emotions + 1)
    throw DataError(path.string() + ": expected frame + " + std::to_string(n_emotions) + " columns");
  std::vector<Keyframe> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n_emotions + 1)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    Eigen::VectorXd v(n_emotions);
    int frame = 0;
    try {
      frame = std::stoi(cells[0]);
      for (int k = 0; k < n_emotions; ++k) v[k] = std::stod(cells[static_cast<std::size_t>(k + 1)]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
    try {
      rows.emplace_back(frame, make_vector(std::move(v)));
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

EmotionTrack interpolate_emotions(const std::vector<Keyframe>& keyframes, int frame_count) {
  if (frame_count < 0) throw ConfigError("interpolate_emotions: negative frame count");
  if (keyframes.empty()) throw DataError("interpolate_emotions: no keyframes");
  const int n_e = keyframes.front().second.size();
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const int f = keyframes[k].first;
    if (f < 0 || f >= frame_count)
      throw DataError("interpolate_emotions: keyframe " + std::to_string(f) + " outside [0, " +
                      std::to_string(frame_count) + ")");
    if (k > 0 && f <= keyframes[k - 1].first)
      throw DataError("interpolate_emotions: keyframe indices must be strictly increasing (frame " +
                      std::to_string(f) + ")");
    if (keyframes[k].second.size() != n_e) throw DimensionError("interpolate_emotions: emotion sizes differ");
  }
  EmotionTrack track;
  track.provenance = EmotionTrack::Provenance::keyframes;
  std::size_t seg = 0;
  for (int t = 0; t < frame_count; ++t) {
    if (t <= keyframes.front().first) {
      track.frames.push_back(keyframes.front().second);
      continue;
    }
    if (t >= keyframes.back().first) {
      track.frames.push_back(keyframes.back().second);
      continue;
    }
    while (keyframes[seg + 1].first < t) ++seg;
    const auto& [f0, e0] = keyframes[seg];
    const auto& [f1, e1] = keyframes[seg + 1];
    const double s = static_cast<double>(t - f0) / static_cast<double>(f1 - f0);
    track.frames.push_back(make_vector((1.0 - s) * e0.values() + s * e1.values()));
  }
  return track;
}

std::vector<Eigen::VectorXd> smooth_series(const std::vector<Eigen::VectorXd>& series,
                                           const SmoothingOptions& opts) {
  const auto& w = opts.weights;
  if (w.empty()) throw ConfigError("smooth_series: empty window");
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("smooth_series: window weights sum to " + std::to_string(sum) + ", not 1");
  const int k = static_cast<int>(w.size());
  if (!opts.causal && k % 2 == 0) throw ConfigError("smooth_series: centred window needs odd length");
  if (series.empty()) throw DataError("smooth_series: empty series");
  for (const auto& v : series)
    if (v.size() != series.front().size()) throw DimensionError("smooth_series: vectors differ in size");

  const int n = static_cast<int>(series.size());
  const int shift = opts.causal ? k - 1 : (k - 1) / 2;
  std::vector<Eigen::VectorXd> out;
  out.reserve(series.size());
  for (int t = 0; t < n; ++t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(series.front().size());
    for (int j = 0; j < k; ++j) {
      const int src = std::clamp(t + j - shift, 0, n - 1);
      acc += w[static_cast<std::size_t>(j)] * series[static_cast<std::size_t>(src)];
    }
    out.push_back(std::move(acc));
  }
  return out;
}

double total_variation(const std::vector<Eigen::VectorXd>& series) {
  double tv = 0.0;
  for (std::size_t t = 0; t + 1 < series.size(); ++t) tv += (series[t + 1] - series[t]).norm();
  return tv;
}

void write_track_csv(const EmotionTrack& track, const std::filesystem::path& path,
                     const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const int n_e = track.frames.empty() ? static_cast<int>(names.size()) : track.frames.front().size();
  out << "frame";
  for (int k = 0; k < n_e; ++k)
    out << ',' << (k < static_cast<int>(names.size()) ? names[static_cast<std::size_t>(k)] : "e" + std::to_string(k));
  out << '\n';
  out.precision(17);
  for (int t = 0; t < track.length(); ++t) {
    out << t;
    for (int k = 0; k < n_e; ++k) out << ',' << track.frames[static_cast<std::size_t>(t)][k];
    out << '\n';
  }
}

EmotionTrack read_track_csv(const std::filesystem::path& path, int n_emotions) {
  EmotionTrack track;
  for (auto& [frame, e] : read_rows(path, n_emotions)) {
    if (frame != track.length())
      throw DataError(path.string() + ": dense track expects frame " + std::to_string(track.length()) +
                      ", found " + std::to_string(frame));
    track.frames.push_back(std::move(e));
  }
  return track;
}

std::vector<Keyframe> read_keyframes_csv(const std::filesystem::path& path, int n_emotions) {
  return read_rows(path, n_emotions);
}

}  // namespace emoedit
