#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adatriplet/batching.hpp"
#include "adatriplet/errors.hpp"
#include "adatriplet/losses.hpp"
#include "adatriplet/metrics.hpp"
#include "adatriplet/trainer.hpp"

namespace adatriplet {

// 17 significant digits: doubles round-trip exactly through this.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("bad numeric field: '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw DataError("bad integer field: '" + s + "'");
  return v;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);  // binary: identical bytes everywhere
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

// --- dataset: subject_id,year,x0,...,x{D-1} -------------------------------

inline void write_dataset_csv(const std::filesystem::path& path,
                              const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw EmptyInputError("write_dataset_csv: no samples");
  std::ofstream out = open_output(path);
  const std::size_t dim = samples.front().input.size();
  out << "subject_id,year";
  for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
  out << "\n";
  for (const LabeledSample& s : samples) {
    out << s.subject_id << "," << s.year;
    for (std::size_t i = 0; i < dim; ++i) out << "," << fmt_g17(s.input[i]);
    out << "\n";
  }
}

inline std::vector<LabeledSample> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset csv is empty: " + path.string());
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "year" || header[2] != "x0")
    throw DataError("dataset csv has unexpected header: " + path.string());
  const std::size_t dim = header.size() - 2;
  std::vector<LabeledSample> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) throw DataError("dataset csv row has wrong field count");
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = parse_double(f[2 + i]);
    samples.push_back({RawVector(std::move(x)), static_cast<int>(parse_long(f[0])),
                       static_cast<int>(parse_long(f[1]))});
  }
  if (samples.empty()) throw DataError("dataset csv has no rows: " + path.string());
  return samples;
}

// --- embeddings: subject_id,year,e0,...,e{D-1} ----------------------------

struct EmbeddingRow {
  int subject_id;
  int year;
  std::vector<double> values;
};

inline void write_embeddings_csv(const std::filesystem::path& path,
                                 const std::vector<LabeledSample>& dataset,
                                 const std::vector<UnitVector>& embeddings) {
  if (dataset.size() != embeddings.size())
    throw ShapeMismatchError("write_embeddings_csv: dataset/embedding count mismatch");
  std::ofstream out = open_output(path);
  const std::size_t dim = embeddings.front().size();
  out << "subject_id,year";
  for (std::size_t i = 0; i < dim; ++i) out << ",e" << i;
  out << "\n";
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out << dataset[r].subject_id << "," << dataset[r].year;
    for (std::size_t i = 0; i < dim; ++i) out << "," << fmt_g17(embeddings[r][i]);
    out << "\n";
  }
}

inline std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("embeddings csv is empty: " + path.string());
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "subject_id" || header[1] != "year" || header[2] != "e0")
    throw DataError("embeddings csv has unexpected header: " + path.string());
  const std::size_t dim = header.size() - 2;
  std::vector<EmbeddingRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) throw DataError("embeddings csv row has wrong field count");
    EmbeddingRow row;
    row.subject_id = static_cast<int>(parse_long(f[0]));
    row.year = static_cast<int>(parse_long(f[1]));
    row.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) row.values[i] = parse_double(f[2 + i]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("embeddings csv has no rows: " + path.string());
  return rows;
}

// --- training history and sidecars ----------------------------------------

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<EpochHistory>& history) {
  std::ofstream out = open_output(path);
  out << "epoch,mean_loss,epsilon,beta\n";
  for (const EpochHistory& h : history)
    out << h.epoch << "," << fmt_g17(h.mean_loss) << "," << fmt_g17(h.epsilon) << ","
        << fmt_g17(h.beta) << "\n";
}

inline void write_histogram_csv(const std::filesystem::path& path,
                                const std::vector<EpochHistory>& history, bool delta) {
  std::ofstream out = open_output(path);
  out << "epoch,bin_left,bin_right,count\n";
  for (const EpochHistory& h : history) {
    const Histogram& hist = delta ? h.delta_hist : h.phi_an_hist;
    for (std::size_t k = 0; k < hist.counts.size(); ++k)
      out << h.epoch << "," << fmt_g17(hist.bin_left(static_cast<int>(k))) << ","
          << fmt_g17(hist.bin_right(static_cast<int>(k))) << "," << hist.counts[k] << "\n";
  }
}

inline void write_margin_trace_csv(const std::filesystem::path& path,
                                   const std::vector<BatchTrace>& trace) {
  std::ofstream out = open_output(path);
  out << "epoch,batch,epsilon,beta,mu_delta,mu_an\n";
  for (const BatchTrace& t : trace)
    out << t.epoch << "," << t.batch << "," << fmt_g17(t.epsilon) << "," << fmt_g17(t.beta)
        << "," << fmt_g17(t.mu_delta) << "," << fmt_g17(t.mu_an) << "\n";
}

// --- loss surface grid -----------------------------------------------------

inline void write_surface_csv(const std::filesystem::path& path,
                              const std::vector<SurfaceCell>& cells) {
  std::ofstream out = open_output(path);
  out << "phi_an,phi_ap,loss,neg_grad_ap,neg_grad_an\n";
  for (const SurfaceCell& c : cells)
    out << fmt_g17(c.phi_an) << "," << fmt_g17(c.phi_ap) << "," << fmt_g17(c.loss) << ","
        << fmt_g17(c.neg_grad_ap) << "," << fmt_g17(c.neg_grad_an) << "\n";
}

// --- retrieval report -------------------------------------------------------

inline std::string year_label(int year) { return year < 0 ? "all" : std::to_string(year); }

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out = open_output(path);
  out << "year,n_queries,map,map_at_r,cmc1\n";
  for (const YearMetrics& m : report.rows)
    out << year_label(m.year) << "," << m.n_queries << "," << fmt_g17(m.map) << ","
        << fmt_g17(m.map_at_r) << "," << fmt_g17(m.cmc1) << "\n";
}

}  // namespace adatriplet
