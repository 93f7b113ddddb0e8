// Copyright 2026 The fedkws Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedkws/io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fedkws/error.hpp"

namespace fedkws {

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'K', 'W', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void save_checkpoint(const std::filesystem::path& path, std::uint64_t arch_hash,
                     std::uint64_t round, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(cat("cannot write checkpoint ", path.string()));
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  write_u64(out, arch_hash);
  write_u64(out, params.size());
  write_u64(out, round);
  out.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw std::runtime_error(cat("short write on checkpoint ", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(cat("cannot open checkpoint ", path.string()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error(cat(path.string(), " is not a checkpoint file"));
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion) {
    throw std::runtime_error(cat("unsupported checkpoint version ", version));
  }
  Checkpoint ckpt;
  ckpt.arch_hash = read_u64(in);
  const std::uint64_t count = read_u64(in);
  ckpt.round = read_u64(in);
  ckpt.params.values.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.params.values.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error(cat("checkpoint ", path.string(), " is truncated"));
  return ckpt;
}

void write_fed_history_csv(const std::filesystem::path& path,
                           std::span<const RoundReport> rounds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("cannot write ", path.string()));
  out << "round,client_lr,server_lr,mean_local_loss,eval_loss,cohort_size,skipped\n";
  for (const auto& r : rounds) {
    out << r.round << ',' << format_double(r.client_lr) << ',' << format_double(r.server_lr)
        << ',' << format_double(r.mean_local_loss) << ',' << format_double(r.eval_loss) << ','
        << r.cohort_size << ',' << (r.skipped ? 1 : 0) << '\n';
  }
}

void write_central_history_csv(const std::filesystem::path& path,
                               std::span<const CentralStepRecord> steps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("cannot write ", path.string()));
  out << "step,lr,loss\n";
  for (const auto& s : steps) {
    out << s.step << ',' << format_double(s.lr) << ',' << format_double(s.loss) << '\n';
  }
}

void write_eval_curve_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("cannot write ", path.string()));
  out << "threshold,fa_per_hour,frr\n";
  for (const auto& op : report.curve) {
    out << format_double(op.threshold) << ',' << format_double(op.fa_per_hour) << ','
        << format_double(op.frr) << '\n';
  }
}

void write_eval_summary_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(cat("cannot write ", path.string()));
  out << "slice,auc,extrapolated,supported\n";
  out << "all," << format_double(report.auc) << ',' << (report.extrapolated ? 1 : 0) << ",1\n";
  for (const auto& slice : report.slices) {
    out << slice.slice << ',' << format_double(slice.auc) << ',' << (slice.extrapolated ? 1 : 0)
        << ',' << (slice.supported ? 1 : 0) << '\n';
  }
}

std::vector<EvalSummaryRow> read_eval_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(cat("cannot open ", path.string()));
  std::vector<EvalSummaryRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EvalSummaryRow row;
    std::string field;
    std::getline(ls, row.slice, ',');
    std::getline(ls, field, ',');
    row.auc = std::stod(field);
    std::getline(ls, field, ',');
    row.extrapolated = field == "1";
    std::getline(ls, field, ',');
    row.supported = field == "1";
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fedkws
