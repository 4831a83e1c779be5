#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mfattn/dynamics.hpp"
#include "mfattn/error.hpp"
#include "mfattn/version.hpp"

namespace mfattn {

inline constexpr char kTrajMagic[16] = {'M', 'F', 'A', 'T', 'T', 'N', '-', 'T',
                                        'R', 'A', 'J', '1', 0,   0,   0,   1};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
  const auto len = get<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

}  // namespace detail

/// Binary trajectory archive: 16-byte magic, little-endian 64-bit header
/// fields, the resolved config text, the code version, the root seed, then
/// per snapshot {time, n*d token coords, H*d*d weights} as 64-bit floats.
inline void write_trajectory_archive(const std::string& path, const Trajectory& traj,
                                     const std::string& config_echo, std::uint64_t seed) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cli_io", "write_trajectory_archive", "cannot open " + path);
  os.write(kTrajMagic, sizeof(kTrajMagic));
  const int n = traj.clouds.front().size();
  const int d = traj.clouds.front().dim();
  const int h = traj.ensembles.front().head_count();
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(n));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(h));
  detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(traj.snap_times.size()));
  detail::put<std::uint64_t>(os, seed);
  detail::put_string(os, config_echo);
  detail::put_string(os, kVersion);
  for (std::size_t s = 0; s < traj.snap_times.size(); ++s) {
    detail::put<double>(os, traj.snap_times[s]);
    const TokenCloud& c = traj.clouds[s];
    os.write(reinterpret_cast<const char*>(c.data()),
             static_cast<std::streamsize>(sizeof(double) * n * d));
    const HeadEnsemble& e = traj.ensembles[s];
    for (int k = 0; k < h; ++k)
      os.write(reinterpret_cast<const char*>(e.head(k).data()),
               static_cast<std::streamsize>(sizeof(double) * d * d));
  }
  if (!os) throw Error("cli_io", "write_trajectory_archive", "write failed for " + path);
}

struct TrajectoryArchive {
  int n = 0, d = 0, h = 0;
  std::uint64_t seed = 0;
  std::string config_echo;
  std::string version;
  Vec times;
  std::vector<TokenCloud> clouds;
  std::vector<HeadEnsemble> ensembles;
};

inline TrajectoryArchive read_trajectory_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cli_io", "read_trajectory_archive", "cannot open " + path);
  char magic[16];
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kTrajMagic, sizeof(magic)) != 0)
    throw Error("cli_io", "read_trajectory_archive", "bad magic in " + path);
  TrajectoryArchive a;
  a.n = static_cast<int>(detail::get<std::uint64_t>(is));
  a.d = static_cast<int>(detail::get<std::uint64_t>(is));
  a.h = static_cast<int>(detail::get<std::uint64_t>(is));
  const auto snaps = detail::get<std::uint64_t>(is);
  a.seed = detail::get<std::uint64_t>(is);
  a.config_echo = detail::get_string(is);
  a.version = detail::get_string(is);
  for (std::uint64_t s = 0; s < snaps; ++s) {
    a.times.push_back(detail::get<double>(is));
    TokenCloud c(a.n, a.d);
    is.read(reinterpret_cast<char*>(c.data()),
            static_cast<std::streamsize>(sizeof(double) * a.n * a.d));
    a.clouds.push_back(std::move(c));
    std::vector<SymMatrix> heads;
    heads.reserve(a.h);
    for (int k = 0; k < a.h; ++k) {
      SymMatrix m(a.d);
      is.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * a.d * a.d));
      heads.push_back(std::move(m));
    }
    a.ensembles.emplace_back(std::move(heads));
  }
  if (!is) throw Error("cli_io", "read_trajectory_archive", "truncated archive " + path);
  return a;
}

/// CSV writer with '#'-prefixed provenance header lines (resolved config,
/// code version, seed).  No timestamps: rerunning from the embedded config
/// must reproduce files byte-exactly.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& config_echo, std::uint64_t seed,
            const std::vector<std::string>& columns)
      : os_(path, std::ios::trunc) {
    if (!os_) throw Error("cli_io", "CsvWriter", "cannot open " + path);
    os_ << "# mfattn version " << kVersion << "\n";
    os_ << "# seed " << seed << "\n";
    std::istringstream cfg(config_echo);
    std::string line;
    while (std::getline(cfg, line)) os_ << "# cfg " << line << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) os_ << (i ? "," : "") << columns[i];
    os_ << "\n";
    os_ << std::setprecision(17);
  }

  void row(const Vec& values) {
    for (std::size_t i = 0; i < values.size(); ++i) os_ << (i ? "," : "") << values[i];
    os_ << "\n";
  }

 private:
  std::ofstream os_;
};

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cli_io", "ensure_dir", "cannot create directory " + dir);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cli_io", "write_text_file", "cannot open " + path);
  os << text;
}

inline const char* dissipation_sign_name(int sign) { return sign > 0 ? "plus" : "minus"; }

}  // namespace mfattn
