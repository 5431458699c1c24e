#include "stomax/ensemble_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stomax {
namespace {

constexpr char kMagic[8] = {'S', 'T', 'M', 'X', 'E', 'N', 'S', '1'};

template <class T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("ensemble read: truncated file");
  return v;
}

void put_array(std::ofstream& os, const std::vector<double>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_array(std::ifstream& is) {
  const auto n = get<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("ensemble read: truncated array");
  return v;
}

}  // namespace

void write_ensemble_binary(const PathEnsemble& ens, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, 1);
  put<double>(os, ens.grid.horizon);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ens.grid.n_steps));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ens.marks.size()));
  for (int l : ens.marks.labels) put<std::int32_t>(os, l);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(ens.n_paths));
  put<std::uint64_t>(os, ens.seed);
  put<std::uint8_t>(os, ens.has_counts ? 1 : 0);
  put<std::uint8_t>(os, ens.allow_zero_intensity ? 1 : 0);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ens.model_tag.size()));
  os.write(ens.model_tag.data(), static_cast<std::streamsize>(ens.model_tag.size()));
  put_array(os, ens.increments);
  put_array(os, ens.intensity);
  put_array(os, ens.counts);
  if (!os) throw std::runtime_error("write failed: " + path);
}

PathEnsemble read_ensemble_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("not an ensemble file: " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != 1) throw std::runtime_error("unsupported ensemble version");

  PathEnsemble ens;
  const double horizon = get<double>(is);
  const auto steps = get<std::uint64_t>(is);
  ens.grid = TimeGrid(horizon, static_cast<int>(steps));
  const auto n_marks = get<std::uint64_t>(is);
  std::vector<int> labels(n_marks);
  for (auto& l : labels) l = get<std::int32_t>(is);
  ens.marks = MarkSpace(std::move(labels));
  ens.n_paths = static_cast<int>(get<std::uint64_t>(is));
  ens.seed = get<std::uint64_t>(is);
  ens.has_counts = get<std::uint8_t>(is) != 0;
  ens.allow_zero_intensity = get<std::uint8_t>(is) != 0;
  const auto tag_len = get<std::uint32_t>(is);
  ens.model_tag.resize(tag_len);
  is.read(ens.model_tag.data(), tag_len);
  ens.increments = get_array(is);
  ens.intensity = get_array(is);
  ens.counts = get_array(is);
  return ens;
}

void write_ensemble_csv(const PathEnsemble& ens, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "path,step,mark,increment,intensity,count\n";
  os.precision(17);
  for (int p = 0; p < ens.n_paths; ++p)
    for (int k = 0; k < ens.grid.n_steps; ++k)
      for (int z = 0; z < ens.marks.size(); ++z)
        os << p << ',' << k << ',' << ens.marks.labels[z] << ',' << ens.incr(p, k, z) << ','
           << ens.lambda(p, k, z) << ',' << (ens.has_counts ? ens.count(p, k, z) : 0.0) << '\n';
}

void write_field_csv(const DerivativeField& field, const TimeGrid& grid, const MarkSpace& marks,
                     const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "level,cell,t_a,t_b,mark,dropped,coefficients\n";
  os.precision(17);
  for (std::size_t c = 0; c < field.cells.size(); ++c) {
    const auto& est = field.cells[c];
    os << field.level << ',' << c << ',' << grid.t(est.cell.step_lo) << ','
       << grid.t(est.cell.step_hi) << ',' << marks.labels[est.cell.marks[0]] << ','
       << (est.dropped ? 1 : 0) << ',';
    for (std::size_t j = 0; j < est.coeffs.size(); ++j)
      os << (j ? ";" : "") << est.coeffs[j];
    os << '\n';
  }
}

void write_states_csv(const StatePaths& states, const TimeGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "path,step,t,x,controls\n";
  os.precision(17);
  for (int p = 0; p < states.n_paths; ++p)
    for (int k = 0; k <= states.n_steps; ++k) {
      os << p << ',' << k << ',' << grid.t(k) << ',' << states.state(p, k) << ',';
      if (k < states.n_steps) {
        auto u = states.control(p, k);
        for (int j = 0; j < states.n_ctrl; ++j) os << (j ? ";" : "") << u[j];
      }
      os << '\n';
    }
}

void write_adjoint_csv(const AdjointBundle& bundle, const TimeGrid& grid,
                       const std::string& per_path_file, const std::string& per_anchor_file) {
  {
    std::ofstream os(per_path_file);
    if (!os) throw std::runtime_error("cannot open for writing: " + per_path_file);
    os << "path,step,t,K,F,p\n";
    os.precision(17);
    for (int p = 0; p < bundle.n_paths; ++p)
      for (int k = 0; k < bundle.n_steps; ++k)
        os << p << ',' << k << ',' << grid.t(k) << ',' << bundle.K_at(p, k) << ','
           << bundle.F_at(p, k) << ',' << bundle.p_at(p, k) << '\n';
  }
  {
    std::ofstream os(per_anchor_file);
    if (!os) throw std::runtime_error("cannot open for writing: " + per_anchor_file);
    os << "anchor,t,mark,kappa_coefficients\n";
    os.precision(17);
    for (std::size_t a = 0; a < bundle.kappa_fields.size(); ++a) {
      const auto& f = bundle.kappa_fields[a];
      for (std::size_t c = 0; c < f.cells.size(); ++c) {
        os << a << ',' << grid.t(bundle.anchors[a]) << ',' << f.cells[c].cell.marks[0] << ',';
        for (std::size_t j = 0; j < f.cells[c].coeffs.size(); ++j)
          os << (j ? ";" : "") << f.cells[c].coeffs[j];
        os << '\n';
      }
    }
  }
}

}  // namespace stomax
