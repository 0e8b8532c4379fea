#include "gano/helmholtz.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "gano/errors.hpp"
#include "gano/rng.hpp"
#include "json.hpp"

namespace gano::helm {

namespace {

using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::ColMajor, int>;
using Vector = Eigen::Matrix<cplx, Eigen::Dynamic, 1>;

constexpr geo::Box kDomain{-1.0, 1.0, -1.0, 1.0};
constexpr char kFieldMagic[8] = {'G', 'A', 'N', 'O', 'F', 'L', 'D', '1'};

double norm(const std::vector<cplx>& v) {
  double s = 0.0;
  for (const cplx& c : v) s += std::norm(c);
  return std::sqrt(s);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw ValidationError(path.string() + ": truncated field file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_field(const std::filesystem::path& path, const ComplexField& f, double angle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(kFieldMagic, 8);
  put_u64(out, f.re.nx);
  put_u64(out, std::bit_cast<std::uint64_t>(angle));
  for (double v : f.re.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  for (double v : f.im.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

ComplexField read_field(const std::filesystem::path& path, double* angle) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("field file not found: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || !std::equal(magic, magic + 8, kFieldMagic))
    throw ValidationError(path.string() + ": not a gano field file");
  const std::size_t n = get_u64(in, path);
  if (n < 2 || n > 8192) throw ValidationError(path.string() + ": implausible grid size");
  *angle = std::bit_cast<double>(get_u64(in, path));
  ComplexField f{geo::make_grid(n, kDomain), geo::make_grid(n, kDomain)};
  for (double& v : f.re.values) v = std::bit_cast<double>(get_u64(in, path));
  for (double& v : f.im.values) v = std::bit_cast<double>(get_u64(in, path));
  return f;
}

}  // namespace

void ScatterConfig::validate() const {
  if (n < 32) throw ValidationError("scatter: grid resolution n must be >= 32, got " + std::to_string(n));
  if (!(kappa > 0.0)) throw ValidationError("scatter: kappa must be > 0");
  if (!(q_tilde > -1.0)) throw ValidationError("scatter: q_tilde must be > -1");
}

std::vector<double> equispaced_angles(std::size_t count) {
  std::vector<double> a(count);
  for (std::size_t j = 0; j < count; ++j)
    a[j] = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
  return a;
}

geo::GridField rasterize_q(const geo::FourierShape& shape, std::size_t n, double q_tilde) {
  geo::GridField q = geo::make_grid(n, kDomain);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (shape.r0 > 0.0 && shape.inside(q.point(i, j))) q.at(i, j) = q_tilde;
  return q;
}

cplx incident(geo::Vec2 x, double kappa, double angle) {
  const double phase = kappa * (x.x * std::cos(angle) + x.y * std::sin(angle));
  return {std::cos(phase), std::sin(phase)};
}

// ---------------------------------------------------------------- solver

struct HelmholtzSolver::Impl {
  SparseMatrix a;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

HelmholtzSolver::~HelmholtzSolver() = default;
HelmholtzSolver::HelmholtzSolver(HelmholtzSolver&&) noexcept = default;
HelmholtzSolver& HelmholtzSolver::operator=(HelmholtzSolver&&) noexcept = default;

HelmholtzSolver::HelmholtzSolver(const geo::GridField& q, double kappa)
    : impl_(std::make_unique<Impl>()), n_(q.nx), kappa_(kappa), q_(q) {
  if (q.nx != q.ny || q.values.size() != q.nx * q.ny)
    throw ValidationError("HelmholtzSolver: contrast grid must be square");
  ScatterConfig{q.nx, kappa, 0.0, {}}.validate();
  for (double v : q.values)
    if (!(v > -1.0)) throw ValidationError("HelmholtzSolver: contrast must be > -1 everywhere");

  const std::size_t n = n_;
  const double h = 2.0 / static_cast<double>(n);
  const double ih = 1.0 / h, ih2 = ih * ih;
  const cplx ik{0.0, kappa};
  auto id = [n](std::size_t i, std::size_t j) { return static_cast<int>(j * n + i); };

  std::vector<Eigen::Triplet<cplx, int>> trip;
  trip.reserve(5 * n * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const int row = id(i, j);
      const bool bx = (i == 0 || i == n - 1), by = (j == 0 || j == n - 1);
      if (!bx && !by) {
        trip.emplace_back(row, row, cplx(-4.0 * ih2 + kappa * kappa * (1.0 + q.at(i, j)), 0.0));
        trip.emplace_back(row, id(i - 1, j), ih2);
        trip.emplace_back(row, id(i + 1, j), ih2);
        trip.emplace_back(row, id(i, j - 1), ih2);
        trip.emplace_back(row, id(i, j + 1), ih2);
        continue;
      }
      const std::size_t ii = (i == 0) ? 1 : n - 2;
      const std::size_t jj = (j == 0) ? 1 : n - 2;
      trip.emplace_back(row, row, cplx(ih, 0.0) - ik);
      if (bx && by) {
        trip.emplace_back(row, id(ii, j), -0.5 * ih);
        trip.emplace_back(row, id(i, jj), -0.5 * ih);
      } else if (bx) {
        trip.emplace_back(row, id(ii, j), -ih);
      } else {
        trip.emplace_back(row, id(i, jj), -ih);
      }
    }
  }
  impl_->a.resize(static_cast<int>(n * n), static_cast<int>(n * n));
  impl_->a.setFromTriplets(trip.begin(), trip.end());
  impl_->a.makeCompressed();
  impl_->lu.analyzePattern(impl_->a);
  impl_->lu.factorize(impl_->a);
  if (impl_->lu.info() != Eigen::Success)
    throw NumericalError("HelmholtzSolver: sparse LU failed (" + impl_->lu.lastErrorMessage() +
                         "); the operator is singular or numerically ill-conditioned at kappa = " +
                         std::to_string(kappa));
}

std::vector<cplx> HelmholtzSolver::rhs(double angle) const {
  const std::size_t n = n_;
  std::vector<cplx> b(n * n, cplx(0.0, 0.0));
  for (std::size_t j = 1; j + 1 < n; ++j)
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double q = q_.at(i, j);
      if (q != 0.0) b[j * n + i] = -kappa_ * kappa_ * q * incident(q_.point(i, j), kappa_, angle);
    }
  return b;
}

std::vector<cplx> HelmholtzSolver::solve_rhs(const std::vector<cplx>& b) const {
  if (b.size() != n_ * n_) throw ValidationError("HelmholtzSolver::solve_rhs: size mismatch");
  const Eigen::Map<const Vector> bv(b.data(), static_cast<Eigen::Index>(b.size()));
  const Vector x = impl_->lu.solve(bv);
  if (impl_->lu.info() != Eigen::Success) throw NumericalError("HelmholtzSolver: back-substitution failed");
  return std::vector<cplx>(x.data(), x.data() + x.size());
}

double HelmholtzSolver::residual(const std::vector<cplx>& psi, const std::vector<cplx>& b) const {
  const double bn = norm(b);
  const Eigen::Map<const Vector> x(psi.data(), static_cast<Eigen::Index>(psi.size()));
  const Eigen::Map<const Vector> bv(b.data(), static_cast<Eigen::Index>(b.size()));
  const double rn = (impl_->a * x - bv).norm();
  if (bn == 0.0) return rn;
  return rn / bn;
}

ComplexField HelmholtzSolver::solve(double angle, double* residual_out) const {
  const auto b = rhs(angle);
  const auto psi = solve_rhs(b);
  const double res = residual(psi, b);
  if (residual_out) *residual_out = res;
  if (!(res < kMaxResidual))
    throw NumericalError("HelmholtzSolver: relative residual " + std::to_string(res) +
                         " exceeds 1e-10; the system is ill-conditioned");
  ComplexField f{geo::make_grid(n_, kDomain), geo::make_grid(n_, kDomain)};
  for (std::size_t k = 0; k < psi.size(); ++k) {
    f.re.values[k] = psi[k].real();
    f.im.values[k] = psi[k].imag();
  }
  return f;
}

ComplexField solve_forward(const geo::GridField& q, double kappa, double angle, double* residual_out) {
  return HelmholtzSolver(q, kappa).solve(angle, residual_out);
}

// ---------------------------------------------------------------- sensors

SensorArray SensorArray::random(std::size_t count, double radius, std::uint64_t seed) {
  if (!(radius > 0.0) || radius >= 1.0) throw ValidationError("SensorArray: radius must lie in (0, 1)");
  Rng rng(seed);
  SensorArray s;
  s.radius = radius;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    s.positions.push_back({radius * std::cos(t), radius * std::sin(t)});
  }
  return s;
}

std::vector<cplx> observe(const ComplexField& psi, const SensorArray& sensors) {
  std::vector<cplx> out;
  out.reserve(sensors.positions.size());
  for (const geo::Vec2& p : sensors.positions) out.push_back(psi.interpolate(p));
  return out;
}

// ---------------------------------------------------------------- dataset

Split split_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  const std::size_t n_val = n / 10, n_test = n / 10;
  Split s;
  s.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test),
               idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), idx.end());
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

Dataset gen_dataset(const DatasetConfig& cfg) {
  cfg.scatter.validate();
  if (cfg.n_shapes < 1 || cfg.n_angles < 1) throw ValidationError("gen_dataset: need >= 1 shape and angle");
  Dataset data;
  data.cfg = cfg;
  data.angles = cfg.scatter.angles.empty() ? equispaced_angles(cfg.n_angles) : cfg.scatter.angles;
  data.cfg.scatter.angles = data.angles;
  data.cfg.n_angles = data.angles.size();
  data.sensors = SensorArray::random(cfg.sensor_count, cfg.sensor_radius, derive_seed(cfg.seed, "dataset/sensors"));
  data.split = split_indices(cfg.n_shapes, derive_seed(cfg.seed, "dataset/split"));

  // Shapes are drawn up front so a bad range fails before any solve.
  data.shapes.resize(cfg.n_shapes);
  for (std::size_t i = 0; i < cfg.n_shapes; ++i) {
    data.shapes[i].index = i;
    data.shapes[i].shape =
        geo::random_shape(derive_seed(cfg.seed, "dataset/shape-" + std::to_string(i)), cfg.r0, cfg.amp);
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.n_shapes) return;
      try {
        ShapeSample& s = data.shapes[i];
        s.q = rasterize_q(s.shape, cfg.scatter.n, cfg.scatter.q_tilde);
        const HelmholtzSolver solver(s.q, cfg.scatter.kappa);
        for (double angle : data.angles) {
          double res = 0.0;
          s.fields.push_back(solver.solve(angle, &res));
          s.max_residual = std::max(s.max_residual, res);
          s.observations.push_back(observe(s.fields.back(), data.sensors));
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = cfg.n_shapes;
        return;
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(cfg.jobs, cfg.n_shapes));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return data;
}

namespace {

std::string shape_dir_name(std::size_t i) {
  std::ostringstream os;
  os << "shape_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

nlohmann::json config_json(const DatasetConfig& c) {
  nlohmann::json j;
  j["n_shapes"] = c.n_shapes;
  j["n_angles"] = c.n_angles;
  j["n"] = c.scatter.n;
  j["kappa"] = c.scatter.kappa;
  j["q_tilde"] = c.scatter.q_tilde;
  j["angles"] = c.scatter.angles;
  j["r0"] = {c.r0.lo, c.r0.hi};
  j["amp"] = {c.amp.lo, c.amp.hi};
  j["sensor_count"] = c.sensor_count;
  j["sensor_radius"] = c.sensor_radius;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["format"] = "gano-helmholtz-dataset";
  meta["version"] = 1;
  meta["config"] = config_json(data.cfg);
  meta["split"] = {{"train", data.split.train}, {"val", data.split.val}, {"test", data.split.test}};
  {
    std::ofstream out(dir / "dataset.json");
    out << meta.dump(2) << '\n';
  }
  geo::write_points_csv(dir / "sensors.csv", data.sensors.positions);
  for (const ShapeSample& s : data.shapes) {
    const auto sd = dir / shape_dir_name(s.index);
    std::filesystem::create_directories(sd);
    geo::write_shape_csv(sd / "shape.csv", s.shape);
    geo::write_grid_csv(sd / "q.csv", s.q);
    std::ofstream obs(sd / "observations.csv");
    obs << std::setprecision(17) << "angle,re,im\n";
    for (std::size_t a = 0; a < data.angles.size(); ++a) {
      std::ostringstream name;
      name << "field_" << std::setw(2) << std::setfill('0') << a << ".bin";
      write_field(sd / name.str(), s.fields[a], data.angles[a]);
      for (const cplx& c : s.observations[a]) obs << data.angles[a] << ',' << c.real() << ',' << c.imag() << '\n';
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw ValidationError("dataset not found: " + (dir / "dataset.json").string());
  const auto meta = nlohmann::json::parse(in);
  const auto& c = meta.at("config");
  Dataset data;
  data.cfg.n_shapes = c.at("n_shapes");
  data.cfg.n_angles = c.at("n_angles");
  data.cfg.scatter.n = c.at("n");
  data.cfg.scatter.kappa = c.at("kappa");
  data.cfg.scatter.q_tilde = c.at("q_tilde");
  data.cfg.scatter.angles = c.at("angles").get<std::vector<double>>();
  data.cfg.r0 = {c.at("r0")[0], c.at("r0")[1]};
  data.cfg.amp = {c.at("amp")[0], c.at("amp")[1]};
  data.cfg.sensor_count = c.at("sensor_count");
  data.cfg.sensor_radius = c.at("sensor_radius");
  data.cfg.seed = c.at("seed");
  data.angles = data.cfg.scatter.angles;
  data.split.train = meta.at("split").at("train").get<std::vector<std::size_t>>();
  data.split.val = meta.at("split").at("val").get<std::vector<std::size_t>>();
  data.split.test = meta.at("split").at("test").get<std::vector<std::size_t>>();
  data.sensors.radius = data.cfg.sensor_radius;
  data.sensors.positions = geo::read_points_csv(dir / "sensors.csv");

  data.shapes.resize(data.cfg.n_shapes);
  for (std::size_t i = 0; i < data.cfg.n_shapes; ++i) {
    ShapeSample& s = data.shapes[i];
    const auto sd = dir / shape_dir_name(i);
    s.index = i;
    s.shape = geo::read_shape_csv(sd / "shape.csv");
    s.q = geo::read_grid_csv(sd / "q.csv");
    for (std::size_t a = 0; a < data.angles.size(); ++a) {
      std::ostringstream name;
      name << "field_" << std::setw(2) << std::setfill('0') << a << ".bin";
      double angle = 0.0;
      s.fields.push_back(read_field(sd / name.str(), &angle));
      if (std::bit_cast<std::uint64_t>(angle) != std::bit_cast<std::uint64_t>(data.angles[a]))
        throw ValidationError((sd / name.str()).string() + ": angle does not match dataset.json");
      s.observations.push_back(observe(s.fields.back(), data.sensors));
    }
  }
  return data;
}

}  // namespace gano::helm
