#include "spoc/artifacts.hpp"

#include <fstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "spoc/errors.hpp"

#ifndef SPOC_GIT_REVISION
#define SPOC_GIT_REVISION "unknown"
#endif

namespace spoc {
namespace {

using json = nlohmann::ordered_json;

class CsvFile {
 public:
  CsvFile(const std::filesystem::path& path, const std::string& header) : out_(path) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <class... Args>
  void row(fmt::format_string<Args...> f, Args&&... args) {
    out_ << fmt::format(f, std::forward<Args>(args)...) << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace

std::string git_revision() { return SPOC_GIT_REVISION; }

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

std::vector<std::filesystem::path> write_artifacts(const RunReport& report, const FemOperators& ops,
                                                   const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<fs::path> written;
  const double dt = ops.dt();
  const Mesh1D& mesh = ops.mesh();

  {
    const auto path = dir / "cost_trace.csv";
    CsvFile csv(path, "outer_step,t,cost_mean,cost_stderr");
    for (const auto& r : report.cost_trace) csv.row("{},{:.17g},{:.17g},{:.17g}", r.outer, r.t, r.mean, r.std_error);
    written.push_back(path);
  }
  {
    const auto path = dir / "sgd_trace.csv";
    CsvFile csv(path, "outer_step,iteration,grad_norm,rollout_cost");
    for (const auto& r : report.sgd_trace) {
      csv.row("{},{},{:.17g},{:.17g}", r.outer, r.iteration, r.grad_norm, r.rollout_cost);
    }
    written.push_back(path);
  }
  {
    const auto path = dir / "filter_trace.csv";
    CsvFile csv(path,
                "step,t,ess,min_weight,max_weight,branched,posterior_mode1,truth_mode1,posterior_norm,truth_norm");
    for (const auto& r : report.filter_trace) {
      csv.row("{},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g}", r.step, r.t, r.ess,
              r.min_weight, r.max_weight, r.branched ? 1 : 0, r.posterior_mode1, r.truth_mode1, r.posterior_norm,
              r.truth_norm);
    }
    written.push_back(path);
  }
  {
    const auto path = dir / "control_final.csv";
    CsvFile csv(path, "k,t,lambda,u");
    for (std::size_t k = 0; k < report.applied_controls.size(); ++k) {
      const Field& u = report.applied_controls[k];
      for (std::size_t i = 0; i < u.size(); ++i) {
        csv.row("{},{:.17g},{:.17g},{:.17g}", k, static_cast<double>(k) * dt, mesh.dof_coordinate(i), u[i]);
      }
    }
    written.push_back(path);
  }
  {
    const auto path = dir / "state_snapshots.csv";
    CsvFile csv(path, "k,t,lambda,truth,posterior_mean");
    for (std::size_t k = 0; k < report.truth.size(); ++k) {
      const Field& x = report.truth[k];
      const Field& m = report.posterior_means[k];
      for (std::size_t i = 0; i < x.size(); ++i) {
        csv.row("{},{:.17g},{:.17g},{:.17g},{:.17g}", k, static_cast<double>(k) * dt, mesh.dof_coordinate(i), x[i],
                m[i]);
      }
    }
    written.push_back(path);
  }
  if (report.config.dump_noise) {
    const auto path = dir / "truth_noise.csv";
    CsvFile csv(path, "k,kind,channel,increment");
    const std::size_t n_w = report.config.N_W, d = report.config.d;
    for (std::size_t i = 0; i < report.truth_dw.size(); ++i) {
      csv.row("{},W,{},{:.17g}", i / n_w, i % n_w, report.truth_dw[i]);
    }
    for (std::size_t i = 0; i < report.truth_db.size(); ++i) {
      csv.row("{},B,{},{:.17g}", i / d, i % d, report.truth_db[i]);
    }
    written.push_back(path);
  }

  const json config = json::parse(config_to_json(report.config));
  {
    const auto path = dir / "config.json";
    std::ofstream out(path);
    out << config.dump(2) << '\n';
    written.push_back(path);
  }
  {
    const auto path = dir / "manifest.json";
    json manifest = json::object();
    manifest["config"] = config;
    manifest["seed"] = report.config.seed;
    manifest["git_revision"] = git_revision();
    manifest["wall_seconds"] = report.wall_seconds;
    manifest["sgd_seconds"] = report.sgd_seconds;
    manifest["filter_seconds"] = report.filter_seconds;
    manifest["realized_cost"] = report.realized_cost;
    json files = json::array();
    for (const auto& p : written) files.push_back(p.filename().string());
    manifest["files"] = files;
    std::ofstream out(path);
    out << manifest.dump(2) << '\n';
    written.push_back(path);
  }
  return written;
}

}  // namespace spoc
