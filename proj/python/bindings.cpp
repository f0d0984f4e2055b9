#include "psd/analysis.hpp"
#include "psd/artifacts.hpp"
#include "psd/checkpoint.hpp"
#include "psd/config.hpp"
#include "psd/encoder.hpp"
#include "psd/errors.hpp"
#include "psd/reward.hpp"
#include "psd/run.hpp"
#include "psd/sampling.hpp"
#include "psd/trainer.hpp"
#include "psd/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace psd;

namespace {

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

py::dict trajectory_dict(const SkillTrajectory& t) {
  py::dict d;
  d["L"] = t.L;
  d["z"] = t.z;
  d["states"] = t.states;
  d["actions"] = t.actions;
  d["r_psd"] = t.r_psd;
  d["r_ext"] = t.r_ext;
  d["v_x"] = t.v_x;
  return d;
}

py::tuple report_tuple(const verify::Report& r) { return py::make_tuple(r.pass(), json_loads(r.to_json(-1))); }

/// Python-facing wrapper around a live training state.
class Trainer {
 public:
  explicit Trainer(const std::string& config_json) : st_(train::make_trainer(parse_config(config_json))) {}
  explicit Trainer(train::TrainerState st) : st_(std::move(st)) {}

  py::object run_epoch() { return json_loads(io::metrics_line(train::run_epoch(st_))); }
  int epoch() const { return st_.epoch; }
  std::string config() const { return dump_config(st_.cfg); }
  std::pair<int, int> bounds() const { return {st_.bounds.L_min, st_.bounds.L_max}; }
  std::size_t buffer_size() const { return st_.buffer.size(); }
  py::dict evaluate(int L, std::uint64_t seed, const Eigen::VectorXd& z) const {
    return trajectory_dict(train::evaluate_skill(st_, L, z, seed));
  }
  Eigen::MatrixXd encode(const Eigen::MatrixXd& states, int L) const {
    const std::vector<int> Ls(static_cast<std::size_t>(states.rows()), L);
    return encoder::encode_batch(st_.enc_shape, st_.phi, states, Ls);
  }
  void save(const std::filesystem::path& p) const { ckpt::save(st_, p); }
  py::bytes to_bytes() const { return py::bytes(ckpt::serialize(st_)); }

 private:
  train::TrainerState st_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Periodic skill discovery: circular latent encoder, rewards, analysis and training.";

  auto base = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<InsufficientData>(m, "InsufficientData", PyExc_RuntimeError);
  py::register_exception<InfeasiblePeriod>(m, "InfeasiblePeriod", PyExc_ValueError);
  (void)base;

  m.def("embed_period", &encoder::embed_period, py::arg("L"), py::arg("D") = 8);
  m.def("optimal_chord", &encoder::optimal_chord, py::arg("L"));
  m.def("r_psd", &reward::r_psd, py::arg("delta"), py::arg("kappa") = 10.0);
  m.def("r_ext", &reward::r_ext, py::arg("v_x"), py::arg("v_star") = 0.5);
  m.def("delta_from_distance", &reward::delta_from_distance, py::arg("distance"), py::arg("L"));
  m.def(
      "psd_loss",
      [](const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& z_t1, const Eigen::MatrixXd& z_tL,
         const std::vector<int>& L, double k, double eps, double lambda1, double lambda2) {
        encoder::PsdEncoderConfig cfg;
        cfg.k = k;
        cfg.eps = eps;
        cfg.lambda1 = lambda1;
        cfg.lambda2 = lambda2;
        return encoder::psd_loss_from_latents(z_t, z_t1, z_tL, L, cfg);
      },
      py::arg("z_t"), py::arg("z_t1"), py::arg("z_tL"), py::arg("L"), py::arg("k") = 0.5,
      py::arg("eps") = 1e-5, py::arg("lambda1") = 5.0, py::arg("lambda2") = 5.0,
      "Negative PSD objective on latent triples (rows are samples).");

  m.def(
      "spectrum",
      [](const Eigen::VectorXd& x, int k, bool hann) {
        const auto s = analysis::spectrum(x, k, hann);
        py::dict d;
        d["freqs"] = s.freqs;
        d["amps"] = s.amps;
        d["top_k"] = s.top_k;
        return d;
      },
      py::arg("series"), py::arg("k") = 4, py::arg("hann") = false);
  m.def("autocorr_period", &analysis::autocorr_period, py::arg("series"), py::arg("prominence") = 0.5);
  m.def("parseval_residual", &analysis::parseval_residual, py::arg("series"));
  m.def("regular_polygon", &analysis::regular_polygon, py::arg("L"), py::arg("d") = 2);
  m.def(
      "theorem_oracle",
      [](int L, int d, std::uint64_t seed) {
        analysis::TheoremOptions opt;
        opt.seed = seed;
        const auto r = analysis::theorem_oracle(L, d, opt);
        py::dict out;
        out["points"] = r.points;
        out["objective"] = r.objective;
        out["max_radius_err"] = r.max_radius_err;
        out["max_chord_err"] = r.max_chord_err;
        out["max_antipodal_err"] = r.max_antipodal_err;
        return out;
      },
      py::arg("L"), py::arg("d") = 2, py::arg("seed") = 0);

  m.def(
      "update_bounds",
      [](int L_min, int L_max, bool once_min, bool once_max, double R_min, double R_max, int T) {
        sampling::SamplingBounds b;
        b.L_min = L_min;
        b.L_max = L_max;
        b.updated_once_min = once_min;
        b.updated_once_max = once_max;
        const auto r = sampling::update_bounds(b, R_min, R_max, T);
        return py::make_tuple(r.bounds.L_min, r.bounds.L_max, r.bounds.updated_once_min,
                              r.bounds.updated_once_max);
      },
      py::arg("L_min"), py::arg("L_max"), py::arg("updated_once_min"), py::arg("updated_once_max"),
      py::arg("R_min"), py::arg("R_max"), py::arg("T") = 200,
      "One curriculum step; returns (L_min, L_max, updated_once_min, updated_once_max).");

  m.def(
      "default_config",
      [](const std::string& env) { return dump_config(default_config(envs::env_name_from_string(env))); },
      py::arg("env") = "ring_world", "Complete default configuration as JSON text.");
  m.def(
      "validate_config", [](const std::string& text) { return dump_config(parse_config(text)); },
      py::arg("json_text"), "Parses and validates a config; returns its canonical JSON.");

  py::class_<Trainer>(m, "Trainer")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def_static(
          "load", [](const std::filesystem::path& p) { return Trainer(ckpt::load(p)); }, py::arg("path"))
      .def("run_epoch", &Trainer::run_epoch, "Runs one epoch and returns its metrics dict.")
      .def_property_readonly("epoch", &Trainer::epoch)
      .def_property_readonly("bounds", &Trainer::bounds)
      .def_property_readonly("buffer_size", &Trainer::buffer_size)
      .def("config", &Trainer::config)
      .def("evaluate", &Trainer::evaluate, py::arg("L"), py::arg("seed") = 0,
           py::arg("z") = Eigen::VectorXd())
      .def("encode", &Trainer::encode, py::arg("states"), py::arg("L"))
      .def("save", &Trainer::save, py::arg("path"))
      .def("to_bytes", &Trainer::to_bytes);

  m.def(
      "train",
      [](const std::string& config_json) {
        py::gil_scoped_release release;
        return run::train(parse_config(config_json)).out_dir;
      },
      py::arg("config_json"), "Full training run with artifacts; returns the output directory.");

  m.def(
      "verify_theorem",
      [](int lo, int hi, const std::vector<int>& dims) { return report_tuple(verify::theorem(lo, hi, dims)); },
      py::arg("L_lo") = 2, py::arg("L_hi") = 4, py::arg("dims") = std::vector<int>{2, 3});
  m.def("verify_gradcheck", [] { return report_tuple(verify::gradcheck()); });
  m.def("verify_invariants", [] { return report_tuple(verify::invariants()); });
}
