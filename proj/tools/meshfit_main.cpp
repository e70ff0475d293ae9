// meshfit: silhouette-driven head-offset fitting pipeline.
//
// Every command is a pure function of (input files, config, seed): rerunning
// with the same inputs produces byte-identical outputs. Exit codes: 0 ok,
// 1 runtime failure, 2 invalid configuration (message names the key).

#include <CLI11.hpp>
#include <algorithm>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <string>
#include <vector>

#include "meshfit/basis_io.hpp"
#include "meshfit/chamfer.hpp"
#include "meshfit/fit.hpp"
#include "meshfit/model_io.hpp"
#include "meshfit/obj_io.hpp"
#include "meshfit/pca.hpp"
#include "meshfit/report.hpp"
#include "meshfit/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for read: " + path);
  json j;
  in >> j;
  return j;
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& what) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw std::invalid_argument("unknown " + what + " key: " + key);
  }
}

meshfit::FitConfig parse_fit_config(const json& j) {
  reject_unknown_keys(
      j,
      {"lambda_hair", "lambda_o", "lambda_chm", "lambda_lap", "lambda_seg", "iterations",
       "image_size", "sigma", "epsilon", "seed", "optimize_shape", "lr", "shape_lr", "beta1",
       "beta2", "adam_eps"},
      "fit config");
  meshfit::FitConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lambda_hair", cfg.weights.lambda_hair);
  get("lambda_o", cfg.weights.lambda_o);
  get("lambda_chm", cfg.weights.lambda_chm);
  get("lambda_lap", cfg.weights.lambda_lap);
  get("lambda_seg", cfg.weights.lambda_seg);
  get("iterations", cfg.iterations);
  get("image_size", cfg.image_size);
  get("sigma", cfg.raster.sigma);
  get("epsilon", cfg.raster.epsilon);
  get("seed", cfg.seed);
  get("optimize_shape", cfg.optimize_shape);
  get("lr", cfg.lr);
  get("shape_lr", cfg.shape_lr);
  get("beta1", cfg.beta1);
  get("beta2", cfg.beta2);
  get("adam_eps", cfg.adam_eps);
  validate(cfg);
  return cfg;
}

std::string canonical_dump(const json& j) { return j.dump(); }

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  uint64_t seed = 0;
  int size = 128;
  int subdivisions = 3;
  double rms_fraction = 0.05;
};

int cmd_synth(const SynthArgs& args) {
  if (args.size < 1) throw std::invalid_argument("invalid size: must be >= 1");
  if (args.subdivisions < 0) throw std::invalid_argument("invalid subdiv: must be >= 0");
  if (!(args.rms_fraction > 0)) throw std::invalid_argument("invalid rms: must be > 0");
  meshfit::SynthScene scene =
      meshfit::make_scene(args.seed, args.size, args.subdivisions, args.rms_fraction);
  fs::create_directories(args.out);
  meshfit::save_model(args.out + "/model", {scene.bundle.model, scene.bundle.mesh});
  meshfit::save_camera(args.out + "/camera.json", scene.camera);
  meshfit::save_params(args.out + "/params.json", scene.params);
  meshfit::save_pgm(args.out + "/s_full.pgm", scene.s_full);
  meshfit::save_pgm(args.out + "/s_hair.pgm", scene.s_hair);
  meshfit::save_field(args.out + "/gt_field.bin", scene.gt_coefficients);
  json manifest;
  manifest["seed"] = args.seed;
  manifest["image_size"] = args.size;
  manifest["subdivisions"] = args.subdivisions;
  manifest["rms_fraction"] = args.rms_fraction;
  manifest["partition"] =
      "latitude bands: top cap hair, bottom cap neck, side patches ears, front band face";
  manifest["files"] = {"model/", "camera.json", "params.json", "s_full.pgm", "s_hair.pgm",
                       "gt_field.bin"};
  std::ofstream out(args.out + "/manifest.json");
  if (!out) throw std::runtime_error("cannot open for write: " + args.out + "/manifest.json");
  out << manifest.dump(2) << "\n";
  return 0;
}

// ---- fit --------------------------------------------------------------------

struct FitArgs {
  std::string model, params, mask_full, mask_hair, camera, config, out, log;
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_fit(const FitArgs& args) {
  meshfit::FitConfig cfg;
  if (!args.config.empty()) cfg = parse_fit_config(load_json(args.config));
  if (args.seed_set) cfg.seed = args.seed;

  const meshfit::ModelBundle bundle = meshfit::load_model(args.model);
  const meshfit::PoseParams params = meshfit::load_params(args.params);
  const meshfit::SilhouetteImage s_full = meshfit::load_pgm(args.mask_full);
  const meshfit::SilhouetteImage s_hair = meshfit::load_pgm(args.mask_hair);
  const meshfit::Camera camera = meshfit::load_camera(args.camera);

  const meshfit::FitResult result =
      meshfit::fit(bundle.model, bundle.mesh, params, s_full, s_hair, camera, cfg);
  meshfit::save_field(args.out, result.field.coefficients);
  if (!args.log.empty()) {
    std::ofstream log(args.log);
    if (!log) throw std::runtime_error("cannot open for write: " + args.log);
    for (size_t k = 0; k < result.trace.size(); ++k) {
      json line = result.trace[k].to_json();
      line["step"] = k;
      log << line.dump() << "\n";
    }
  }
  return 0;
}

// ---- render -------------------------------------------------------------------

struct RenderArgs {
  std::string model, params, field, camera, out, subset = "full";
  std::string field_kind = "coeff";  // coeff: m (.) n applies; disp: add rows directly
  int size = 128;
  double sigma = 1e-4;
  double epsilon = 1e-7;
};

int cmd_render(const RenderArgs& args) {
  if (args.subset != "full" && args.subset != "hair")
    throw std::invalid_argument("invalid subset: must be 'full' or 'hair'");
  if (args.field_kind != "coeff" && args.field_kind != "disp")
    throw std::invalid_argument("invalid field-kind: must be 'coeff' or 'disp'");
  const meshfit::ModelBundle bundle = meshfit::load_model(args.model);
  const meshfit::PoseParams params = meshfit::load_params(args.params);
  const meshfit::Camera camera = meshfit::load_camera(args.camera);
  meshfit::RasterConfig raster{args.sigma, args.epsilon};
  validate(raster);

  meshfit::MatX3 positions = reconstruct(bundle.model, params);
  if (!args.field.empty()) {
    const meshfit::MatX3 data = meshfit::load_field(args.field);
    if (data.rows() != positions.rows())
      throw std::runtime_error("offset field size does not match model");
    if (args.field_kind == "coeff") {
      meshfit::OffsetField field = meshfit::make_offset_field(bundle.mesh, positions);
      field.coefficients = data;
      field.apply_mask();
      positions = meshfit::apply_offsets(positions, field);
    } else {
      positions += data;
    }
  }
  const std::vector<meshfit::Triangle> tris =
      args.subset == "hair"
          ? meshfit::triangles_in_regions(bundle.mesh, {meshfit::Region::Hair,
                                                        meshfit::Region::Face,
                                                        meshfit::Region::Ears})
          : bundle.mesh.triangles;
  const meshfit::SilhouetteImage img =
      meshfit::rasterize_soft(tris, positions, camera, raster, args.size, args.size);
  meshfit::save_pgm(args.out, img);
  return 0;
}

// ---- distill ------------------------------------------------------------------

struct DistillArgs {
  std::string model, fields, out;
  int k_hair = 50;
  int k_neck = 10;
  bool no_center = false;
};

int cmd_distill(const DistillArgs& args) {
  const meshfit::ModelBundle bundle = meshfit::load_model(args.model);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(args.fields))
    if (entry.is_regular_file() && entry.path().extension() == ".bin")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .bin fields in " + args.fields);

  const int n = bundle.mesh.vertex_count();
  Eigen::MatrixXd fields(3 * n, Eigen::Index(files.size()));
  for (size_t c = 0; c < files.size(); ++c) {
    const meshfit::MatX3 coeff = meshfit::load_field(files[c]);
    if (coeff.rows() != n)
      throw std::runtime_error("field size mismatch: " + files[c]);
    // columns hold displacements m (.) n so the basis spans actual offsets
    meshfit::OffsetField field = meshfit::make_offset_field(bundle.mesh, bundle.model.v_base);
    field.coefficients = coeff;
    field.apply_mask();
    const meshfit::MatX3 disp = field.displacements();
    fields.col(Eigen::Index(c)) =
        Eigen::Map<const Eigen::VectorXd>(disp.data(), 3 * n);
  }
  const meshfit::LinearOffsetBasis basis = meshfit::fit_offset_basis(
      fields, bundle.mesh.regions, args.k_hair, args.k_neck, !args.no_center);
  meshfit::save_basis(args.out, basis);

  // per-field coefficients + reconstruction errors, for downstream edits
  json report;
  Eigen::MatrixXd etas(Eigen::Index(files.size()), basis.k_total());
  for (size_t c = 0; c < files.size(); ++c) {
    const Eigen::VectorXd eta = meshfit::project(basis, fields.col(Eigen::Index(c)));
    etas.row(Eigen::Index(c)) = eta.transpose();
    const Eigen::VectorXd rec = meshfit::reconstruct_linear(basis, eta);
    const double rms_err = std::sqrt((fields.col(Eigen::Index(c)) - rec).squaredNorm() /
                                     double(3 * n));
    const double rms = std::sqrt(fields.col(Eigen::Index(c)).squaredNorm() / double(3 * n));
    report["fields"].push_back({{"file", fs::path(files[c]).filename().string()},
                                {"rms", rms},
                                {"rms_error", rms_err}});
  }
  std::vector<double> sv(basis.singular_values.data(),
                         basis.singular_values.data() + basis.singular_values.size());
  report["singular_values"] = sv;
  std::ofstream out(args.out + "/distill_report.json");
  if (!out) throw std::runtime_error("cannot open for write: " + args.out + "/distill_report.json");
  out << report.dump(2) << "\n";

  std::ofstream cfile(args.out + "/coefficients.json");
  if (!cfile)
    throw std::runtime_error("cannot open for write: " + args.out + "/coefficients.json");
  json cjson;
  for (Eigen::Index r = 0; r < etas.rows(); ++r)
    cjson["eta"].push_back(std::vector<double>(etas.row(r).data(),
                                               etas.row(r).data() + etas.cols()));
  cfile << cjson.dump(2) << "\n";
  return 0;
}

// ---- reconstruct ---------------------------------------------------------------

struct ReconstructArgs {
  std::string basis, model, field, out, coeffs_out;
};

int cmd_reconstruct(const ReconstructArgs& args) {
  const meshfit::LinearOffsetBasis basis = meshfit::load_basis(args.basis);
  const meshfit::ModelBundle bundle = meshfit::load_model(args.model);
  const meshfit::MatX3 coeff = meshfit::load_field(args.field);
  if (coeff.rows() != basis.vertex_count || bundle.mesh.vertex_count() != basis.vertex_count)
    throw std::runtime_error("field size does not match basis");
  // fit outputs coefficients m; the basis lives in displacement space, so
  // convert through the base-mesh normals exactly as distill does
  meshfit::OffsetField field = meshfit::make_offset_field(bundle.mesh, bundle.model.v_base);
  field.coefficients = coeff;
  field.apply_mask();
  const meshfit::MatX3 disp = field.displacements();
  const Eigen::Map<const Eigen::VectorXd> flat(disp.data(), 3 * disp.rows());
  const Eigen::VectorXd eta = meshfit::project(basis, flat);
  const Eigen::VectorXd rec = meshfit::reconstruct_linear(basis, eta);
  meshfit::MatX3 out(coeff.rows(), 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (int c = 0; c < 3; ++c) out(i, c) = rec(3 * i + c);
  meshfit::save_field(args.out, out);
  if (!args.coeffs_out.empty()) {
    json j;
    j["eta"] = std::vector<double>(eta.data(), eta.data() + eta.size());
    std::ofstream file(args.coeffs_out);
    if (!file) throw std::runtime_error("cannot open for write: " + args.coeffs_out);
    file << j.dump(2) << "\n";
  }
  return 0;
}

// ---- edit ----------------------------------------------------------------------

struct EditArgs {
  std::string basis, coeffs, set, out;
};

int cmd_edit(const EditArgs& args) {
  const meshfit::LinearOffsetBasis basis = meshfit::load_basis(args.basis);
  const json j = load_json(args.coeffs);
  if (!j.contains("eta")) throw std::invalid_argument("coeffs file missing key: eta");
  std::vector<double> eta_vec;
  if (j.at("eta").empty())
    throw std::invalid_argument("coeffs key eta must be a nonempty array");
  if (j.at("eta").front().is_array())
    eta_vec = j.at("eta").front().get<std::vector<double>>();  // first row of a dataset
  else
    eta_vec = j.at("eta").get<std::vector<double>>();
  if (int(eta_vec.size()) != basis.k_total())
    throw std::invalid_argument("coeffs length does not match basis (key: eta)");

  const size_t eq = args.set.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("invalid --set: expected K=VALUE");
  const int index = std::stoi(args.set.substr(0, eq));
  const double value = std::stod(args.set.substr(eq + 1));

  const Eigen::Map<const Eigen::VectorXd> eta(eta_vec.data(), Eigen::Index(eta_vec.size()));
  const meshfit::CoefficientEdit edited = meshfit::edit_coefficient(basis, eta, index, value);
  meshfit::MatX3 out(basis.vertex_count, 3);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (int c = 0; c < 3; ++c) out(i, c) = edited.field(3 * i + c);
  meshfit::save_field(args.out, out);
  return 0;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string mesh_a, mesh_b, pred, target, out;
  uint64_t seed = 0;
  bool timestamps = false;
};

int cmd_eval(const EvalArgs& args) {
  meshfit::EvalReport report;
  report.seed = args.seed;
  json cfg;
  cfg["mesh_a"] = args.mesh_a;
  cfg["mesh_b"] = args.mesh_b;
  cfg["pred"] = args.pred;
  cfg["target"] = args.target;
  report.config_hash = meshfit::fnv1a_hex(canonical_dump(cfg));
  if (!args.mesh_a.empty() || !args.mesh_b.empty()) {
    if (args.mesh_a.empty() || args.mesh_b.empty())
      throw std::invalid_argument("both --mesh-a and --mesh-b are required together");
    const meshfit::TriMesh a = meshfit::load_obj(args.mesh_a);
    const meshfit::TriMesh b = meshfit::load_obj(args.mesh_b);
    report.metrics["chamfer3d"] = meshfit::chamfer3d(a.vertices, b.vertices);
  }
  if (!args.pred.empty() || !args.target.empty()) {
    if (args.pred.empty() || args.target.empty())
      throw std::invalid_argument("both --pred and --target are required together");
    const meshfit::SilhouetteImage pred = meshfit::load_pgm(args.pred);
    const meshfit::SilhouetteImage target = meshfit::load_pgm(args.target);
    report.metrics["iou"] = meshfit::compute_iou(pred, target, 0.5);
  }
  if (report.metrics.empty())
    throw std::invalid_argument("nothing to evaluate: pass meshes and/or masks");
  if (args.timestamps) {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    report.timestamp = buf;
  }
  report.save(args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"silhouette-driven head-offset fitting pipeline"};
  app.require_subcommand(1);
  int threads = 0;  // accepted for interface stability; compute is single-threaded
  app.add_option("--threads", threads, "worker threads (0 = auto)")
      ->check(CLI::NonNegativeNumber);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic fitting problem");
  synth_cmd->add_option("--out", synth.out)->required();
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--size", synth.size);
  synth_cmd->add_option("--subdiv", synth.subdivisions);
  synth_cmd->add_option("--rms", synth.rms_fraction);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "optimize offsets against silhouettes");
  fit_cmd->add_option("--model", fit.model)->required();
  fit_cmd->add_option("--params", fit.params)->required();
  fit_cmd->add_option("--mask-full", fit.mask_full)->required();
  fit_cmd->add_option("--mask-hair", fit.mask_hair)->required();
  fit_cmd->add_option("--camera", fit.camera)->required();
  fit_cmd->add_option("--config", fit.config);
  fit_cmd->add_option("--out", fit.out)->required();
  fit_cmd->add_option("--log", fit.log);
  auto* fit_seed = fit_cmd->add_option("--seed", fit.seed);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "render a soft silhouette");
  render_cmd->add_option("--model", render.model)->required();
  render_cmd->add_option("--params", render.params)->required();
  render_cmd->add_option("--field", render.field);
  render_cmd->add_option("--camera", render.camera)->required();
  render_cmd->add_option("--out", render.out)->required();
  render_cmd->add_option("--size", render.size);
  render_cmd->add_option("--sigma", render.sigma);
  render_cmd->add_option("--epsilon", render.epsilon);
  render_cmd->add_option("--subset", render.subset);
  render_cmd->add_option("--field-kind", render.field_kind);

  DistillArgs distill;
  auto* distill_cmd = app.add_subcommand("distill", "fit a PCA basis over offset fields");
  distill_cmd->add_option("--model", distill.model)->required();
  distill_cmd->add_option("--fields", distill.fields)->required();
  distill_cmd->add_option("--k-hair", distill.k_hair);
  distill_cmd->add_option("--k-neck", distill.k_neck);
  distill_cmd->add_option("--out", distill.out)->required();
  distill_cmd->add_flag("--no-center", distill.no_center);

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "project a field onto a basis and back");
  rec_cmd->add_option("--basis", rec.basis)->required();
  rec_cmd->add_option("--model", rec.model)->required();
  rec_cmd->add_option("--field", rec.field)->required();
  rec_cmd->add_option("--out", rec.out)->required();
  rec_cmd->add_option("--coeffs-out", rec.coeffs_out);

  EditArgs edit;
  auto* edit_cmd = app.add_subcommand("edit", "set one basis coefficient and reconstruct");
  edit_cmd->add_option("--basis", edit.basis)->required();
  edit_cmd->add_option("--coeffs", edit.coeffs)->required();
  edit_cmd->add_option("--set", edit.set)->required();
  edit_cmd->add_option("--out", edit.out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "compare meshes and/or masks");
  eval_cmd->add_option("--mesh-a", eval.mesh_a);
  eval_cmd->add_option("--mesh-b", eval.mesh_b);
  eval_cmd->add_option("--pred", eval.pred);
  eval_cmd->add_option("--target", eval.target);
  eval_cmd->add_option("--out", eval.out)->required();
  eval_cmd->add_option("--seed", eval.seed);
  eval_cmd->add_flag("--timestamps", eval.timestamps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are configuration errors
  }

  try {
    if (*synth_cmd) return cmd_synth(synth);
    if (*fit_cmd) {
      fit.seed_set = fit_seed->count() > 0;
      return cmd_fit(fit);
    }
    if (*render_cmd) return cmd_render(render);
    if (*distill_cmd) return cmd_distill(distill);
    if (*rec_cmd) return cmd_reconstruct(rec);
    if (*edit_cmd) return cmd_edit(edit);
    if (*eval_cmd) return cmd_eval(eval);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
