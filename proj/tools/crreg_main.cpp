// crreg command-line tool: register, apply, similarity, synth, eval.
// Links the public C API only.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crreg.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 2;
constexpr int kExitDiverged = 3;

struct VolumeDeleter {
  void operator()(crreg_volume* v) const { crreg_volume_free(v); }
};
using VolumePtr = std::unique_ptr<crreg_volume, VolumeDeleter>;

struct ResultDeleter {
  void operator()(crreg_result* r) const { crreg_result_free(r); }
};
using ResultPtr = std::unique_ptr<crreg_result, ResultDeleter>;

[[noreturn]] void die(crreg_status st, const std::string& context) {
  std::fprintf(stderr, "crreg: %s: %s\n", context.c_str(), crreg_last_error());
  std::exit(st == CRREG_ERR_NO_OVERLAP ? kExitDiverged : kExitError);
}

void check(crreg_status st, const std::string& context) {
  if (st != CRREG_OK) die(st, context);
}

VolumePtr read_volume(const std::string& path) {
  crreg_volume* v = nullptr;
  check(crreg_volume_read(path.c_str(), &v), "reading " + path);
  return VolumePtr(v);
}

std::vector<int> parse_int_csv(const std::string& s, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      std::fprintf(stderr, "crreg: invalid %s list '%s'\n", what.c_str(), s.c_str());
      std::exit(kExitError);
    }
  }
  if (out.empty()) {
    std::fprintf(stderr, "crreg: empty %s list\n", what.c_str());
    std::exit(kExitError);
  }
  return out;
}

void write_trace_csv(const std::string& path, const crreg_result* res) {
  std::ofstream f(path);
  if (!f) {
    std::fprintf(stderr, "crreg: cannot write %s\n", path.c_str());
    std::exit(kExitError);
  }
  f << "scale_factor,iteration,loss,valid_fraction\n";
  char buf[128];
  for (int s = 0; s < crreg_result_n_scales(res); ++s) {
    const int len = crreg_result_trace_len(res, s);
    std::vector<double> loss(len), vf(len);
    crreg_result_trace(res, s, loss.data(), vf.data());
    for (int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n",
                    crreg_result_scale_factor(res, s), i, loss[i], vf[i]);
      f << buf;
    }
  }
}

int cmd_register(const std::string& moving_path, const std::string& fixed_path,
                 const std::string& metric, const std::string& out_affine,
                 const std::string& out_warped, const std::string& init_path,
                 const std::string& scales_csv, const std::string& iters_csv,
                 int bins, double bandwidth_ratio, int patch, double lr,
                 const std::string& optimizer, const std::string& trace_path,
                 int threads) {
  VolumePtr moving = read_volume(moving_path);
  VolumePtr fixed = read_volume(fixed_path);

  crreg_register_opts opts;
  crreg_register_opts_default(&opts);
  const auto scales = parse_int_csv(scales_csv, "scales");
  const auto iters = parse_int_csv(iters_csv, "iters");
  if (scales.size() != iters.size() || scales.size() > CRREG_MAX_SCALES) {
    std::fprintf(stderr, "crreg: --scales and --iters must have equal length\n");
    return kExitError;
  }
  opts.n_scales = static_cast<int>(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    opts.scales[i] = scales[i];
    opts.iters[i] = iters[i];
  }
  opts.metric = metric == "mi" ? CRREG_METRIC_MI : CRREG_METRIC_CR;
  opts.bins = bins;
  opts.bandwidth_ratio = bandwidth_ratio;
  opts.patch_size = patch;
  opts.lr = lr;
  opts.optimizer = optimizer == "sgd" ? CRREG_OPT_SGD : CRREG_OPT_ADAM;
  opts.threads = threads;

  crreg_params init;
  crreg_params_identity(&init);
  if (!init_path.empty())
    check(crreg_affine_load(init_path.c_str(), &init), "reading " + init_path);

  crreg_params result;
  crreg_result* raw_res = nullptr;
  check(crreg_register_run(moving.get(), fixed.get(), &init, &opts, &result, &raw_res),
        "registration");
  ResultPtr res(raw_res);

  check(crreg_affine_save(out_affine.c_str(), &result, fixed.get(), moving.get(),
                          metric.c_str(), opts.scales, opts.iters, opts.n_scales, ""),
        "writing " + out_affine);
  if (!trace_path.empty()) write_trace_csv(trace_path, res.get());
  if (!out_warped.empty()) {
    crreg_volume* warped = nullptr;
    check(crreg_warp(moving.get(), fixed.get(), &result, CRREG_INTERP_TRILINEAR,
                     &warped, nullptr),
          "warping");
    VolumePtr w(warped);
    check(crreg_volume_write(w.get(), out_warped.c_str(), CRREG_DT_FLOAT32),
          "writing " + out_warped);
  }
  return kExitOk;
}

int cmd_apply(const std::string& affine_path, const std::string& moving_path,
              const std::string& fixed_path, const std::string& out_path,
              const std::string& interp) {
  crreg_params p;
  check(crreg_affine_load(affine_path.c_str(), &p), "reading " + affine_path);
  VolumePtr moving = read_volume(moving_path);
  VolumePtr fixed = read_volume(fixed_path);
  const bool nearest = interp == "nearest";
  crreg_volume* warped = nullptr;
  check(crreg_warp(moving.get(), fixed.get(), &p,
                   nearest ? CRREG_INTERP_NEAREST : CRREG_INTERP_TRILINEAR, &warped,
                   nullptr),
        "warping");
  VolumePtr w(warped);
  check(crreg_volume_write(w.get(), out_path.c_str(),
                           nearest ? CRREG_DT_INT16 : CRREG_DT_FLOAT32),
        "writing " + out_path);
  return kExitOk;
}

int cmd_similarity(const std::string& moving_path, const std::string& fixed_path,
                   const std::string& metric, const std::string& affine_path, int bins,
                   double bandwidth_ratio) {
  VolumePtr moving = read_volume(moving_path);
  VolumePtr fixed = read_volume(fixed_path);
  crreg_params p;
  crreg_params_identity(&p);
  if (!affine_path.empty())
    check(crreg_affine_load(affine_path.c_str(), &p), "reading " + affine_path);
  int m = CRREG_SIM_CR;
  if (metric == "cr-discrete") m = CRREG_SIM_CR_DISCRETE;
  else if (metric == "mi") m = CRREG_SIM_MI;
  double value = 0;
  size_t n_eff = 0;
  check(crreg_similarity(m, moving.get(), fixed.get(), &p, bins, bandwidth_ratio,
                         &value, &n_eff),
        "similarity");
  std::printf("%s=%.17g n_effective=%zu\n", metric.c_str(), value, n_eff);
  return kExitOk;
}

int cmd_synth(std::uint64_t seed, const std::string& dims_csv,
              const std::string& out_dir, const std::string& spacing_csv, int n_blobs,
              double noise_sigma, double blur_sigma, double max_rot_deg,
              double max_trans, double scale_lo, double scale_hi, double max_shear) {
  const auto dims = parse_int_csv(dims_csv, "dims");
  if (dims.size() != 3) {
    std::fprintf(stderr, "crreg: --dims must be X,Y,Z\n");
    return kExitError;
  }
  std::vector<double> spacing{2.0, 2.0, 2.0};
  if (!spacing_csv.empty()) {
    spacing.clear();
    std::stringstream ss(spacing_csv);
    std::string item;
    while (std::getline(ss, item, ',')) spacing.push_back(std::stod(item));
    if (spacing.size() != 3) {
      std::fprintf(stderr, "crreg: --spacing must be SX,SY,SZ\n");
      return kExitError;
    }
  }
  const int d[3] = {dims[0], dims[1], dims[2]};
  const double sp[3] = {spacing[0], spacing[1], spacing[2]};
  crreg_volume *ct = nullptr, *pet = nullptr, *labels = nullptr;
  check(crreg_phantom(seed, d, sp, n_blobs, noise_sigma, blur_sigma, &ct, &pet,
                      &labels),
        "phantom generation");
  VolumePtr ctp(ct), petp(pet), labp(labels);

  // Quantize PET to float32 precision up front so pet_moved (warped from the
  // in-memory volume) is bit-reproducible by `apply` run on the written
  // pet.nii.gz, whose payload is float32.
  {
    const double* src = crreg_volume_data(petp.get());
    std::vector<double> q(crreg_volume_voxels(petp.get()));
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<float>(src[i]);
    crreg_volume* petq = nullptr;
    check(crreg_volume_create(d, sp, q.data(), &petq), "phantom generation");
    petp.reset(petq);
  }

  crreg_params truth;
  check(crreg_random_affine(seed, max_rot_deg * M_PI / 180.0, max_trans, scale_lo,
                            scale_hi, max_shear, &truth),
        "transform sampling");

  crreg_volume* pet_moved = nullptr;
  check(crreg_warp(petp.get(), ctp.get(), &truth, CRREG_INTERP_TRILINEAR, &pet_moved,
                   nullptr),
        "warping");
  VolumePtr pmp(pet_moved);

  const std::string base = out_dir + "/";
  check(crreg_volume_write(ctp.get(), (base + "ct.nii.gz").c_str(), CRREG_DT_FLOAT32),
        "writing ct");
  check(crreg_volume_write(petp.get(), (base + "pet.nii.gz").c_str(), CRREG_DT_FLOAT32),
        "writing pet");
  check(crreg_volume_write(labp.get(), (base + "labels.nii.gz").c_str(), CRREG_DT_INT16),
        "writing labels");
  check(crreg_volume_write(pmp.get(), (base + "pet_moved.nii.gz").c_str(),
                           CRREG_DT_FLOAT32),
        "writing pet_moved");
  char seed_str[32];
  std::snprintf(seed_str, sizeof(seed_str), "%" PRIu64, seed);
  check(crreg_affine_save((base + "truth.affine").c_str(), &truth, ctp.get(),
                          petp.get(), "synthetic-truth", nullptr, nullptr, 0, seed_str),
        "writing truth.affine");
  return kExitOk;
}

int cmd_eval(const std::string& a_path, const std::string& b_path,
             const std::string& out_path) {
  VolumePtr a = read_volume(a_path);
  VolumePtr b = read_volume(b_path);
  constexpr int kMax = 4096;
  std::vector<int> labels(kMax);
  std::vector<double> dsc(kMax);
  int n = 0;
  double mean = 0;
  check(crreg_dice(a.get(), b.get(), labels.data(), dsc.data(), kMax, &n, &mean),
        "dice");
  std::ofstream f(out_path);
  if (!f) {
    std::fprintf(stderr, "crreg: cannot write %s\n", out_path.c_str());
    return kExitError;
  }
  f << "label_id,dsc\n";
  char buf[64];
  for (int i = 0; i < std::min(n, kMax); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", labels[i], dsc[i]);
    f << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.17g\n", mean);
  f << buf;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal affine registration (Parzen correlation ratio)"};
  app.require_subcommand(1);

  // register
  auto* reg = app.add_subcommand("register", "Register moving onto fixed");
  std::string moving, fixed, metric = "cr", out_affine, out_warped, init_path;
  std::string scales = "16,8,4,2,1", iters = "100,100,120,140,160";
  std::string optimizer = "adam", trace_path;
  int bins = 32, patch = 16, threads = 0;
  double bandwidth_ratio = 0.5, lr = 0.01;
  reg->add_option("--moving", moving)->required();
  reg->add_option("--fixed", fixed)->required();
  reg->add_option("--metric", metric)->check(CLI::IsMember({"cr", "mi"}));
  reg->add_option("--out-affine", out_affine)->required();
  reg->add_option("--out-warped", out_warped);
  reg->add_option("--init", init_path);
  reg->add_option("--scales", scales);
  reg->add_option("--iters", iters);
  reg->add_option("--bins", bins);
  reg->add_option("--bandwidth-ratio", bandwidth_ratio);
  reg->add_option("--patch", patch);
  reg->add_option("--lr", lr);
  reg->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  reg->add_option("--trace", trace_path);
  reg->add_option("--threads", threads);

  // apply
  auto* apply = app.add_subcommand("apply", "Apply an affine document");
  std::string a_affine, a_moving, a_fixed, a_out, a_interp = "trilinear";
  apply->add_option("--affine", a_affine)->required();
  apply->add_option("--moving", a_moving)->required();
  apply->add_option("--fixed", a_fixed)->required();
  apply->add_option("--out", a_out)->required();
  apply->add_option("--interp", a_interp)
      ->check(CLI::IsMember({"trilinear", "nearest"}));

  // similarity
  auto* sim = app.add_subcommand("similarity", "Evaluate a similarity metric");
  std::string s_moving, s_fixed, s_metric = "cr", s_affine;
  int s_bins = 32;
  double s_bw = 0.5;
  sim->add_option("--moving", s_moving)->required();
  sim->add_option("--fixed", s_fixed)->required();
  sim->add_option("--metric", s_metric)
      ->check(CLI::IsMember({"cr", "cr-discrete", "mi"}));
  sim->add_option("--affine", s_affine);
  sim->add_option("--bins", s_bins);
  sim->add_option("--bandwidth-ratio", s_bw);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic phantom fixture");
  std::uint64_t seed = 0;
  std::string dims = "64,64,64", out_dir = ".", spacing_csv;
  int n_blobs = 6;
  double noise_sigma = 0.02, blur_sigma = 1.5;
  double max_rot_deg = 15.0, max_trans = 0.10, scale_lo = 0.9, scale_hi = 1.1,
         max_shear = 0.1;
  synth->add_option("--seed", seed)->required();
  synth->add_option("--dims", dims);
  synth->add_option("--out-dir", out_dir)->required();
  synth->add_option("--spacing", spacing_csv);
  synth->add_option("--n-blobs", n_blobs);
  synth->add_option("--noise-sigma", noise_sigma);
  synth->add_option("--blur-sigma", blur_sigma);
  synth->add_option("--max-rot-deg", max_rot_deg);
  synth->add_option("--max-trans", max_trans);
  synth->add_option("--scale-lo", scale_lo);
  synth->add_option("--scale-hi", scale_hi);
  synth->add_option("--max-shear", max_shear);

  // eval
  auto* eval = app.add_subcommand("eval", "Dice evaluation of two label maps");
  std::string e_a, e_b, e_out;
  eval->add_option("--labels-a", e_a)->required();
  eval->add_option("--labels-b", e_b)->required();
  eval->add_option("--out", e_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitError;
  }

  if (reg->parsed())
    return cmd_register(moving, fixed, metric, out_affine, out_warped, init_path,
                        scales, iters, bins, bandwidth_ratio, patch, lr, optimizer,
                        trace_path, threads);
  if (apply->parsed()) return cmd_apply(a_affine, a_moving, a_fixed, a_out, a_interp);
  if (sim->parsed())
    return cmd_similarity(s_moving, s_fixed, s_metric, s_affine, s_bins, s_bw);
  if (synth->parsed())
    return cmd_synth(seed, dims, out_dir, spacing_csv, n_blobs, noise_sigma,
                     blur_sigma, max_rot_deg, max_trans, scale_lo, scale_hi,
                     max_shear);
  if (eval->parsed()) return cmd_eval(e_a, e_b, e_out);
  return kExitError;
}
