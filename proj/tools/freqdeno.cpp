// freqdeno: command-line front end for the transform-domain denoiser.

#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "freqdeno/cli.hpp"

#ifndef FREQDENO_GOLDEN_DIR
#define FREQDENO_GOLDEN_DIR "tests/golden"
#endif

namespace {

using freqdeno::cli::CliConfig;

struct ToggleFlags {
  CLI::Option* exchange = nullptr;
  CLI::Option* align = nullptr;
  std::string sqrt_scaling = "group";
};

ToggleFlags add_module_flags(CLI::App& sub, CliConfig& c, std::size_t default_stride) {
  ToggleFlags f;
  c.deno.stride = default_stride;
  sub.add_option("--stride", c.deno.stride, "Band partition stride (h = w = stride)")->capture_default_str();
  sub.add_flag("--refine-amp,!--no-refine-amp", c.deno.refine_amplitude, "Gate the amplitude spectrum (default on)");
  sub.add_flag("--refine-phase,!--no-refine-phase", c.deno.refine_phase, "Gate the phase spectrum (default on)");
  f.exchange = sub.add_flag("--token-exchange,!--no-token-exchange", c.deno.token_exchange,
                            "Exchange tokens between amplitude and phase branches (default on)");
  sub.add_flag("--phase-decouple,!--no-phase-decouple", c.deno.phase_decouple, "Represent phase as (cos, sin) (default on)");
  f.align = sub.add_flag("--phase-align,!--no-phase-align", c.deno.phase_align,
                         "Renormalise the gated (cos, sin) pair (default on)");
  sub.add_option("--sqrt-scaling", f.sqrt_scaling, "Attention logit scaling: group count or token count")
      ->check(CLI::IsMember({"group", "token"}))
      ->capture_default_str();
  sub.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  return f;
}

// Toggles the user did not set explicitly follow the ones they did.
void resolve_toggles(CliConfig& c, const ToggleFlags& f) {
  if (f.exchange->count() == 0 && !(c.deno.refine_amplitude && c.deno.refine_phase)) c.deno.token_exchange = false;
  if (f.align->count() == 0 && !c.deno.phase_decouple) c.deno.phase_align = false;
  c.deno.sqrt_scaling =
      f.sqrt_scaling == "token" ? freqdeno::SqrtScaling::token_count : freqdeno::SqrtScaling::group_count;
}

void add_training_flags(CLI::App& sub, CliConfig& c, std::string& task) {
  sub.add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  sub.add_option("--lr", c.lr, "SGD learning rate")->capture_default_str();
  sub.add_option("--batch", c.batch, "Mini-batch size")->capture_default_str();
  sub.add_option("--scenes", c.scenes, "Number of synthetic scenes")->capture_default_str();
  sub.add_option("--size", c.size, "Scene height and width")->capture_default_str();
  sub.add_option("--looks", c.looks, "Speckle looks L")->capture_default_str();
  sub.add_option("--channels", c.channels, "ToyNet feature channels")->capture_default_str();
  sub.add_option("--seeds", c.seeds, "Number of seeds (seed, seed+1, ...)")->capture_default_str();
  sub.add_option("--task", task, "denoise or detect")->check(CLI::IsMember({"denoise", "detect"}))->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freqdeno: transform-domain feature denoising"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FREQDENO_VERSION);

  std::map<std::string, CliConfig> cfg;
  std::map<std::string, ToggleFlags> toggles;
  std::map<std::string, std::string> tasks;

  auto* denoise = app.add_subcommand("denoise", "Run the denoiser on a C x H x W TensorFile");
  {
    auto& c = cfg["denoise"];
    toggles["denoise"] = add_module_flags(*denoise, c, freqdeno::kDefaultStride);
    denoise->add_option("input", c.input, "Input TensorFile")->required();
    denoise->add_option("--out", c.out, "Output directory")->capture_default_str();
    denoise->add_option("--params-dir", c.params_dir, "Directory of <param>.fdt files");
    denoise->add_flag("--identity-gates", c.identity_gates, "Force every gate to 1");
  }

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every adjoint");
  {
    auto& c = cfg["gradcheck"];
    toggles["gradcheck"] = add_module_flags(*gradcheck, c, 4);
    gradcheck->add_option("--channels", c.check_channels, "Channels of the check input")->capture_default_str();
    gradcheck->add_option("--size", c.check_size, "Height and width of the check input")->capture_default_str();
    gradcheck->add_option("--tolerance", c.tolerance, "Relative tolerance for module checks")->capture_default_str();
    gradcheck->add_option("--corrupt-adjoint", c.corrupt_adjoint, "Test hook: corrupt one primitive's adjoint")
        ->group("");
  }

  auto* experiment = app.add_subcommand("experiment", "Train ToyNet on synthetic speckle scenes");
  {
    auto& c = cfg["experiment"];
    toggles["experiment"] = add_module_flags(*experiment, c, freqdeno::kDefaultStride);
    add_training_flags(*experiment, c, tasks["experiment"] = "denoise");
    experiment->add_option("--out", c.out, "Output directory")->capture_default_str();
  }

  auto* sweep = app.add_subcommand("sweep", "Ablation sweep over one table's rows");
  {
    auto& c = cfg["sweep"];
    toggles["sweep"] = add_module_flags(*sweep, c, freqdeno::kDefaultStride);
    add_training_flags(*sweep, c, tasks["sweep"] = "denoise");
    sweep->add_option("--axis", c.axis, "stride | refine | exchange | phase")
        ->check(CLI::IsMember({"stride", "refine", "exchange", "phase"}))
        ->capture_default_str();
    sweep->add_option("--out", c.out, "Output directory")->capture_default_str();
  }

  auto* selftest = app.add_subcommand("selftest", "Fast invariant suite and golden-file conformance");
  {
    auto& c = cfg["selftest"];
    c.golden_dir = FREQDENO_GOLDEN_DIR;
    selftest->add_option("--golden-dir", c.golden_dir, "Directory with golden files")->capture_default_str();
    selftest->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  }

  auto* export_maps = app.add_subcommand("export-maps", "Write the amplitude and phase gates");
  {
    auto& c = cfg["export-maps"];
    toggles["export-maps"] = add_module_flags(*export_maps, c, freqdeno::kDefaultStride);
    export_maps->add_option("input", c.input, "Input TensorFile")->required();
    export_maps->add_option("--out", c.out, "Output directory")->capture_default_str();
    export_maps->add_option("--params-dir", c.params_dir, "Directory of <param>.fdt files");
    export_maps->add_flag("--identity-gates", c.identity_gates, "Force every gate to 1");
  }

  std::filesystem::path diff_a, diff_b;
  double diff_tol = 0.0;
  auto* diff = app.add_subcommand("diff", "Compare two TensorFiles");
  diff->add_option("a", diff_a, "First TensorFile")->required();
  diff->add_option("b", diff_b, "Second TensorFile")->required();
  diff->add_option("--tolerance", diff_tol, "Maximum allowed absolute difference")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : freqdeno::cli::kConfigError;
  }

  using namespace freqdeno::cli;
  auto run = [&](const std::string& name, auto&& fn) {
    auto& c = cfg[name];
    c.command = name;
    if (auto it = toggles.find(name); it != toggles.end()) resolve_toggles(c, it->second);
    if (auto it = tasks.find(name); it != tasks.end())
      c.task = it->second == "detect" ? freqdeno::Task::detect : freqdeno::Task::denoise;
    return guarded([&] { return fn(c); }, std::cerr);
  };

  if (*denoise) return run("denoise", [](const CliConfig& c) { return cmd_denoise(c, std::cout); });
  if (*gradcheck) return run("gradcheck", [](const CliConfig& c) { return cmd_gradcheck(c, std::cout); });
  if (*experiment) return run("experiment", [](const CliConfig& c) { return cmd_experiment(c, std::cout); });
  if (*sweep) return run("sweep", [](const CliConfig& c) { return cmd_sweep(c, std::cout); });
  if (*selftest) return run("selftest", [](const CliConfig& c) { return cmd_selftest(c, std::cout); });
  if (*export_maps) return run("export-maps", [](const CliConfig& c) { return cmd_export_maps(c, std::cout); });
  if (*diff) return guarded([&] { return cmd_diff(diff_a, diff_b, diff_tol, std::cout); }, std::cerr);
  return kConfigError;
}
