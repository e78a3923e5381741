#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "volscan/common.hpp"

using namespace volscan;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
};

// Runs the installed binary; stdout captured, stderr passed through.
CliResult run_cli(const std::string& args) {
  const fs::path out_file = fs::temp_directory_path() / "volscan_cli_stdout.txt";
  const std::string cmd = std::string(VOLSCAN_BIN) + " " + args + " > " + out_file.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (fs::exists(out_file)) {
    r.out = read_file(out_file);
    fs::remove(out_file);
  }
  return r;
}

fs::path temp_dir(const char* tag) {
  const fs::path dir = fs::temp_directory_path() / (std::string("volscan_cli_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("gen is deterministic per seed and diverges across seeds") {
  const auto a = temp_dir("gen_a"), b = temp_dir("gen_b"), c = temp_dir("gen_c");
  const std::string flags = " --counts 2,2,1,1,1,1 --dims 8,16,16 --lesion-frac 0.25 "
                            "--contrast 0.4 ";
  CHECK(run_cli("gen --out " + a.string() + flags + "--seed 7").exit_code == 0);
  CHECK(run_cli("gen --out " + b.string() + flags + "--seed 7").exit_code == 0);
  CHECK(run_cli("gen --out " + c.string() + flags + "--seed 8").exit_code == 0);
  CHECK(read_file(a / "manifest.csv") == read_file(b / "manifest.csv"));
  CHECK(read_file(a / "vol_00000.volb") == read_file(b / "vol_00000.volb"));
  CHECK(read_file(a / "vol_00000.volb") != read_file(c / "vol_00000.volb"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("gen rejects a zero lesion fraction with exit code 1") {
  const auto dir = temp_dir("gen_bad");
  const auto r = run_cli("gen --out " + dir.string() +
                         " --n-pos 2 --n-neg 2 --dims 8,16,16 --lesion-frac 0 --seed 1");
  CHECK(r.exit_code == 1);
  CHECK(!fs::exists(dir / "manifest.csv"));
  fs::remove_all(dir);
}

TEST_CASE("unknown flags and unknown models exit with code 1") {
  CHECK(run_cli("gen --out /tmp/x --bogus-flag 3").exit_code == 1);
  const auto dir = temp_dir("train_bad");
  CHECK(run_cli("train --model not-a-model --manifest m.csv --out " +
                (dir / "ck.vsck").string())
            .exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("train/eval round trip through the CLI") {
  const auto dir = temp_dir("pipeline");
  REQUIRE(run_cli("gen --out " + dir.string() +
                  " --counts 4,4,2,2,2,2 --dims 8,16,16 --lesion-frac 0.5 --contrast 0.6 "
                  "--noise 0.03 --seed 11")
              .exit_code == 0);
  const std::string manifest = (dir / "manifest.csv").string();
  const std::string ckpt = (dir / "ck.vsck").string();
  REQUIRE(run_cli("train --model mil-mean --manifest " + manifest + " --out " + ckpt +
                  " --epochs 2 --batch 4 --seed 1")
              .exit_code == 0);
  CHECK(fs::exists(ckpt));
  const std::string history = read_file(dir / "ck.vsck.history.csv");
  CHECK(history.find("epoch,train_loss,val_auc,elapsed_s\n") == 0);
  CHECK(std::count(history.begin(), history.end(), '\n') <= 3);  // header + <=2 epochs

  const std::string report = (dir / "report.csv").string();
  REQUIRE(run_cli("eval --checkpoint " + ckpt + " --manifest " + manifest + " --out " + report +
                  " --roc-svg " + (dir / "roc.svg").string())
              .exit_code == 0);
  const std::string body = read_file(report);
  CHECK(body.find("model,auc,threshold,sensitivity,specificity,f1,n_pos,n_neg\n") == 0);
  CHECK(body.find("mil-mean,") != std::string::npos);
  const std::string svg = read_file(dir / "roc.svg");
  CHECK(svg.find("<polyline") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("eval on a manifest without the requested split exits with 1") {
  const auto dir = temp_dir("eval_missing");
  REQUIRE(run_cli("gen --out " + dir.string() +
                  " --counts 3,3,2,2,0,0 --dims 8,16,16 --lesion-frac 0.5 --contrast 0.6 "
                  "--seed 3")
              .exit_code == 0);
  const std::string manifest = (dir / "manifest.csv").string();
  const std::string ckpt = (dir / "ck.vsck").string();
  REQUIRE(run_cli("train --model cnn3d --manifest " + manifest + " --out " + ckpt +
                  " --epochs 1 --batch 4 --seed 1")
              .exit_code == 0);
  CHECK(run_cli("eval --checkpoint " + ckpt + " --manifest " + manifest + " --split test --out " +
                (dir / "r.csv").string())
            .exit_code == 1);
  fs::remove_all(dir);
}

TEST_CASE("missing input files exit with code 2 and leave no partial outputs") {
  const auto dir = temp_dir("io_err");
  const auto r = run_cli("eval --checkpoint " + (dir / "missing.vsck").string() + " --manifest " +
                         (dir / "missing.csv").string() + " --out " + (dir / "r.csv").string());
  CHECK(r.exit_code == 2);
  CHECK(!fs::exists(dir / "r.csv"));
  fs::remove_all(dir);
}

TEST_CASE("compare --dry-run emits the five-model parameter table in display order") {
  const auto dir = temp_dir("dry");
  const std::string out = (dir / "compare.csv").string();
  REQUIRE(run_cli("compare --dry-run --dims 35,128,128 --out " + out).exit_code == 0);
  const std::string body = read_file(out);
  CHECK(body.find("model,kernels,parameters\n") == 0);
  const std::size_t r1 = body.find("mil-max,64,1007553");
  const std::size_t r2 = body.find("mil-mean,64,1007553");
  const std::size_t r3 = body.find("mil-product,64,1007553");
  const std::size_t r4 = body.find("cnn3d,36,966133");
  const std::size_t r5 = body.find("convlstm,32,900257");
  REQUIRE(r1 != std::string::npos);
  CHECK(r1 < r2);
  CHECK(r2 < r3);
  CHECK(r3 < r4);
  CHECK(r4 < r5);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck subcommand honours the op filter") {
  const auto r = run_cli("gradcheck --ops conv2d,sigmoid");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("conv2d") != std::string::npos);
  CHECK(r.out.find("sigmoid") != std::string::npos);
  CHECK(r.out.find("conv3d") == std::string::npos);
  CHECK(run_cli("gradcheck --ops no-such-op").exit_code == 1);
}

TEST_CASE("params subcommand prints the manifest and total") {
  const auto r = run_cli("params --model convlstm --dims 35,128,128");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("u1.conv_a.w") != std::string::npos);
  CHECK(r.out.find("total 900257") != std::string::npos);
}
