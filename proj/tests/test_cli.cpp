#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "stentfit/pipeline.hpp"
#include "support.hpp"

using namespace stentfit;
using namespace stentfit::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kData = STENTFIT_DATA_DIR;

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult cli(const std::string& args) {
  const fs::path dir = scratch_dir("cli-io");
  const std::string cmd = std::string("'") + STENTFIT_CLI + "' " + args + " >'" + (dir / "out").string() + "' 2>'" +
                          (dir / "err").string() + "'";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = detail::read_file(dir / "out");
  r.err = detail::read_file(dir / "err");
  return r;
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
  const CliResult r = cli("frobnicate");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("segment --volume").code, 2);
}

TEST(Cli, HelpExitsZero) {
  const CliResult r = cli("--help");
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"phantom", "segment", "skeleton", "simulate", "measure", "pipeline", "serve"})
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST(Cli, PhantomMatchesLibrary) {
  const fs::path dir = scratch_dir("cli-phantom");
  const CliResult r = cli("phantom --spec '" + (kData / "phantom64.json").string() + "' --out '" + (dir / "p").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "p.svh"));
  ASSERT_TRUE(fs::exists(dir / "p.svr"));
  ASSERT_TRUE(fs::exists(dir / "p.truth.json"));
  EXPECT_EQ(detail::read_file(dir / "p.svr"), detail::read_file(kData / "phantom64.svr"));
  EXPECT_EQ(read_json_file(dir / "p.truth.json"), read_json_file(kData / "phantom64.truth.json"));
}

TEST(Cli, MissingFileIsDomainError) {
  const CliResult r = cli("segment --volume /nonexistent/v.svh --seed 1 2 3 --out /tmp/never.svh");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("IoFailure"), std::string::npos) << r.err;
  const CliResult bad = cli("pipeline --config /nonexistent.cfg");
  EXPECT_EQ(bad.code, 1);
}

TEST(Cli, StagewiseRunMatchesPipeline) {
  const fs::path dir = scratch_dir("cli-stages");
  const std::string vol = (kData / "phantom64.svh").string();
  const std::string cfg = (kData / "full.cfg").string();
  ASSERT_EQ(cli("segment --volume '" + vol + "' --seed 32 32 55.5 --out '" + (dir / "mask.svh").string() + "'").code, 0);
  ASSERT_EQ(cli("skeleton --mask '" + (dir / "mask.svh").string() + "' --config '" + cfg + "' --out '" +
                (dir / "cl.json").string() + "'")
                .code,
            0);
  const CliResult sim = cli("simulate --mask '" + (dir / "mask.svh").string() + "' --centerlines '" +
                            (dir / "cl.json").string() + "' --config '" + cfg + "' --expand --out '" +
                            (dir / "sim").string() + "'");
  ASSERT_EQ(sim.code, 0) << sim.err;
  ASSERT_TRUE(fs::exists(dir / "sim" / artifact::kMeshExpandedJson));
  const CliResult m = cli("measure --mesh '" + (dir / "sim" / artifact::kMeshExpandedJson).string() +
                          "' --centerlines '" + (dir / "cl.json").string() + "' --landmarks '" + cfg +
                          "' --markers '" + cfg + "' --tolerance 1.7320508075688772 --out '" + (dir / "report.json").string() + "'");
  ASSERT_EQ(m.code, 0) << m.err;

  PipelineConfig c = load_pipeline_config(kData / "full.cfg");
  c.output_dir = dir / "pipe";
  const PipelineResult ref = run_pipeline(c);
  const Json got = read_json_file(dir / "report.json");
  EXPECT_EQ(got["diameters"], report_json(ref)["diameters"]);
  EXPECT_EQ(got["covered_ostia"], Json::array({"renal_left"}));
}

TEST(Cli, PipelinePrintsReport) {
  const fs::path dir = scratch_dir("cli-pipe");
  Json cfg = read_json_file(kData / "full.cfg");
  cfg["volume"] = (kData / "phantom64.svh").string();
  cfg["output_dir"] = (dir / "out").string();
  write_json_file(dir / "c.cfg", cfg);
  const CliResult r = cli("pipeline --config '" + (dir / "c.cfg").string() + "'");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out), read_json_file(dir / "out" / artifact::kReport));
  EXPECT_NE(r.err.find("measuring"), std::string::npos);
}
