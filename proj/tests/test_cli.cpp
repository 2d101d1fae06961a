// End-to-end exercises of the installed binary: every check here runs
// `cvloc` as a subprocess, the way an operator would.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;  // stdout + stderr
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const fs::path log = fs::temp_directory_path() / ("cvloc_cli_log_" +
                                                      std::to_string(counter++) + ".txt");
    const std::string cmd = "\""s + CVLOC_BIN + "\" " + args + " >" + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
#ifdef _WIN32
    r.code = raw;
#else
    r.code = WEXITSTATUS(raw);
#endif
    std::ifstream is(log);
    std::ostringstream buf;
    buf << is.rdbuf();
    r.out = buf.str();
    fs::remove(log);
    return r;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("cvloc_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string file_text(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

void write_cfg(const fs::path& p, const std::string& body) {
    std::ofstream os(p);
    os << body;
}

// Small but complete run configuration shared by the pipeline test.
const char* kPipelineCfg =
    "# compact end-to-end configuration\n"
    "seed = 11\n"
    "image_side = 16\n"
    "input_side = 16\n"
    "conv_blocks = 4\n"
    "fc_hidden = 8\n"
    "feature_dim = 10\n"
    "classes = 8\n"
    "n_samples = 24\n"
    "holdout_val = 6\n"
    "holdout_test = 6\n"
    "region_x0 = 16000\n"
    "region_y0 = 16000\n"
    "region_w = 8000\n"
    "region_h = 8000\n"
    "lr = 0.02\n"
    "batch_size = 8\n"
    "epochs = 1\n"
    "eval_every = 2\n"
    "grid_x0 = 16000\n"
    "grid_y0 = 16000\n"
    "grid_cell = 2000\n"
    "grid_cols = 4\n"
    "grid_rows = 4\n";

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("").code == 1);
    CHECK(run("no-such-command").code == 1);
    CHECK(run("train-cross").code == 1);  // required flags missing
    CHECK(run("gen-data --bogus-flag 3").code == 1);
    CHECK(run("--help").code == 0);
    CHECK(run("gen-data --help").code == 0);
}

TEST_CASE("bad inputs exit with code 2") {
    TempDir d("bad");
    // holdouts consume the whole dataset
    write_cfg(d.path / "c.cfg", "n_samples = 4\nholdout_val = 2\nholdout_test = 2\n");
    auto r = run("gen-data --config " + (d.path / "c.cfg").string() + " --out " +
                 (d.path / "o1").string());
    CHECK(r.code == 1);  // invalid request -> usage error

    write_cfg(d.path / "unknown.cfg", "no_such_key = 5\n");
    auto r2 = run("gen-data --config " + (d.path / "unknown.cfg").string() + " --out " +
                  (d.path / "o2").string());
    CHECK(r2.code == 2);
    CHECK(r2.out.find("no_such_key") != std::string::npos);

    auto r3 = run("eval --index /nonexistent.cvix --ground-checkpoint /nope.cvwt "
                  "--manifest /nope.csv --out " +
                  (d.path / "o3").string());
    CHECK(r3.code == 2);
}

TEST_CASE("gradcheck subcommand") {
    TempDir d("gc");
    auto lin = run("gradcheck --linear --out " + (d.path / "lin").string());
    CHECK(lin.code == 0);
    CHECK(lin.out.find("PASS") != std::string::npos);

    // an absurd tolerance cannot be met -> numeric failure, exit 3
    auto fail = run("gradcheck --tol 1e-18 --eps 1e-3 --batch 1 --coords-per-entry 2 --out " +
                    (d.path / "bad").string());
    CHECK(fail.code == 3);
}

TEST_CASE("full pipeline: gen-data, train, index, localize, eval, viz") {
    TempDir d("pipe");
    const std::string cfg = (d.path / "run.cfg").string();
    write_cfg(d.path / "run.cfg", kPipelineCfg);

    const fs::path data = d.path / "data";
    auto g1 = run("gen-data --config " + cfg + " --out " + data.string());
    REQUIRE_MESSAGE(g1.code == 0, g1.out);
    CHECK(fs::exists(data / "manifest.csv"));
    CHECK(fs::exists(data / "world.txt"));
    CHECK(fs::exists(data / "resolved.cfg"));

    // generation is deterministic, and flag overrides beat the file
    const fs::path data2 = d.path / "data2";
    auto g2 = run("gen-data --config " + cfg + " --out " + data2.string());
    REQUIRE(g2.code == 0);
    CHECK(file_text(data / "manifest.csv") == file_text(data2 / "manifest.csv"));
    CHECK(file_text(data / "ground_00003.ppm") == file_text(data2 / "ground_00003.ppm"));

    const fs::path data3 = d.path / "data3";
    auto g3 = run("gen-data --config " + cfg + " --n 18 --out " + data3.string());
    REQUIRE(g3.code == 0);
    CHECK(file_text(data3 / "resolved.cfg").find("n_samples=18") != std::string::npos);
    CHECK(file_text(data / "manifest.csv") != file_text(data3 / "manifest.csv"));

    const fs::path pre = d.path / "pre";
    auto p = run("pretrain-ground --config " + cfg + " --manifest " +
                 (data / "manifest.csv").string() + " --out " + pre.string());
    REQUIRE_MESSAGE(p.code == 0, p.out);
    REQUIRE(fs::exists(pre / "ground.cvwt"));
    CHECK(fs::exists(pre / "loss.csv"));
    CHECK(fs::exists(pre / "val.csv"));

    const fs::path cross = d.path / "cross";
    auto c = run("train-cross --config " + cfg + " --manifest " +
                 (data / "manifest.csv").string() + " --ground-checkpoint " +
                 (pre / "ground.cvwt").string() + " --out " + cross.string());
    REQUIRE_MESSAGE(c.code == 0, c.out);
    REQUIRE(fs::exists(cross / "aerial.cvwt"));

    const fs::path idx = d.path / "index";
    auto b = run("build-index --config " + cfg + " --checkpoint " +
                 (cross / "aerial.cvwt").string() + " --world " + (data / "world.txt").string() +
                 " --out " + idx.string());
    REQUIRE_MESSAGE(b.code == 0, b.out);
    REQUIRE(fs::exists(idx / "index.cvix"));

    auto l = run("localize --config " + cfg + " --index " + (idx / "index.cvix").string() +
                 " --ground-checkpoint " + (pre / "ground.cvwt").string() + " --manifest " +
                 (data / "manifest.csv").string() + " --query-id 0 --top 3 --out " +
                 (d.path / "loc").string());
    REQUIRE_MESSAGE(l.code == 0, l.out);
    CHECK(l.out.find("rank") != std::string::npos);

    const fs::path ev = d.path / "eval";
    auto e = run("eval --config " + cfg + " --index " + (idx / "index.cvix").string() +
                 " --ground-checkpoint " + (pre / "ground.cvwt").string() + " --manifest " +
                 (data / "manifest.csv").string() + " --split test --out " + ev.string());
    REQUIRE_MESSAGE(e.code == 0, e.out);
    CHECK(e.out.find("top1pct=") != std::string::npos);
    CHECK(e.out.find("auc=") != std::string::npos);
    CHECK(fs::exists(ev / "curve.csv"));
    CHECK(fs::exists(ev / "summary.json"));
    CHECK(fs::exists(ev / "resolved.cfg"));

    auto h = run("heatmap --config " + cfg + " --index " + (idx / "index.cvix").string() +
                 " --ground-checkpoint " + (pre / "ground.cvwt").string() + " --manifest " +
                 (data / "manifest.csv").string() + " --query-id 0 --out " +
                 (d.path / "heat").string());
    REQUIRE_MESSAGE(h.code == 0, h.out);
    CHECK(fs::exists(d.path / "heat" / "heatmap.ppm"));
    CHECK(fs::exists(d.path / "heat" / "heatmap.georef"));

    auto f = run("falsecolor --config " + cfg + " --index " + (idx / "index.cvix").string() +
                 " --red 0,1 --green 2,3,4 --blue 5 --out " + (d.path / "fcol").string());
    REQUIRE_MESSAGE(f.code == 0, f.out);
    CHECK(fs::exists(d.path / "fcol" / "falsecolor.ppm"));

    auto m = run("maxact --config " + cfg + " --ground-checkpoint " +
                 (pre / "ground.cvwt").string() + " --manifest " +
                 (data / "manifest.csv").string() + " --split train --coords 0,3 --k 2 --out " +
                 (d.path / "ma").string());
    REQUIRE_MESSAGE(m.code == 0, m.out);
    const std::string csv = file_text(d.path / "ma" / "maxact.csv");
    CHECK(csv.rfind("coordinate,rank,image_id,activation", 0) == 0);

    // localizing a query id missing from the manifest is a data error
    auto miss = run("localize --config " + cfg + " --index " +
                    (idx / "index.cvix").string() + " --ground-checkpoint " +
                    (pre / "ground.cvwt").string() + " --manifest " +
                    (data / "manifest.csv").string() + " --query-id 9999 --out " +
                    (d.path / "locx").string());
    CHECK(miss.code == 2);
}
