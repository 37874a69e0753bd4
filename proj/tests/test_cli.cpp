#include "fixtures.hpp"

#include "catcorr/cli.hpp"
#include "catcorr/io.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace catcorr;
using namespace fixtures;

namespace {

const std::filesystem::path kData = CATCORR_DATA_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args)
{
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Every regular file under `dir` except run manifests, keyed by relative path.
std::map<std::string, std::string> tree(const std::filesystem::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name != "run_manifest.json" && !name.ends_with(".run.json")) {
            out[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
        }
    }
    return out;
}

void write_text(const std::filesystem::path& p, const std::string& s) { write_file_atomic(p, s); }

std::string tiny_config_json(int s1, int s2)
{
    json j = to_json(tiny_config());
    j["stage1_epochs"] = s1;
    j["stage2_epochs"] = s2;
    j["batch_size"] = 2;
    j["grad_accumulation"] = 1;
    j["tau"] = 0.5;
    return j.dump();
}

// gen -> train -> predict -> eval into `dir`.
void pipeline(const std::filesystem::path& dir, const std::filesystem::path& config)
{
    const std::string d = dir.string();
    REQUIRE(cli({"--seed", "5", "gen", "--spec", (kData / "mug.json").string(), "--out", d + "/ds", "--instances", "2",
                 "--views", "1", "--occluders", "random"})
                .code == 0);
    REQUIRE(cli({"train", "--dataset", d + "/ds/manifest.json", "--config", config.string(), "--out", d + "/ck"})
                .code == 0);
    REQUIRE(cli({"predict", "--checkpoint", d + "/ck", "--dataset", d + "/ds/manifest.json", "--pairs",
                 d + "/ds/pairs.jsonl", "--out", d + "/pred.jsonl"})
                .code == 0);
    REQUIRE(cli({"eval", "--predictions", d + "/pred.jsonl", "--dataset", d + "/ds/manifest.json", "--out",
                 d + "/report.json", "--csv", d + "/report.csv"})
                .code == 0);
}

} // namespace

TEST_CASE("cli: help and usage errors")
{
    CHECK(cli({"--help"}).code == 0);
    CHECK(cli({}).code == kExitInput);
    CHECK(cli({"frobnicate"}).code == kExitInput);
    CHECK(cli({"gen", "--out", "x"}).code == kExitInput);
}

TEST_CASE("cli: gen input errors and the empty dataset")
{
    TempDir dir("cli_gen");
    const Run missing = cli({"gen", "--spec", (dir.path / "none.json").string(), "--out", (dir.path / "o").string()});
    CHECK(missing.code == kExitInput);
    CHECK_FALSE(missing.err.empty());
    write_text(dir.path / "bad.json", "{\"version\": 1, \"family\": \"teapot\"}");
    CHECK(cli({"gen", "--spec", (dir.path / "bad.json").string(), "--out", (dir.path / "o").string()}).code ==
          kExitInput);
    CHECK(cli({"gen", "--spec", (kData / "mug.json").string(), "--out", (dir.path / "o").string(), "--occluders",
               "lots"})
              .code == kExitInput);

    const Run empty = cli({"gen", "--spec", (kData / "mug.json").string(), "--out", (dir.path / "e").string(),
                           "--instances", "0"});
    CHECK(empty.code == kExitOk);
    CHECK(load_dataset(dir.path / "e" / "manifest.json").instances.empty());
    const json rm = read_json(dir.path / "e" / "run_manifest.json");
    CHECK(rm["command"] == "gen");
    CHECK(rm["tool_version"] == "0.1.0");
    CHECK(rm.contains("duration_s"));
}

TEST_CASE("cli: merge exits pending without decisions and succeeds with them")
{
    TempDir dir("cli_merge");
    const std::filesystem::path m = kData / "merge";
    const std::vector<std::string> base{"merge", "--set-a", (m / "set_a.json").string(), "--set-b",
                                        (m / "set_b.json").string(), "--meshes", (m / "meshes.json").string()};
    auto args = base;
    args.insert(args.end(), {"--out", (dir.path / "pending.json").string()});
    CHECK(cli(args).code == kExitPending);
    const json pending = read_json(dir.path / "pending.json");
    CHECK(pending["final"].is_null());
    CHECK(pending["pending"] == json::array({"A4+B3"}));

    args = base;
    args.insert(args.end(),
                {"--decisions", (m / "decisions.json").string(), "--out", (dir.path / "final.json").string()});
    CHECK(cli(args).code == kExitOk);
    CHECK(read_json(dir.path / "final.json")["final"] == read_json(m / "expected_final.json"));

    write_text(dir.path / "d.json", "{\"A4+B3\": \"MAYBE\"}");
    args = base;
    args.insert(args.end(), {"--decisions", (dir.path / "d.json").string(), "--out", (dir.path / "x.json").string()});
    CHECK(cli(args).code == kExitInput);
}

TEST_CASE("cli: huegrid is deterministic and rejects bad meshes")
{
    TempDir dir("cli_hue");
    const std::string mesh = (kData / "merge" / "cube.obj").string();
    REQUIRE(cli({"huegrid", "--mesh", mesh, "--out", (dir.path / "a.obj").string()}).code == 0);
    REQUIRE(cli({"huegrid", "--mesh", mesh, "--out", (dir.path / "b.obj").string()}).code == 0);
    CHECK(slurp(dir.path / "a.obj") == slurp(dir.path / "b.obj"));
    write_text(dir.path / "bad.obj", "v 0 0 0\nf 1 2 3\n");
    CHECK(cli({"huegrid", "--mesh", (dir.path / "bad.obj").string(), "--out", (dir.path / "c.obj").string()}).code ==
          kExitInput);
    CHECK(cli({"huegrid", "--mesh", mesh, "--out", (dir.path / "c.obj").string(), "--cells", "0"}).code ==
          kExitInput);
}

TEST_CASE("cli: training with zero epochs stores the initialization; bad resumes are state errors")
{
    TempDir dir("cli_train");
    const std::string d = dir.path.string();
    REQUIRE(cli({"gen", "--spec", (kData / "mug.json").string(), "--out", d + "/ds", "--instances", "2", "--views",
                 "1"})
                .code == 0);
    write_text(dir.path / "zero.json", tiny_config_json(0, 0));
    REQUIRE(cli({"train", "--dataset", d + "/ds/manifest.json", "--config", d + "/zero.json", "--out", d + "/ck"})
                .code == 0);
    const TrainConfig config = load_checkpoint_config(dir.path / "ck");
    const TrainState stored = load_checkpoint(dir.path / "ck", config);
    std::vector<std::string> ids;
    for (const auto& inst : load_dataset(dir.path / "ds" / "manifest.json").instances) {
        ids.push_back(inst.id);
    }
    CHECK(stored.pack() == init_state(config, ids).pack());
    CHECK(stored.history.empty());

    // Shape mismatch against the stored checkpoint.
    json other = json::parse(tiny_config_json(1, 0));
    other["latent_dim"] = 7;
    write_text(dir.path / "other.json", other.dump());
    CHECK(cli({"train", "--dataset", d + "/ds/manifest.json", "--config", d + "/other.json", "--out", d + "/ck2",
               "--resume", d + "/ck"})
              .code == kExitState);
    // Truncated weights.
    std::filesystem::copy(dir.path / "ck", dir.path / "broken", std::filesystem::copy_options::recursive);
    for (const auto& e : std::filesystem::directory_iterator(dir.path / "broken")) {
        if (e.path().filename().string().starts_with("sdf") && e.is_regular_file()) {
            std::filesystem::resize_file(e.path(), std::filesystem::file_size(e.path()) / 2);
        }
    }
    CHECK(cli({"train", "--dataset", d + "/ds/manifest.json", "--config", d + "/zero.json", "--out", d + "/ck3",
               "--resume", d + "/broken"})
              .code == kExitState);
    CHECK(cli({"train", "--dataset", d + "/ds/manifest.json", "--config", d + "/missing.json", "--out", d + "/ck4"})
              .code == kExitInput);
}

TEST_CASE("cli: the pipeline is byte-for-byte deterministic")
{
    TempDir dir("cli_det");
    write_text(dir.path / "cfg.json", tiny_config_json(1, 1));
    pipeline(dir.path / "a", dir.path / "cfg.json");
    pipeline(dir.path / "b", dir.path / "cfg.json");
    const auto a = tree(dir.path / "a");
    const auto b = tree(dir.path / "b");
    CHECK(a.size() > 10);
    CHECK(a == b);
    const json report = read_json(dir.path / "a" / "report.json");
    CHECK(report["pairs"].size() == read_pairs(dir.path / "a" / "ds" / "pairs.jsonl").size());
    CHECK(std::filesystem::exists(dir.path / "a" / "pred.jsonl.run.json"));
}

TEST_CASE("cli: predict and eval input errors")
{
    TempDir dir("cli_pred");
    const std::string d = dir.path.string();
    CHECK(cli({"predict", "--checkpoint", d + "/nope", "--dataset", d + "/m.json", "--pairs", d + "/p.jsonl", "--out",
               d + "/o.jsonl"})
              .code != kExitOk);
    write_text(dir.path / "empty.jsonl", "");
    REQUIRE(cli({"gen", "--spec", (kData / "mug.json").string(), "--out", d + "/ds", "--instances", "2", "--views",
                 "1"})
                .code == 0);
    CHECK(cli({"eval", "--predictions", d + "/empty.jsonl", "--dataset", d + "/ds/manifest.json", "--out",
               d + "/r.json"})
              .code == kExitInput);
    CHECK(cli({"eval", "--predictions", d + "/empty.jsonl", "--dataset", d + "/ds/manifest.json", "--out",
               d + "/r.json", "--threshold", "-1"})
              .code == kExitInput);
}
