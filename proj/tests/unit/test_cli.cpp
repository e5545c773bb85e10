#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "tsw/container.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int status = 0;
    std::string out;
};

Run tswc(const fs::path& dir, const std::string& args) {
    const auto log = dir / "stdout.txt";
    const std::string cmd = std::string("cd '") + dir.string() + "' && '" + TSWC_BINARY + "' " + args + " > '" +
                            log.string() + "' 2>&1";
    Run r;
    r.status = std::system(cmd.c_str());
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Small sizes keep the whole pipeline to a few seconds.
const char* kSmall = "--set train_size=300 --set test_size=100 --set pretrain_steps=100 --set finetune_steps=200";

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("tswc_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("command line pipeline") {
    Workspace ws;
    const auto& d = ws.dir;
    const std::string s = kSmall;

    REQUIRE(tswc(d, "gen-tasks -o data " + s).status == 0);
    CHECK(fs::exists(d / "data/task0_train.csv"));
    CHECK(fs::exists(d / "data/task2_test.csv"));
    CHECK(fs::exists(d / "data/pretext_train.csv"));
    const auto first = slurp(d / "data/task1_train.csv");
    REQUIRE(tswc(d, "gen-tasks -o again " + s).status == 0);
    CHECK(slurp(d / "again/task1_train.csv") == first);
    CHECK(first.rfind("label,x0,", 0) == 0);

    REQUIRE(tswc(d, "fine-tune --data data/pretext_train.csv -o base.tswc " + s).status == 0);
    for (int k = 0; k < 2; ++k) {
        const auto ks = std::to_string(k);
        const auto r = tswc(d, "fine-tune --base base.tswc --data data/task" + ks + "_train.csv -o ft" + ks + ".tswc " + s);
        REQUIRE(r.status == 0);
        CHECK(r.out.find("train accuracy") != std::string::npos);
    }

    const std::string compress = "compress --base base.tswc --finetuned ft0.tswc --data data/task0_train.csv "
                                 "--task task0 --steps 60 " + s;
    REQUIRE(tswc(d, compress + " -o c0.tswc --log log.csv").status == 0);
    REQUIRE(tswc(d, compress + " -o c0b.tswc").status == 0);
    CHECK(slurp(d / "c0.tswc") == slurp(d / "c0b.tswc"));
    CHECK(slurp(d / "log.csv").rfind("step,rho,omega,total,sparsity_term,bit_term,performance,hard_sparsity", 0) == 0);
    REQUIRE(tswc(d, "compress --base base.tswc --finetuned ft1.tswc --data data/task1_train.csv --task task1 "
                    "--task-index 1 --steps 60 -o c1.tswc " + s).status == 0);

    const auto ins = tswc(d, "inspect c0.tswc");
    REQUIRE(ins.status == 0);
    CHECK(ins.out.find("fc0.weight") != std::string::npos);
    CHECK(ins.out.find("total file bytes") != std::string::npos);
    CHECK(tsw::load_bundle(d / "c0.tswc").at(0).modules.size() == 4);

    const auto ev = tswc(d, "evaluate --base base.tswc --bundle c0.tswc --data data/task0_test.csv");
    REQUIRE(ev.status == 0);
    CHECK(ev.out.find("task0 accuracy") != std::string::npos);

    REQUIRE(tswc(d, "tswitch --base base.tswc --finetuned ft0.tswc --alpha 0.9 -o sw0.tswc").status == 0);
    CHECK(tsw::load_bundle(d / "sw0.tswc").at(0).task_id == "task0");

    REQUIRE(tswc(d, "build-index --base base.tswc --data data/task0_train.csv --data data/task1_train.csv "
                    "--task task0 --task task1 --centers 5 -o idx.tsi " + s).status == 0);
    REQUIRE(tswc(d, "train-metric --base base.tswc --index idx.tsi --data data/task0_train.csv "
                    "--data data/task1_train.csv --set metric_epochs=5 --set rank=8 --log metric.csv -o idx2.tsi " + s)
                .status == 0);
    const auto me = tswc(d, "merge-eval --base base.tswc --bundle c0.tswc --bundle c1.tswc --index idx2.tsi "
                            "--data data/task0_test.csv --data data/task1_test.csv --neighbors 5");
    REQUIRE(me.status == 0);
    CHECK(me.out.find("mean") != std::string::npos);

    const auto bl = tswc(d, "baseline --mode task-arithmetic --base base.tswc --finetuned ft0.tswc --finetuned ft1.tswc "
                            "--data data/task0_test.csv --data data/task1_test.csv");
    REQUIRE(bl.status == 0);
    const auto pr = tswc(d, "probe sparsity --base base.tswc --finetuned ft0.tswc --data data/task0_test.csv -o probe.csv");
    REQUIRE(pr.status == 0);
    CHECK(slurp(d / "probe.csv").rfind("task,unit,value,accuracy,finetuned_accuracy,drop", 0) == 0);

    // a flag overrides the config file
    {
        std::ofstream cfg(d / "run.cfg");
        cfg << "seed = 3\ntrain_size = 300\ntest_size = 100\n";
    }
    REQUIRE(tswc(d, "gen-tasks --config run.cfg -o fromfile").status == 0);
    REQUIRE(tswc(d, "gen-tasks --config run.cfg --seed 7 -o flagged " + s).status == 0);
    CHECK(slurp(d / "flagged/task1_train.csv") == first);
    CHECK_FALSE(slurp(d / "fromfile/task1_train.csv") == first);
}

TEST_CASE("command line errors exit nonzero") {
    Workspace ws;
    CHECK(tswc(ws.dir, "").status != 0);
    CHECK(tswc(ws.dir, "inspect missing.tswc").status != 0);
    {
        std::ofstream junk(ws.dir / "junk.tswc", std::ios::binary);
        junk << "TSWCgarbage";
    }
    const auto r = tswc(ws.dir, "inspect junk.tswc");
    CHECK(r.status != 0);
    CHECK(tswc(ws.dir, "gen-tasks --set colour=blue -o x").status != 0);
}
