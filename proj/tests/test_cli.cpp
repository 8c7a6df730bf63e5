#include "nesya/cli.hpp"
#include "nesya/dataset_io.hpp"
#include "nesya/learn.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace nesya;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "nesya");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("nesya_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(file(name)) << text;
        return file(name);
    }

private:
    fs::path path_;
};

const std::string driving = NESYA_SPECS_DIR "/driving.sfa";
const std::string event = NESYA_SPECS_DIR "/event.sfa";

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);)
        out.push_back(l);
    return out;
}

} // namespace

TEST_CASE("validate") {
    auto ok = run({"validate", driving});
    CHECK(ok.code == 0);
    CHECK(ok.out.rfind("valid", 0) == 0);
    CHECK(run({"validate", event}).code == 0);
    CHECK(run({"validate", "--strict", event}).code == 1);

    TempDir dir;
    auto overlap = dir.write("overlap.sfa", "vars: a, b\nstates: p, q\ninitial: p\naccepting: q\n"
                                            "p -> q : a\np -> p : b\nq -> q : true\n");
    auto bad = run({"validate", overlap});
    CHECK(bad.code == 1);
    CHECK(bad.out.find("witness: {a, b}") != std::string::npos);

    CHECK(run({"validate", dir.file("missing.sfa")}).code == 2);
    auto broken = run({"validate", dir.write("broken.sfa", "vars: a\nstates: p\ninitial: p\np -> p : a &\n")});
    CHECK(broken.code == 2);
    CHECK(broken.err.find("line 4") != std::string::npos);
}

TEST_CASE("compile dumps one circuit per transition") {
    auto r = run({"compile", driving});
    CHECK(r.code == 0);
    std::size_t headers = 0;
    for (const auto& l : lines(r.out))
        headers += l.rfind("# ", 0) == 0;
    CHECK(headers == 6);
    CHECK(r.out.find("# q1 -> q1 : !fast & (tired | blocked)") != std::string::npos);
}

TEST_CASE("infer with probabilities supplied directly") {
    TempDir dir;
    auto data = dir.write("running.jsonl", "{\"probs\": [[0.8, 0.3, 0.6], [0.7, 0.9, 0.3]], \"label\": 1}\n");
    auto r = run({"infer", driving, data});
    REQUIRE(r.code == 0);
    auto ls = lines(r.out);
    REQUIRE(ls.size() == 2);
    CHECK(ls[0] == "sequence,p_accept,label");
    std::istringstream row(ls[1]);
    std::string seq, p;
    std::getline(row, seq, ',');
    std::getline(row, p, ',');
    CHECK(std::abs(std::stod(p) - 0.742) <= 1e-3);

    auto empty = run({"infer", driving, dir.write("empty.jsonl", "")});
    CHECK(empty.code == 0);
    CHECK(empty.out == "sequence,p_accept,label\n");

    auto tag = run({"infer", driving, dir.write("one.jsonl", "{\"probs\": [[0.8, 0.3, 0.6]]}\n"), "--mode", "tag"});
    REQUIRE(tag.code == 0);
    auto tl = lines(tag.out);
    REQUIRE(tl.size() == 2);
    CHECK(tl[0] == "sequence,step,q0,q1,q2,label");
    std::istringstream trow(tl[1]);
    std::vector<double> cells;
    for (std::string cell; std::getline(trow, cell, ',');)
        if (!cell.empty())
            cells.push_back(std::stod(cell));
    REQUIRE(cells.size() == 5);
    CHECK(cells[2] + cells[3] + cells[4] == doctest::Approx(1.0));
}

TEST_CASE("infer rejects mismatched inputs") {
    TempDir dir;
    CHECK(run({"infer", driving, dir.write("d.jsonl", "{\"probs\": [[0.5, 0.5]]}\n")}).code == 2);
    CHECK(run({"infer", driving, dir.write("f.jsonl", "{\"features\": [[0.5, 0.5]]}\n")}).code == 2);
    CHECK(run({"infer", driving, dir.file("none.jsonl")}).code == 2);
    CHECK(run({"infer", driving, dir.write("ok.jsonl", ""), "--mode", "bogus"}).code == 2);
}

TEST_CASE("generate, train, infer end to end") {
    TempDir dir;
    auto train_set = dir.file("train.jsonl");
    auto test_set = dir.file("test.jsonl");
    REQUIRE(run({"generate", "--pattern", "1", "--length", "10", "--pos", "60", "--neg", "60", "--seed", "1", "--out",
                 train_set})
                .code == 0);
    REQUIRE(run({"generate", "--pattern", "1", "--length", "10", "--pos", "50", "--neg", "50", "--seed", "2", "--out",
                 test_set})
                .code == 0);
    CHECK(load_dataset(train_set).size() == 120);

    auto ckpt = dir.file("model.ckpt");
    auto t = run({"train", driving, train_set, "--out", ckpt, "--epochs", "60", "--seed", "3"});
    REQUIRE(t.code == 0);
    CHECK(lines(t.out)[0] == "epoch,loss,metric");

    auto again = dir.file("again.ckpt");
    REQUIRE(run({"train", driving, train_set, "--out", again, "--epochs", "60", "--seed", "3"}).code == 0);
    CHECK(load_checkpoint(ckpt) == load_checkpoint(again));

    auto inf = run({"infer", driving, test_set, "--checkpoint", ckpt});
    REQUIRE(inf.code == 0);
    std::size_t correct = 0, total = 0;
    auto ls = lines(inf.out);
    for (std::size_t i = 1; i < ls.size(); ++i) {
        std::istringstream row(ls[i]);
        std::string seq, p, label;
        std::getline(row, seq, ',');
        std::getline(row, p, ',');
        std::getline(row, label, ',');
        correct += (std::stod(p) >= 0.5) == (label == "1");
        ++total;
    }
    CHECK(total == 100);
    CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.9);
    CHECK(inf.err.find("accuracy") != std::string::npos);
}

TEST_CASE("config file overlay") {
    TempDir dir;
    auto train_set = dir.file("train.jsonl");
    REQUIRE(run({"generate", "--length", "5", "--pos", "5", "--neg", "5", "--out", train_set}).code == 0);
    auto cfg = dir.write("train.cfg", "# training knobs\nepochs = 3\nlearning_rate = 0.05\npatience=2\n");
    auto ckpt = dir.file("m.ckpt");
    auto r = run({"train", driving, train_set, "--out", ckpt, "--config", cfg});
    REQUIRE(r.code == 0);
    CHECK(lines(r.out).size() == 4); // header + 3 epochs

    // the command line wins over the file
    auto o = run({"train", driving, train_set, "--out", ckpt, "--config", cfg, "--epochs", "2"});
    REQUIRE(o.code == 0);
    CHECK(lines(o.out).size() == 3);

    auto unknown = dir.write("bad.cfg", "epochs = 3\ncolour = red\n");
    auto u = run({"train", driving, train_set, "--out", ckpt, "--config", unknown});
    CHECK(u.code == 2);
    CHECK(u.err.find("colour") != std::string::npos);
    CHECK(run({"train", driving, train_set, "--out", ckpt, "--config", dir.file("nope.cfg")}).code == 2);
    CHECK(run({"train", driving, train_set, "--out", ckpt, "--config", dir.write("x.cfg", "epochs = many\n")}).code ==
          2);
}

TEST_CASE("tagging data and the event automaton") {
    TempDir dir;
    auto data = dir.file("tags.jsonl");
    REQUIRE(run({"generate", "--sfa", event, "--tagging", "--count", "10", "--length", "6", "--out", data}).code == 0);
    auto records = load_dataset(data);
    REQUIRE(records.size() == 10);
    CHECK(std::get<std::vector<int>>(records[0].label).size() == 6);
    auto ckpt = dir.file("tag.ckpt");
    REQUIRE(run({"train", event, data, "--out", ckpt, "--epochs", "3"}).code == 0);
    auto r = run({"infer", event, data, "--mode", "tag", "--checkpoint", ckpt});
    CHECK(r.code == 0);
    CHECK(lines(r.out).size() == 61);
    CHECK(lines(r.out)[0] == "sequence,step,no_event,moving,meeting,label");
}

TEST_CASE("generate can emit a random pattern") {
    TempDir dir;
    auto spec = dir.file("random.sfa");
    auto r = run({"generate", "--random-states", "4", "--random-symbols", "3", "--pattern-seed", "7", "--emit-sfa", spec,
                  "--length", "4", "--pos", "2", "--neg", "2"});
    CHECK(r.code == 0);
    CHECK(lines(r.out).size() == 4);
    CHECK(run({"validate", spec}).code == 0);
    CHECK(run({"generate", "--random-states", "4"}).code == 2);
}

TEST_CASE("bench") {
    auto r = run({"bench", "--patterns", "1", "--lengths", "4,6", "--reps", "1", "--batch-size", "4"});
    REQUIRE(r.code == 0);
    auto ls = lines(r.out);
    REQUIRE(ls.size() == 5);
    CHECK(ls[0] == "pattern,states,symbols,length,engine,batch_ms_median,accuracy,seed");
    CHECK(run({"bench", "--engines", "gpu"}).code == 2);
}

TEST_CASE("help and usage errors") {
    for (const char* sub : {"validate", "compile", "infer", "train", "generate", "bench"}) {
        auto r = run({sub, "--help"});
        CHECK(r.code == 0);
        CHECK(r.out.find("Usage") != std::string::npos);
    }
    CHECK(run({"--help"}).code == 0);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"train", driving}).code == 2);
}
