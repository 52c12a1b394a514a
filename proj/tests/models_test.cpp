#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "harfuse/models.hpp"
#include "oracle_utils.hpp"

using namespace harfuse;
namespace fs = std::filesystem;

namespace {

Tensor random_batch(oracle::Uniform& rng, Index n, Index t, Index f, Scalar scale = 1.0) {
    Tensor x = Tensor::zeros({n, t, f});
    for (Index i = 0; i < x.size(); ++i) x.data[i] = rng.next(-scale, scale);
    return x;
}

bool same_bits(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    for (Index i = 0; i < a.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

bool same_state(const NamedTensors& a, const NamedTensors& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first || !same_bits(a[i].second, b[i].second)) return false;
    return true;
}

// two-class toy set the nets must be able to overfit: opposite-sign patterns
void toy_set(Index n, Index t, Index f, Tensor& x, std::vector<int>& y) {
    oracle::Uniform rng(404);
    std::vector<Scalar> base(static_cast<std::size_t>(f));
    for (auto& v : base) v = rng.next(-1, 1);
    x = Tensor::zeros({n, t, f});
    y.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        y[static_cast<std::size_t>(i)] = cls;
        const Scalar sign = cls == 0 ? 1.0 : -1.0;
        for (Index k = 0; k < t; ++k)
            for (Index j = 0; j < f; ++j)
                x.data[(i * t + k) * f + j] =
                    sign * base[static_cast<std::size_t>(j)] + rng.next(-0.05, 0.05);
    }
}

}  // namespace

TEST_CASE("builders: documented shapes and seed determinism") {
    VisionStreamNet v = build_vision_net(6, 20, 42);
    CHECK(v.conv.kernel.shape == Shape{16, 1, 3});
    CHECK(v.conv.bias.shape == Shape{16});
    CHECK(v.lstm.W.shape == Shape{16, 80});
    CHECK(v.head.W.shape == Shape{20, 6});
    CHECK(v.mode == Mode::Train);

    InertialStreamNet n = build_inertial_net(6, 20, 6, 42);
    CHECK(n.lstm1.W.shape == Shape{6, 1024});  // 4 x 256 gate concatenation
    CHECK(n.lstm1.U.shape == Shape{256, 1024});
    CHECK(n.lstm2.W.shape == Shape{256, 512});
    CHECK(n.lstm3.W.shape == Shape{128, 256});
    CHECK(n.head.W.shape == Shape{64, 6});

    // parameter count is a pure function of the constructor arguments
    VisionStreamNet v2 = build_vision_net(6, 50, 7);
    CHECK(v.param_count() == v2.param_count());
    InertialStreamNet n2 = build_inertial_net(6, 35, 6, 9);
    CHECK(n.param_count() == n2.param_count());
    CHECK(build_inertial_net(6, 20, 9, 1).param_count() > n.param_count());

    // same seed, same parameters; different seed, different parameters
    VisionStreamNet a = build_vision_net(4, 10, 5), b = build_vision_net(4, 10, 5);
    CHECK(same_bits(a.conv.kernel, b.conv.kernel));
    CHECK(same_bits(a.lstm.W, b.lstm.W));
    VisionStreamNet c = build_vision_net(4, 10, 6);
    CHECK_FALSE(same_bits(a.conv.kernel, c.conv.kernel));
}

TEST_CASE("builders: invalid arguments are config errors") {
    CHECK_THROWS_AS(build_vision_net(1, 20, 0), ConfigError);
    CHECK_THROWS_AS(build_vision_net(4, 2, 0), ConfigError);  // window below kernel length
    CHECK_THROWS_AS(build_inertial_net(1, 20, 6, 0), ConfigError);
    CHECK_THROWS_AS(build_inertial_net(4, 0, 6, 0), ConfigError);
    CHECK_THROWS_AS(build_inertial_net(4, 20, 0, 0), ConfigError);
}

TEST_CASE("forward: output rows are probability distributions") {
    oracle::Uniform rng(5);
    VisionStreamNet v = build_vision_net(5, 4, 11);
    const Tensor xv = random_batch(rng, 64, 4, 50);
    const Tensor pv = v.forward(xv, Mode::Eval);
    REQUIRE(pv.shape == Shape{64, 5});
    for (Index i = 0; i < 64; ++i) {
        Scalar sum = 0;
        for (Index c = 0; c < 5; ++c) {
            const Scalar p = pv.data[i * 5 + c];
            CHECK(p >= 0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    InertialStreamNet n = build_inertial_net(3, 2, 6, 11);
    const Tensor xn = random_batch(rng, 48, 2, 6);
    const Tensor pn = n.forward(xn, Mode::Eval);
    REQUIRE(pn.shape == Shape{48, 3});
    for (Index i = 0; i < 48; ++i) {
        Scalar sum = 0;
        for (Index c = 0; c < 3; ++c) sum += pn.data[i * 3 + c];
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }

    CHECK_THROWS_AS(v.forward(random_batch(rng, 2, 5, 50), Mode::Eval), DimensionError);
    CHECK_THROWS_AS(n.forward(random_batch(rng, 2, 2, 7), Mode::Eval), DimensionError);
}

TEST_CASE("forward: a zero-initialized head gives uniform rows") {
    oracle::Uniform rng(6);
    VisionStreamNet v = build_vision_net(4, 3, 2);
    v.head.W.data.setZero();
    v.head.b.data.setZero();
    const Tensor p = v.forward(random_batch(rng, 5, 3, 50), Mode::Eval);
    for (Index i = 0; i < p.size(); ++i) CHECK(std::abs(p.data[i] - 0.25) < 1e-15);
}

TEST_CASE("predict_scores: requires eval mode and is deterministic") {
    oracle::Uniform rng(7);
    VisionStreamNet v = build_vision_net(3, 3, 21);
    Tensor x = random_batch(rng, 4, 3, 50);
    // duplicate row: sample 2 copies sample 0
    x.data.segment(2 * 3 * 50, 3 * 50) = x.data.segment(0, 3 * 50);

    CHECK_THROWS_AS(predict_scores(v, x), StateError);
    v.mode = Mode::Eval;
    const Tensor s1 = predict_scores(v, x);
    const Tensor s2 = predict_scores(v, x);
    CHECK(same_bits(s1, s2));
    for (Index c = 0; c < 3; ++c) CHECK(s1.data[2 * 3 + c] == s1.data[0 * 3 + c]);
}

TEST_CASE("train: lr = 0 leaves every parameter unchanged") {
    Tensor x;
    std::vector<int> y;
    toy_set(8, 3, 50, x, y);
    VisionStreamNet v = build_vision_net(2, 3, 3);
    const NamedTensors before = v.snapshot();

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 0;
    cfg.epochs = 3;
    const TrainResult r = train(v, x, y, x, y, cfg);
    NamedTensors after;
    {
        ParamRefs refs;
        v.state(refs);
        for (auto& [name, t] : refs) after.emplace_back(name, t->detached());
    }
    // batch-norm running stats legitimately move in train mode; trainable
    // parameters must not
    std::size_t checked = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i].first.find("running_") != std::string::npos) continue;
        CHECK(same_bits(before[i].second, after[i].second));
        ++checked;
    }
    CHECK(checked == before.size() - 2);
    CHECK(r.history.train_acc.size() == 3);
}

TEST_CASE("train: fixed seed gives a bit-identical history and final state") {
    Tensor x;
    std::vector<int> y;
    toy_set(10, 3, 50, x, y);

    TrainConfig cfg;
    cfg.batch_size = 5;
    cfg.lr = 1e-3;
    cfg.epochs = 4;
    cfg.seed = 77;

    VisionStreamNet a = build_vision_net(2, 3, 9);
    const TrainResult ra = train(a, x, y, x, y, cfg);
    VisionStreamNet b = build_vision_net(2, 3, 9);
    const TrainResult rb = train(b, x, y, x, y, cfg);

    CHECK(ra.history.train_loss == rb.history.train_loss);
    CHECK(ra.history.train_acc == rb.history.train_acc);
    CHECK(ra.history.val_loss == rb.history.val_loss);
    CHECK(ra.history.val_acc == rb.history.val_acc);
    CHECK(same_state(ra.final_state, rb.final_state));
    CHECK(same_state(ra.best_state, rb.best_state));
    CHECK(ra.best_epoch == rb.best_epoch);

    // best-val snapshot tracks the first maximum of the validation accuracy
    const auto& va = ra.history.val_acc;
    const std::size_t first_best =
        static_cast<std::size_t>(std::max_element(va.begin(), va.end()) - va.begin());
    CHECK(ra.best_epoch == static_cast<Index>(first_best + 1));
}

TEST_CASE("train: non-finite forward aborts with the epoch and batch") {
    Tensor x;
    std::vector<int> y;
    toy_set(6, 3, 50, x, y);
    VisionStreamNet v = build_vision_net(2, 3, 1);
    v.lstm.W.data[0] = std::numeric_limits<Scalar>::quiet_NaN();

    TrainConfig cfg;
    cfg.batch_size = 6;
    cfg.epochs = 2;
    try {
        train(v, x, y, x, y, cfg);
        FAIL("expected TrainingDivergence");
    } catch (const TrainingDivergence& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 1") != std::string::npos);
        CHECK(msg.find("batch 1") != std::string::npos);
    }
}

TEST_CASE("train: overfits an easy toy set (vision)") {
    Tensor x;
    std::vector<int> y;
    toy_set(12, 4, 50, x, y);
    VisionStreamNet v = build_vision_net(2, 4, 15);

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 1e-2;
    cfg.epochs = 40;
    const TrainResult r = train(v, x, y, x, y, cfg);
    const Scalar peak = *std::max_element(r.history.train_acc.begin(), r.history.train_acc.end());
    CHECK(peak == 1.0);
    for (Scalar l : r.history.train_loss) CHECK(std::isfinite(l));
}

TEST_CASE("train: overfits an easy toy set (inertial)") {
    Tensor x;
    std::vector<int> y;
    toy_set(8, 3, 6, x, y);
    InertialStreamNet n = build_inertial_net(2, 3, 6, 15);

    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 1e-2;
    cfg.epochs = 15;
    const TrainResult r = train(n, x, y, x, y, cfg);
    const Scalar peak = *std::max_element(r.history.train_acc.begin(), r.history.train_acc.end());
    CHECK(peak == 1.0);
}

TEST_CASE("checkpoint: save/load reproduces predictions to 1e-15") {
    Tensor x;
    std::vector<int> y;
    toy_set(8, 3, 50, x, y);
    VisionStreamNet v = build_vision_net(2, 3, 33);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.epochs = 3;
    train(v, x, y, x, y, cfg);
    v.mode = Mode::Eval;
    const Tensor ref = predict_scores(v, x);

    const fs::path dir = fs::temp_directory_path() / "harfuse_models_ckpt";
    fs::create_directories(dir);
    save_checkpoint(dir / "vision.ckpt.json", v.snapshot());

    VisionStreamNet fresh = build_vision_net(2, 3, 999);  // different init
    fresh.load_state(load_checkpoint(dir / "vision.ckpt.json"));
    fresh.mode = Mode::Eval;
    const Tensor got = predict_scores(fresh, x);
    REQUIRE(got.shape == ref.shape);
    for (Index i = 0; i < got.size(); ++i) CHECK(std::abs(got.data[i] - ref.data[i]) <= 1e-15);
}

TEST_CASE("load_state: rejects wrong names, shapes, and counts") {
    VisionStreamNet v = build_vision_net(2, 3, 1);
    NamedTensors s = v.snapshot();

    NamedTensors fewer(s.begin(), s.end() - 1);
    CHECK_THROWS_AS(v.load_state(fewer), DataError);

    NamedTensors renamed = s;
    renamed[0].first = "vision/conv/kernels";
    CHECK_THROWS_AS(v.load_state(renamed), DataError);

    NamedTensors reshaped = s;
    reshaped[0].second = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(v.load_state(reshaped), DataError);

    CHECK_NOTHROW(v.load_state(s));
}

TEST_CASE("train_profile: documented epoch budgets") {
    CHECK(train_profile("inertial", "default").epochs == 100);
    CHECK(train_profile("vision", "default").epochs == 200);
    CHECK(train_profile("vision", "utd-vision").epochs == 500);
    CHECK(train_profile("inertial", "utd-vision").epochs == 100);
    CHECK(train_profile("vision", "default").batch_size == 32);
    CHECK(train_profile("vision", "default").lr == 1e-4);
    CHECK_THROWS_AS(train_profile("vision", "nosuch"), ConfigError);
    CHECK_THROWS_AS(train_profile("audio", "default"), ConfigError);
}

TEST_CASE("history_csv: header plus one row per epoch") {
    TrainHistory h;
    h.train_acc = {0.5, 1.0};
    h.train_loss = {0.7, 0.2};
    h.val_acc = {0.25, 0.75};
    h.val_loss = {0.8, 0.4};
    const std::string csv = history_csv(h);
    CHECK(csv.find("epoch,train_acc,train_loss,val_acc,val_loss\n") == 0);
    CHECK(csv.find("\n1,0.5,") != std::string::npos);
    CHECK(csv.find("\n2,1,") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("one_hot and gather_rows") {
    const Tensor y = one_hot({2, 0}, 3);
    CHECK(y.shape == Shape{2, 3});
    CHECK(y.data[2] == 1.0);
    CHECK(y.data[3] == 1.0);
    CHECK(y.data.sum() == 2.0);
    CHECK_THROWS_AS(one_hot({3}, 3), ValidationError);
    CHECK_THROWS_AS(one_hot({-1}, 3), ValidationError);

    Tensor x = Tensor::zeros({3, 2});
    x.data << 1, 2, 3, 4, 5, 6;
    const Tensor g = gather_rows(x, {2, 0, 2});
    CHECK(g.shape == Shape{3, 2});
    CHECK(g.data[0] == 5.0);
    CHECK(g.data[1] == 6.0);
    CHECK(g.data[2] == 1.0);
    CHECK(g.data[4] == 5.0);
    CHECK_THROWS_AS(gather_rows(x, {3}), DimensionError);
}
