#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fasw/baselines.hpp"
#include "fasw/error.hpp"
#include "fasw/experiment.hpp"
#include "fasw/io.hpp"
#include "fasw/model_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace fasw {
namespace {

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no fasw::Error thrown";
    return ErrorKind::io;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fasw_model_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.channels = {4, 6};
    cfg.height = 16;
    cfg.width = 16;
    cfg.seed = 3;
    return cfg;
}

Benchmark tiny_benchmark() {
    ExperimentConfig cfg = preset_config("quick");
    cfg.data.image_size = 16;
    cfg.data.n_live = 16;
    cfg.data.n_spoof = 16;
    cfg.data.n_subjects = 4;
    cfg.data.subsets = {"A", "B"};
    return generate_synthetic_benchmark(synthetic_specs(cfg));
}

TrainSchedule tiny_schedule() {
    TrainSchedule s;
    s.epochs = 1;
    s.batches_per_epoch = 2;
    s.batch_size = 4;
    s.lr = 1e-3;
    return s;
}

Tensor random_images(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return testing::random_tensor({n, 3, 16, 16}, rng, 0.0, 1.0);
}

TEST(Checkpoint, ModelSreAndDiscriminatorsRoundTrip) {
    const fs::path dir = fresh_dir("ckpt");
    const FasModel model(tiny_model(), ModelRole::source_teacher);
    const BinaryHead head(tiny_model().channels.back(), 5);
    const Sre sre(tiny_model(), 4, 6);
    const DiscriminatorPair discs = make_discriminators(tiny_model(), DiscMode::chained, 4, 7);

    save_model_checkpoint(dir / "model", model, &head);
    save_sre_checkpoint(dir / "sre", sre, tiny_model());
    save_discriminator_checkpoint(dir / "disc", discs, tiny_model(), DiscMode::chained, 4);

    const ModelCheckpoint m = load_model_checkpoint(dir / "model");
    EXPECT_EQ(m.model.params().hash(), model.params().hash());
    EXPECT_EQ(m.model.role(), ModelRole::source_teacher);
    ASSERT_TRUE(m.head.has_value());
    EXPECT_EQ(m.head->params().hash(), head.params().hash());
    EXPECT_EQ(load_sre_checkpoint(dir / "sre").params().hash(), sre.params().hash());
    EXPECT_EQ(load_discriminator_checkpoint(dir / "disc").params().hash(), discs.params().hash());

    EXPECT_EQ(read_checkpoint_sidecar(dir / "sre").at("kind"), "sre");
    // a checkpoint of another kind is rejected
    EXPECT_EQ(kind_of([&] { load_sre_checkpoint(dir / "model"); }), ErrorKind::schema);
    fs::remove_all(dir);
}

TEST(Stage2, TeachersAndSreAreFrozen) {
    const Benchmark bench = tiny_benchmark();
    const FasModel source(tiny_model(), ModelRole::source_teacher);
    FasModel target = source.clone();
    target.set_role(ModelRole::target_teacher);
    const Sre sre(tiny_model(), 4, 9);
    FasModel student = target.clone();
    student.set_role(ModelRole::student);
    DiscriminatorPair discs = make_discriminators(tiny_model(), DiscMode::chained, 4, 10);

    const auto hs = source.params().hash(), ht = target.params().hash(), hr = sre.params().hash();
    const auto hstudent = student.params().hash(), hdisc = discs.params().hash();
    Stage2Options opt;
    opt.train = tiny_schedule();
    const Stage2Result r = train_stage2(source, target, &sre, student, discs, bench.at("B").train, LossWeights{}, opt);
    EXPECT_EQ(source.params().hash(), hs);
    EXPECT_EQ(target.params().hash(), ht);
    EXPECT_EQ(sre.params().hash(), hr);
    EXPECT_NE(student.params().hash(), hstudent);
    EXPECT_NE(discs.params().hash(), hdisc);
    ASSERT_EQ(r.history.size(), 1u);
}

TEST(Export, InferenceModelHoldsOnlyStudentAndSre) {
    const fs::path dir = fresh_dir("export");
    const FasModel student(tiny_model());
    const Sre sre(tiny_model(), 4, 11);
    const InferenceModel im = export_inference(student, &sre);
    EXPECT_EQ(im.params().scalar_count(), student.params().scalar_count() + sre.params().scalar_count());
    for (const auto& name : im.params().names()) {
        EXPECT_EQ(name.find("disc"), std::string::npos) << name;
    }

    save_inference(dir / "model.fasw", im);
    const InferenceModel back = load_inference(dir / "model.fasw");
    const Tensor images = random_images(100, 12);
    const Prediction live_pred = predict(im, images);
    const Prediction disk_pred = predict(back, images);
    EXPECT_EQ(live_pred.scores, disk_pred.scores);
    EXPECT_EQ(live_pred.masks, disk_pred.masks);
    ASSERT_EQ(live_pred.masks.shape(), (Shape{100, 1, 16, 16}));

    const InferenceModel plain = export_inference(student, nullptr);
    EXPECT_FALSE(plain.sre.has_value());
    EXPECT_TRUE(predict(plain, images).masks.empty());
    fs::remove_all(dir);
}

TEST(Export, WrongImageShapeIsAnInputError) {
    const InferenceModel im = export_inference(FasModel(tiny_model()), nullptr);
    EXPECT_EQ(kind_of([&] { predict(im, random_images(2, 1).reshaped({2, 3, 8, 32})); }), ErrorKind::input);
}

TEST(SourceFree, RegistryHidesSourceDataFromSourceFreeMethods) {
    MethodRegistry reg;
    const DatasetManifest* seen = reinterpret_cast<const DatasetManifest*>(1);
    reg.add(
        "probe",
        [&](const MethodContext& ctx) {
            seen = ctx.source_train;
            return BaselineResult{FasModel(tiny_model()), std::nullopt, {}};
        },
        true);
    DatasetManifest src;
    MethodContext ctx;
    ctx.source_train = &src;
    reg.run("probe", ctx);
    EXPECT_EQ(seen, nullptr);
    EXPECT_TRUE(reg.source_free("naive_ft"));
    EXPECT_TRUE(reg.source_free("lwf"));
    EXPECT_FALSE(reg.source_free("joint"));
    EXPECT_EQ(kind_of([&] { reg.run("nope", ctx); }), ErrorKind::config);
}

TEST(SourceFree, TargetTrainingNeverReadsSourceFiles) {
    const fs::path dir = fresh_dir("audit");
    Benchmark bench = tiny_benchmark();
    write_benchmark(dir, bench);
    const FasModel source(tiny_model(), ModelRole::source_teacher);
    const BinaryHead head(tiny_model().channels.back(), 2);
    const Sre sre(tiny_model(), 4, 4);

    io::AccessRecorder rec;
    DatasetManifest target = load_manifest(dir / "B" / "train.csv");
    load_images(target);
    load_base_faces(target);

    naive_finetune(source, target, tiny_schedule());
    lwf_distill(source, head, target, LwfOptions{tiny_schedule()});
    Stage1Schedule s1{tiny_schedule(), 1, 0.1, 1.0};
    Stage1Result r1 = finetune_stage1(source, sre, target, OracleReconstructor{}, s1);
    FasModel student = r1.target.clone();
    DiscriminatorPair discs = make_discriminators(tiny_model(), DiscMode::chained, 4, 5);
    train_stage2(source, r1.target, &r1.sre, student, discs, target, LossWeights{}, Stage2Options{tiny_schedule()});

    EXPECT_TRUE(rec.under(dir / "A").empty());
    EXPECT_FALSE(rec.under(dir / "B").empty());
    fs::remove_all(dir);
}

TEST(Config, KeyValueRoundTrip) {
    for (const auto& name : preset_names()) {
        ExperimentConfig cfg = preset_config(name);
        cfg.seed = 77;
        cfg.lambdas.spoof = 0.25;
        cfg.data.subsets = {"A", "B"};
        const auto kv = to_key_values(cfg);
        EXPECT_EQ(to_key_values(from_key_values(kv)), kv) << name;
    }
}

TEST(Config, FileRoundTripAndErrors) {
    const fs::path dir = fresh_dir("config");
    ExperimentConfig cfg = preset_config("quick");
    cfg.stage2.epochs = 3;
    io::write_text(dir / "c.txt", config_text(cfg));
    EXPECT_EQ(to_key_values(load_config_file(dir / "c.txt")), to_key_values(cfg));

    EXPECT_EQ(kind_of([] { from_key_values({{"stage2.epochz", "3"}}); }), ErrorKind::config);
    EXPECT_EQ(kind_of([] { from_key_values({{"stage2.epochs", "three"}}); }), ErrorKind::config);
    EXPECT_EQ(kind_of([] { preset_config("huge"); }), ErrorKind::config);
    fs::remove_all(dir);
}

TEST(Config, PhaseSeedsDifferAndFollowTheRunSeed) {
    ExperimentConfig a = preset_config("desk");
    ExperimentConfig b = a;
    b.seed = a.seed + 1;
    EXPECT_NE(phase_seed(a, Phase::pretrain), phase_seed(a, Phase::stage1));
    EXPECT_NE(phase_seed(a, Phase::pretrain), phase_seed(b, Phase::pretrain));
    EXPECT_EQ(pretrain_schedule(a).seed, phase_seed(a, Phase::pretrain));
}

}  // namespace
}  // namespace fasw
