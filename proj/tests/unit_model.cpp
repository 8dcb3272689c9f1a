#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "unicd/model.hpp"
#include "unicd/train.hpp"

using namespace unicd;

TEST_CASE("model config validation rejects malformed stage settings") {
    ModelConfig m = toy_model_config();
    m.validate(); // baseline must be legal

    ModelConfig bad = m;
    bad.dims = {8, 16, 32, 48}; // not doubling
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.depths = {1, 0, 1, 1};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.c_hid = 33;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.fcpg_groups = 3; // must divide every stage dim
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    bad = m;
    bad.droppath_max = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("task names round trip") {
    for (auto t : {Task::bcd, Task::scd, Task::bda}) CHECK(task_from_name(task_name(t)) == t);
    CHECK_THROWS_AS(task_from_name("segmentation"), ConfigError);
}

TEST_CASE("train config finalize wires dependent defaults") {
    TrainConfig cfg;
    cfg.model = toy_model_config();
    cfg.max_iters = 300;
    cfg.steplr_period = 0;
    cfg.finalize();
    CHECK(cfg.steplr_period == 100); // max_iters / 3
    CHECK(cfg.model.task == cfg.task);

    TrainConfig s2;
    s2.model = toy_model_config();
    s2.stage = 2; // stage 2 without a resume checkpoint is a usage error
    CHECK_THROWS_AS(s2.finalize(), ConfigError);
}
