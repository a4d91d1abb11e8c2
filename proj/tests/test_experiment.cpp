#include "vbflow/experiment.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace vbflow;

namespace {

nlohmann::json base_config() {
    nlohmann::json j;
    j["experiment"] = "potentials";
    j["geometry"] = {{"kind", "sphere"}, {"radius", 1.0}, {"refinement", 1}};
    j["patches"] = nlohmann::json::array();
    for (int axis = 0; axis < 3; ++axis)
        for (int sign = -1; sign <= 1; sign += 2) {
            nlohmann::json lobe;
            std::array<double, 3> dir{0, 0, 0};
            dir[axis] = sign;
            lobe["center"] = dir;
            lobe["angular_radius"] = 0.45;
            lobe["amplitude"] = 1.0;
            j["patches"].push_back({{"lobes", {lobe}}});
        }
    return j;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("config validation errors") {
    nlohmann::json j = base_config();
    j["experiment"] = "fly";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["geometry"]["kind"] = "torus";
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["geometry"]["refinement"] = 9;
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["initial_state"] = {{"q", {0.9, 0.9, 0.9}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["experiment"] = "simulate";
    j["solver"] = {{"dt", -1.0}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);

    j = base_config();
    j["experiment"] = "simulate";
    j["control"] = {{"knots", 3}, {"horizon", 1.0},
                    {"values", {{0.1, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}}}};
    CHECK_THROWS_AS(parse_config(j), ConfigError);  // w(0) must vanish
}

TEST_CASE("potentials experiment writes the added-mass tables and caches them") {
    const auto dir = std::filesystem::temp_directory_path() / "vbflow_test_potentials";
    const auto cache = dir / "cache";
    std::filesystem::remove_all(dir);

    nlohmann::json j = base_config();
    j["geometry"]["refinement"] = 2;
    const ExperimentConfig cfg = parse_config(j);
    run_experiment(cfg, (dir / "a").string(), cache.string());

    nlohmann::json out;
    std::ifstream in(dir / "a" / "added_mass.json");
    REQUIRE(in.good());
    in >> out;
    const AddedMassTables t = added_mass_from_json(out);
    const double mu = 2.0 * pi() / 3.0;
    CHECK((t.M - mu * Mat3::Identity()).norm() / (mu * std::sqrt(3.0)) < 0.02);

    // second run must hit the cache and agree with the fresh solve
    run_experiment(cfg, (dir / "b").string(), cache.string());
    nlohmann::json run_meta;
    std::ifstream meta(dir / "b" / "run.json");
    meta >> run_meta;
    CHECK(run_meta["cache_hit"].get<bool>());

    CHECK(std::filesystem::exists(dir / "a" / "mesh.off"));
}

TEST_CASE("simulate runs are deterministic byte for byte") {
    const auto dir = std::filesystem::temp_directory_path() / "vbflow_test_determinism";
    std::filesystem::remove_all(dir);

    nlohmann::json j = base_config();
    j["experiment"] = "simulate";
    j["method"] = "timestep";
    j["initial_state"] = {{"l", {0.2, 0.0, 0.0}}};
    j["control"] = {{"knots", 3}, {"horizon", 0.2}};
    j["control"]["values"] = {{0, 0.05, 0.08}, {0, -0.03, 0.02}, {0, 0.01, 0.04},
                              {0, 0.02, -0.03}, {0, -0.05, 0.01}, {0, 0.03, 0.03}};
    j["seed"] = {{"kind", "curl_blob"}, {"center", {1.8, 0.3, 0.0}}, {"radius", 0.3},
                 {"amplitude", {0.0, 0.0, 0.6}}, {"support_radius", 0.3}, {"spacing", 0.12}};
    j["solver"] = {{"dt", 0.005}, {"T", 0.2}};

    const ExperimentConfig cfg = parse_config(j);
    run_experiment(cfg, (dir / "r1").string());
    run_experiment(cfg, (dir / "r2").string());

    CHECK(slurp(dir / "r1" / "trajectory.csv") == slurp(dir / "r2" / "trajectory.csv"));
    CHECK(slurp(dir / "r1" / "loads.csv") == slurp(dir / "r2" / "loads.csv"));
    CHECK(slurp(dir / "r1" / "markers_final.csv") == slurp(dir / "r2" / "markers_final.csv"));

    // worker count must not change the bytes either
    worker_count() = 2;
    run_experiment(cfg, (dir / "r3").string());
    worker_count() = 1;
    CHECK(slurp(dir / "r1" / "trajectory.csv") == slurp(dir / "r3" / "trajectory.csv"));
}

TEST_CASE("zero control and zero seed give a constant-state trajectory") {
    const auto dir = std::filesystem::temp_directory_path() / "vbflow_test_rest";
    std::filesystem::remove_all(dir);

    nlohmann::json j = base_config();
    j["experiment"] = "simulate";
    j["control"] = {{"knots", 2}, {"horizon", 0.1}};
    j["solver"] = {{"dt", 0.01}, {"T", 0.1}};
    run_experiment(parse_config(j), dir.string());

    std::ifstream in(dir / "trajectory.csv");
    std::string header, line;
    std::getline(in, header);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        const auto first_comma = line.find(',');
        CHECK(line.substr(first_comma) ==
              ",0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0");
    }
    CHECK(rows == 11);
}

TEST_CASE("verification failure surfaces as the dedicated exception") {
    nlohmann::json j = base_config();
    j["experiment"] = "verify";
    j["initial_state"] = {{"l", {0.3, 0.0, 0.0}}};
    j["control"] = {{"knots", 2}, {"horizon", 0.1}};
    j["solver"] = {{"dt", 0.005}, {"T", 0.1}};
    j["verify"] = {{"time_fractions", {0.5}},
                   {"sample_points", {{1.7, 0.4, 0.2}, {2.1, -0.3, 0.5}}},
                   {"thresholds", {{"momentum", 1e-12}}}};  // unreachable on purpose
    const auto dir = std::filesystem::temp_directory_path() / "vbflow_test_verifyfail";
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(run_experiment(parse_config(j), dir.string()), VerificationError);
}
