#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "dfsim/arch.hpp"

using namespace dfsim::arch;

TEST_CASE("builtin platforms carry the documented figures") {
    auto sn = builtin_platform("sn40l_node");
    CHECK(sn.sockets == 8);
    CHECK(sn.socket_peak_flops == doctest::Approx(638e12));
    CHECK(sn.tile.pcu_count == 1040);
    CHECK(sn.tile.pmu_count == 1040);
    CHECK(sn.tile.sram_total_bytes == 520'000'000);
    CHECK(sn.tier(TierName::HBM)->bandwidth_bytes_per_s == doctest::Approx(1.8e12));
    CHECK(sn.tier(TierName::DDR)->capacity_bytes == 1'500'000'000'000ll);
    CHECK(sn.model_ingress_bw == doctest::Approx(1e12));
    CHECK(sn.machine_balance == doctest::Approx(638e12 / 1.8e12));
    CHECK(validate_platform(sn).ok());

    auto a100 = builtin_platform("dgx_a100");
    CHECK(a100.hbm_capacity_aggregate() == 640'000'000'000ll);
    CHECK(a100.model_ingress_bw == doctest::Approx(32e9));
    CHECK(a100.machine_balance == doctest::Approx(150.0));
    CHECK_FALSE(a100.dataflow_tile());
    CHECK(validate_platform(a100).ok());

    auto h100 = builtin_platform("dgx_h100");
    CHECK(h100.model_ingress_bw == doctest::Approx(64e9));
    CHECK(validate_platform(h100).ok());

    CHECK_THROWS_AS(builtin_platform("tpu_v9"), std::invalid_argument);
}

TEST_CASE("platform validation flags inconsistent configs") {
    auto p = builtin_platform("sn40l_node");
    p.tile.sram_total_bytes += 1;
    CHECK_FALSE(validate_platform(p).ok());

    auto q = builtin_platform("dgx_a100");
    q.sockets = 0;
    CHECK_FALSE(validate_platform(q).ok());
}

TEST_CASE("allreduce latency follows alpha-beta model") {
    auto p = builtin_platform("sn40l_node");
    CHECK(p.allreduce_latency(0) == doctest::Approx(p.allreduce_alpha));
    CHECK(p.allreduce_latency(100'000'000'000ll) ==
          doctest::Approx(p.allreduce_alpha + 100e9 / p.allreduce_beta));
}

TEST_CASE("platform file parsing with base override") {
    std::string path = "test_platform_arch.cfg";
    {
        std::ofstream f(path);
        f << "version = arch_v1\n"
          << "base = sn40l_node\n"
          << "name = sn40l_wide\n"
          << "sockets = 16\n"
          << "hbm.capacity_bytes = 68719476736\n"
          << "hbm.bandwidth_bytes_per_s = 1.8e12\n";
    }
    auto p = platform_from_file(path);
    CHECK(p.name == "sn40l_wide");
    CHECK(p.sockets == 16);
    CHECK(p.hbm_bandwidth_aggregate() == doctest::Approx(16 * 1.8e12));
    // Untouched fields inherit from the base.
    CHECK(p.tile.pcu_count == 1040);
    std::remove(path.c_str());

    CHECK_THROWS(platform_from_file("does_not_exist.cfg"));
}

TEST_CASE("resolve falls back from builtin name to file path") {
    CHECK(resolve_platform("dgx_a100").name == "dgx_a100");
    CHECK_THROWS(resolve_platform("no_such_platform_or_file"));
}

TEST_CASE("capacity tier prefers DDR, falls back to host") {
    auto sn = builtin_platform("sn40l_node");
    CHECK(sn.capacity_tier_bytes() == 8 * 1'500'000'000'000ll);
    auto a100 = builtin_platform("dgx_a100");
    CHECK(a100.capacity_tier_bytes() == 2'000'000'000'000ll);
}
