#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "dfsim/arch.hpp"
#include "dfsim/coesim.hpp"
#include "dfsim/fusion.hpp"
#include "dfsim/opgraph.hpp"
#include "dfsim/perf.hpp"

namespace py = pybind11;
using namespace dfsim;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "core bindings for the dataflow accelerator modeling toolkit";

    py::register_exception<opgraph::Infeasible>(m, "Infeasible");

    py::class_<opgraph::OpGraph>(m, "OpGraph")
        .def_static("from_json", &opgraph::graph_from_json)
        .def_static("from_file",
                    [](const std::string& path) { return opgraph::graph_from_json(slurp(path)); })
        .def("num_operators",
             [](const opgraph::OpGraph& g) { return g.operators.size(); })
        .def("num_tensors", [](const opgraph::OpGraph& g) { return g.tensors.size(); });

    py::class_<arch::PlatformConfig>(m, "PlatformConfig")
        .def_readonly("name", &arch::PlatformConfig::name)
        .def_readonly("sockets", &arch::PlatformConfig::sockets)
        .def("hbm_bandwidth_aggregate", &arch::PlatformConfig::hbm_bandwidth_aggregate)
        .def("hbm_capacity_aggregate", &arch::PlatformConfig::hbm_capacity_aggregate);
    m.def("builtin_platform", &arch::builtin_platform);
    m.def("resolve_platform", &arch::resolve_platform);

    m.def("operational_intensity",
          [](const opgraph::OpGraph& g, bool fused) {
              auto p = fused ? opgraph::single_kernel_partition(g)
                             : opgraph::unfused_partition(g);
              auto rep = opgraph::operational_intensity(g, p);
              py::list kernels;
              for (const auto& k : rep.per_kernel) {
                  py::dict d;
                  d["flops"] = k.flops;
                  d["boundary_bytes"] = k.boundary_bytes;
                  d["oi"] = k.oi;
                  kernels.append(d);
              }
              py::dict out;
              out["aggregate_oi"] = rep.aggregate_oi;
              out["kernels"] = kernels;
              return out;
          },
          py::arg("graph"), py::arg("fused") = false);

    m.def("plan_fusion_json",
          [](const opgraph::OpGraph& g, const std::string& platform,
             const std::vector<std::string>& hints) {
              auto p = arch::resolve_platform(platform);
              fusion::FusionOptions opts{hints.empty() ? fusion::FusionPolicy::Maximal
                                                       : fusion::FusionPolicy::Hinted,
                                         hints};
              return fusion::plan_to_json(fusion::plan_fusion(g, p.tile, opts));
          },
          py::arg("graph"), py::arg("platform") = "sn40l_node",
          py::arg("hints") = std::vector<std::string>{});

    py::class_<coesim::ExpertModel>(m, "ExpertModel")
        .def(py::init<>())
        .def_readwrite("param_count", &coesim::ExpertModel::param_count)
        .def_readwrite("dtype_bytes", &coesim::ExpertModel::dtype_bytes);

    m.def("switch_time",
          [](const coesim::ExpertModel& e, const std::string& platform) {
              return coesim::switch_time(e, arch::resolve_platform(platform));
          });
    m.def("footprint",
          [](int experts, const coesim::ExpertModel& proto, const std::string& platform) {
              return coesim::footprint(experts, proto, arch::resolve_platform(platform));
          });
    m.def("decode_throughput_bound",
          [](double model_bytes, double kv_bytes, const std::string& platform, double util) {
              return perf::decode_throughput_bound(model_bytes, kv_bytes,
                                                   arch::resolve_platform(platform), util);
          },
          py::arg("model_bytes"), py::arg("kv_bytes"), py::arg("platform") = "sn40l_node",
          py::arg("util") = 0.85);
    m.def("serve_summary",
          [](const std::string& trace_path, const std::string& config_path,
             const std::string& platform) {
              auto trace = coesim::trace_from_jsonl(trace_path);
              auto cfg = config_path.empty() ? coesim::CoEConfig::defaults()
                                             : coesim::config_from_json(slurp(config_path));
              auto b = coesim::serve_trace(trace, cfg, arch::resolve_platform(platform));
              py::dict d;
              d["total_time"] = b.total_time;
              d["switch_total"] = b.switch_total;
              d["execute_total"] = b.execute_total;
              d["router_total"] = b.router_total;
              d["hits"] = b.hits;
              d["misses"] = b.misses;
              return d;
          },
          py::arg("trace_path"), py::arg("config_path") = "",
          py::arg("platform") = "sn40l_node");
}
