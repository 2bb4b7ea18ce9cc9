#include "qaclab/graph.hpp"

#include <nlohmann/json.hpp>

namespace qaclab {

using nlohmann::json;

std::string graph_to_json(const WeightedGraph& g)
{
    json j;
    json verts = json::array();
    for (int v = 0; v < g.size(); ++v)
        verts.push_back({{"id", v},
                         {"pos", g.pos[v]},
                         {"measure", g.measure[v]},
                         {"boundary", g.boundary[v] != 0}});
    json edges = json::array();
    for (const auto& e : g.edges)
        edges.push_back({{"u", e.u}, {"v", e.v}, {"length", e.length}, {"conductance", e.conductance}});
    j["vertices"] = std::move(verts);
    j["edges"] = std::move(edges);
    return j.dump();
}

WeightedGraph graph_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw domain_error(std::string("graph json: ") + e.what());
    }
    WeightedGraph g;
    const auto& verts = j.at("vertices");
    g.pos.resize(verts.size());
    g.measure.resize(verts.size());
    g.boundary.resize(verts.size());
    for (const auto& v : verts) {
        int id = v.at("id").get<int>();
        if (id < 0 || id >= static_cast<int>(verts.size()))
            throw domain_error("graph json: vertex id out of range");
        g.pos[id] = v.at("pos").get<std::vector<double>>();
        g.measure[id] = v.at("measure").get<double>();
        g.boundary[id] = v.value("boundary", false) ? 1 : 0;
    }
    for (const auto& e : j.at("edges")) {
        int k = g.add_edge(e.at("u").get<int>(), e.at("v").get<int>(), e.at("length").get<double>());
        g.edges[k].conductance = e.value("conductance", 0.0);
    }
    g.finalize();
    return g;
}

}  // namespace qaclab
