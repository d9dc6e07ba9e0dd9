#include "koopgraph/graph.hpp"

#include "koopgraph/error.hpp"
#include "koopgraph/io.hpp"
#include "koopgraph/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace koopgraph {

Graph::Graph(int n, std::vector<Edge> edges, bool directed)
    : n_(n), edges_(std::move(edges)), directed_(directed) {
    if (n < 0) {
        throw ContractError("Graph: negative node count");
    }
    for (const Edge& e : edges_) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
            throw ContractError("Graph: edge (" + std::to_string(e.src) + ", " +
                                std::to_string(e.dst) + ") outside [0, " + std::to_string(n) + ")");
        }
        if (!std::isfinite(e.weight) || e.weight <= 0.0) {
            throw ContractError("Graph: edge weights must be finite and positive");
        }
    }
}

Matrix Graph::adjacency() const {
    Matrix a = Matrix::Zero(n_, n_);
    for (const Edge& e : edges_) {
        a(e.src, e.dst) += e.weight;
        if (!directed_ && e.src != e.dst) {
            a(e.dst, e.src) += e.weight;
        }
    }
    return a;
}

Matrix Graph::support() const {
    return adjacency().unaryExpr([](double v) { return v != 0.0 ? 1.0 : 0.0; });
}

GraphOperators graph_operators(const Graph& g, bool self_loops) {
    const int n = g.num_nodes();
    Matrix a = g.adjacency();
    if (self_loops) {
        a.diagonal().array() += 1.0;
    }
    const Vector out_deg = a.rowwise().sum();
    const Vector in_deg = a.colwise().sum().transpose();
    for (int i = 0; i < n; ++i) {
        if (out_deg[i] == 0.0 && in_deg[i] == 0.0) {
            throw DegenerateInputError("normalized_adjacency: node " + std::to_string(i) +
                                       " is isolated; D^-1/2 is undefined (enable self-loops or "
                                       "drop the node)");
        }
    }
    auto inv_sqrt = [](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; };
    const Vector left = out_deg.unaryExpr(inv_sqrt);
    const Vector right = in_deg.unaryExpr(inv_sqrt);

    GraphOperators ops;
    ops.adj_norm = left.asDiagonal() * a * right.asDiagonal();
    if (!g.directed()) {
        // Exact symmetry: the two triangular halves are products of the same
        // factors in different order, so average them bitwise.
        ops.adj_norm = 0.5 * (ops.adj_norm + ops.adj_norm.transpose()).eval();
    }
    ops.laplacian_norm = Matrix::Identity(n, n) - ops.adj_norm;
    ops.degree = g.directed() ? Vector(0.5 * (out_deg + in_deg)) : out_deg;
    return ops;
}

Matrix normalized_adjacency(const Graph& g, bool self_loops) {
    return graph_operators(g, self_loops).adj_norm;
}

double homophily_index(const Graph& g, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != g.num_nodes()) {
        throw ContractError("homophily_index: label count does not match node count");
    }
    if (g.edges().empty()) {
        throw DegenerateInputError("homophily_index: undefined for a graph without edges");
    }
    std::size_t same = 0;
    for (const Edge& e : g.edges()) {
        if (labels[static_cast<std::size_t>(e.src)] == labels[static_cast<std::size_t>(e.dst)]) {
            ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(g.edges().size());
}

LabeledGraph sbm_generate(int n, int blocks, double p_in, double p_out, std::uint64_t seed) {
    if (n < 1 || blocks < 1 || blocks > n) {
        throw ContractError("sbm_generate: need 1 <= blocks <= n");
    }
    if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0)) {
        throw ContractError("sbm_generate: probabilities must lie in [0, 1]");
    }
    LabeledGraph out;
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.labels[static_cast<std::size_t>(i)] =
            static_cast<int>(static_cast<long long>(i) * blocks / n);
    }
    Rng rng = make_stream(seed, "sbm");
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool same = out.labels[static_cast<std::size_t>(i)] ==
                              out.labels[static_cast<std::size_t>(j)];
            if (uniform01(rng) < (same ? p_in : p_out)) {
                edges.push_back({i, j, 1.0});
            }
        }
    }
    out.graph = Graph(n, std::move(edges), false);
    return out;
}

Graph chain_graph(int n) {
    if (n < 2) {
        throw ContractError("chain_graph: need n >= 2");
    }
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
    return Graph(n, std::move(edges), false);
}

Graph cycle_graph(int n) {
    if (n < 3) {
        throw ContractError("cycle_graph: need n >= 3");
    }
    std::vector<Edge> edges;
    for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n, 1.0});
    return Graph(n, std::move(edges), false);
}

Graph read_edge_list(const std::filesystem::path& path, int n, bool directed) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open edge list: " + path.string());
    }
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        Edge e;
        if (!(ss >> e.src >> e.dst)) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": malformed edge line");
        }
        std::string extra;
        if (ss >> extra) {
            try {
                std::size_t used = 0;
                e.weight = std::stod(extra, &used);
                if (used != extra.size()) throw std::invalid_argument(extra);
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": malformed weight '" + extra + "'");
            }
            if (ss >> extra) {
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": too many fields");
            }
        }
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": node id outside [0, " +
                              std::to_string(n) + ")");
        }
        if (!std::isfinite(e.weight) || e.weight <= 0.0) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": weight must be finite and positive");
        }
        edges.push_back(e);
    }
    return Graph(n, std::move(edges), directed);
}

void write_edge_list(const std::filesystem::path& path, const Graph& g) {
    std::ostringstream out;
    for (const Edge& e : g.edges()) {
        out << e.src << '\t' << e.dst;
        if (e.weight != 1.0) out << '\t' << io::format_double(e.weight);
        out << '\n';
    }
    io::write_text(path, out.str());
}

}  // namespace koopgraph
