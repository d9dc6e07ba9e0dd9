#pragma once

#include "koopgraph/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace koopgraph {

struct Edge {
    int src = 0;
    int dst = 0;
    double weight = 1.0;
};

/// Weighted, optionally directed graph. Undirected graphs store each edge
/// once; dense operators symmetrize on demand.
class Graph {
public:
    Graph() = default;
    Graph(int n, std::vector<Edge> edges, bool directed = false);

    int num_nodes() const noexcept { return n_; }
    bool directed() const noexcept { return directed_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }

    /// Dense adjacency, A(src, dst) = weight; mirrored when undirected.
    /// Parallel edges accumulate.
    Matrix adjacency() const;

    /// 0/1 indicator of the adjacency support.
    Matrix support() const;

private:
    int n_ = 0;
    std::vector<Edge> edges_;
    bool directed_ = false;
};

struct GraphOperators {
    Matrix adj_norm;        // A-hat
    Matrix laplacian_norm;  // I - A-hat
    Vector degree;
};

/// D^-1/2 (A [+ I]) D^-1/2 for undirected graphs and D_out^-1/2 (A [+ I]) D_in^-1/2
/// for directed ones. A node without any incident edge is a DegenerateInputError
/// unless self_loops is set.
Matrix normalized_adjacency(const Graph& g, bool self_loops);

GraphOperators graph_operators(const Graph& g, bool self_loops);

/// Fraction of edges whose endpoints share a label.
double homophily_index(const Graph& g, const std::vector<int>& labels);

struct LabeledGraph {
    Graph graph;
    std::vector<int> labels;
};

/// Stochastic block model with contiguous, near-equal blocks. Undirected and
/// simple; deterministic for a fixed seed.
LabeledGraph sbm_generate(int n, int blocks, double p_in, double p_out, std::uint64_t seed);

/// Unweighted undirected path on n nodes.
Graph chain_graph(int n);

/// Unweighted undirected cycle on n nodes.
Graph cycle_graph(int n);

/// Edge-list text: `src<TAB>dst[<TAB>weight]` per line, '#' comments.
Graph read_edge_list(const std::filesystem::path& path, int n, bool directed);
void write_edge_list(const std::filesystem::path& path, const Graph& g);

}  // namespace koopgraph
