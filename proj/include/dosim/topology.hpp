#ifndef DOSIM_TOPOLOGY_HPP
#define DOSIM_TOPOLOGY_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dosim/linalg.hpp"

namespace dosim {

// Communication structures between agents and edge/consensus controllers.
//
// The only structural requirement for globally optimal equilibria is the
// nullspace property ker(R') = span{1_N}, held individually by every matrix
// present. Columns are controllers, rows are agents.
enum class CommVariant { Undirected, Generalized, Directed };

struct PropertyCheck {
    bool pass = false;
    std::string reason;
};

// ker(M') = span{1_N}: M' 1_N = 0 (inf-norm < 1e-10) and numeric rank = N-1
// (singular values below 1e-10 * sigma_max count as zero).
inline PropertyCheck check_nullspace_property(const MatrixXd& m) {
    const int n = static_cast<int>(m.rows());
    if (n == 0) return {false, "empty matrix"};
    if (n == 1) {
        // 0 x 1 transpose has kernel R = span{1}; nothing else to check.
        return {true, ""};
    }
    const VectorXd col_sums = m.transpose() * VectorXd::Ones(n);
    const double drift = col_sums.size() > 0 ? col_sums.lpNorm<Eigen::Infinity>() : 0.0;
    if (drift >= 1e-10) {
        return {false, "1_N not in kernel of transpose (column-sum residual " + std::to_string(drift) + ")"};
    }
    const int rank = numeric_rank(m);
    if (rank != n - 1) {
        return {false, "numeric rank " + std::to_string(rank) + ", expected N-1 = " + std::to_string(n - 1)};
    }
    return {true, ""};
}

struct CommStructure {
    CommVariant variant = CommVariant::Undirected;
    int n_agents = 0;
    int n_controllers = 0;
    MatrixXd agent_matrix;       // E, R, or R_A (information flow agents -> controllers)
    MatrixXd controller_matrix;  // equals agent_matrix unless Directed (R_C)
    std::vector<std::pair<int, int>> edges;  // populated for Undirected (0-based)

    const MatrixXd& r_a() const { return agent_matrix; }
    const MatrixXd& r_c() const { return controller_matrix; }

    PropertyCheck check() const {
        PropertyCheck a = check_nullspace_property(agent_matrix);
        if (!a.pass) return a;
        if (variant == CommVariant::Directed) {
            PropertyCheck c = check_nullspace_property(controller_matrix);
            if (!c.pass) {
                c.reason = "controller matrix: " + c.reason;
                return c;
            }
        }
        return {true, ""};
    }

    static CommStructure undirected(MatrixXd incidence, std::vector<std::pair<int, int>> edge_list = {}) {
        CommStructure c;
        c.variant = CommVariant::Undirected;
        c.n_agents = static_cast<int>(incidence.rows());
        c.n_controllers = static_cast<int>(incidence.cols());
        c.agent_matrix = incidence;
        c.controller_matrix = std::move(incidence);
        c.edges = std::move(edge_list);
        return c;
    }

    static CommStructure generalized(MatrixXd r) {
        CommStructure c;
        c.variant = CommVariant::Generalized;
        c.n_agents = static_cast<int>(r.rows());
        c.n_controllers = static_cast<int>(r.cols());
        c.agent_matrix = r;
        c.controller_matrix = std::move(r);
        return c;
    }

    static CommStructure directed(MatrixXd r_a, MatrixXd r_c) {
        if (r_a.rows() != r_c.rows() || r_a.cols() != r_c.cols()) {
            throw std::invalid_argument("directed comm: R_A and R_C must have identical size");
        }
        CommStructure c;
        c.variant = CommVariant::Directed;
        c.n_agents = static_cast<int>(r_a.rows());
        c.n_controllers = static_cast<int>(r_a.cols());
        c.agent_matrix = std::move(r_a);
        c.controller_matrix = std::move(r_c);
        return c;
    }
};

namespace detail {

inline bool connected(int n_agents, const std::vector<std::pair<int, int>>& edges) {
    if (n_agents <= 1) return true;
    std::vector<int> parent(n_agents);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
    for (const auto& [i, j] : edges) parent[find(i)] = find(j);
    for (int v = 1; v < n_agents; ++v) {
        if (find(v) != find(0)) return false;
    }
    return true;
}

}  // namespace detail

// Incidence matrix of an undirected connected graph: column per edge (i, j),
// -1 at the node the edge leaves, +1 at the node it enters. Node ids 0-based.
inline CommStructure incidence_from_edges(int n_agents, const std::vector<std::pair<int, int>>& edges) {
    if (n_agents < 1) throw std::invalid_argument("incidence_from_edges: need at least one agent");
    for (const auto& [i, j] : edges) {
        if (i < 0 || j < 0 || i >= n_agents || j >= n_agents) {
            throw std::invalid_argument("incidence_from_edges: node id out of range");
        }
        if (i == j) throw std::invalid_argument("incidence_from_edges: self-loop");
    }
    if (!detail::connected(n_agents, edges)) {
        throw std::invalid_argument("incidence_from_edges: graph is disconnected");
    }
    MatrixXd e = MatrixXd::Zero(n_agents, static_cast<int>(edges.size()));
    for (std::size_t k = 0; k < edges.size(); ++k) {
        e(edges[k].first, static_cast<int>(k)) = -1.0;
        e(edges[k].second, static_cast<int>(k)) = 1.0;
    }
    return CommStructure::undirected(std::move(e), edges);
}

// M (x) I_n.
inline MatrixXd lift(const MatrixXd& m, int n) {
    if (n < 1) throw std::invalid_argument("lift: n must be >= 1");
    return kron(m, MatrixXd::Identity(n, n));
}

// Basis 1_N (x) e_j, j = 1..p, of ker((M' (x) I_p)) for a matrix with the
// nullspace property. Verifies the residual and the numeric nullity.
inline std::vector<VectorXd> kron_kernel_basis(const MatrixXd& m, int p) {
    PropertyCheck pc = check_nullspace_property(m);
    if (!pc.pass) throw std::invalid_argument("kron_kernel_basis: nullspace property fails: " + pc.reason);
    if (p < 1) throw std::invalid_argument("kron_kernel_basis: p must be >= 1");

    const int n = static_cast<int>(m.rows());
    const MatrixXd lifted_t = lift(m.transpose(), p);
    std::vector<VectorXd> basis;
    basis.reserve(p);
    for (int j = 0; j < p; ++j) {
        VectorXd v = VectorXd::Zero(n * p);
        for (int i = 0; i < n; ++i) v(i * p + j) = 1.0;
        if ((lifted_t * v).lpNorm<Eigen::Infinity>() >= 1e-10) {
            throw std::runtime_error("kron_kernel_basis: residual check failed");
        }
        basis.push_back(std::move(v));
    }
    if (numeric_nullity(lifted_t) != p) {
        throw std::runtime_error("kron_kernel_basis: lifted nullity differs from p");
    }
    return basis;
}

namespace detail {

inline std::vector<std::pair<int, int>> random_connected_edges(int n_agents, double density,
                                                               std::mt19937_64& rng, int max_attempts) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<std::pair<int, int>> edges;
        for (int i = 0; i < n_agents; ++i) {
            for (int j = i + 1; j < n_agents; ++j) {
                if (unit(rng) < density) edges.emplace_back(i, j);
            }
        }
        if (connected(n_agents, edges)) return edges;
    }
    throw std::runtime_error("random_comm_structure: retry budget exhausted (graph never connected)");
}

// Zero-sum integer weights in {-3,...,3}\{0} for one controller column over
// `members` agents; the last weight balances the column.
inline void fill_zero_sum_column(MatrixXd& r, int col, const std::vector<int>& members,
                                 std::mt19937_64& rng) {
    std::uniform_int_distribution<int> mag(1, 3);
    std::bernoulli_distribution sign(0.5);
    for (int tries = 0; tries < 64; ++tries) {
        double sum = 0.0;
        for (std::size_t s = 0; s + 1 < members.size(); ++s) {
            const double w = (sign(rng) ? 1.0 : -1.0) * mag(rng);
            r(members[s], col) = w;
            sum += w;
        }
        if (sum != 0.0) {
            r(members.back(), col) = -sum;
            return;
        }
    }
    // All-cancelled draws: force an asymmetric pair.
    r(members.front(), col) = 2.0;
    r(members.back(), col) = -2.0;
    for (std::size_t s = 1; s + 1 < members.size(); ++s) r(members[s], col) = 0.0;
}

// Random spanning-tree-plus-extra-edges hypergraph with exactly n_controllers
// columns and zero-sum integer weights per column.
inline MatrixXd random_generalized_matrix(int n_agents, int n_controllers, std::mt19937_64& rng,
                                          int max_attempts) {
    if (n_controllers < n_agents - 1) {
        throw std::invalid_argument("random_comm_structure: needs at least N-1 controllers");
    }
    std::uniform_int_distribution<int> pick(0, n_agents - 1);
    std::bernoulli_distribution triple(0.25);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        // Random spanning tree: attach each node to an earlier one.
        std::vector<std::vector<int>> hyperedges;
        std::vector<int> order(n_agents);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (int k = 1; k < n_agents; ++k) {
            std::uniform_int_distribution<int> earlier(0, k - 1);
            hyperedges.push_back({order[earlier(rng)], order[k]});
        }
        // Extra controllers connect 2 or 3 agents each.
        while (static_cast<int>(hyperedges.size()) < n_controllers) {
            std::vector<int> members{pick(rng), pick(rng)};
            if (triple(rng)) members.push_back(pick(rng));
            std::sort(members.begin(), members.end());
            members.erase(std::unique(members.begin(), members.end()), members.end());
            if (members.size() < 2) continue;
            hyperedges.push_back(std::move(members));
        }
        MatrixXd r = MatrixXd::Zero(n_agents, n_controllers);
        for (std::size_t k = 0; k < hyperedges.size(); ++k) {
            fill_zero_sum_column(r, static_cast<int>(k), hyperedges[k], rng);
        }
        if (check_nullspace_property(r).pass) return r;
    }
    throw std::runtime_error("random_comm_structure: retry budget exhausted (property never satisfied)");
}

inline int density_controller_count(int n_agents, double density) {
    const double target = density * n_agents * (n_agents - 1) / 2.0;
    return std::max(n_agents - 1, static_cast<int>(target + 0.5));
}

}  // namespace detail

// Random communication structure passing the nullspace property; deterministic
// per seed. density is the pairwise connection probability.
inline CommStructure random_comm_structure(int n_agents, double density, std::uint64_t seed,
                                           CommVariant variant) {
    if (n_agents < 2) throw std::invalid_argument("random_comm_structure: need at least two agents");
    if (!(density > 0.0) || density > 1.0) {
        throw std::invalid_argument("random_comm_structure: density must be in (0, 1]");
    }
    constexpr int kMaxAttempts = 1000;
    std::mt19937_64 rng(seed);
    switch (variant) {
        case CommVariant::Undirected: {
            auto edges = detail::random_connected_edges(n_agents, density, rng, kMaxAttempts);
            return incidence_from_edges(n_agents, edges);
        }
        case CommVariant::Generalized: {
            const int k = detail::density_controller_count(n_agents, density);
            return CommStructure::generalized(detail::random_generalized_matrix(n_agents, k, rng, kMaxAttempts));
        }
        case CommVariant::Directed: {
            // Two independent generalized matrices on the same controller set.
            const int k = detail::density_controller_count(n_agents, density);
            MatrixXd r_a = detail::random_generalized_matrix(n_agents, k, rng, kMaxAttempts);
            MatrixXd r_c = detail::random_generalized_matrix(n_agents, k, rng, kMaxAttempts);
            return CommStructure::directed(std::move(r_a), std::move(r_c));
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace dosim

#endif
