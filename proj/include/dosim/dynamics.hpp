#ifndef DOSIM_DYNAMICS_HPP
#define DOSIM_DYNAMICS_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "dosim/objective.hpp"
#include "dosim/topology.hpp"

namespace dosim {

// Agent blocks. Three kinds:
//   GradientFlow:  x' = -a grad f(x) + a u,          y = x
//   Feedthrough:   x' = -a grad f(x + g u) + a u,    y = x + g u
//   Constrained:   x' = -a grad_x L(x, l, m) + a u,  y = x
//                  l' = 0 when l = 0 and g(x) < 0, g(x) otherwise (componentwise)
//                  m' = h(x)
enum class AgentKind { GradientFlow, Feedthrough, Constrained };

struct AgentSystem {
    AgentKind kind = AgentKind::GradientFlow;
    double alpha = 1.0;
    double gamma = 0.0;
    ObjectiveSpec objective;
    ConstraintSet constraints;
    VectorXd x;       // state / initial state
    VectorXd lambda;  // inequality multipliers (Constrained)
    VectorXd mu;      // equality multipliers (Constrained)

    int dim() const { return objective.dim(); }
    int n_lambda() const { return constraints.n_inequalities(); }
    int n_mu() const { return constraints.n_equalities(); }

    static AgentSystem gradient_flow(ObjectiveSpec f, double alpha, VectorXd x0 = {}) {
        AgentSystem a;
        a.kind = AgentKind::GradientFlow;
        a.alpha = alpha;
        a.objective = std::move(f);
        a.x = x0.size() ? std::move(x0) : VectorXd::Zero(a.objective.dim()).eval();
        a.validate();
        return a;
    }

    static AgentSystem feedthrough(ObjectiveSpec f, double alpha, double gamma, VectorXd x0 = {}) {
        AgentSystem a;
        a.kind = AgentKind::Feedthrough;
        a.alpha = alpha;
        a.gamma = gamma;
        a.objective = std::move(f);
        a.x = x0.size() ? std::move(x0) : VectorXd::Zero(a.objective.dim()).eval();
        a.validate();
        return a;
    }

    static AgentSystem constrained(ObjectiveSpec f, ConstraintSet cons, double alpha, VectorXd x0 = {},
                                   VectorXd lambda0 = {}, VectorXd mu0 = {}) {
        AgentSystem a;
        a.kind = AgentKind::Constrained;
        a.alpha = alpha;
        a.objective = std::move(f);
        a.constraints = std::move(cons);
        a.x = x0.size() ? std::move(x0) : VectorXd::Zero(a.objective.dim()).eval();
        a.lambda = lambda0.size() ? std::move(lambda0) : VectorXd::Zero(a.constraints.n_inequalities()).eval();
        a.mu = mu0.size() ? std::move(mu0) : VectorXd::Zero(a.constraints.n_equalities()).eval();
        a.validate();
        return a;
    }

    void validate() const {
        if (alpha <= 0.0) throw std::invalid_argument("agent: alpha must be > 0");
        if (gamma < 0.0) throw std::invalid_argument("agent: gamma must be >= 0");
        if (kind == AgentKind::Feedthrough) {
            // Proposition bound for strongly convex objectives with known
            // Lipschitz gradients: gamma < 2m/l. Quadratic-form objectives are
            // exempt (their exact indices hold for any gamma).
            const double m = objective.strong_convexity();
            const auto l = objective.grad_lipschitz();
            if (!objective.has_quadratic_form() && m > 0.0 && l && *l > 0.0 && gamma >= 2.0 * m / *l) {
                throw std::invalid_argument("agent: feedthrough gain gamma must be < 2m/l");
            }
        }
        if (kind == AgentKind::Constrained) {
            if (lambda.size() && (lambda.array() < 0.0).any()) {
                throw std::invalid_argument("agent: lambda(0) must be >= 0");
            }
        } else if (!constraints.empty()) {
            throw std::invalid_argument("agent: only Constrained agents carry constraints");
        }
    }
};

// Treated as zero in the multiplier switch; exact zero tests are fragile
// under floating point.
inline constexpr double kLambdaTol = 1e-12;

struct AgentRates {
    VectorXd x_dot;
    VectorXd lambda_dot;
    VectorXd mu_dot;
};

inline VectorXd grad_lagrangian(const AgentSystem& agent, const VectorXd& x, const VectorXd& lambda,
                                const VectorXd& mu) {
    VectorXd g = grad(agent.objective, x);
    for (int l = 0; l < agent.constraints.n_inequalities(); ++l) {
        g += lambda(l) * agent.constraints.inequalities[l].gradient(x);
    }
    for (int j = 0; j < agent.constraints.n_equalities(); ++j) {
        g += mu(j) * agent.constraints.equalities[j].a;
    }
    return g;
}

inline AgentRates agent_rhs_at(const AgentSystem& agent, const VectorXd& x, const VectorXd& lambda,
                               const VectorXd& mu, const VectorXd& u) {
    AgentRates rates;
    switch (agent.kind) {
        case AgentKind::GradientFlow:
            rates.x_dot = -agent.alpha * grad(agent.objective, x) + agent.alpha * u;
            break;
        case AgentKind::Feedthrough:
            rates.x_dot = -agent.alpha * grad(agent.objective, x + agent.gamma * u) + agent.alpha * u;
            break;
        case AgentKind::Constrained: {
            rates.x_dot = -agent.alpha * grad_lagrangian(agent, x, lambda, mu) + agent.alpha * u;
            rates.lambda_dot.resize(agent.n_lambda());
            for (int l = 0; l < agent.n_lambda(); ++l) {
                const double g = agent.constraints.inequalities[l].value(x);
                rates.lambda_dot(l) = (lambda(l) <= kLambdaTol && g < 0.0) ? 0.0 : g;
            }
            rates.mu_dot = agent.constraints.eq_values(x);
            break;
        }
    }
    return rates;
}

inline AgentRates agent_rhs(const AgentSystem& agent, const VectorXd& u) {
    return agent_rhs_at(agent, agent.x, agent.lambda, agent.mu, u);
}

inline VectorXd agent_output_at(const AgentSystem& agent, const VectorXd& x, const VectorXd& u) {
    if (agent.kind == AgentKind::Feedthrough) return x + agent.gamma * u;
    return x;
}

inline VectorXd agent_output(const AgentSystem& agent, const VectorXd& u) {
    return agent_output_at(agent, agent.x, u);
}

// Controller block: z' = b zeta, d = z + b zeta (with feedthrough) or d = z.
struct ControllerSystem {
    double beta = 1.0;
    bool feedthrough = true;
    VectorXd z;

    static ControllerSystem make(double beta, bool feedthrough, VectorXd z0) {
        if (beta <= 0.0) throw std::invalid_argument("controller: beta must be > 0");
        return ControllerSystem{beta, feedthrough, std::move(z0)};
    }
};

struct ControllerRates {
    VectorXd z_dot;
    VectorXd d;
};

inline ControllerRates controller_rhs_output_at(const ControllerSystem& ctrl, const VectorXd& z,
                                                const VectorXd& zeta) {
    ControllerRates rates;
    rates.z_dot = ctrl.beta * zeta;
    rates.d = ctrl.feedthrough ? (z + ctrl.beta * zeta).eval() : z;
    return rates;
}

inline ControllerRates controller_rhs_output(const ControllerSystem& ctrl, const VectorXd& zeta) {
    return controller_rhs_output_at(ctrl, ctrl.z, zeta);
}

// Packing order of the closed-loop state vector:
// all agent states x, then all lambda (agent-major), then all mu, then
// all controller states z.
struct StateLayout {
    int n = 1;           // decision-variable dimension
    int n_agents = 0;
    int n_controllers = 0;
    std::vector<int> lambda_offset;  // into the lambda block, per agent
    std::vector<int> mu_offset;
    int lambda_total = 0;
    int mu_total = 0;

    int x_begin(int i) const { return i * n; }
    int lambda_begin(int i) const { return n_agents * n + lambda_offset[i]; }
    int lambda_size(int i) const {
        return (i + 1 < n_agents ? lambda_offset[i + 1] : lambda_total) - lambda_offset[i];
    }
    int mu_begin(int i) const { return n_agents * n + lambda_total + mu_offset[i]; }
    int mu_size(int i) const { return (i + 1 < n_agents ? mu_offset[i + 1] : mu_total) - mu_offset[i]; }
    int z_begin(int k) const { return n_agents * n + lambda_total + mu_total + k * n; }
    int total() const { return n_agents * n + lambda_total + mu_total + n_controllers * n; }
};

// Assembled closed loop. Construction precomputes the algebraic-loop solve
// needed when both agent and controller feedthrough are present:
//   y = x + G u,  u = -(R_C (x) I) d,  d = z + B (R_A' (x) I) y
// giving (I + G (R_C (x) I) B (R_A' (x) I)) y = x - G (R_C (x) I) z.
class NetworkSystem {
public:
    struct Outputs {
        VectorXd y;
        VectorXd u;
        VectorXd zeta;
        VectorXd d;
    };

    NetworkSystem(std::vector<AgentSystem> agents, std::vector<ControllerSystem> controllers,
                  CommStructure comm, int n)
        : agents_(std::move(agents)), controllers_(std::move(controllers)), comm_(std::move(comm)), n_(n) {
        const int n_agents = static_cast<int>(agents_.size());
        if (n_agents == 0) throw std::invalid_argument("network: needs at least one agent");
        if (comm_.n_agents != n_agents) throw std::invalid_argument("network: comm agent count mismatch");
        if (comm_.n_controllers != static_cast<int>(controllers_.size())) {
            throw std::invalid_argument("network: controller count does not match comm");
        }
        for (const auto& a : agents_) {
            if (a.dim() != n_) throw std::invalid_argument("network: all agents must share dimension n");
            if (a.kind == AgentKind::Constrained && comm_.variant == CommVariant::Directed) {
                throw std::invalid_argument("network: constrained agents require an undirected/generalized topology");
            }
        }
        for (auto& c : controllers_) {
            if (c.z.size() == 0) c.z = VectorXd::Zero(n_);
            if (c.z.size() != n_) throw std::invalid_argument("network: controller state dimension mismatch");
        }

        layout_.n = n_;
        layout_.n_agents = n_agents;
        layout_.n_controllers = static_cast<int>(controllers_.size());
        layout_.lambda_offset.resize(n_agents);
        layout_.mu_offset.resize(n_agents);
        for (int i = 0; i < n_agents; ++i) {
            layout_.lambda_offset[i] = layout_.lambda_total;
            layout_.mu_offset[i] = layout_.mu_total;
            layout_.lambda_total += agents_[i].n_lambda();
            layout_.mu_total += agents_[i].n_mu();
        }

        r_a_sparse_ = comm_.r_a().sparseView();
        r_c_sparse_ = comm_.r_c().sparseView();

        has_agent_feedthrough_ = false;
        for (const auto& a : agents_) {
            if (a.kind == AgentKind::Feedthrough && a.gamma > 0.0) has_agent_feedthrough_ = true;
        }
        has_controller_feedthrough_ = false;
        for (const auto& c : controllers_) {
            if (c.feedthrough) has_controller_feedthrough_ = true;
        }
        init_loop_solver();
    }

    const std::vector<AgentSystem>& agents() const { return agents_; }
    const std::vector<ControllerSystem>& controllers() const { return controllers_; }
    const CommStructure& comm() const { return comm_; }
    int n() const { return n_; }
    int n_agents() const { return layout_.n_agents; }
    int n_controllers() const { return layout_.n_controllers; }
    const StateLayout& layout() const { return layout_; }
    double loop_condition() const { return loop_condition_; }
    bool has_algebraic_loop() const { return has_agent_feedthrough_ && has_controller_feedthrough_; }

    VectorXd pack_state() const {
        VectorXd s = VectorXd::Zero(layout_.total());
        for (int i = 0; i < n_agents(); ++i) {
            s.segment(layout_.x_begin(i), n_) = agents_[i].x;
            if (agents_[i].n_lambda()) s.segment(layout_.lambda_begin(i), agents_[i].n_lambda()) = agents_[i].lambda;
            if (agents_[i].n_mu()) s.segment(layout_.mu_begin(i), agents_[i].n_mu()) = agents_[i].mu;
        }
        for (int k = 0; k < n_controllers(); ++k) s.segment(layout_.z_begin(k), n_) = controllers_[k].z;
        return s;
    }

    VectorXd x_block(const VectorXd& state) const { return state.head(n_agents() * n_); }
    VectorXd z_block(const VectorXd& state) const { return state.tail(n_controllers() * n_); }

    // Consistent (y, u, zeta, d) for given stacked agent states and controller
    // states; solves the algebraic loop when both feedthrough paths exist.
    Outputs resolve_outputs(const VectorXd& x_all, const VectorXd& z_all) const {
        Outputs out;
        if (!has_agent_feedthrough_) {
            out.y = x_all;
            out.d = has_controller_feedthrough_
                        ? (z_all + apply_beta(apply_lifted_t(r_a_sparse_, out.y))).eval()
                        : z_all;
            out.u = n_controllers() ? (-apply_lifted(r_c_sparse_, out.d, n_)).eval()
                                    : VectorXd::Zero(n_agents() * n_);
        } else if (!has_controller_feedthrough_) {
            out.d = z_all;
            out.u = n_controllers() ? (-apply_lifted(r_c_sparse_, out.d, n_)).eval()
                                    : VectorXd::Zero(n_agents() * n_);
            out.y = x_all + apply_gamma(out.u);
        } else {
            VectorXd rhs = x_all;
            if (n_controllers()) rhs -= apply_gamma(apply_lifted(r_c_sparse_, z_all, n_));
            out.y = loop_lu_.solve(rhs);
            out.d = z_all + apply_beta(apply_lifted_t(r_a_sparse_, out.y));
            out.u = n_controllers() ? (-apply_lifted(r_c_sparse_, out.d, n_)).eval()
                                    : VectorXd::Zero(n_agents() * n_);
            check_loop_residual(x_all, z_all, out);
        }
        out.zeta = n_controllers() ? apply_lifted_t(r_a_sparse_, out.y) : VectorXd::Zero(0);
        return out;
    }

    void closed_loop_rhs(const VectorXd& state, VectorXd& deriv) const {
        const VectorXd x_all = x_block(state);
        const VectorXd z_all = z_block(state);
        const Outputs out = resolve_outputs(x_all, z_all);
        deriv.resize(layout_.total());
        for (int i = 0; i < n_agents(); ++i) {
            const auto& agent = agents_[i];
            const VectorXd u_i = out.u.segment(layout_.x_begin(i), n_);
            const VectorXd x_i = state.segment(layout_.x_begin(i), n_);
            VectorXd lambda_i, mu_i;
            if (agent.n_lambda()) lambda_i = state.segment(layout_.lambda_begin(i), agent.n_lambda());
            if (agent.n_mu()) mu_i = state.segment(layout_.mu_begin(i), agent.n_mu());
            AgentRates rates = agent_rhs_at(agent, x_i, lambda_i, mu_i, u_i);
            deriv.segment(layout_.x_begin(i), n_) = rates.x_dot;
            if (agent.n_lambda()) deriv.segment(layout_.lambda_begin(i), agent.n_lambda()) = rates.lambda_dot;
            if (agent.n_mu()) deriv.segment(layout_.mu_begin(i), agent.n_mu()) = rates.mu_dot;
        }
        for (int k = 0; k < n_controllers(); ++k) {
            deriv.segment(layout_.z_begin(k), n_) = controllers_[k].beta * out.zeta.segment(k * n_, n_);
        }
    }

    VectorXd closed_loop_rhs(const VectorXd& state) const {
        VectorXd deriv;
        closed_loop_rhs(state, deriv);
        return deriv;
    }

    Outputs resolve_state_outputs(const VectorXd& state) const {
        return resolve_outputs(x_block(state), z_block(state));
    }

private:
    Outputs resolve_outputs_with_state(const VectorXd&, const VectorXd& x_all, const VectorXd& z_all) const {
        return resolve_outputs(x_all, z_all);
    }

    VectorXd apply_gamma(const VectorXd& v) const {
        VectorXd out(v.size());
        for (int i = 0; i < n_agents(); ++i) {
            const double g = agents_[i].kind == AgentKind::Feedthrough ? agents_[i].gamma : 0.0;
            out.segment(i * n_, n_) = g * v.segment(i * n_, n_);
        }
        return out;
    }

    VectorXd apply_beta(const VectorXd& v) const {
        VectorXd out(v.size());
        for (int k = 0; k < n_controllers(); ++k) {
            const double b = controllers_[k].feedthrough ? controllers_[k].beta : 0.0;
            out.segment(k * n_, n_) = b * v.segment(k * n_, n_);
        }
        return out;
    }

    VectorXd apply_lifted_t(const SparseMat& m, const VectorXd& v) const {
        if (n_ == 1) return m.transpose() * v;
        Eigen::Map<const MatrixXd> blocks(v.data(), n_, m.rows());
        MatrixXd out = blocks * m;  // (M' (x) I_n) v
        return Eigen::Map<const VectorXd>(out.data(), out.size());
    }

    void init_loop_solver() {
        loop_condition_ = 1.0;
        if (!has_algebraic_loop()) return;
        const int dim = n_agents() * n_;
        // Gamma (R_C (x) I) B (R_A' (x) I), assembled densely once.
        MatrixXd gamma_diag = MatrixXd::Zero(dim, dim);
        for (int i = 0; i < n_agents(); ++i) {
            const double g = agents_[i].kind == AgentKind::Feedthrough ? agents_[i].gamma : 0.0;
            gamma_diag.block(i * n_, i * n_, n_, n_) = g * MatrixXd::Identity(n_, n_);
        }
        MatrixXd beta_diag = MatrixXd::Zero(n_controllers() * n_, n_controllers() * n_);
        for (int k = 0; k < n_controllers(); ++k) {
            const double b = controllers_[k].feedthrough ? controllers_[k].beta : 0.0;
            beta_diag.block(k * n_, k * n_, n_, n_) = b * MatrixXd::Identity(n_, n_);
        }
        const MatrixXd rc_lift = lift(comm_.r_c(), n_);
        const MatrixXd ra_lift = lift(comm_.r_a(), n_);
        MatrixXd loop = MatrixXd::Identity(dim, dim) + gamma_diag * rc_lift * beta_diag * ra_lift.transpose();
        Eigen::JacobiSVD<MatrixXd> svd(loop);
        const double smin = svd.singularValues().minCoeff();
        const double smax = svd.singularValues().maxCoeff();
        if (smin <= 1e-14 * smax) {
            throw std::invalid_argument("network: algebraic loop matrix is singular");
        }
        loop_condition_ = smax / smin;
        loop_lu_.compute(loop);
    }

    void check_loop_residual(const VectorXd& x_all, const VectorXd& z_all, const Outputs& out) const {
        const VectorXd r1 = out.y - x_all - apply_gamma(out.u);
        const VectorXd r2 = out.u + apply_lifted(r_c_sparse_, out.d, n_);
        const VectorXd r3 = out.d - z_all - apply_beta(apply_lifted_t(r_a_sparse_, out.y));
        const double scale = std::max({1.0, out.y.lpNorm<Eigen::Infinity>(), out.d.lpNorm<Eigen::Infinity>()});
        const double res = std::max({r1.lpNorm<Eigen::Infinity>(), r2.lpNorm<Eigen::Infinity>(),
                                     r3.lpNorm<Eigen::Infinity>()});
        if (res >= 1e-10 * scale) {
            throw std::runtime_error("network: algebraic loop residual " + std::to_string(res));
        }
    }

    std::vector<AgentSystem> agents_;
    std::vector<ControllerSystem> controllers_;
    CommStructure comm_;
    int n_ = 1;
    StateLayout layout_;
    SparseMat r_a_sparse_;
    SparseMat r_c_sparse_;
    bool has_agent_feedthrough_ = false;
    bool has_controller_feedthrough_ = false;
    Eigen::PartialPivLU<MatrixXd> loop_lu_;
    double loop_condition_ = 1.0;
};

}  // namespace dosim

#endif
