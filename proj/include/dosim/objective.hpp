#ifndef DOSIM_OBJECTIVE_HPP
#define DOSIM_OBJECTIVE_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dosim/linalg.hpp"

namespace dosim {

// Agents' private objective functions. An ObjectiveSpec is immutable after
// construction; concurrent read-only use is safe.
//
// Scalar models:
//   model 1:  f(y) = a y^2 + b y
//   model 2:  f(y) = a y^2 + b y   (its constraint y <= 0.5 lives in a
//                                   ConstraintSet, not in the objective)
//   model 3:  f(y) = e^(y+b) + e^-(y+b)
enum class ObjectiveKind { Quadratic, ScalarModel1, ScalarModel2, ScalarModel3, Custom };

using ValueFn = std::function<double(const VectorXd&)>;
using GradFn = std::function<VectorXd(const VectorXd&)>;

class ObjectiveSpec {
public:
    static ObjectiveSpec quadratic(MatrixXd q_mat, VectorXd q_vec, double c) {
        if (q_mat.rows() != q_mat.cols() || q_mat.rows() != q_vec.size()) {
            throw std::invalid_argument("quadratic objective: dimension mismatch");
        }
        if (!q_mat.isApprox(q_mat.transpose(), 1e-12)) {
            throw std::invalid_argument("quadratic objective: Q must be symmetric");
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(q_mat, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo < -1e-10 * std::max(1.0, hi)) {
            throw std::invalid_argument("quadratic objective: Q must be positive semidefinite");
        }
        ObjectiveSpec f;
        f.kind_ = ObjectiveKind::Quadratic;
        f.dim_ = static_cast<int>(q_mat.rows());
        f.q_mat_ = std::move(q_mat);
        f.q_vec_ = std::move(q_vec);
        f.c_ = c;
        f.m_ = std::max(0.0, lo);
        f.l_ = std::max(0.0, hi);
        return f;
    }

    static ObjectiveSpec scalar_model1(double a, double b) { return scalar_model(ObjectiveKind::ScalarModel1, a, b); }
    static ObjectiveSpec scalar_model2(double a, double b) { return scalar_model(ObjectiveKind::ScalarModel2, a, b); }

    static ObjectiveSpec scalar_model3(double b) {
        ObjectiveSpec f;
        f.kind_ = ObjectiveKind::ScalarModel3;
        f.dim_ = 1;
        f.b_ = b;
        f.m_ = 2.0;             // f'' = e^(y+b) + e^-(y+b) >= 2 everywhere
        f.l_ = std::nullopt;    // unbounded on R; box estimates only
        return f;
    }

    // Custom objectives supply both value and gradient; no automatic
    // differentiation. l may be left unknown.
    static ObjectiveSpec custom(int dim, ValueFn value, GradFn gradient, double m = 0.0,
                                std::optional<double> l = std::nullopt) {
        if (dim < 1) throw std::invalid_argument("custom objective: dim must be >= 1");
        if (!value || !gradient) throw std::invalid_argument("custom objective: value and gradient required");
        if (m < 0.0) throw std::invalid_argument("custom objective: m must be >= 0");
        if (l && m > 0.0 && *l > 0.0 && *l < m) {
            throw std::invalid_argument("custom objective: l must be >= m");
        }
        ObjectiveSpec f;
        f.kind_ = ObjectiveKind::Custom;
        f.dim_ = dim;
        f.value_ = std::move(value);
        f.grad_ = std::move(gradient);
        f.m_ = m;
        f.l_ = l;
        return f;
    }

    ObjectiveKind kind() const { return kind_; }
    int dim() const { return dim_; }
    double strong_convexity() const { return m_; }
    std::optional<double> grad_lipschitz() const { return l_; }

    double a() const { return a_; }
    double b() const { return b_; }
    double c() const { return c_; }
    const MatrixXd& q_matrix() const { return q_mat_; }
    const VectorXd& q_vector() const { return q_vec_; }

    bool is_scalar_model() const {
        return kind_ == ObjectiveKind::ScalarModel1 || kind_ == ObjectiveKind::ScalarModel2 ||
               kind_ == ObjectiveKind::ScalarModel3;
    }

    // True when f is exactly (1/2) y'Qy + q'y + c; such objectives admit the
    // sharper feedthrough passivity indices.
    bool has_quadratic_form() const {
        return kind_ == ObjectiveKind::Quadratic || kind_ == ObjectiveKind::ScalarModel1 ||
               kind_ == ObjectiveKind::ScalarModel2;
    }

    // (Q, q, c) of the quadratic form; scalar models 1/2 map to Q = [2a], q = [b].
    std::tuple<MatrixXd, VectorXd, double> quadratic_form() const {
        switch (kind_) {
            case ObjectiveKind::Quadratic:
                return {q_mat_, q_vec_, c_};
            case ObjectiveKind::ScalarModel1:
            case ObjectiveKind::ScalarModel2: {
                MatrixXd q(1, 1);
                q(0, 0) = 2.0 * a_;
                VectorXd qv(1);
                qv(0) = b_;
                return {q, qv, 0.0};
            }
            default:
                throw std::logic_error("objective has no quadratic form");
        }
    }

    friend double eval(const ObjectiveSpec& f, const VectorXd& y);
    friend VectorXd grad(const ObjectiveSpec& f, const VectorXd& y);

private:
    static ObjectiveSpec scalar_model(ObjectiveKind kind, double a, double b) {
        if (a < 0.0) throw std::invalid_argument("scalar model: a must be >= 0");
        ObjectiveSpec f;
        f.kind_ = kind;
        f.dim_ = 1;
        f.a_ = a;
        f.b_ = b;
        f.m_ = 2.0 * a;
        f.l_ = 2.0 * a;
        return f;
    }

    ObjectiveKind kind_ = ObjectiveKind::Custom;
    int dim_ = 0;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
    MatrixXd q_mat_;
    VectorXd q_vec_;
    double m_ = 0.0;
    std::optional<double> l_;
    ValueFn value_;
    GradFn grad_;
};

inline void check_dim(const ObjectiveSpec& f, const VectorXd& y) {
    if (y.size() != f.dim()) throw std::invalid_argument("objective: dimension mismatch");
}

inline double eval(const ObjectiveSpec& f, const VectorXd& y) {
    check_dim(f, y);
    switch (f.kind_) {
        case ObjectiveKind::Quadratic:
            return 0.5 * y.dot(f.q_mat_ * y) + f.q_vec_.dot(y) + f.c_;
        case ObjectiveKind::ScalarModel1:
        case ObjectiveKind::ScalarModel2:
            return f.a_ * y(0) * y(0) + f.b_ * y(0);
        case ObjectiveKind::ScalarModel3:
            return std::exp(y(0) + f.b_) + std::exp(-(y(0) + f.b_));
        case ObjectiveKind::Custom:
            return f.value_(y);
    }
    throw std::logic_error("unreachable");
}

inline VectorXd grad(const ObjectiveSpec& f, const VectorXd& y) {
    check_dim(f, y);
    switch (f.kind_) {
        case ObjectiveKind::Quadratic:
            return f.q_mat_ * y + f.q_vec_;
        case ObjectiveKind::ScalarModel1:
        case ObjectiveKind::ScalarModel2: {
            VectorXd g(1);
            g(0) = 2.0 * f.a_ * y(0) + f.b_;
            return g;
        }
        case ObjectiveKind::ScalarModel3: {
            VectorXd g(1);
            g(0) = std::exp(y(0) + f.b_) - std::exp(-(y(0) + f.b_));
            return g;
        }
        case ObjectiveKind::Custom:
            return f.grad_(y);
    }
    throw std::logic_error("unreachable");
}

// Exact unconstrained minimizer where one is known in closed form
// (model 2 ignores its constraint here).
inline std::optional<VectorXd> closed_form_minimizer(const ObjectiveSpec& f) {
    switch (f.kind()) {
        case ObjectiveKind::ScalarModel1:
        case ObjectiveKind::ScalarModel2: {
            if (f.a() <= 0.0) return std::nullopt;  // affine: no minimizer
            VectorXd y(1);
            y(0) = -f.b() / (2.0 * f.a());
            return y;
        }
        case ObjectiveKind::ScalarModel3: {
            VectorXd y(1);
            y(0) = -f.b();
            return y;
        }
        case ObjectiveKind::Quadratic: {
            if (f.strong_convexity() <= 0.0) return std::nullopt;
            return (-f.q_matrix().ldlt().solve(f.q_vector())).eval();
        }
        case ObjectiveKind::Custom:
            return std::nullopt;
    }
    return std::nullopt;
}

// Axis-aligned sampling box.
struct SampleBox {
    VectorXd lo;
    VectorXd hi;

    static SampleBox cube(int dim, double lo, double hi) {
        SampleBox b;
        b.lo = VectorXd::Constant(dim, lo);
        b.hi = VectorXd::Constant(dim, hi);
        return b;
    }

    int dim() const { return static_cast<int>(lo.size()); }

    void validate() const {
        if (lo.size() != hi.size() || lo.size() == 0 || ((hi - lo).array() <= 0.0).any()) {
            throw std::invalid_argument("degenerate sample box");
        }
    }

    VectorXd sample(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        VectorXd y(lo.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
        return y;
    }
};

struct IndexEstimate {
    double m_est;
    double l_est;
};

// Empirical convexity / gradient-Lipschitz indices from sampled gradient
// differences. One-sided bounds: m_est can only overestimate the true m on a
// finite sample, l_est can only underestimate the true l. Diagnostic only;
// declared indices take precedence in certificates.
inline IndexEstimate estimate_indices(const ObjectiveSpec& f, const SampleBox& box, int n_samples,
                                      std::uint64_t seed) {
    box.validate();
    if (box.dim() != f.dim()) throw std::invalid_argument("estimate_indices: box dimension mismatch");
    if (n_samples < 2) throw std::invalid_argument("estimate_indices: n_samples must be >= 2");

    std::mt19937_64 rng(seed);
    double m_est = std::numeric_limits<double>::infinity();
    double l_est = 0.0;

    auto account = [&](const VectorXd& x, const VectorXd& y) {
        const VectorXd d = y - x;
        const double dd = d.squaredNorm();
        if (dd < 1e-24) return;
        const VectorXd dg = grad(f, y) - grad(f, x);
        m_est = std::min(m_est, dg.dot(d) / dd);
        l_est = std::max(l_est, dg.norm() / std::sqrt(dd));
    };

    // Deterministic axis probes from the box center nail diagonal extremes.
    const VectorXd center = 0.5 * (box.lo + box.hi);
    for (int j = 0; j < f.dim(); ++j) {
        VectorXd probe = center;
        probe(j) += 0.25 * (box.hi(j) - box.lo(j));
        account(center, probe);
    }
    for (int s = 0; s < n_samples; ++s) {
        account(box.sample(rng), box.sample(rng));
    }
    if (!std::isfinite(m_est)) m_est = 0.0;
    return {m_est, l_est};
}

// ---------------------------------------------------------------------------
// Constraints

// Affine function a'y + c.
struct AffineFn {
    VectorXd a;
    double c = 0.0;

    double value(const VectorXd& y) const { return a.dot(y) + c; }
};

// Scalar inequality constraint g(y) <= 0; convex, affine fast path kept for
// the active-set oracle.
struct InequalityConstraint {
    ValueFn value;
    GradFn gradient;
    bool is_affine = false;
    AffineFn affine;

    static InequalityConstraint from_affine(VectorXd a, double c) {
        InequalityConstraint g;
        g.is_affine = true;
        g.affine = {std::move(a), c};
        g.value = [aff = g.affine](const VectorXd& y) { return aff.value(y); };
        g.gradient = [aff = g.affine](const VectorXd&) { return aff.a; };
        return g;
    }

    // y(k) <= bound
    static InequalityConstraint upper_bound(int dim, int k, double bound) {
        VectorXd a = VectorXd::Zero(dim);
        a(k) = 1.0;
        return from_affine(std::move(a), -bound);
    }

    static InequalityConstraint from_convex(ValueFn value, GradFn gradient) {
        InequalityConstraint g;
        g.value = std::move(value);
        g.gradient = std::move(gradient);
        return g;
    }
};

// Per-agent constraint set: convex inequalities g_l(y) <= 0 and affine
// equalities a_j'y + c_j = 0. Equalities are affine by construction.
struct ConstraintSet {
    std::vector<InequalityConstraint> inequalities;
    std::vector<AffineFn> equalities;

    int n_inequalities() const { return static_cast<int>(inequalities.size()); }
    int n_equalities() const { return static_cast<int>(equalities.size()); }
    bool empty() const { return inequalities.empty() && equalities.empty(); }

    VectorXd ineq_values(const VectorXd& y) const {
        VectorXd g(n_inequalities());
        for (int l = 0; l < n_inequalities(); ++l) g(l) = inequalities[l].value(y);
        return g;
    }

    VectorXd eq_values(const VectorXd& y) const {
        VectorXd h(n_equalities());
        for (int j = 0; j < n_equalities(); ++j) h(j) = equalities[j].value(y);
        return h;
    }

    // Model 2's single constraint y <= 0.5.
    static ConstraintSet model2() {
        ConstraintSet c;
        c.inequalities.push_back(InequalityConstraint::upper_bound(1, 0, 0.5));
        return c;
    }
};

}  // namespace dosim

#endif
