#include "apsc/safety.hpp"

#include <stdexcept>

namespace apsc::safety {

double phi(double lateral_error, const SafeSetSpec& spec) {
    const double r = lateral_error / spec.e_max;
    return 1.0 - r * r;
}

int long_term_safe(std::span<const double> lateral_errors, const SafeSetSpec& spec) {
    if (lateral_errors.empty()) throw std::invalid_argument("empty trajectory");
    for (double e : lateral_errors) {
        if (!(phi(e, spec) >= 0.0)) return 0;
    }
    return 1;
}

void PSCConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must be in (0, 1)");
    if (!(gain >= 0.0 && gain <= 1.0)) throw std::invalid_argument("gamma gain must be in [0, 1]");
    if (!(dt > 0.0)) throw std::invalid_argument("control interval must be positive");
    if (mc_samples < 1) throw std::invalid_argument("mc_samples must be >= 1");
    if (generator.propagations < 1 || generator.rollouts_per_propagation < 1) {
        throw std::invalid_argument("generator budget must be >= 1");
    }
}

ConstraintCheck constraint_satisfied(double psi_k, double generator_value, const PSCConfig& cfg) {
    const double slack = gamma(psi_k - (1.0 - cfg.epsilon), cfg.gain);
    return {generator_value >= -slack, generator_value + slack};
}

int required_safe_count(double psi_k, int n, const PSCConfig& cfg) {
    // Satisfaction is monotone in the count; bisect on it.
    auto ok = [&](int c) {
        const double expected = static_cast<double>(c) / n;
        return constraint_satisfied(psi_k, generator_from(expected, psi_k, cfg.dt), cfg).satisfied;
    };
    if (!ok(n)) return n + 1;
    int lo = -1;  // not ok (or below range)
    int hi = n;   // ok
    while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        if (ok(mid)) hi = mid; else lo = mid;
    }
    return hi;
}

int parallel_count(int n, int workers, const std::function<bool(int)>& pred) {
    if (n <= 0) return 0;
    workers = std::clamp(workers, 1, n);
    if (workers == 1) {
        int count = 0;
        for (int i = 0; i < n; ++i) count += pred(i) ? 1 : 0;
        return count;
    }
    std::vector<int> partial(static_cast<std::size_t>(workers), 0);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            int count = 0;
            for (int i = w; i < n; i += workers) count += pred(i) ? 1 : 0;
            partial[static_cast<std::size_t>(w)] = count;
        });
    }
    for (auto& t : pool) t.join();
    int total = 0;
    for (int c : partial) total += c;
    return total;
}

double ito_drift_term(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian,
                      const Eigen::VectorXd& mean_drift, const Eigen::MatrixXd& diffusion) {
    if (gradient.size() != mean_drift.size() || hessian.rows() != gradient.size() ||
        hessian.cols() != gradient.size() || diffusion.rows() != gradient.size()) {
        throw std::invalid_argument("ito_drift_term: dimension mismatch");
    }
    const Eigen::MatrixXd cov = diffusion * diffusion.transpose();
    return gradient.dot(mean_drift) + 0.5 * (cov.cwiseProduct(hessian)).sum();
}

PsiDerivatives finite_difference_derivatives(
    const std::function<PsiSample(const Eigen::VectorXd&)>& psi, const Eigen::VectorXd& x,
    const Eigen::VectorXd& steps, double half_width_limit) {
    const Eigen::Index n = x.size();
    PsiDerivatives out;
    out.gradient = Eigen::VectorXd::Zero(n);
    out.hessian = Eigen::MatrixXd::Zero(n, n);

    auto eval = [&](const Eigen::VectorXd& at) {
        const PsiSample s = psi(at);
        out.max_half_width = std::max(out.max_half_width, s.half_width);
        return s.value;
    };

    const double f0 = eval(x);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double hi = steps(i);
        if (!(hi > 0.0)) continue;  // channel excluded
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += hi;
        xm(i) -= hi;
        const double fp = eval(xp);
        const double fm = eval(xm);
        out.gradient(i) = (fp - fm) / (2.0 * hi);
        out.hessian(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (Eigen::Index j = 0; j < i; ++j) {
            const double hj = steps(j);
            if (!(hj > 0.0)) continue;
            Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
            pp(i) += hi; pp(j) += hj;
            pm(i) += hi; pm(j) -= hj;
            mp(i) -= hi; mp(j) += hj;
            mm(i) -= hi; mm(j) -= hj;
            const double hij = (eval(pp) - eval(pm) - eval(mp) + eval(mm)) / (4.0 * hi * hj);
            out.hessian(i, j) = hij;
            out.hessian(j, i) = hij;
        }
    }
    out.high_variance = out.max_half_width > half_width_limit;
    return out;
}

}  // namespace apsc::safety
