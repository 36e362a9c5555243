#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "numeric.hpp"

namespace drmis
{

struct TrainingSet
{
    std::vector<Point> x;
    std::vector<double> y;

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }

    void validate() const
    {
        require(x.size() == y.size(), ErrorKind::Training, "training inputs and targets differ in length");
        require(y.size() >= 2, ErrorKind::Training, "training set needs at least two points");
        for (auto const& xi : x)
            require(xi.size() == dim(), ErrorKind::Training, "training inputs differ in dimension");
    }

    /// Copy sorted lexicographically by (x, y), so order-sensitive solvers
    /// see the same problem whatever the input order.
    TrainingSet canonical() const
    {
        std::vector<std::size_t> idx(size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
            if (x[a] != x[b])
                return x[a] < x[b];
            return y[a] < y[b];
        });
        TrainingSet out;
        for (auto i : idx)
        {
            out.x.push_back(x[i]);
            out.y.push_back(y[i]);
        }
        return out;
    }
};

enum class HypothesisClass
{
    Linear,
    Polynomial,
    SvmLinear,
    SvmPolynomial,
    SvmGaussian,
    Knn,
};

/// A hypothesis class with its hyperparameters. Unset SVR parameters take
/// data-driven defaults at fit time: epsilon = 0.1 sd(y), C = max|y|,
/// sigma = median pairwise distance of the standardized inputs.
struct HypothesisSpec
{
    HypothesisClass cls = HypothesisClass::Linear;
    int degree = 1;
    int k = 1;
    std::optional<double> epsilon;
    std::optional<double> c_reg;
    std::optional<double> sigma;

    static HypothesisSpec linear() { return {}; }
    static HypothesisSpec polynomial(int q) { return make(HypothesisClass::Polynomial, q, 1); }
    static HypothesisSpec svm_linear() { return make(HypothesisClass::SvmLinear, 1, 1); }
    static HypothesisSpec svm_polynomial(int q) { return make(HypothesisClass::SvmPolynomial, q, 1); }
    static HypothesisSpec svm_gaussian() { return make(HypothesisClass::SvmGaussian, 1, 1); }
    static HypothesisSpec knn(int k) { return make(HypothesisClass::Knn, 1, k); }

    static HypothesisSpec make(HypothesisClass c, int degree, int k)
    {
        HypothesisSpec h;
        h.cls = c;
        h.degree = degree;
        h.k = k;
        return h;
    }

    bool is_svm() const
    {
        return cls == HypothesisClass::SvmLinear || cls == HypothesisClass::SvmPolynomial ||
               cls == HypothesisClass::SvmGaussian;
    }

    void validate() const
    {
        if (cls == HypothesisClass::Polynomial)
            require(degree >= 2, ErrorKind::Config, "polynomial degree must be >= 2");
        if (cls == HypothesisClass::SvmPolynomial)
            require(degree >= 1, ErrorKind::Config, "SVM polynomial degree must be >= 1");
        if (cls == HypothesisClass::Knn)
            require(k >= 1, ErrorKind::Config, "k-NN needs k >= 1");
        for (auto const& v : {epsilon, c_reg, sigma})
            if (v)
                require(*v > 0.0 && std::isfinite(*v), ErrorKind::Config, "SVR hyperparameters must be positive");
    }

    std::string describe() const
    {
        std::ostringstream os;
        switch (cls)
        {
        case HypothesisClass::Linear: os << "linear"; break;
        case HypothesisClass::Polynomial: os << "poly" << degree; break;
        case HypothesisClass::SvmLinear: os << "svm_linear"; break;
        case HypothesisClass::SvmPolynomial: os << "svm_poly" << degree; break;
        case HypothesisClass::SvmGaussian: os << "svm_gauss"; break;
        case HypothesisClass::Knn: os << "knn" << k; break;
        }
        if (epsilon)
            os << ",eps=" << *epsilon;
        if (c_reg)
            os << ",C=" << *c_reg;
        if (sigma)
            os << ",sigma=" << *sigma;
        return os.str();
    }
};

/// Parse the short names produced by describe() (without hyperparameters).
inline HypothesisSpec parse_hypothesis(std::string const& s)
{
    auto tail_int = [&](std::size_t from) {
        try
        {
            return std::stoi(s.substr(from));
        }
        catch (std::exception const&)
        {
            fail(ErrorKind::Config, "bad hypothesis name '" + s + "'");
        }
    };
    HypothesisSpec h;
    if (s == "linear")
        h = HypothesisSpec::linear();
    else if (s == "svm_linear")
        h = HypothesisSpec::svm_linear();
    else if (s == "svm_gauss")
        h = HypothesisSpec::svm_gaussian();
    else if (s.rfind("svm_poly", 0) == 0)
        h = HypothesisSpec::svm_polynomial(tail_int(8));
    else if (s.rfind("poly", 0) == 0)
        h = HypothesisSpec::polynomial(tail_int(4));
    else if (s.rfind("knn", 0) == 0)
        h = HypothesisSpec::knn(tail_int(3));
    else
        fail(ErrorKind::Config, "unknown hypothesis class '" + s + "'");
    h.validate();
    return h;
}

namespace detail
{

struct Standardizer
{
    std::vector<double> mu, sd;

    explicit Standardizer(std::vector<Point> const& x = {})
    {
        if (x.empty())
            return;
        auto d = x.front().size();
        mu.assign(d, 0.0);
        sd.assign(d, 0.0);
        for (auto const& xi : x)
            for (std::size_t j = 0; j < d; ++j)
                mu[j] += xi[j];
        for (auto& m : mu)
            m /= static_cast<double>(x.size());
        for (auto const& xi : x)
            for (std::size_t j = 0; j < d; ++j)
                sd[j] += (xi[j] - mu[j]) * (xi[j] - mu[j]);
        for (auto& s : sd)
        {
            s = std::sqrt(s / static_cast<double>(x.size()));
            if (!(s > 0.0))
                s = 1.0;
        }
    }

    Point operator()(Point const& x) const
    {
        Point z(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            z[j] = (x[j] - mu[j]) / sd[j];
        return z;
    }
};

/// Exponent vectors of all monomials of total degree <= q in d variables,
/// ordered by total degree.
inline std::vector<std::vector<int>> monomials(std::size_t d, int q)
{
    std::vector<std::vector<int>> out;
    std::vector<int> e(d, 0);
    for (int total = 0; total <= q; ++total)
    {
        // enumerate compositions of `total` into d parts, lexicographically descending
        auto rec = [&](auto&& self, std::size_t pos, int left) -> void {
            if (pos + 1 == d)
            {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (int v = left; v >= 0; --v)
            {
                e[pos] = v;
                self(self, pos + 1, left - v);
            }
        };
        rec(rec, 0, total);
    }
    return out;
}

class Model
{
  public:
    virtual ~Model() = default;
    virtual double predict(Point const& x) const = 0;
};

class LeastSquares final : public Model
{
  public:
    LeastSquares(TrainingSet const& s, int degree) : scale_(s.x), powers_(monomials(s.dim(), degree))
    {
        auto m = static_cast<Eigen::Index>(s.size());
        auto p = static_cast<Eigen::Index>(powers_.size());
        Eigen::MatrixXd a(m, p);
        Eigen::VectorXd y(m);
        for (Eigen::Index i = 0; i < m; ++i)
        {
            auto f = features(scale_(s.x[static_cast<std::size_t>(i)]));
            for (Eigen::Index j = 0; j < p; ++j)
                a(i, j) = f[static_cast<std::size_t>(j)];
            y(i) = s.y[static_cast<std::size_t>(i)];
        }
        // equilibrate columns before the pivoted QR
        Eigen::VectorXd colscale = a.colwise().norm().transpose();
        for (Eigen::Index j = 0; j < p; ++j)
            if (!(colscale(j) > 0.0))
                colscale(j) = 1.0;
        Eigen::MatrixXd as = a * colscale.cwiseInverse().asDiagonal();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(as);
        qr.setThreshold(1e-12);
        Eigen::VectorXd beta;
        if (m > p && qr.rank() == p)
        {
            beta = qr.solve(y);
        }
        else
        {
            ridge_fallback_ = true;
            Eigen::MatrixXd ata = as.transpose() * as;
            ata.diagonal().array() += 1e-8;
            beta = ata.ldlt().solve(as.transpose() * y);
        }
        beta = beta.cwiseQuotient(colscale);
        require(beta.allFinite(), ErrorKind::Training, "least squares produced non-finite coefficients");
        coef_.assign(beta.data(), beta.data() + beta.size());
    }

    double predict(Point const& x) const override
    {
        auto f = features(scale_(x));
        double s = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j)
            s += coef_[j] * f[j];
        return s;
    }

    bool ridge_fallback() const { return ridge_fallback_; }

    /// Coefficients on the raw (unstandardized) monomial basis. Only the
    /// linear case is converted; higher degrees return standardized ones.
    std::vector<double> raw_linear_coefficients() const
    {
        // powers_[0] is the constant, then one per coordinate
        std::vector<double> c(coef_.size());
        double c0 = coef_[0];
        for (std::size_t j = 1; j < powers_.size() && j <= scale_.mu.size(); ++j)
        {
            c[j] = coef_[j] / scale_.sd[j - 1];
            c0 -= coef_[j] * scale_.mu[j - 1] / scale_.sd[j - 1];
        }
        c[0] = c0;
        return c;
    }

    std::vector<double> const& coefficients() const { return coef_; }
    std::vector<std::vector<int>> const& powers() const { return powers_; }
    Standardizer const& standardizer() const { return scale_; }

  private:
    std::vector<double> features(Point const& z) const
    {
        std::vector<double> f(powers_.size());
        for (std::size_t j = 0; j < powers_.size(); ++j)
        {
            double v = 1.0;
            for (std::size_t c = 0; c < z.size(); ++c)
                for (int e = 0; e < powers_[j][c]; ++e)
                    v *= z[c];
            f[j] = v;
        }
        return f;
    }

    Standardizer scale_;
    std::vector<std::vector<int>> powers_;
    std::vector<double> coef_;
    bool ridge_fallback_ = false;
};

class Kernel
{
  public:
    Kernel(HypothesisClass cls, int degree, double sigma, std::size_t d)
        : cls_(cls), degree_(degree), inv2s2_(1.0 / (2.0 * sigma * sigma)), gamma_(1.0 / static_cast<double>(d))
    {
    }

    double operator()(Point const& a, Point const& b) const
    {
        switch (cls_)
        {
        case HypothesisClass::SvmGaussian: {
            double s = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j)
                s += (a[j] - b[j]) * (a[j] - b[j]);
            return std::exp(-s * inv2s2_);
        }
        case HypothesisClass::SvmPolynomial: return std::pow(gamma_ * dot(a, b) + 1.0, degree_);
        default: return dot(a, b);
        }
    }

  private:
    static double dot(Point const& a, Point const& b)
    {
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j)
            s += a[j] * b[j];
        return s;
    }

    HypothesisClass cls_;
    int degree_;
    double inv2s2_;
    double gamma_;
};

inline double median_pairwise_distance(std::vector<Point> const& z)
{
    // deterministic subsample of at most 400 points
    std::size_t n = z.size();
    std::size_t stride = std::max<std::size_t>(1, n / 400);
    std::vector<double> d;
    for (std::size_t i = 0; i < n; i += stride)
        for (std::size_t j = i + stride; j < n; j += stride)
        {
            double s = 0.0;
            for (std::size_t c = 0; c < z[i].size(); ++c)
                s += (z[i][c] - z[j][c]) * (z[i][c] - z[j][c]);
            d.push_back(std::sqrt(s));
        }
    if (d.empty())
        return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

/// epsilon-SVR trained by sequential minimal optimization with
/// second-order working set selection, on 2M box-constrained variables.
class Svr final : public Model
{
  public:
    Svr(TrainingSet const& s, HypothesisSpec const& spec) : scale_(s.x)
    {
        std::size_t m = s.size();
        for (auto const& xi : s.x)
            sv_.push_back(scale_(xi));
        double ysd = std::sqrt(variance(s.y));
        double ymax = 0.0;
        for (double v : s.y)
            ymax = std::max(ymax, std::abs(v));
        eps_ = spec.epsilon.value_or(0.1 * ysd);
        creg_ = spec.c_reg.value_or(ymax > 0 ? ymax : 1.0);
        sigma_ = spec.sigma.value_or(spec.cls == HypothesisClass::SvmGaussian ? median_pairwise_distance(sv_) : 1.0);
        kernel_ = std::make_unique<Kernel>(spec.cls, spec.degree, sigma_, s.dim());
        solve(s.y, m);
    }

    double predict(Point const& x) const override
    {
        auto z = scale_(x);
        double f = -rho_;
        for (std::size_t i = 0; i < sv_.size(); ++i)
            f += beta_[i] * (*kernel_)(sv_[i], z);
        return f;
    }

    double epsilon() const { return eps_; }
    double c_reg() const { return creg_; }
    double sigma() const { return sigma_; }
    std::size_t iterations() const { return iterations_; }
    /// Maximal KKT violation at termination.
    double kkt_gap() const { return gap_; }
    std::vector<double> const& dual_coefficients() const { return beta_; }
    double bias() const { return -rho_; }
    /// Upper bound on the gradient norm of a Gaussian-kernel fit, in the
    /// original input units.
    double lipschitz_bound() const
    {
        double b = 0.0;
        for (double v : beta_)
            b += std::abs(v);
        double sdmin = kInf;
        for (double v : scale_.sd)
            sdmin = std::min(sdmin, v);
        return b * std::exp(-0.5) / (sigma_ * sdmin);
    }
    /// True when x is a support vector whose dual sits at the box bound C.
    bool at_bound(Point const& x) const
    {
        auto z = scale_(x);
        for (std::size_t i = 0; i < sv_.size(); ++i)
            if (sv_[i] == z && std::abs(beta_[i]) >= creg_ * (1.0 - 1e-12))
                return true;
        return false;
    }

  private:
    std::vector<double> const& krow(std::size_t i)
    {
        auto& row = cache_[i];
        if (row.empty())
        {
            std::size_t m = sv_.size();
            if (cached_ >= cache_cap_)
            {
                cache_[lru_.front()].clear();
                cache_[lru_.front()].shrink_to_fit();
                lru_.erase(lru_.begin());
                --cached_;
            }
            row.resize(m);
            for (std::size_t j = 0; j < m; ++j)
                row[j] = (*kernel_)(sv_[i], sv_[j]);
            lru_.push_back(i);
            ++cached_;
        }
        return row;
    }

    void solve(std::vector<double> const& target, std::size_t m)
    {
        std::size_t l = 2 * m;
        cache_.assign(m, {});
        cache_cap_ = std::max<std::size_t>(2, std::min<std::size_t>(m, (std::size_t{1} << 25) / std::max<std::size_t>(m, 1)));
        std::vector<double> alpha(l, 0.0), grad(l), qd(l);
        std::vector<signed char> yy(l);
        for (std::size_t t = 0; t < l; ++t)
        {
            std::size_t b = t % m;
            yy[t] = t < m ? 1 : -1;
            grad[t] = t < m ? eps_ - target[b] : eps_ + target[b];
            qd[t] = (*kernel_)(sv_[b], sv_[b]);
        }
        double const c = creg_;
        double const tol = 1e-3;
        double const tau = 1e-12;
        std::size_t max_iter = std::max<std::size_t>(10000000, 100 * l);
        auto upper = [&](std::size_t t) { return alpha[t] >= c; };
        auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
        auto qrow = [&](std::size_t t, std::vector<double>& out) {
            auto const& kr = krow(t % m);
            for (std::size_t s = 0; s < l; ++s)
                out[s] = yy[t] * yy[s] * kr[s % m];
        };
        std::vector<double> qi(l), qj(l);

        for (iterations_ = 0;; ++iterations_)
        {
            require(iterations_ < max_iter, ErrorKind::Training, "SMO did not converge within the iteration cap");
            double gmax = -kInf, gmax2 = -kInf, obj_min = kInf;
            std::ptrdiff_t ii = -1, jj = -1;
            for (std::size_t t = 0; t < l; ++t)
            {
                if (yy[t] == 1 ? !upper(t) : !lower(t))
                {
                    double v = yy[t] == 1 ? -grad[t] : grad[t];
                    if (v >= gmax)
                    {
                        gmax = v;
                        ii = static_cast<std::ptrdiff_t>(t);
                    }
                }
            }
            if (ii < 0)
                break;
            auto i = static_cast<std::size_t>(ii);
            qrow(i, qi);
            for (std::size_t t = 0; t < l; ++t)
            {
                bool movable = yy[t] == 1 ? !lower(t) : !upper(t);
                if (!movable)
                    continue;
                double v = yy[t] == 1 ? grad[t] : -grad[t];
                gmax2 = std::max(gmax2, v);
                double diff = gmax + v;
                if (diff > 0.0)
                {
                    double kit = qi[t] * yy[i] * yy[t];
                    double quad = qd[i] + qd[t] - 2.0 * kit;
                    if (quad <= 0.0)
                        quad = tau;
                    double obj = -diff * diff / quad;
                    if (obj <= obj_min)
                    {
                        obj_min = obj;
                        jj = static_cast<std::ptrdiff_t>(t);
                    }
                }
            }
            gap_ = gmax + gmax2;
            if (gap_ < tol || jj < 0)
                break;
            auto j = static_cast<std::size_t>(jj);
            qrow(j, qj);

            double ai = alpha[i], aj = alpha[j];
            if (yy[i] != yy[j])
            {
                double quad = qd[i] + qd[j] + 2.0 * qi[j];
                if (quad <= 0.0)
                    quad = tau;
                double delta = (-grad[i] - grad[j]) / quad;
                double diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if (diff > 0)
                {
                    if (alpha[j] < 0)
                    {
                        alpha[j] = 0;
                        alpha[i] = diff;
                    }
                }
                else if (alpha[i] < 0)
                {
                    alpha[i] = 0;
                    alpha[j] = -diff;
                }
                if (diff > 0)
                {
                    if (alpha[i] > c)
                    {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                }
                else if (alpha[j] > c)
                {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
            else
            {
                double quad = qd[i] + qd[j] - 2.0 * qi[j];
                if (quad <= 0.0)
                    quad = tau;
                double delta = (grad[i] - grad[j]) / quad;
                double sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if (sum > c)
                {
                    if (alpha[i] > c)
                    {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                }
                else if (alpha[j] < 0)
                {
                    alpha[j] = 0;
                    alpha[i] = sum;
                }
                if (sum > c)
                {
                    if (alpha[j] > c)
                    {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                }
                else if (alpha[i] < 0)
                {
                    alpha[i] = 0;
                    alpha[j] = sum;
                }
            }
            double dai = alpha[i] - ai, daj = alpha[j] - aj;
            for (std::size_t t = 0; t < l; ++t)
                grad[t] += qi[t] * dai + qj[t] * daj;
        }

        // bias from free variables, else midpoint of the feasible interval
        double ub = kInf, lb = -kInf, sum_free = 0.0;
        int nfree = 0;
        for (std::size_t t = 0; t < l; ++t)
        {
            double yg = yy[t] * grad[t];
            bool to_ub = (upper(t) && yy[t] == -1) || (lower(t) && yy[t] == 1);
            if (upper(t) || lower(t))
            {
                if (to_ub)
                    ub = std::min(ub, yg);
                else
                    lb = std::max(lb, yg);
            }
            else
            {
                ++nfree;
                sum_free += yg;
            }
        }
        rho_ = nfree > 0 ? sum_free / nfree : 0.5 * (ub + lb);
        beta_.resize(m);
        for (std::size_t b = 0; b < m; ++b)
            beta_[b] = alpha[b] - alpha[b + m];
        cache_.clear();
        lru_.clear();
        // drop non-support vectors
        std::vector<Point> keep;
        std::vector<double> kb;
        for (std::size_t b = 0; b < m; ++b)
            if (beta_[b] != 0.0)
            {
                keep.push_back(std::move(sv_[b]));
                kb.push_back(beta_[b]);
            }
        sv_ = std::move(keep);
        beta_ = std::move(kb);
        require(std::isfinite(rho_), ErrorKind::Training, "SVR bias is not finite");
    }

    Standardizer scale_;
    std::vector<Point> sv_;
    std::vector<double> beta_;
    std::unique_ptr<Kernel> kernel_;
    double eps_ = 0.0, creg_ = 1.0, sigma_ = 1.0, rho_ = 0.0, gap_ = 0.0;
    std::size_t iterations_ = 0;
    std::vector<std::vector<double>> cache_;
    std::vector<std::size_t> lru_;
    std::size_t cached_ = 0, cache_cap_ = 0;
};

class Knn final : public Model
{
  public:
    Knn(TrainingSet const& s, int k) : scale_(s.x), k_(static_cast<std::size_t>(k))
    {
        require(k_ <= s.size(), ErrorKind::Training, "k-NN needs k <= training size");
        std::vector<std::size_t> idx(s.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        if (s.dim() == 1)
            std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.x[a][0] < s.x[b][0]; });
        for (auto i : idx)
        {
            z_.push_back(scale_(s.x[i]));
            y_.push_back(s.y[i]);
        }
    }

    double predict(Point const& x) const override
    {
        auto q = scale_(x);
        return z_.front().size() == 1 ? predict_1d(q[0]) : predict_nd(q);
    }

  private:
    double predict_1d(double q) const
    {
        // merge outward from the insertion point; ties go to the left
        auto n = z_.size();
        auto it = std::lower_bound(z_.begin(), z_.end(), q, [](Point const& a, double v) { return a[0] < v; });
        std::ptrdiff_t r = it - z_.begin(), l = r - 1;
        double s = 0.0;
        for (std::size_t taken = 0; taken < k_; ++taken)
        {
            bool take_left;
            if (l < 0)
                take_left = false;
            else if (r >= static_cast<std::ptrdiff_t>(n))
                take_left = true;
            else
                take_left = q - z_[static_cast<std::size_t>(l)][0] <= z_[static_cast<std::size_t>(r)][0] - q;
            s += take_left ? y_[static_cast<std::size_t>(l--)] : y_[static_cast<std::size_t>(r++)];
        }
        return s / static_cast<double>(k_);
    }

    double predict_nd(Point const& q) const
    {
        std::vector<std::pair<double, std::size_t>> d(z_.size());
        for (std::size_t i = 0; i < z_.size(); ++i)
        {
            double s = 0.0;
            for (std::size_t c = 0; c < q.size(); ++c)
                s += (z_[i][c] - q[c]) * (z_[i][c] - q[c]);
            d[i] = {s, i};
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k_), d.end());
        double s = 0.0;
        for (std::size_t i = 0; i < k_; ++i)
            s += y_[d[i].second];
        return s / static_cast<double>(k_);
    }

    Standardizer scale_;
    std::size_t k_;
    std::vector<Point> z_;
    std::vector<double> y_;
};

}  // namespace detail

/// A trained regression h-hat. Cheap to copy; immutable.
class Surrogate
{
  public:
    Surrogate() = default;

    double predict(Point const& x) const
    {
        require(model_ != nullptr, ErrorKind::Training, "surrogate is not trained");
        return model_->predict(x);
    }
    double operator()(Point const& x) const { return predict(x); }

    HypothesisSpec const& spec() const { return spec_; }
    bool trained() const { return model_ != nullptr; }
    /// Set when least squares fell back to a ridge solve.
    bool ridge_fallback() const { return ridge_; }
    detail::Model const* model() const { return model_.get(); }

    friend Surrogate fit(HypothesisSpec const& spec, TrainingSet const& s);

  private:
    HypothesisSpec spec_;
    std::shared_ptr<detail::Model const> model_;
    bool ridge_ = false;
};

inline Surrogate fit(HypothesisSpec const& spec, TrainingSet const& s)
{
    spec.validate();
    s.validate();
    Surrogate out;
    out.spec_ = spec;
    switch (spec.cls)
    {
    case HypothesisClass::Linear:
    case HypothesisClass::Polynomial: {
        auto m = std::make_shared<detail::LeastSquares>(s, spec.cls == HypothesisClass::Linear ? 1 : spec.degree);
        out.ridge_ = m->ridge_fallback();
        out.model_ = m;
        break;
    }
    case HypothesisClass::Knn: out.model_ = std::make_shared<detail::Knn>(s.canonical(), spec.k); break;
    default: out.model_ = std::make_shared<detail::Svr>(s.canonical(), spec); break;
    }
    return out;
}

//---------------------------------------------------------------------------//
// k-fold cross validation
//---------------------------------------------------------------------------//

struct CvRow
{
    HypothesisSpec spec;
    double cv_mse = kNaN;  // NaN when training failed on some fold
};

struct Selection
{
    HypothesisSpec winner;
    std::vector<CvRow> table;
};

/// Mean over folds of the held-out squared error. Folds are consecutive
/// blocks of size M/k; the last fold absorbs the remainder.
inline double kfold_error(HypothesisSpec const& spec, TrainingSet const& s, int k)
{
    std::size_t m = s.size();
    require(k >= 2 && static_cast<std::size_t>(k) <= m, ErrorKind::Config, "k-fold needs 2 <= k <= M");
    std::size_t fold = m / static_cast<std::size_t>(k);
    double total = 0.0;
    for (int f = 0; f < k; ++f)
    {
        std::size_t lo = static_cast<std::size_t>(f) * fold;
        std::size_t hi = f + 1 == k ? m : lo + fold;
        TrainingSet train;
        train.x.reserve(m - (hi - lo));
        train.y.reserve(m - (hi - lo));
        for (std::size_t i = 0; i < m; ++i)
            if (i < lo || i >= hi)
            {
                train.x.push_back(s.x[i]);
                train.y.push_back(s.y[i]);
            }
        auto h = fit(spec, train);
        double e = 0.0;
        for (std::size_t i = lo; i < hi; ++i)
        {
            double r = h(s.x[i]) - s.y[i];
            e += r * r;
        }
        total += e / static_cast<double>(hi - lo);
    }
    return total / k;
}

namespace detail
{
inline bool strictly_better(double cand, double best, double yvar)
{
    if (!std::isfinite(best))
        return cand < best;
    return cand < best - (1e-9 * best + 1e-12 * yvar);
}

inline double try_kfold(HypothesisSpec const& spec, TrainingSet const& s, int k)
{
    try
    {
        double e = kfold_error(spec, s, k);
        return std::isfinite(e) ? e : kNaN;
    }
    catch (Error const&)
    {
        return kNaN;
    }
}

inline Selection pick(std::vector<CvRow> table, double yvar)
{
    std::optional<std::size_t> best;
    for (std::size_t r = 0; r < table.size(); ++r)
    {
        if (std::isnan(table[r].cv_mse))
            continue;
        if (!best || strictly_better(table[r].cv_mse, table[*best].cv_mse, yvar))
            best = r;
    }
    require(best.has_value(), ErrorKind::Selection, "no surrogate candidate trained on every fold");
    return {table[*best].spec, std::move(table)};
}
}  // namespace detail

/// Winner is the smallest cross-validated MSE; near-ties go to the earlier
/// candidate.
inline Selection kfold_select(std::vector<HypothesisSpec> const& candidates, TrainingSet const& s, int k)
{
    require(!candidates.empty(), ErrorKind::Config, "k-fold selection needs at least one candidate");
    s.validate();
    std::vector<CvRow> table;
    for (auto const& c : candidates)
        table.push_back({c, detail::try_kfold(c, s, k)});
    return detail::pick(std::move(table), variance(s.y));
}

struct SearchOptions
{
    bool linear = true;
    int max_poly_degree = 8;
    bool svm = true;
    int max_svm_poly_degree = 4;
    int max_knn = 50;
};

/// Staged search over all classes: within a family the hyperparameter is
/// increased while the CV error keeps decreasing.
inline Selection kfold_search(TrainingSet const& s, int k, SearchOptions const& opt = {})
{
    s.validate();
    double yvar = variance(s.y);
    std::vector<CvRow> table;
    auto staged = [&](auto make, int from, int to) {
        double prev = kInf;
        for (int q = from; q <= to; ++q)
        {
            auto spec = make(q);
            double e = detail::try_kfold(spec, s, k);
            table.push_back({spec, e});
            if (std::isnan(e) || !detail::strictly_better(e, prev, yvar))
                break;
            prev = e;
        }
    };
    if (opt.linear)
        table.push_back({HypothesisSpec::linear(), detail::try_kfold(HypothesisSpec::linear(), s, k)});
    staged([](int q) { return HypothesisSpec::polynomial(q); }, 2, opt.max_poly_degree);
    if (opt.svm)
    {
        table.push_back({HypothesisSpec::svm_linear(), detail::try_kfold(HypothesisSpec::svm_linear(), s, k)});
        staged([](int q) { return HypothesisSpec::svm_polynomial(q); }, 2, opt.max_svm_poly_degree);
        table.push_back({HypothesisSpec::svm_gaussian(), detail::try_kfold(HypothesisSpec::svm_gaussian(), s, k)});
    }
    staged([](int q) { return HypothesisSpec::knn(q); }, 1,
           std::min<int>(opt.max_knn, static_cast<int>(s.size() - s.size() / static_cast<std::size_t>(k))));
    return detail::pick(std::move(table), yvar);
}

}  // namespace drmis
