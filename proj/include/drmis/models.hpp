#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/logistic.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "numeric.hpp"

namespace drmis
{

/// A costly loss map h on a factor space with known base law F.
///
/// evaluate() is the costly call and is counted; loss() is the same map
/// without bookkeeping and is reserved for oracles and tests.
class BlackBoxModel
{
  public:
    explicit BlackBoxModel(std::size_t dim, std::string name) : dim_(dim), name_(std::move(name)) {}
    virtual ~BlackBoxModel() = default;
    BlackBoxModel(BlackBoxModel const&) = delete;
    BlackBoxModel& operator=(BlackBoxModel const&) = delete;

    std::size_t dim() const { return dim_; }
    std::string const& name() const { return name_; }

    virtual Point sample_base(Rng& rng) const = 0;
    virtual double loss(Point const& x) const = 0;

    /// log f(x). For coordinates with an atom (see atom_coordinate) the
    /// density is taken w.r.t. Lebesgue measure plus a unit point mass.
    virtual double base_log_density(Point const& x) const = 0;

    virtual double lower_bound(std::size_t) const { return -kInf; }
    virtual double upper_bound(std::size_t) const { return kInf; }

    /// Coordinate carrying a point mass at its lower bound, if any.
    virtual std::optional<std::size_t> atom_coordinate() const { return std::nullopt; }

    /// Quantile of Y = h(X) when it is available in closed form or by
    /// one-dimensional quadrature.
    virtual std::optional<double> exact_quantile(double) const { return std::nullopt; }

    double evaluate(Point const& x) const
    {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return loss(x);
    }

    long long eval_count() const { return calls_.load(std::memory_order_relaxed); }
    void reset_count() { calls_.store(0, std::memory_order_relaxed); }

  private:
    std::size_t dim_;
    std::string name_;
    mutable std::atomic<long long> calls_{0};
};

using ModelPtr = std::shared_ptr<BlackBoxModel>;

//---------------------------------------------------------------------------//
// Gaussian factor models (1)-(4)
//---------------------------------------------------------------------------//

class GaussianFactorModel : public BlackBoxModel
{
  public:
    using LossFn = double (*)(Point const&);

    GaussianFactorModel(std::string name, std::vector<double> mean, std::vector<std::vector<double>> cov,
                        LossFn fn)
        : BlackBoxModel(mean.size(), std::move(name)), mean_(std::move(mean)), fn_(fn)
    {
        auto d = dim();
        chol_.assign(d, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < d; ++i)
        {
            for (std::size_t j = 0; j <= i; ++j)
            {
                double s = cov[i][j];
                for (std::size_t k = 0; k < j; ++k)
                    s -= chol_[i][k] * chol_[j][k];
                if (i == j)
                {
                    require(s > 0, ErrorKind::Config, "covariance is not positive definite");
                    chol_[i][i] = std::sqrt(s);
                }
                else
                {
                    chol_[i][j] = s / chol_[j][j];
                }
            }
        }
        log_norm_ = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < d; ++i)
            log_norm_ -= std::log(chol_[i][i]);
    }

    Point sample_base(Rng& rng) const override
    {
        auto d = dim();
        Point z(d), x(d);
        for (auto& zi : z)
            zi = standard_normal(rng);
        for (std::size_t i = 0; i < d; ++i)
        {
            double s = mean_[i];
            for (std::size_t k = 0; k <= i; ++k)
                s += chol_[i][k] * z[k];
            x[i] = s;
        }
        return x;
    }

    double loss(Point const& x) const override { return fn_(x); }

    double base_log_density(Point const& x) const override
    {
        // solve L z = x - mean
        auto d = dim();
        Point z(d);
        double q = 0.0;
        for (std::size_t i = 0; i < d; ++i)
        {
            double s = x[i] - mean_[i];
            for (std::size_t k = 0; k < i; ++k)
                s -= chol_[i][k] * z[k];
            z[i] = s / chol_[i][i];
            q += z[i] * z[i];
        }
        return log_norm_ - 0.5 * q;
    }

    std::vector<double> const& mean() const { return mean_; }
    std::vector<std::vector<double>> const& cholesky() const { return chol_; }

  private:
    std::vector<double> mean_;
    std::vector<std::vector<double>> chol_;
    double log_norm_ = 0.0;
    LossFn fn_;
};

/// Y normal with the given mean and standard deviation.
class NormalLossModel : public GaussianFactorModel
{
  public:
    NormalLossModel(std::string name, std::vector<double> mean, std::vector<std::vector<double>> cov, LossFn fn,
                    double y_mean, double y_sd)
        : GaussianFactorModel(std::move(name), std::move(mean), std::move(cov), fn), y_mean_(y_mean), y_sd_(y_sd)
    {
    }

    std::optional<double> exact_quantile(double u) const override { return y_mean_ + y_sd_ * normal_quantile(u); }

  private:
    double y_mean_;
    double y_sd_;
};

class ChiSquaredLossModel : public GaussianFactorModel
{
  public:
    explicit ChiSquaredLossModel(std::size_t d)
        : GaussianFactorModel("sum_of_squared_normals", std::vector<double>(d, 0.0), identity(d),
                              [](Point const& x) {
                                  double s = 0.0;
                                  for (double v : x)
                                      s += v * v;
                                  return s;
                              })
    {
    }

    std::optional<double> exact_quantile(double u) const override
    {
        require(u > 0.0 && u < 1.0, ErrorKind::Domain, "quantile level must be in (0,1)");
        return boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(dim())), u);
    }

  private:
    static std::vector<std::vector<double>> identity(std::size_t d)
    {
        std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < d; ++i)
            c[i][i] = 1.0;
        return c;
    }
};

/// X1 X2 for a bivariate normal pair. The law of the product is obtained
/// by integrating the conditional normal tail over x1.
class ProductLossModel : public GaussianFactorModel
{
  public:
    ProductLossModel(double mu, double rho, std::string name = "product_of_normals")
        : GaussianFactorModel(std::move(name), {mu, mu}, {{1.0, rho}, {rho, 1.0}},
                              [](Point const& x) { return x[0] * x[1]; })
        , mu_(mu)
        , rho_(rho)
    {
    }

    /// P(X1 X2 > t).
    double survival(double t) const
    {
        double s = std::sqrt(1.0 - rho_ * rho_);
        auto integrand = [&](double x1) {
            if (x1 == 0.0)
                return t < 0.0 ? normal_pdf(x1 - mu_) : 0.0;
            double m = mu_ + rho_ * (x1 - mu_);
            double z = (t / x1 - m) / s;
            double tail = x1 > 0 ? normal_cdf(-z) : normal_cdf(z);
            return normal_pdf(x1 - mu_) * tail;
        };
        using boost::math::quadrature::gauss_kronrod;
        double lo = gauss_kronrod<double, 61>::integrate(integrand, -kInf, 0.0, 15, 1e-13);
        double hi = gauss_kronrod<double, 61>::integrate(integrand, 0.0, mu_, 15, 1e-13);
        double tl = gauss_kronrod<double, 61>::integrate(integrand, mu_, kInf, 15, 1e-13);
        return lo + hi + tl;
    }

    std::optional<double> exact_quantile(double u) const override
    {
        require(u > 0.0 && u < 1.0, ErrorKind::Domain, "quantile level must be in (0,1)");
        double p = 1.0 - u;
        double a = -5.0, b = 5.0;
        while (survival(a) < p)
            a = 2.0 * a - 1.0;
        while (survival(b) > p)
            b *= 2.0;
        for (int it = 0; it < 100 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++it)
        {
            double mid = 0.5 * (a + b);
            (survival(mid) > p ? a : b) = mid;
        }
        return 0.5 * (a + b);
    }

  private:
    double mu_;
    double rho_;
};

//---------------------------------------------------------------------------//
// Models (5) and (6)
//---------------------------------------------------------------------------//

class UniformSineModel : public BlackBoxModel
{
  public:
    UniformSineModel() : BlackBoxModel(1, "sine_uniform") {}

    Point sample_base(Rng& rng) const override { return {uniform01(rng)}; }
    double loss(Point const& x) const override { return x[0] * std::sin(2.5 * std::numbers::pi * x[0]); }
    double base_log_density(Point const& x) const override
    {
        return (x[0] >= 0.0 && x[0] <= 1.0) ? 0.0 : -kInf;
    }
    double lower_bound(std::size_t) const override { return 0.0; }
    double upper_bound(std::size_t) const override { return 1.0; }
};

class ExponentialLogisticModel : public BlackBoxModel
{
  public:
    ExponentialLogisticModel() : BlackBoxModel(1, "logistic_exponential") {}

    Point sample_base(Rng& rng) const override { return {std::exponential_distribution<double>{1.0}(rng)}; }
    double loss(Point const& x) const override { return x[0] + std::log1p(-std::exp(-x[0])); }
    double base_log_density(Point const& x) const override { return x[0] >= 0.0 ? -x[0] : -kInf; }
    double lower_bound(std::size_t) const override { return 0.0; }

    std::optional<double> exact_quantile(double u) const override
    {
        require(u > 0.0 && u < 1.0, ErrorKind::Domain, "quantile level must be in (0,1)");
        return boost::math::quantile(boost::math::logistic_distribution<double>{}, u);
    }
};

/// h constant on standard normal factors.
class ConstantLossModel : public BlackBoxModel
{
  public:
    ConstantLossModel(double value, std::size_t dim) : BlackBoxModel(dim, "constant"), value_(value) {}

    Point sample_base(Rng& rng) const override
    {
        Point x(dim());
        for (auto& v : x)
            v = standard_normal(rng);
        return x;
    }
    double loss(Point const&) const override { return value_; }
    double base_log_density(Point const& x) const override
    {
        double s = 0.0;
        for (double v : x)
            s += normal_log_pdf(v);
        return s;
    }
    std::optional<double> exact_quantile(double) const override { return value_; }

  private:
    double value_;
};

/// Builtin case-study models, ids 1 to 6. Id 7 is model 3 with centred
/// factors, the variant behind the extreme-tail reference values.
inline ModelPtr builtin_model(int id)
{
    switch (id)
    {
    case 1:
        return std::make_shared<NormalLossModel>(
            "identity_of_normal", std::vector<double>{0.0}, std::vector<std::vector<double>>{{1.0}},
            [](Point const& x) { return x[0]; }, 0.0, 1.0);
    case 2:
        return std::make_shared<NormalLossModel>(
            "sum_of_normals", std::vector<double>{0.0, 0.0},
            std::vector<std::vector<double>>{{1.0, 0.3}, {0.3, 1.0}}, [](Point const& x) { return x[0] + x[1]; },
            0.0, std::sqrt(2.6));
    case 3: return std::make_shared<ProductLossModel>(2.0, -0.3);
    case 7: return std::make_shared<ProductLossModel>(0.0, -0.3, "product_of_centred_normals");
    case 4: return std::make_shared<ChiSquaredLossModel>(4);
    case 5: return std::make_shared<UniformSineModel>();
    case 6: return std::make_shared<ExponentialLogisticModel>();
    default: fail(ErrorKind::Config, "unknown builtin model id " + std::to_string(id));
    }
}

//---------------------------------------------------------------------------//
// Asset-liability model
//---------------------------------------------------------------------------//

struct AlmParams
{
    double E0 = 1000.0;
    double mu = 0.02;
    double sigma = 0.2;
    double dt = 1.0;
    double b = 0.5;
    double lambda = 5.0;
    double theta_prime = 10.0;  // mean claim severity
    double premium_loading = 1.03;
    double reserve_loading = 1.05;

    double premium() const { return premium_loading * lambda * theta_prime; }
    double reserve() const { return reserve_loading * lambda * theta_prime; }

    void validate() const
    {
        require(b >= 0.0 && b <= 1.0, ErrorKind::Config, "ALM stock fraction b must lie in [0,1]");
        require(sigma > 0.0, ErrorKind::Config, "ALM sigma must be positive");
        require(lambda > 0.0, ErrorKind::Config, "ALM lambda must be positive");
        require(theta_prime > 0.0, ErrorKind::Config, "ALM mean claim size must be positive");
        require(dt > 0.0, ErrorKind::Config, "ALM horizon must be positive");
    }
};

/// Log density of the compound Poisson-exponential aggregate claim C.
/// At c = 0 the atom log P(C = 0) = -lambda is returned.
inline double compound_poisson_exp_log_density(double c, double lambda, double scale)
{
    if (c < 0.0)
        return -kInf;
    if (c == 0.0)
        return -lambda;
    // term_n = Pois(n; lambda) * Gamma(c; n, scale), n >= 1
    double log_lc = std::log(lambda * c / scale);
    double base = -lambda - c / scale - std::log(c);
    LogSum sum;
    double pois_cdf = std::exp(-lambda);
    double log_pois = -lambda;
    double peak = -kInf;
    for (int n = 1;; ++n)
    {
        log_pois += std::log(lambda) - std::log(static_cast<double>(n));
        pois_cdf += std::exp(log_pois);
        double term = base + n * log_lc - std::lgamma(n + 1.0) - std::lgamma(static_cast<double>(n));
        sum.add(term);
        peak = std::max(peak, term);
        bool poisson_done = 1.0 - pois_cdf < 1e-12;
        bool past_peak = term < peak - 40.0;
        if (poisson_done && past_peak)
            break;
        if (n >= 10000)
            fail(ErrorKind::Numeric, "compound Poisson density series did not converge within 10^4 terms");
    }
    return sum.value();
}

/// P(C <= c) for the compound Poisson-exponential law.
inline double compound_poisson_exp_cdf(double c, double lambda, double scale)
{
    if (c < 0.0)
        return 0.0;
    double s = std::exp(-lambda);
    double log_pois = -lambda;
    double tail = 1.0 - s;
    for (int n = 1; n < 10000; ++n)
    {
        log_pois += std::log(lambda) - std::log(static_cast<double>(n));
        double pn = std::exp(log_pois);
        s += pn * boost::math::gamma_p(static_cast<double>(n), c / scale);
        tail -= pn;
        if (tail < 1e-14 && n > lambda)
            return s;
    }
    fail(ErrorKind::Numeric, "compound Poisson CDF series did not converge within 10^4 terms");
}

/// Factor vector (v, z, c): Beta(2,2) bond driver, standard normal stock
/// shock and aggregate claims. Loss is E0 - E1.
class AlmModel : public BlackBoxModel
{
  public:
    explicit AlmModel(AlmParams p = {}) : BlackBoxModel(3, "alm"), p_(p) { p_.validate(); }

    AlmParams const& params() const { return p_; }

    double asset_return(double v, double z) const
    {
        double stock = std::exp((p_.mu - 0.5 * p_.sigma * p_.sigma) * p_.dt + p_.sigma * std::sqrt(p_.dt) * z);
        double bond = 1.0 + (v - 0.5) / 10.0;
        return p_.b * stock + (1.0 - p_.b) * bond;
    }

    Point sample_base(Rng& rng) const override
    {
        std::gamma_distribution<double> g2(2.0, 1.0);
        double a = g2(rng), b = g2(rng);
        double v = a / (a + b);
        double z = standard_normal(rng);
        int n = std::poisson_distribution<int>{p_.lambda}(rng);
        double c = n > 0 ? std::gamma_distribution<double>(n, p_.theta_prime)(rng) : 0.0;
        return {v, z, c};
    }

    double loss(Point const& x) const override
    {
        return -(asset_return(x[0], x[1]) - 1.0) * p_.E0 + x[2] - p_.premium();
    }

    double base_log_density(Point const& x) const override
    {
        double v = x[0];
        if (!(v > 0.0 && v < 1.0) || x[2] < 0.0)
            return -kInf;
        double beta = std::log(6.0) + std::log(v) + std::log1p(-v);
        return beta + normal_log_pdf(x[1]) + compound_poisson_exp_log_density(x[2], p_.lambda, p_.theta_prime);
    }

    double lower_bound(std::size_t i) const override { return i == 1 ? -kInf : 0.0; }
    double upper_bound(std::size_t i) const override { return i == 0 ? 1.0 : kInf; }
    std::optional<std::size_t> atom_coordinate() const override { return 2; }

    /// E[loss] from the closed-form means of R_A and C.
    double mean_loss() const
    {
        double er = p_.b * std::exp(p_.mu * p_.dt) + (1.0 - p_.b);
        return -(er - 1.0) * p_.E0 + p_.lambda * p_.theta_prime - p_.premium();
    }

  private:
    AlmParams p_;
};

inline ModelPtr alm_model(AlmParams p = {})
{
    return std::make_shared<AlmModel>(p);
}

}  // namespace drmis
