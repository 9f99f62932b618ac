#include "ral/losses.hpp"

#include <cmath>
#include <string>

namespace ral {

namespace {

constexpr double kRelTol = 1e-9;

double sign(double x) { return x >= 0.0 ? 1.0 : -1.0; }

void check_scalar_theta(const Vector& theta, const char* family) {
    if (theta.size() != 1)
        throw validation_error(std::string(family) + ": expects a 1-D parameter");
}

void check_domain(const LossModel& model, const Vector& theta) {
    if (!model.domain) return;
    const ProjectionDomain& dom = *model.domain;
    switch (dom.kind) {
    case ProjectionDomain::Kind::none:
        return;
    case ProjectionDomain::Kind::ball: {
        const double r = dom.radius;
        if (norm2(theta) > r * (1.0 + kRelTol) + 1e-12)
            throw validation_error("loss: parameter outside the ball domain");
        return;
    }
    case ProjectionDomain::Kind::ray: {
        const Vector on_ray = project(dom, theta);
        if (norm2(sub(theta, on_ray)) > kRelTol * (1.0 + norm2(theta)))
            throw validation_error("loss: parameter outside the ray domain");
        return;
    }
    }
}

void check_data(const LossModel& model, const DataPoint& z) {
    switch (model.family) {
    case LossFamily::linear1d:
        if (std::fabs(z.z) > model.C * (1.0 + kRelTol) + 1e-12)
            throw validation_error("linear1d: sample |z| exceeds C");
        return;
    case LossFamily::quadratic_mean: {
        if (!model.mu)
            throw validation_error("quadratic_mean: model.mu missing");
        const double r = model.C / (2.0 * *model.mu);
        if (std::fabs(z.z) > r * (1.0 + kRelTol) + 1e-12)
            throw validation_error("quadratic_mean: sample |z| exceeds C/(2*mu)");
        return;
    }
    case LossFamily::huberized_regression:
    case LossFamily::squared_regression:
        if (norm2(z.x) > std::sqrt(model.L) * (1.0 + kRelTol) + 1e-12)
            throw validation_error("regression: sample ||x|| exceeds sqrt(L)");
        return;
    }
}

} // namespace

ProjectionDomain ProjectionDomain::ball(double r) {
    if (!(r > 0.0))
        throw validation_error("ProjectionDomain::ball: radius must be positive");
    ProjectionDomain d;
    d.kind = Kind::ball;
    d.radius = r;
    return d;
}

ProjectionDomain ProjectionDomain::ray(Vector v) {
    if (norm2(v) == 0.0)
        throw validation_error("ProjectionDomain::ray: direction must be nonzero");
    ProjectionDomain d;
    d.kind = Kind::ray;
    d.direction = std::move(v);
    return d;
}

DataPoint DataPoint::scalar(double z) {
    DataPoint p;
    p.z = z;
    return p;
}

DataPoint DataPoint::pair(Vector x, double y) {
    DataPoint p;
    p.x = std::move(x);
    p.y = y;
    return p;
}

double loss_value(const LossModel& model, const Vector& theta, const DataPoint& z) {
    check_domain(model, theta);
    check_data(model, z);
    switch (model.family) {
    case LossFamily::linear1d:
        check_scalar_theta(theta, "linear1d");
        return z.z * theta[0];
    case LossFamily::quadratic_mean: {
        check_scalar_theta(theta, "quadratic_mean");
        const double diff = theta[0] - z.z;
        return 0.5 * *model.mu * diff * diff;
    }
    case LossFamily::huberized_regression: {
        const double residual = dot(theta, z.x) - z.y;
        const double xn = norm2(z.x);
        if (std::fabs(residual) * xn <= model.C)
            return 0.5 * residual * residual;
        if (xn < 1e-300)
            throw validation_error("huberized_regression: ||x|| = 0 in the linear branch");
        return model.C * (std::fabs(residual) / xn - model.C / (2.0 * xn * xn));
    }
    case LossFamily::squared_regression: {
        const double residual = dot(theta, z.x) - z.y;
        return 0.5 * residual * residual;
    }
    }
    throw validation_error("loss_value: unknown family");
}

Vector loss_gradient(const LossModel& model, const Vector& theta, const DataPoint& z) {
    check_domain(model, theta);
    check_data(model, z);
    switch (model.family) {
    case LossFamily::linear1d:
        check_scalar_theta(theta, "linear1d");
        return {z.z};
    case LossFamily::quadratic_mean:
        check_scalar_theta(theta, "quadratic_mean");
        return {*model.mu * (theta[0] - z.z)};
    case LossFamily::huberized_regression: {
        const double residual = dot(theta, z.x) - z.y;
        const double xn = norm2(z.x);
        // Closed boundary: the quadratic branch owns the kink (both agree there).
        if (std::fabs(residual) * xn <= model.C)
            return scaled(z.x, residual);
        if (xn < 1e-300)
            throw validation_error("huberized_regression: ||x|| = 0 in the linear branch");
        return scaled(z.x, model.C * sign(residual) / xn);
    }
    case LossFamily::squared_regression: {
        const double residual = dot(theta, z.x) - z.y;
        return scaled(z.x, residual);
    }
    }
    throw validation_error("loss_gradient: unknown family");
}

Vector project(const ProjectionDomain& domain, const Vector& theta) {
    switch (domain.kind) {
    case ProjectionDomain::Kind::none:
        return theta;
    case ProjectionDomain::Kind::ball: {
        const double n = norm2(theta);
        if (n <= domain.radius) return theta;
        return scaled(theta, domain.radius / n);
    }
    case ProjectionDomain::Kind::ray: {
        const double lambda =
            std::max(0.0, dot(theta, domain.direction) / dot(domain.direction, domain.direction));
        return scaled(domain.direction, lambda);
    }
    }
    throw validation_error("project: unknown domain kind");
}

Vector finite_diff_gradient(const LossModel& model, const Vector& theta,
                            const DataPoint& z, double h) {
    if (!(h > 0.0))
        throw validation_error("finite_diff_gradient: h must be positive");
    Vector grad(theta.size(), 0.0);
    Vector probe = theta;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        probe[j] = theta[j] + h;
        const double up = loss_value(model, probe, z);
        probe[j] = theta[j] - h;
        const double down = loss_value(model, probe, z);
        probe[j] = theta[j];
        grad[j] = (up - down) / (2.0 * h);
    }
    return grad;
}

} // namespace ral
