#pragma once

#include <optional>

#include "ral/linalg.hpp"

namespace ral {

enum class LossFamily {
    linear1d,             // l(theta; z) = z * theta, z in [-C, C]
    quadratic_mean,       // l(theta; z) = (mu/2)(theta - z)^2 on a ball
    huberized_regression, // quadratic core, linear tails, gradient norm <= C
    squared_regression    // l(theta; (x,y)) = (1/2)(theta.x - y)^2, no C bound
};

struct ProjectionDomain {
    enum class Kind { none, ball, ray } kind = Kind::none;
    double radius = 0.0; // ball
    Vector direction;    // ray {lambda * v : lambda >= 0}

    static ProjectionDomain ball(double r);
    static ProjectionDomain ray(Vector v);
};

// Scalar families use z; regression families use (x, y).
struct DataPoint {
    double z = 0.0;
    Vector x;
    double y = 0.0;

    static DataPoint scalar(double z);
    static DataPoint pair(Vector x, double y);
};

struct LossModel {
    LossFamily family = LossFamily::linear1d;
    double C = 1.0; // Lipschitz constant
    double L = 1.0; // smoothness constant
    std::optional<double> mu;
    std::optional<double> ell_inf;
    std::optional<ProjectionDomain> domain;
};

double loss_value(const LossModel& model, const Vector& theta, const DataPoint& z);
Vector loss_gradient(const LossModel& model, const Vector& theta, const DataPoint& z);

// Euclidean projection onto the domain; identity for Kind::none.
Vector project(const ProjectionDomain& domain, const Vector& theta);

// Central-difference gradient oracle for tests.
Vector finite_diff_gradient(const LossModel& model, const Vector& theta,
                            const DataPoint& z, double h);

} // namespace ral
