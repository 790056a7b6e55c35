// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flapest
{
    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    using Vector2d = Eigen::Matrix<double, 2, 1>;
    using Vector3d = Eigen::Matrix<double, 3, 1>;
    using Vector6d = Eigen::Matrix<double, 6, 1>;
    using Matrix3d = Eigen::Matrix<double, 3, 3>;
    using Matrix6d = Eigen::Matrix<double, 6, 6>;
    using Quaterniond = Eigen::Quaterniond;

    template <typename Scalar>
    inline constexpr Scalar kTwoPi = Scalar(2) * std::numbers::pi_v<Scalar>;
    inline constexpr double kPi = std::numbers::pi;

    /// Base class for every error raised by the library.
    class Error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    /// Invalid argument or configuration value.
    class ParameterError : public Error
    {
    public:
        using Error::Error;
    };

    /// Malformed, insufficient or inconsistent input data.
    class DataError : public Error
    {
    public:
        using Error::Error;
    };

    /// Numerical failure: divergence, ill-conditioning, integrator blow-up.
    class NumericError : public Error
    {
    public:
        using Error::Error;
    };

    /// Wraps an angle to [0, 2pi).
    template <typename Scalar>
    Scalar wrap_two_pi(Scalar angle)
    {
        Scalar r = std::fmod(angle, kTwoPi<Scalar>);
        if (r < Scalar(0))
            r += kTwoPi<Scalar>;
        // fmod of a tiny negative value can round up to exactly 2pi
        if (r >= kTwoPi<Scalar>)
            r = Scalar(0);
        return r;
    }

    /// Wraps an angle to (-pi, pi].
    template <typename Scalar>
    Scalar wrap_pi(Scalar angle)
    {
        Scalar r = wrap_two_pi(angle);
        if (r > std::numbers::pi_v<Scalar>)
            r -= kTwoPi<Scalar>;
        return r;
    }

    enum class Channel
    {
        accel,
        gyro,
        mag,
        gps_pos,
        gps_vel
    };

    std::string_view to_string(Channel channel);
    /// Throws DataError on an unknown name.
    Channel channel_from_string(std::string_view name);

    /// One timestamped sensor reading.
    struct TimedSample
    {
        double t = 0.0;
        Channel channel = Channel::accel;
        Vector3d value = Vector3d::Zero();

        friend bool operator==(const TimedSample&, const TimedSample&) = default;
    };

    /// Uniformly sampled scalar signal starting at t0.
    struct UniformSeries
    {
        double t0 = 0.0;
        double fs = 1.0;
        VectorXd values;

        [[nodiscard]] Eigen::Index size() const { return values.size(); }
        [[nodiscard]] double time(Eigen::Index k) const { return t0 + static_cast<double>(k) / fs; }
    };
} // namespace flapest
