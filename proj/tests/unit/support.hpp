#ifndef OBJSEARCH_TESTS_SUPPORT_HPP
#define OBJSEARCH_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "objsearch/nn.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(OBJSEARCH_FIXTURE_DIR) / name;
}

/// Empty scratch directory under the system temp directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("objsearch_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Largest relative disagreement between `analytic` and central differences
/// of `loss` over every parameter. Gradients smaller than `floor` in both
/// estimates are compared on an absolute scale of `floor`.
inline double max_gradient_error(objsearch::nn::ParamStore& params, const objsearch::nn::ParamStore& analytic,
                                 const std::function<double()>& loss, double h = 1e-5, double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t t = 0; t < params.count(); ++t)
        for (std::size_t j = 0; j < params[t].size(); ++j) {
            double& w = params[t].data[j];
            const double saved = w;
            w = saved + h;
            const double up = loss();
            w = saved - h;
            const double down = loss();
            w = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[t].data[j];
            const double scale = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / scale);
        }
    return worst;
}

} // namespace testing_support

#endif
