// Helpers shared by the unit tests and the acceptance runner.
#ifndef KAWASAKI_TESTS_SUPPORT_HPP
#define KAWASAKI_TESTS_SUPPORT_HPP

#include "kawasaki/geometry.hpp"
#include "kawasaki/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace support {

using namespace kawasaki;

// Merge any one pair at distance < sigma, in random order, until none is left.
inline std::vector<Rectangle> pairwise_merge(std::vector<Rectangle> r, double sigma, Rng& rng) {
    for (;;) {
        std::vector<std::pair<int, int>> close;
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t j = i + 1; j < r.size(); ++j)
                if (rect_dist(r[i], r[j]) < sigma) close.emplace_back(static_cast<int>(i), static_cast<int>(j));
        if (close.empty()) break;
        auto [i, j] = close[rng() % close.size()];
        r[i] = hull(r[i], r[j]);
        r.erase(r.begin() + j);
    }
    std::sort(r.begin(), r.end());
    return r;
}

struct Fixture {
    Configuration config{2};
    std::map<int, std::string> expect;
};

// Snapshot text followed by "expect <id> <status>" lines.
inline Fixture load_fixture(const std::string& name) {
    std::ifstream in(std::string(KAWASAKI_FIXTURES) + "/" + name);
    if (!in) throw std::runtime_error("missing fixture " + name);
    std::string line, snap;
    Fixture f;
    while (std::getline(in, line)) {
        if (line.rfind("expect", 0) == 0) {
            std::istringstream ls(line.substr(6));
            int id;
            std::string st;
            ls >> id >> st;
            f.expect[id] = st;
        } else {
            snap += line + "\n";
        }
    }
    f.config = snapshot_read(snap);
    return f;
}

// Expected total variation of the empirical law of n iid draws, normal approximation per cell.
inline double iid_tv_floor(const ExactMeasure& mu, double n) {
    double f = 0;
    for (const auto& [code, w] : mu.weights) {
        const double p = w / mu.Z;
        f += std::sqrt(2 * p * (1 - p) / (M_PI * n));
    }
    return f / 2;
}

}  // namespace support

#endif
