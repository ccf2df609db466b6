#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "obsinfo/model.hpp"

namespace obsinfo {

// Support points with real weights summing to one. Weights may be negative
// only for the "design" built from observed-to-expected ratios; such a design
// reports is_proper() == false.
class ContinuousDesign {
public:
    ContinuousDesign() = default;
    ContinuousDesign(std::vector<DesignPoint> points, std::vector<double> weights);

    // Same as the constructor but additionally requires every weight >= 0.
    static ContinuousDesign proper(std::vector<DesignPoint> points, std::vector<double> weights);
    static ContinuousDesign uniform(std::vector<DesignPoint> points);

    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    const std::vector<DesignPoint>& points() const noexcept { return points_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const DesignPoint& point(std::size_t i) const { return points_.at(i); }
    double weight(std::size_t i) const { return weights_.at(i); }
    bool is_proper() const noexcept;

    // Drops points with weight below `threshold` and renormalizes.
    ContinuousDesign pruned(double threshold) const;

private:
    std::vector<DesignPoint> points_;
    std::vector<double> weights_;
};

// Support points with integer counts.
class ExactDesign {
public:
    ExactDesign() = default;
    ExactDesign(std::vector<DesignPoint> points, std::vector<int> counts);

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<DesignPoint>& points() const noexcept { return points_; }
    const std::vector<int>& counts() const noexcept { return counts_; }
    const DesignPoint& point(std::size_t i) const { return points_.at(i); }
    int count(std::size_t i) const { return counts_.at(i); }
    int total() const noexcept;

    // Weights n_i / n.
    ContinuousDesign normalized() const;

private:
    std::vector<DesignPoint> points_;
    std::vector<int> counts_;
};

// Responses grouped by support point, plus the run structure in which they
// arrived. Two design points are the same support point iff their coordinates
// compare equal.
class DataSet {
public:
    struct Group {
        DesignPoint x;
        std::vector<double> responses;
        GroupStats stats;
    };

    // One allocation of a run: responses.size() observations taken at x.
    struct Allocation {
        DesignPoint x;
        std::vector<double> responses;
    };

    std::size_t group_count() const noexcept { return groups_.size(); }
    const std::vector<Group>& groups() const noexcept { return groups_; }
    const Group& group(std::size_t i) const { return groups_.at(i); }
    std::optional<std::size_t> find(std::span<const double> x) const;

    const std::vector<int>& run_sizes() const noexcept { return run_sizes_; }
    std::size_t run_count() const noexcept { return run_sizes_.size(); }
    std::size_t total() const noexcept { return total_; }
    bool empty() const noexcept { return total_ == 0; }

    // Appends one run. Responses are validated against `model` before
    // anything is modified.
    void append_run(const std::vector<Allocation>& run, const ResponseModel& model);

    // Adds a single observation to the current (last) run, opening a new run
    // when `new_run` is true. Used by simulation loops that stream responses.
    void add_observation(std::span<const double> x, double y, bool new_run);

    // Empirical design of the data: counts per support point.
    ExactDesign empirical_design() const;

private:
    std::size_t group_index(std::span<const double> x);

    std::vector<Group> groups_;
    std::vector<int> run_sizes_;
    std::size_t total_ = 0;
};

}  // namespace obsinfo
