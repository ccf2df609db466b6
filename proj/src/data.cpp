#include "obsinfo/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obsinfo/errors.hpp"

namespace obsinfo {

namespace {

bool same_point(std::span<const double> a, std::span<const double> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

void check_distinct(const std::vector<DesignPoint>& points) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = i + 1; j < points.size(); ++j) {
            if (same_point(points[i], points[j])) {
                throw DimensionError("design support points must be distinct (duplicate at index " +
                                     std::to_string(j) + ")");
            }
        }
    }
}

}  // namespace

ContinuousDesign::ContinuousDesign(std::vector<DesignPoint> points, std::vector<double> weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.size() != weights_.size()) {
        throw DimensionError("design has " + std::to_string(points_.size()) + " points but " +
                             std::to_string(weights_.size()) + " weights");
    }
    if (points_.empty()) throw DimensionError("design has no support points");
    check_distinct(points_);
    double total = 0.0;
    for (double w : weights_) {
        if (!std::isfinite(w)) throw DomainError("design weights must be finite");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12 * std::max<double>(1.0, static_cast<double>(weights_.size()))) {
        throw DomainError("design weights sum to " + std::to_string(total) + ", expected 1");
    }
}

ContinuousDesign ContinuousDesign::proper(std::vector<DesignPoint> points, std::vector<double> weights) {
    ContinuousDesign design(std::move(points), std::move(weights));
    if (!design.is_proper()) throw DomainError("design weights must be nonnegative");
    return design;
}

ContinuousDesign ContinuousDesign::uniform(std::vector<DesignPoint> points) {
    const std::size_t d = points.size();
    if (d == 0) throw DimensionError("design has no support points");
    return ContinuousDesign(std::move(points), std::vector<double>(d, 1.0 / static_cast<double>(d)));
}

bool ContinuousDesign::is_proper() const noexcept {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return w >= 0.0; });
}

ContinuousDesign ContinuousDesign::pruned(double threshold) const {
    std::vector<DesignPoint> pts;
    std::vector<double> ws;
    double total = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (weights_[i] >= threshold) {
            pts.push_back(points_[i]);
            ws.push_back(weights_[i]);
            total += weights_[i];
        }
    }
    if (pts.empty()) throw DegenerateError("pruning removed every support point");
    for (double& w : ws) w /= total;
    return ContinuousDesign(std::move(pts), std::move(ws));
}

ExactDesign::ExactDesign(std::vector<DesignPoint> points, std::vector<int> counts)
    : points_(std::move(points)), counts_(std::move(counts)) {
    if (points_.size() != counts_.size()) {
        throw DimensionError("exact design has " + std::to_string(points_.size()) + " points but " +
                             std::to_string(counts_.size()) + " counts");
    }
    check_distinct(points_);
    for (int c : counts_) {
        if (c < 0) throw DomainError("exact design counts must be nonnegative");
    }
    if (total() < 1) throw DomainError("exact design must allocate at least one observation");
}

int ExactDesign::total() const noexcept { return std::accumulate(counts_.begin(), counts_.end(), 0); }

ContinuousDesign ExactDesign::normalized() const {
    const double n = total();
    std::vector<double> w;
    w.reserve(counts_.size());
    for (int c : counts_) w.push_back(c / n);
    return ContinuousDesign(points_, std::move(w));
}

std::optional<std::size_t> DataSet::find(std::span<const double> x) const {
    for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (same_point(groups_[i].x, x)) return i;
    }
    return std::nullopt;
}

std::size_t DataSet::group_index(std::span<const double> x) {
    if (auto i = find(x)) return *i;
    if (!groups_.empty() && groups_.front().x.size() != x.size()) {
        throw DimensionError("design point dimension differs from existing data");
    }
    groups_.push_back(Group{DesignPoint(x.begin(), x.end()), {}, {}});
    return groups_.size() - 1;
}

void DataSet::append_run(const std::vector<Allocation>& run, const ResponseModel& model) {
    std::size_t size = 0;
    for (const auto& a : run) {
        for (double y : a.responses) model.check_response(y);
        size += a.responses.size();
    }
    if (size == 0) throw DomainError("a run must contain at least one observation");
    for (const auto& a : run) {
        const std::size_t g = group_index(a.x);
        for (double y : a.responses) {
            groups_[g].responses.push_back(y);
            groups_[g].stats.add(y);
        }
    }
    run_sizes_.push_back(static_cast<int>(size));
    total_ += size;
}

void DataSet::add_observation(std::span<const double> x, double y, bool new_run) {
    if (new_run || run_sizes_.empty()) run_sizes_.push_back(0);
    const std::size_t g = group_index(x);
    groups_[g].responses.push_back(y);
    groups_[g].stats.add(y);
    ++run_sizes_.back();
    ++total_;
}

ExactDesign DataSet::empirical_design() const {
    std::vector<DesignPoint> pts;
    std::vector<int> counts;
    for (const auto& g : groups_) {
        pts.push_back(g.x);
        counts.push_back(static_cast<int>(g.responses.size()));
    }
    return ExactDesign(std::move(pts), std::move(counts));
}

}  // namespace obsinfo
