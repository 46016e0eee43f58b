#pragma once

#include <string>
#include <vector>

#include "gcm/errors.hpp"

namespace gcm {

// Temporal interval in seconds. Valid iff both endpoints are finite,
// start >= 0 and end > start.
struct Interval {
    double start = 0.0;
    double end = 0.0;
};

struct IntervalStats {
    double center = 0.0;
    double length = 0.0;
};

bool interval_valid(const Interval& i);
void require_valid(const Interval& i);

// Center/length of a valid interval. Throws ValidationError on end <= start.
IntervalStats interval_stats(const Interval& i);

// Intervals with I(a,b) = 0 count as disjoint, including touching endpoints.
bool intervals_disjoint(const Interval& a, const Interval& b);

// A proposal (two-stage) or fixed segment (one-stage): an interval plus its
// feature vector, and optionally the feature of the extended window.
struct ActionUnit {
    int id = 0;
    std::string video_id;
    Interval interval;
    std::vector<double> feature;
    std::vector<double> extended_feature; // empty = absent
    double score = 0.0;                   // optional proposal confidence
};

struct GroundTruthInstance {
    std::string video_id;
    Interval interval;
    int label = 1; // class index >= 1; 0 is reserved for background
};

enum class UnitError {
    ok,
    malformed_interval,
    dimension_mismatch,
    non_finite_value,
};

const char* unit_error_message(UnitError e);

// Total check: never throws, returns a typed code. Accepts iff the interval
// is valid, the feature has expected_dim finite entries, and the extended
// feature (when present) matches too.
UnitError validate_unit(const ActionUnit& u, int expected_dim);

// Throwing wrapper around validate_unit.
void require_valid_unit(const ActionUnit& u, int expected_dim);

} // namespace gcm
