#include "gcm/core.hpp"

#include <algorithm>
#include <cmath>

#include "gcm/textio.hpp"

namespace gcm {

bool interval_valid(const Interval& i) {
    return std::isfinite(i.start) && std::isfinite(i.end) &&
           i.start >= 0.0 && i.end > i.start;
}

void require_valid(const Interval& i) {
    if (!interval_valid(i)) {
        throw ValidationError("malformed interval [" + format_double(i.start) +
                              ", " + format_double(i.end) + "]");
    }
}

IntervalStats interval_stats(const Interval& i) {
    require_valid(i);
    return {(i.start + i.end) / 2.0, i.end - i.start};
}

bool intervals_disjoint(const Interval& a, const Interval& b) {
    return std::min(a.end, b.end) - std::max(a.start, b.start) <= 0.0;
}

const char* unit_error_message(UnitError e) {
    switch (e) {
        case UnitError::ok: return "ok";
        case UnitError::malformed_interval: return "malformed interval";
        case UnitError::dimension_mismatch: return "feature dimension mismatch";
        case UnitError::non_finite_value: return "non-finite feature value";
    }
    return "unknown";
}

UnitError validate_unit(const ActionUnit& u, int expected_dim) {
    if (!interval_valid(u.interval)) return UnitError::malformed_interval;
    if (static_cast<int>(u.feature.size()) != expected_dim) {
        return UnitError::dimension_mismatch;
    }
    if (!u.extended_feature.empty() &&
        static_cast<int>(u.extended_feature.size()) != expected_dim) {
        return UnitError::dimension_mismatch;
    }
    for (double v : u.feature) {
        if (!std::isfinite(v)) return UnitError::non_finite_value;
    }
    for (double v : u.extended_feature) {
        if (!std::isfinite(v)) return UnitError::non_finite_value;
    }
    return UnitError::ok;
}

void require_valid_unit(const ActionUnit& u, int expected_dim) {
    UnitError e = validate_unit(u, expected_dim);
    if (e != UnitError::ok) {
        throw ValidationError("unit " + format_int(u.id) + " in video '" +
                              u.video_id + "': " + unit_error_message(e));
    }
}

} // namespace gcm
