#include "lvmesh/align.hpp"

#include <algorithm>
#include <cmath>

namespace lvmesh::align {

std::optional<Point2> centroid2d(const LabelVolume &mask, int k, std::uint8_t label) {
    const Grid &g = mask.grid;
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i)
            if (mask.at(i, j, k) == label) {
                sx += i;
                sy += j;
                ++n;
            }
    if (n == 0) return std::nullopt;
    return Point2{g.origin.x() + g.spacing.x() * sx / double(n), g.origin.y() + g.spacing.y() * sy / double(n)};
}

namespace {

double lower_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

} // namespace

Corrected correct(const FrameSequence &frames, const std::vector<LabelVolume> &masks, std::uint8_t label) {
    require(!masks.empty() && masks.size() == frames.n_frames(), "align: one mask per frame required");
    const Grid &g = masks.front().grid;
    for (std::size_t f = 0; f < masks.size(); ++f) {
        require(masks[f].grid == g, "align: masks must share one grid");
        require(frames.frames[f].grid == g, "align: frames and masks must share one grid");
    }
    const int nz = g.dims[2];

    std::vector<double> ref_x, ref_y;
    for (int k = 0; k < nz; ++k)
        if (auto c = centroid2d(masks.front(), k, label)) {
            ref_x.push_back(c->x);
            ref_y.push_back(c->y);
        }
    if (ref_x.empty()) throw Error("align: no slice of the ED mask contains the LV blood-pool label");
    const double rx = lower_median(ref_x), ry = lower_median(ref_y);

    Corrected out{frames, masks, {}};
    out.shifts.reserve(masks.size() * std::size_t(nz));
    for (std::size_t f = 0; f < masks.size(); ++f) {
        std::vector<std::optional<SliceOffset>> own(static_cast<std::size_t>(nz));
        for (int k = 0; k < nz; ++k)
            if (auto c = centroid2d(masks[f], k, label))
                own[k] = SliceOffset{int(std::lround((rx - c->x) / g.spacing.x())),
                                     int(std::lround((ry - c->y) / g.spacing.y()))};
        if (std::none_of(own.begin(), own.end(), [](const auto &o) { return o.has_value(); }))
            throw Error("align: frame " + std::to_string(f) + " has no slice with the LV blood-pool label");

        for (int k = 0; k < nz; ++k) {
            SliceOffset s;
            if (own[k]) {
                s = *own[k];
            } else {
                // Nearest labeled slice; the lower one wins ties.
                for (int d = 1; d < nz; ++d) {
                    if (k - d >= 0 && own[k - d]) {
                        s = *own[k - d];
                        break;
                    }
                    if (k + d < nz && own[k + d]) {
                        s = *own[k + d];
                        break;
                    }
                }
            }
            shift_slice(out.frames.frames[f], k, s);
            shift_slice(out.masks[f], k, s);
            out.shifts.push_back({int(f), k, s});
        }
    }
    return out;
}

} // namespace lvmesh::align
